"""Pointwise kernels of the fuzzy Landau collision operator.

The collision kernel is N(w) = |w|^(gamma+2) * Pi(w) with Pi the projection
orthogonal to w and -3 <= gamma <= 1.  Spatial delocalization enters through
a positive kernel kappa with the two-sided bound

    kappa1 <x>^-lambda <= kappa(x) <= kappa2 <x>^-lambda,   <x> = sqrt(1+|x|^2).

The regularized family used by the implicit scheme is

    N_delta(w) = exp(-delta |w|^2) (delta + |w|^2)^(1+gamma/2)
                 (Id - w (x) w / (delta + |w|^2)),
    kappa_delta(y) = kappa(y) exp(-delta |y|^2),

which is strictly positive definite for every w when delta > 0.

The module also provides the rotation fields b_k(u) and their liftings to
the doubled phase space z = (x, v, y, w) in R^12, together with exact
commutators [a, b]_i = sum_j a_j d_j b_i - b_j d_j a_i.  These identities
drive the Fisher-information machinery and are verified as vector equalities
by the test suite.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateInputError

KAPPA_CHOICES = ("constant_one", "inverse_bracket")


@dataclass(frozen=True)
class ModelParams:
    """Physical and regularization parameters of the model.

    gamma        potential exponent, -3 <= gamma <= 1
    lam          spatial decay exponent lambda >= 0
    kappa1/2     two-sided bounds of the spatial kernel (0 < kappa1 <= kappa2)
    kappa_choice "constant_one" (kappa == kappa1, needs lam == 0) or
                 "inverse_bracket" (kappa = kappa1 <x>^-lambda)
    delta        kernel regularization, >= 0
    epsilon      artificial diffusion of the implicit scheme, >= 0
    tau          implicit time step, > 0
    m_moment     moment exponent used by the high-moment diagnostics
    """

    gamma: float = 0.0
    lam: float = 0.0
    kappa1: float = 1.0
    kappa2: float = 1.0
    kappa_choice: str = "constant_one"
    delta: float = 0.0
    epsilon: float = 0.0
    tau: float = 1e-2
    m_moment: float = 14.0

    def __post_init__(self):
        if not -3.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [-3, 1], got {self.gamma}")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if not 0 < self.kappa1 <= self.kappa2:
            raise ConfigError("need 0 < kappa1 <= kappa2")
        if self.kappa_choice not in KAPPA_CHOICES:
            raise ConfigError(f"unknown kappa_choice {self.kappa_choice!r}")
        if self.kappa_choice == "constant_one" and self.lam != 0.0:
            raise ConfigError("constant_one kappa requires lambda = 0")
        if self.delta < 0 or self.epsilon < 0:
            raise ConfigError("delta and epsilon must be >= 0")
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")

    def require_moment_exponent(self):
        bound = max(12.0, self.lam + 2.0)
        if self.m_moment <= bound:
            raise ConfigError(
                f"moment checks need m_moment > max(12, lambda+2) = {bound}, "
                f"got {self.m_moment}")


def bracket(x):
    """Japanese bracket <x> = sqrt(1 + |x|^2), accepting |x| or components."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + x * x)


_TINY = 1e-30


def projection(w):
    """Pi(w) = Id - w (x) w / |w|^2; zero matrix at w = 0 by convention."""
    w = np.asarray(w, dtype=float)
    d = w.shape[0]
    r2 = float(w @ w)
    if r2 < _TINY**2:
        return np.zeros((d, d))
    return np.eye(d) - np.outer(w, w) / r2


def landau_kernel(w, params):
    """N(w) = |w|^(gamma+2) Pi(w).

    At w = 0 the limit is the zero matrix for gamma > -2; gamma = -2 uses the
    same convention, and gamma < -2 is a genuine pole and raises.
    """
    w = np.asarray(w, dtype=float)
    r = float(np.sqrt(w @ w))
    if r < _TINY:
        if params.gamma + 2.0 < 0.0:
            raise DegenerateInputError(
                "N(0) diverges for gamma < -2 (gamma+2 < 0)")
        return np.zeros((w.shape[0],) * 2)
    return r ** (params.gamma + 2.0) * projection(w)


def div_landau_kernel(w, params):
    """Div N(w) = -(dv-1) |w|^gamma w (equal to -2|w|^gamma w in 3-d).

    Odd in w; the value at w = 0 is 0 by that symmetry.
    """
    w = np.asarray(w, dtype=float)
    d = w.shape[0]
    r = float(np.sqrt(w @ w))
    if r < _TINY:
        return np.zeros(d)
    return -(d - 1.0) * r**params.gamma * w


def reg_landau_kernel(w, params):
    """Regularized kernel N_delta(w); positive definite for delta > 0."""
    if params.delta <= 0:
        raise ConfigError("reg_landau_kernel requires delta > 0")
    w = np.asarray(w, dtype=float)
    d = w.shape[0]
    delta = params.delta
    r2 = float(w @ w)
    p = delta + r2
    return (np.exp(-delta * r2) * p ** (1.0 + params.gamma / 2.0)
            * (np.eye(d) - np.outer(w, w) / p))


def div_reg_landau_kernel(w, params):
    """Div N_delta(w), computed in closed form.

    Writing s = |w|^2 and P = delta + s,

        Div N_delta = e^{-delta s} P^{gamma/2 - 1}
                      [ (1 - d - 2 delta^2) s + (1 + gamma - d - 2 delta^2) delta ] w,

    which reduces to -(d-1)|w|^gamma w as delta -> 0.  (Cross-checked against
    column-wise finite differences of N_delta in the tests.)
    """
    if params.delta <= 0:
        raise ConfigError("div_reg_landau_kernel requires delta > 0")
    w = np.asarray(w, dtype=float)
    d = w.shape[0]
    delta = params.delta
    s = float(w @ w)
    p = delta + s
    coef = ((1.0 - d - 2.0 * delta**2) * s
            + (1.0 + params.gamma - d - 2.0 * delta**2) * delta)
    return np.exp(-delta * s) * p ** (params.gamma / 2.0 - 1.0) * coef * w


def sqrt_reg_landau_kernel(w, params):
    """M_delta(w): principal square root of N_delta(w).

    Computed from the eigenstructure of the implemented N_delta (including
    its Gaussian factor), so that M_delta(w) @ M_delta(w) == N_delta(w)
    holds by construction; the closed form without the Gaussian factor is
    only cross-checked up to that factor in the tests.
    """
    if params.delta <= 0:
        raise ConfigError("sqrt_reg_landau_kernel requires delta > 0")
    w = np.asarray(w, dtype=float)
    d = w.shape[0]
    delta = params.delta
    r2 = float(w @ w)
    p = delta + r2
    # N_delta = g * p * (Id - w(x)w/p) with g = e^{-delta r2} p^{gamma/2};
    # eigenvalues: g*p transverse to w (multiplicity d-1), g*delta along w.
    g = np.exp(-delta * r2) * p ** (params.gamma / 2.0)
    if r2 < _TINY**2:
        return np.sqrt(g * p) * np.eye(d)
    pw = np.outer(w, w) / r2
    return np.sqrt(g * p) * (np.eye(d) - pw) + np.sqrt(g * delta) * pw


def spatial_kernel(x, params, regularized=False):
    """kappa(x), optionally the regularized kappa_delta = kappa e^{-delta|x|^2}.

    Built-in family: kappa == kappa1 (constant_one, the fully delocalized
    kappa == 1 mode when kappa1 == 1) or kappa = kappa1 <x>^-lambda.  Both
    satisfy the two-sided bracket bound by construction and the
    derivative-domination |D^beta kappa| <= C_beta kappa.
    """
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=0) if x.ndim > 0 else x * x
    if params.kappa_choice == "constant_one":
        val = params.kappa1 * np.ones_like(np.asarray(r2, dtype=float))
    else:
        val = params.kappa1 * (1.0 + r2) ** (-params.lam / 2.0)
    if regularized:
        if params.delta < 0:
            raise ConfigError("regularized kernel needs delta >= 0")
        val = val * np.exp(-params.delta * r2)
    return val


# -- rotation fields and their liftings to z = (x, v, y, w) ----------------

def rotation_field(k, v, w):
    """b_k(v - w): displayed component form, equal to e_k x (v - w).

    b_1 = (0, w3-v3, v2-w2) and cyclic; linear in u = v - w, orthogonal to u,
    and sum_k b_k (x) b_k = |u|^2 Pi(u) so that N(u) = |u|^gamma sum b_k(x)b_k.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape != (3,) or w.shape != (3,):
        raise ConfigError("rotation fields are defined for dv = 3 only")
    if k not in (1, 2, 3):
        raise ConfigError(f"axis index k must be 1, 2 or 3, got {k}")
    u = v - w
    return np.cross(np.eye(3)[k - 1], u)


LIFTED_TAGS = tuple(
    f"{stem}{i}" for stem in ("b~", "e~", "e^", "xi~", "xi^") for i in (1, 2, 3)
)


@dataclass(frozen=True)
class LiftedField:
    """A vector field on R^12 with an analytically known Jacobian.

    value(z) and jacobian(z) are exact, which makes commutators exact as
    well: [a, b](z) = Jb(z) a(z) - Ja(z) b(z).
    """

    name: str
    _value: object = field(repr=False)
    _jacobian: object = field(repr=False)

    def value(self, z):
        return self._value(np.asarray(z, dtype=float))

    def jacobian(self, z):
        return self._jacobian(np.asarray(z, dtype=float))

    def __call__(self, z):
        return self.value(z)


def _const_field(name, vec):
    vec = np.asarray(vec, dtype=float)
    return LiftedField(name, lambda z: vec.copy(),
                       lambda z: np.zeros((12, 12)))


def _embed(block_v, block_w):
    """Assemble a 12-vector from x, v, y, w blocks (x and y blocks zero)."""
    out = np.zeros(12)
    out[3:6] = block_v
    out[9:12] = block_w
    return out


def _b_tilde_value(k):
    def val(z):
        u = z[3:6] - z[9:12]
        b = np.cross(np.eye(3)[k - 1], u)
        return _embed(b, -b)
    return val


def _b_tilde_jacobian(k):
    e = np.eye(3)[k - 1]
    m = np.array([np.cross(e, np.eye(3)[j]) for j in range(3)]).T  # (e_k x e_j)_i
    jac = np.zeros((12, 12))
    jac[3:6, 3:6] = m
    jac[3:6, 9:12] = -m
    jac[9:12, 3:6] = -m
    jac[9:12, 9:12] = m
    return lambda z: jac.copy()


def lifted_field(tag):
    """Return the lifted vector field named by `tag`.

    Tags: 'b~k' (collision rotations, linear in z), and the constant fields
    'e~i' = (e_i,0,e_i,0), 'e^i' = (e_i,0,-e_i,0), 'xi~i' = (0,e_i,0,e_i),
    'xi^i' = (0,e_i,0,-e_i), for i,k in {1,2,3}.
    """
    if tag not in LIFTED_TAGS:
        raise ConfigError(f"unknown lifted field tag {tag!r}")
    stem, idx = tag[:-1], int(tag[-1])
    e = np.eye(3)[idx - 1]
    zero = np.zeros(3)
    if stem == "b~":
        return LiftedField(tag, _b_tilde_value(idx), _b_tilde_jacobian(idx))
    if stem == "e~":
        vec = np.concatenate([e, zero, e, zero])
    elif stem == "e^":
        vec = np.concatenate([e, zero, -e, zero])
    elif stem == "xi~":
        vec = np.concatenate([zero, e, zero, e])
    else:  # xi^
        vec = np.concatenate([zero, e, zero, -e])
    return _const_field(tag, vec)


def scaled_rotation_field(k, gamma):
    """sqrt(alpha) b~_k with alpha(|v-w|) = |v-w|^gamma, exact Jacobian."""
    base = lifted_field(f"b~{k}")

    def val(z):
        u = z[3:6] - z[9:12]
        r = np.sqrt(u @ u)
        return r ** (gamma / 2.0) * base.value(z)

    def jac(z):
        u = z[3:6] - z[9:12]
        r2 = u @ u
        r = np.sqrt(r2)
        a = r ** (gamma / 2.0)
        bj = base.jacobian(z)
        bv = base.value(z)
        # d/dz of r^{gamma/2}: (gamma/2) r^{gamma/2-2} u . (dv - dw)
        grad = np.zeros(12)
        grad[3:6] = (gamma / 2.0) * a / r2 * u
        grad[9:12] = -(gamma / 2.0) * a / r2 * u
        return a * bj + np.outer(bv, grad)

    return LiftedField(f"sqrt_alpha*b~{k}(gamma={gamma})", val, jac)


def commutator(field_a, field_b, z):
    """[a, b](z) with [a,b]_i = sum_j a_j d_j b_i - b_j d_j a_i, exact."""
    z = np.asarray(z, dtype=float)
    return (field_b.jacobian(z) @ field_a.value(z)
            - field_a.jacobian(z) @ field_b.value(z))
