"""Nonlocal coefficient fields of the collision operator.

Everything here is a convolution against the density:

    H(x,v)    = int kappa(x-y) f(y,v) dy                      (x-smoothing)
    A[f](x,v) = int N(v-w) H(x,w) dw                          (diffusion)
    b[f](x,v) = int Div N(v-w) H(x,w) dw                      (drift)
    Lap_v a   = -(dv-1)(gamma+dv) int |v-w|^gamma H(x,w) dw,

computed as circular convolutions on the periodic box: one FFT pass over the
x-axes for H, one over the v-axes shared by all velocity kernels.  Kernels
are sampled once per (grid, params) pair on the wrapped displacement grid
and cached in Fourier space, so a full coefficient assembly costs a handful
of full-size FFTs.

The w = 0 cell of kernels with a negative exponent is assigned the kernel's
average over a 5^dv point subgrid of the cell with the singular center point
omitted; dropping the single singular sample instead would bias the
convolution by O(h^(dv+gamma+2)).

Direct O(N^2) summation references for all of these live in
`flandau.oracles` and must agree with this pipeline to 1e-10 on small grids.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _fft
from .errors import DegenerateInputError
from .grid import DistributionField, derivative
from .kernels import bracket

__all__ = [
    "CollisionCoefficients", "CoefficientPipeline", "get_pipeline",
    "smooth_density", "diffusion_matrix", "drift_vector", "laplacian_a",
    "ellipticity_probe", "h_bounds_check", "decay_envelopes",
]


@dataclass
class CollisionCoefficients:
    """Coefficient fields derived from one density f.

    A is stored as a full (dv, dv, *grid.shape) symmetric stack; b as
    (dv, *grid.shape); H and lapA as plain fields.  `c` is the drift field
    of the pair-sum (bilinear) discretization, N * grad_v H; it coincides
    with b in free space but differs on the torus by a kernel-aliasing
    term (see `flandau.collision`).
    """

    H: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lapA: np.ndarray
    params: object
    regularized: bool = False
    c: np.ndarray | None = None


def _subgrid_average(kernel_of_points, h, dv):
    """Average kernel over the origin cell on a 5^dv subgrid, center omitted."""
    offs = ((np.arange(5) + 0.5) / 5.0 - 0.5) * h
    pts = np.array(list(itertools.product(offs, repeat=dv)))
    pts = pts[np.any(pts != 0.0, axis=1)]
    return kernel_of_points(pts).mean(axis=0)


class CoefficientPipeline:
    """FFT convolution pipeline bound to one (grid, params) pair.

    `regularized` switches every kernel to its delta-regularized version
    (N_delta, Div N_delta, kappa_delta).  `v_restricted` multiplies the
    velocity kernels by the indicator |w| < Lv (the box injectivity radius);
    the dissipation functional uses that variant to avoid counting periodic
    images twice.
    """

    def __init__(self, grid, params, regularized=False, v_restricted=False):
        self.grid = grid
        self.params = params
        self.regularized = bool(regularized)
        self.v_restricted = bool(v_restricted)
        self._sample_kernels()

    # -- kernel sampling ---------------------------------------------------

    def _sample_kernels(self):
        g, p = self.grid, self.params
        dv, gamma = g.dv, p.gamma
        disp = g.v_displacements()
        r2 = sum(d * d for d in disp)
        r2 = np.broadcast_to(r2, (g.nv,) * dv).copy()
        origin = (0,) * dv

        if self.regularized:
            delta = p.delta
            pden = delta + r2
            gauss = np.exp(-delta * r2)
            nmat = {}
            for i in range(dv):
                for j in range(i, dv):
                    wij = np.broadcast_to(disp[i] * disp[j], r2.shape)
                    eye = 1.0 if i == j else 0.0
                    nmat[(i, j)] = (gauss * pden ** (1.0 + gamma / 2.0)
                                    * (eye - wij / pden))
            coef = ((1.0 - dv - 2.0 * delta**2) * r2
                    + (1.0 + gamma - dv - 2.0 * delta**2) * delta)
            base = gauss * pden ** (gamma / 2.0 - 1.0) * coef
            divn = [base * np.broadcast_to(disp[i], r2.shape)
                    for i in range(dv)]
            absg = gauss * pden ** (gamma / 2.0)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                rg = np.where(r2 > 0, r2 ** (gamma / 2.0), 0.0)
            nmat = {}
            for i in range(dv):
                for j in range(i, dv):
                    wij = np.broadcast_to(disp[i] * disp[j], r2.shape)
                    eye = r2 if i == j else 0.0
                    nmat[(i, j)] = rg * (eye - wij)
            if gamma < 0:
                for i in range(dv):
                    for j in range(i, dv):
                        def n_pts(pts, i=i, j=j):
                            pr2 = np.sum(pts * pts, axis=1)
                            eye = pr2 if i == j else 0.0
                            return pr2 ** (gamma / 2.0) * (
                                eye - pts[:, i] * pts[:, j])
                        nmat[(i, j)][origin] = _subgrid_average(n_pts, g.hv, dv)
            divn = [-(dv - 1.0) * rg * np.broadcast_to(disp[i], r2.shape)
                    for i in range(dv)]
            for i in range(dv):
                divn[i][origin] = 0.0
            if gamma < 0:
                with np.errstate(divide="ignore", invalid="ignore"):
                    absg = np.where(r2 > 0, r2 ** (gamma / 2.0), 0.0)
                absg[origin] = _subgrid_average(
                    lambda pts: np.sum(pts * pts, axis=1) ** (gamma / 2.0),
                    g.hv, dv)
            else:
                absg = r2 ** (gamma / 2.0) if gamma > 0 else np.ones_like(r2)

        if self.v_restricted:
            mask = (r2 < g.Lv**2).astype(float)
            for key in nmat:
                nmat[key] = nmat[key] * mask
            divn = [d * mask for d in divn]
            absg = absg * mask

        wv = g.hv**g.dv
        self._n_hat = {k: _fft.fftn(v.astype(complex), axes=tuple(range(dv))) * wv
                       for k, v in nmat.items()}
        self._divn_hat = [_fft.fftn(d.astype(complex), axes=tuple(range(dv))) * wv
                          for d in divn]
        self._absg_hat = _fft.fftn(absg.astype(complex),
                                   axes=tuple(range(dv))) * wv
        # Fourier drift kernel of the pair-sum form: c_i = sum_j N_ij * d_j H,
        # i.e. multiplication by i k_j inside the velocity transform.
        ik = []
        for j in range(dv):
            shape = [1] * dv
            shape[j] = g.nv
            ik.append(1j * g._kv_diff.reshape(shape))
        self._cdrift_hat = []
        for i in range(dv):
            acc = 0.0
            for j in range(dv):
                key = (i, j) if i <= j else (j, i)
                acc = acc + self._n_hat[key] * ik[j]
            self._cdrift_hat.append(acc)
        self.n_sampled = nmat
        self.divn_sampled = divn
        self.absg_sampled = absg

        # spatial kernel on the wrapped x displacement grid
        xdisp = g.x_displacements()
        xr2 = sum(d * d for d in xdisp)
        xr2 = np.broadcast_to(xr2, (g.nx,) * g.dx).copy()
        if p.kappa_choice == "constant_one":
            kap = p.kappa1 * np.ones_like(xr2)
        else:
            kap = p.kappa1 * (1.0 + xr2) ** (-p.lam / 2.0)
        if self.regularized:
            kap = kap * np.exp(-p.delta * xr2)
        self.kappa_sampled = kap
        wx = g.hx**g.dx
        self._kappa_hat = _fft.fftn(kap.astype(complex),
                                    axes=tuple(range(g.dx))) * wx

    # -- broadcast helpers ---------------------------------------------------

    def _vb(self, arr):
        """Broadcast a velocity-shaped kernel over the full grid shape."""
        return arr.reshape((1,) * self.grid.dx + arr.shape)

    def _xb(self, arr):
        return arr.reshape(arr.shape + (1,) * self.grid.dv)

    # -- convolution stages --------------------------------------------------

    def smooth_density_values(self, fvals):
        g = self.grid
        fhat = _fft.fftn(fvals.astype(complex), axes=g.x_axes)
        fhat *= self._xb(self._kappa_hat)
        return _fft.ifftn(fhat, axes=g.x_axes).real

    def v_convolutions(self, H, keys=("A", "b", "lapA")):
        """Convolve H against the requested velocity kernels in one pass."""
        g = self.grid
        dv = g.dv
        Hhat = _fft.fftn(H.astype(complex), axes=g.v_axes)
        out = {}
        if "A" in keys:
            A = np.empty((dv, dv) + g.shape)
            for i in range(dv):
                for j in range(i, dv):
                    aij = _fft.ifftn(Hhat * self._vb(self._n_hat[(i, j)]),
                                     axes=g.v_axes).real
                    A[i, j] = aij
                    if i != j:
                        A[j, i] = aij
            out["A"] = A
        if "b" in keys:
            b = np.empty((dv,) + g.shape)
            for i in range(dv):
                b[i] = _fft.ifftn(Hhat * self._vb(self._divn_hat[i]),
                                  axes=g.v_axes).real
            out["b"] = b
        if "c" in keys:
            c = np.empty((dv,) + g.shape)
            for i in range(dv):
                c[i] = _fft.ifftn(Hhat * self._vb(self._cdrift_hat[i]),
                                  axes=g.v_axes).real
            out["c"] = c
        if "lapA" in keys:
            conv = _fft.ifftn(Hhat * self._vb(self._absg_hat),
                              axes=g.v_axes).real
            out["lapA"] = -(dv - 1.0) * (self.params.gamma + dv) * conv
        return out

    def kernel_apply(self, G):
        """A-tilde[G]_i = sum_j (N_ij kappa) * G_j for a velocity-vector field.

        Both convolution stages are applied: G is x-smoothed with kappa and
        then convolved against the matrix kernel in v.
        """
        g = self.grid
        dv = g.dv
        out = np.empty_like(G)
        smoothed_hat = []
        for j in range(dv):
            s = self.smooth_density_values(G[j])
            smoothed_hat.append(_fft.fftn(s.astype(complex), axes=g.v_axes))
        for i in range(dv):
            acc = None
            for j in range(dv):
                key = (i, j) if i <= j else (j, i)
                term = smoothed_hat[j] * self._vb(self._n_hat[key])
                acc = term if acc is None else acc + term
            out[i] = _fft.ifftn(acc, axes=g.v_axes).real
        return out

    def coefficients(self, f):
        """Assemble the full CollisionCoefficients for a DistributionField.

        For the regularized pipeline Lap_v a is taken as the spectral
        divergence of the drift field (the unregularized closed-form kernel
        has no delta-analogue in the model definition).
        """
        fvals = f.values if isinstance(f, DistributionField) else f
        H = self.smooth_density_values(fvals)
        if self.regularized:
            got = self.v_convolutions(H, keys=("A", "b", "c"))
            lap = sum(derivative(got["b"][i], self.grid, self.grid.v_axes[i])
                      for i in range(self.grid.dv))
            got["lapA"] = lap
        else:
            got = self.v_convolutions(H, keys=("A", "b", "c", "lapA"))
        return CollisionCoefficients(H=H, A=got["A"], b=got["b"],
                                     lapA=got["lapA"], params=self.params,
                                     regularized=self.regularized,
                                     c=got["c"])


    def rfft_pack(self):
        """Kernel spectra in the real-FFT layout (halved last axis).

        Used by the fused explicit stepper; built lazily and cached.
        Returns dict with 'n' {(i,j): spectrum}, 'c' [i], 'kappa', and the
        broadcastable derivative multipliers 'ikv' in the same layout.
        """
        if getattr(self, "_rpack", None) is not None:
            return self._rpack
        import scipy.fft as sfft
        g = self.grid
        vax = tuple(range(g.dv))
        wv = g.hv**g.dv
        # derivative multipliers: full fftfreq on leading v-axes, rfftfreq on
        # the last one; Nyquist zeroed on even axes as in grid._kv_diff
        ikv = []
        for j in range(g.dv):
            if j < g.dv - 1:
                k = g._kv_diff.copy()
                m = g.nv
            else:
                k = 2.0 * np.pi * np.fft.rfftfreq(g.nv, d=g.hv)
                if g.nv % 2 == 0:
                    k[-1] = 0.0
                m = g.nv // 2 + 1
            shape = [1] * g.dv
            shape[j] = m
            ikv.append(1j * k.reshape(shape))
        n_r = {key: sfft.rfftn(val, axes=vax) * wv
               for key, val in self.n_sampled.items()}
        c_r = []
        for i in range(g.dv):
            acc = 0.0
            for j in range(g.dv):
                key = (i, j) if i <= j else (j, i)
                acc = acc + n_r[key] * ikv[j]
            c_r.append(acc)
        xax = tuple(range(g.dx))
        kap_r = sfft.rfftn(self.kappa_sampled, axes=xax) * g.hx**g.dx
        self._rpack = {"n": n_r, "c": c_r, "kappa": kap_r, "ikv": ikv}
        return self._rpack


@lru_cache(maxsize=16)
def get_pipeline(grid, params, regularized=False, v_restricted=False):
    return CoefficientPipeline(grid, params, regularized, v_restricted)


# -- spec-level operations -------------------------------------------------


def smooth_density(f, params, regularized=False):
    """H(x,v) = int kappa(x-y) f(y,v) dy via per-slice circular convolution."""
    return get_pipeline(f.grid, params, regularized).smooth_density_values(
        f.values)


def diffusion_matrix(f, params, regularized=False):
    """A[f] = N *_v H, a (dv, dv, ...) positive-semidefinite matrix field."""
    pipe = get_pipeline(f.grid, params, regularized)
    H = pipe.smooth_density_values(f.values)
    return pipe.v_convolutions(H, keys=("A",))["A"]


def drift_vector(f, params, regularized=False):
    """b[f] = (Div N) *_v H, a (dv, ...) vector field."""
    pipe = get_pipeline(f.grid, params, regularized)
    H = pipe.smooth_density_values(f.values)
    return pipe.v_convolutions(H, keys=("b",))["b"]


def laplacian_a(f, params):
    """Lap_v a[f] = -(dv-1)(gamma+dv) |.|^gamma *_v H  (unregularized form)."""
    pipe = get_pipeline(f.grid, params, regularized=False)
    H = pipe.smooth_density_values(f.values)
    return pipe.v_convolutions(H, keys=("lapA",))["lapA"]


def decay_envelopes(coeffs, grid):
    """Sup-norms of A, b, lapA against their predicted bracket-weight decay.

    Returns max over nodes of |A| / <v>^(gamma+2), |b| / <v>^(gamma+1) and
    |lapA| / <v>^gamma, with |.| the maximal entry magnitude.
    """
    gamma = coeffs.params.gamma
    bv = bracket(np.sqrt(grid.v_norm2()))
    env_a = float((np.abs(coeffs.A).max(axis=(0, 1)) / bv ** (gamma + 2.0)).max())
    env_b = float((np.abs(coeffs.b).max(axis=0) / bv ** (gamma + 1.0)).max())
    env_l = float((np.abs(coeffs.lapA) / bv**gamma).max())
    return {"A": env_a, "b": env_b, "lapA": env_l}


def ellipticity_probe(coeffs, params, samples=200, grid=None, seed=0):
    """Estimate the constant in  xi . A xi >= alpha <x>^-lambda <v>^gamma |xi|^2.

    Scans `samples` random (x-node, v-node, unit xi) triples plus the
    extreme grid nodes (largest |x| and |v|, and the v = 0 plane), using the
    exact smallest eigenvalue at the probed nodes.  Returns the estimated
    constant and the node where it is attained.
    """
    if grid is None:
        raise ValueError("ellipticity_probe needs the grid")
    g = grid
    mass = float(coeffs.H.sum() * g.weight) / max(params.kappa1, 1e-300)
    if not np.isfinite(mass) or abs(mass) <= 0.0:
        raise DegenerateInputError("ellipticity probe needs positive mass")

    rng = np.random.default_rng(seed)
    nodes = set()
    for _ in range(samples):
        ix = tuple(rng.integers(0, g.nx, size=g.dx))
        iv = tuple(rng.integers(0, g.nv, size=g.dv))
        nodes.add(ix + iv)
    # extreme nodes: box corners in x and v, plus the origin-most node
    ix_extreme = [(0,) * g.dx, (g.nx // 2,) * g.dx]
    iv_extreme = [(0,) * g.dv, (g.nv // 2,) * g.dv,
                  (int(np.argmin(np.abs(g.v_coords))),) * g.dv]
    for ix in ix_extreme:
        for iv in iv_extreme:
            nodes.add(tuple(ix) + tuple(iv))

    lam = params.lam
    gamma = params.gamma
    best = np.inf
    worst_node = None
    for node in nodes:
        amat = coeffs.A[(slice(None), slice(None)) + node]
        lam_min = float(np.linalg.eigvalsh(amat)[0])
        xnorm = np.sqrt(sum(g.x_coords[node[i]] ** 2 for i in range(g.dx)))
        vnorm = np.sqrt(sum(g.v_coords[node[g.dx + i]] ** 2
                            for i in range(g.dv)))
        weight = bracket(xnorm) ** (-lam) * bracket(vnorm) ** gamma
        ratio = lam_min / weight
        # random unit directions can only see >= lam_min; keep the sharp value
        if ratio < best:
            best = ratio
            worst_node = node
    return {"alpha_hat": float(best), "worst_node": worst_node}


def h_bounds_check(f, params):
    """Quantities and inequalities of the superlevel-set machinery.

    Reproduces the explicit recipe R = sqrt(8 c2 / rho0), l = rho0/(8 w6 R^6)
    for the joint (x,v) superlevel bound, selects the smallest threshold T >=
    max(1, l) whose superlevel tail holds mass <= rho0/8, and measures the
    resulting set.  Also fits the four H-bound constants and measures the
    velocity superlevel set of H.
    """
    g = f.grid
    params.require_moment_exponent()
    w = g.weight
    vals = f.values
    rho0 = float(vals.sum() * w)
    if rho0 <= 0:
        raise DegenerateInputError("h_bounds_check needs positive mass")
    x2 = np.broadcast_to(g.x_norm2(), g.shape)
    v2 = np.broadcast_to(g.v_norm2(), g.shape)
    c2 = float(((x2 + v2) * vals).sum() * w)
    floor = 1e-300
    h0 = float((vals * np.log(np.maximum(vals, floor))).sum() * w)

    # Lemma-style joint superlevel set
    omega6 = np.pi**3 / 6.0  # unit-ball volume in R^6
    R = np.sqrt(8.0 * c2 / rho0)
    ell = rho0 / (8.0 * omega6 * R**6)
    # smallest threshold T >= max(1, ell) whose superlevel mass is <= rho0/8
    sorted_vals = np.sort(vals.ravel())
    suffix_mass = np.cumsum(sorted_vals[::-1])[::-1] * w
    lo = max(1.0, ell)
    ok = suffix_mass <= rho0 / 8.0  # non-decreasing in the index
    if ok.any():
        T = float(max(sorted_vals[int(np.argmax(ok))], lo))
    else:
        T = max(lo, float(vals.max()) * (1 + 1e-12))
    ball = (x2 + v2) < R**2
    meas = float(((vals >= ell) & ball).sum() * w)
    joint_ok = meas >= 5.0 * rho0 / (8.0 * T)

    # H-bound constants (fitted on the grid)
    H = smooth_density(f, params)
    bv = bracket(np.sqrt(g.v_norm2()))
    h_v_integral = H.sum(axis=g.v_axes) * g.hv**g.dv       # int H dv per x
    x2_x = np.zeros((g.nx,) * g.dx)
    for a in range(g.dx):
        shape = [1] * g.dx
        shape[a] = g.nx
        x2_x = x2_x + g.x_coords.reshape(shape) ** 2
    bx_x = bracket(np.sqrt(x2_x))
    c_H = float((h_v_integral * bx_x**params.lam).min())
    weighted = (np.broadcast_to(bv, g.shape) ** 2 * H).sum(
        axis=g.v_axes) * g.hv**g.dv
    C_H_second = float((weighted * bx_x**params.lam).max())
    hlog = (H * np.log(np.maximum(H, floor))).sum(axis=g.v_axes) * g.hv**g.dv
    C_H_entropy = float(hlog.max())

    # Velocity superlevel set of H (x-uniform bound)
    R_tilde = np.sqrt(2.0 * max(C_H_second, 1e-300) / max(c_H, 1e-300))
    ell_tilde = 3.0 * c_H / (16.0 * np.pi * R_tilde**3)
    vball = np.broadcast_to(v2 <= R_tilde**2, g.shape)
    thresh = ell_tilde * np.broadcast_to(bx_x ** (-params.lam),
                                         (g.nx,) * g.dx)
    thresh = thresh.reshape((g.nx,) * g.dx + (1,) * g.dv)
    super_h = (H >= thresh) & vball
    mu_per_x = super_h.sum(axis=g.v_axes) * g.hv**g.dv
    mu_hat = float(mu_per_x.min())

    return {
        "rho0": rho0, "c2": c2, "h0": h0,
        "R": float(R), "ell": float(ell), "T": T,
        "superlevel_measure": meas,
        "joint_bound_ok": bool(joint_ok),
        "c_H": c_H, "C_H_second_moment": C_H_second,
        "C_H_entropy": C_H_entropy,
        "R_tilde": float(R_tilde), "ell_tilde": float(ell_tilde),
        "mu_hat": mu_hat,
        "velocity_bound_ok": bool(mu_hat > 0.0),
    }
