"""Direct-summation reference implementations.

Slow, transparent counterparts of the FFT convolution pipeline and of the
collision operator, used by the verification suites and the tests.  They
share only the kernel *samples* with the fast path (the discrete object is
the same by definition); all summation is performed with dense kernel
matrices instead of FFTs.

Complexities are O(N^2) per convolution stage, so these are restricted to
small grids by the callers.
"""

import numpy as np

from .coefficients import get_pipeline
from .grid import derivative

__all__ = [
    "kappa_matrix", "kernel_matrix_entries", "direct_smooth_density",
    "direct_diffusion_matrix", "direct_drift_vector", "direct_laplacian_a",
    "direct_apply_Q", "direct_bilinear_Q", "direct_dissipation_rate",
]


def _wrap_index_table(n):
    """table[i, j] = FFT-order index of the displacement (i - j) mod n."""
    idx = np.arange(n)
    return (idx[:, None] - idx[None, :]) % n


def kappa_matrix(grid, params, regularized=False):
    """Dense (X, X) matrix of kappa(x - y) on the wrapped spatial grid."""
    pipe = get_pipeline(grid, params, regularized)
    kap = pipe.kappa_sampled
    t = _wrap_index_table(grid.nx)
    mat = kap
    for axis in reversed(range(grid.dx)):
        mat = np.take(mat, t, axis=axis)
    # axes now alternate (i0, j0, i1, j1, ...); regroup to (I..., J...)
    order = [2 * a for a in range(grid.dx)] + [2 * a + 1 for a in range(grid.dx)]
    mat = np.transpose(mat, order)
    X = grid.nx**grid.dx
    return mat.reshape(X, X)


def kernel_matrix_entries(grid, params, regularized=False, v_restricted=False):
    """Dense (V, V) matrices for each sampled velocity kernel.

    Returns dict with 'N' (dv x dv nested lists), 'divN' (list), 'absg'.
    """
    pipe = get_pipeline(grid, params, regularized, v_restricted)
    t = _wrap_index_table(grid.nv)

    def densify(kern):
        mat = kern
        for axis in reversed(range(grid.dv)):
            mat = np.take(mat, t, axis=axis)
        order = ([2 * a for a in range(grid.dv)]
                 + [2 * a + 1 for a in range(grid.dv)])
        mat = np.transpose(mat, order)
        V = grid.nv**grid.dv
        return mat.reshape(V, V)

    N = [[None] * grid.dv for _ in range(grid.dv)]
    for i in range(grid.dv):
        for j in range(i, grid.dv):
            N[i][j] = N[j][i] = densify(pipe.n_sampled[(i, j)])
    divN = [densify(d) for d in pipe.divn_sampled]
    absg = densify(pipe.absg_sampled)
    return {"N": N, "divN": divN, "absg": absg}


def _as_xv(values, grid):
    return values.reshape(grid.nx**grid.dx, grid.nv**grid.dv)


def direct_smooth_density(f, params, regularized=False):
    g = f.grid
    kmat = kappa_matrix(g, params, regularized)
    H = kmat @ _as_xv(f.values, g) * g.hx**g.dx
    return H.reshape(g.shape)


def direct_diffusion_matrix(f, params, regularized=False):
    g = f.grid
    H = _as_xv(direct_smooth_density(f, params, regularized), g)
    kern = kernel_matrix_entries(g, params, regularized)
    A = np.empty((g.dv, g.dv) + g.shape)
    for i in range(g.dv):
        for j in range(i, g.dv):
            aij = (H @ kern["N"][i][j].T) * g.hv**g.dv
            A[i, j] = A[j, i] = aij.reshape(g.shape)
    return A


def direct_drift_vector(f, params, regularized=False):
    g = f.grid
    H = _as_xv(direct_smooth_density(f, params, regularized), g)
    kern = kernel_matrix_entries(g, params, regularized)
    b = np.empty((g.dv,) + g.shape)
    for i in range(g.dv):
        b[i] = ((H @ kern["divN"][i].T) * g.hv**g.dv).reshape(g.shape)
    return b


def direct_laplacian_a(f, params):
    g = f.grid
    H = _as_xv(direct_smooth_density(f, params), g)
    kern = kernel_matrix_entries(g, params)
    conv = (H @ kern["absg"].T) * g.hv**g.dv
    return (-(g.dv - 1.0) * (params.gamma + g.dv) * conv).reshape(g.shape)


def _div_v(G, grid):
    return sum(derivative(G[i], grid, grid.v_axes[i]) for i in range(grid.dv))


def direct_apply_Q(f, params, regularized=False, drift_form="divergence"):
    """Direct-summation collision operator, matching `collision.apply_Q`.

    drift_form='divergence': Q = Div_v(A grad_v f - f b) with A, b from the
    dense double sums.  drift_form='bilinear': the drift term uses the pair
    sum of N kappa against grad f directly (the literal bilinear form
    f* grad f - f grad f*).
    """
    g = f.grid
    A = direct_diffusion_matrix(f, params, regularized)
    grads = [derivative(f.values, g, a) for a in g.v_axes]
    G = np.empty((g.dv,) + g.shape)
    for i in range(g.dv):
        G[i] = sum(A[i, j] * grads[j] for j in range(g.dv))
    if drift_form == "divergence":
        b = direct_drift_vector(f, params, regularized)
        for i in range(g.dv):
            G[i] -= f.values * b[i]
    elif drift_form == "bilinear":
        kmat = kappa_matrix(g, params, regularized)
        kern = kernel_matrix_entries(g, params, regularized)
        for i in range(g.dv):
            acc = np.zeros(g.shape)
            for j in range(g.dv):
                s = kmat @ _as_xv(grads[j], g) * g.hx**g.dx
                acc += ((s @ kern["N"][i][j].T) * g.hv**g.dv).reshape(g.shape)
            G[i] -= f.values * acc
    else:
        raise ValueError(f"unknown drift_form {drift_form!r}")
    return _div_v(G, g)


def direct_bilinear_Q(f, params, regularized=False):
    """Literal pair-sum of Div_v iint N kappa (f* grad f - f grad f*)."""
    return direct_apply_Q(f, params, regularized, drift_form="bilinear")


def direct_dissipation_rate(f, params, theta_scale=1e-30, regularized=False):
    """Entropy production by explicit pair enumeration.

    D = 1/2 sum over pairs of kappa(x-x*) f f* (g - g*) . N(v-v*) (g - g*),
    with g = grad_v f / (f + theta) and the velocity kernel restricted to
    |v - v*| below the box injectivity radius, exactly as the fast path.
    """
    g = f.grid
    X, V = g.nx**g.dx, g.nv**g.dv
    fv = _as_xv(f.values, g)
    theta = theta_scale * float(f.values.max())
    grads = np.stack([_as_xv(derivative(f.values, g, a), g)
                      for a in g.v_axes])
    gl = grads / (fv + theta)
    kmat = kappa_matrix(g, params, regularized)
    kern = kernel_matrix_entries(g, params, regularized, v_restricted=True)
    total = 0.0
    for xa in range(X):
        for xb in range(X):
            kap = kmat[xa, xb]
            fw = np.outer(fv[xa], fv[xb])
            quad = np.zeros((V, V))
            for i in range(g.dv):
                di = gl[i, xa][:, None] - gl[i, xb][None, :]
                for j in range(g.dv):
                    dj = gl[j, xa][:, None] - gl[j, xb][None, :]
                    quad += di * kern["N"][i][j] * dj
            total += kap * (fw * quad).sum()
    return 0.5 * total * g.weight**2
