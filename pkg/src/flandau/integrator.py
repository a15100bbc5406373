"""Time integration: explicit Strang splitting and the regularized
implicit scheme.

Explicit mode advances

    f' = -v . grad_x f + Q(f,f)

by Strang composition: a half step of exact spectral transport, one
explicit Euler (optionally Heun) collision step with the coefficient
fields frozen at the substep start (which makes the substep linear and
keeps mass exact), and another transport half step.  The collision step
obeys the parabolic stability bound

    dt <= cfl_safety * hv^2 / (2 dv lambda_max(A)),

recomputed every step from the assembled diffusion matrix.

Implicit ("faithful") mode advances the regularized equation

    (f_k - f_{k-1})/tau + e^{-delta |v|^2} v . grad_x f_k
        - eps (Lap_x + Lap_v) f_k  =  Q_delta(f_k, f_k)

by Picard iteration on the linearization Q_delta(f~, f): coefficients are
assembled from the current iterate f~ and the resulting linear system is
solved by preconditioned GMRES, with the constant-coefficient part
(1/tau - eps Lap) inverted spectrally as the preconditioner.  The initial
datum is capped: f_0 = min(f_in, eps^-1 e^{-|v|^2}).

Negative densities are monitored and flagged, never clipped.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import _fft
from .coefficients import get_pipeline
from .collision import apply_Q
from .errors import (CflViolationError, ConfigError, NumericalError,
                     PicardNonConvergenceError, LeakWarning)
from .grid import (LEAK_TOLERANCE, DistributionField, boundary_leak,
                   shift_transport)

EXPLICIT = "explicit_split"
FAITHFUL = "faithful_implicit"

__all__ = [
    "SchemeConfig", "Trajectory", "initial_condition", "step_explicit",
    "step_faithful", "run", "limit_sweep", "cfl_limit",
]


@dataclass
class SchemeConfig:
    """Time-stepping configuration.

    dt = 0 in explicit mode means "pick the CFL-limited step each time".
    `drift_form` selects the collision drift discretization (see
    flandau.collision).  `collision_integrator` is 'euler' or 'rk2'.
    """

    mode: str = EXPLICIT
    dt: float = 0.0
    tau: float = 1e-2
    t_end: float = 1.0
    cfl_safety: float = 0.8
    picard_tol: float = 1e-10
    picard_max: int = 200
    snapshot_every: int = 1
    collision_integrator: str = "euler"
    drift_form: str = "bilinear"
    halt_on_negative: bool = False
    negative_tol: float = 1e-8

    def validate(self, params):
        if self.mode not in (EXPLICIT, FAITHFUL):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError("cfl_safety must lie in (0, 1]")
        if self.t_end < 0:
            raise ConfigError("t_end must be >= 0")
        if self.collision_integrator not in ("euler", "rk2"):
            raise ConfigError("collision_integrator must be euler or rk2")
        if self.mode == FAITHFUL:
            if params.delta <= 0 or params.epsilon <= 0:
                raise ConfigError(
                    "the implicit scheme requires delta > 0 and epsilon > 0")
            if self.tau <= 0:
                raise ConfigError("tau must be > 0")


@dataclass
class Trajectory:
    """Ordered (time, field) frames plus per-frame diagnostics records."""

    frames: list = field(default_factory=list)
    records: list = field(default_factory=list)
    config: object = None
    params: object = None

    def append(self, t, f, record=None):
        if self.frames and t <= self.frames[-1][0]:
            raise NumericalError("trajectory times must increase strictly")
        if self.frames and f.grid != self.frames[0][1].grid:
            raise NumericalError("trajectory frames must share one grid")
        self.frames.append((t, f))
        if record is not None:
            self.records.append(record)

    @property
    def times(self):
        return np.array([t for t, _ in self.frames])

    def final(self):
        return self.frames[-1][1]


def initial_condition(f_in, params, mode=EXPLICIT):
    """Prepare the initial datum for a scheme.

    Explicit mode passes f_in through; the implicit scheme caps it at the
    Gaussian barrier: f_0 = min(f_in, eps^-1 e^{-|v|^2}).
    """
    if np.any(f_in.values < 0):
        node = np.unravel_index(int(np.argmin(f_in.values)),
                                f_in.values.shape)
        raise ConfigError(f"initial datum is negative at node {node}")
    if mode == EXPLICIT:
        return f_in.copy()
    if params.epsilon <= 0:
        raise ConfigError("the implicit scheme requires epsilon > 0")
    cap = np.exp(-f_in.grid.v_norm2()) / params.epsilon
    return DistributionField(f_in.grid,
                             np.minimum(f_in.values, cap))


def cfl_limit(coeffs, grid, dv_safety=None):
    """Largest stable explicit collision step for the given coefficients.

    Returns (dt_max, lambda_max, node).  lambda_max is the largest nodal
    eigenvalue of A (closed form for dv = 2, a trace bound for dv = 3).
    """
    A = coeffs.A
    if grid.dv == 2:
        tr = A[0, 0] + A[1, 1]
        disc = np.sqrt((A[0, 0] - A[1, 1]) ** 2 + 4.0 * A[0, 1] ** 2)
        lam = 0.5 * (tr + disc)
    else:
        lam = A[0, 0] + A[1, 1] + A[2, 2]  # PSD: lambda_max <= trace
    node = np.unravel_index(int(np.argmax(lam)), lam.shape)
    lam_max = float(lam[node])
    if lam_max <= 0:
        return np.inf, lam_max, node
    return grid.hv**2 / (2.0 * grid.dv * lam_max), lam_max, node


def _collision_operator(fvals, coeffs, drift, grid):
    from .grid import derivative
    grads = [derivative(fvals, grid, a) for a in grid.v_axes]
    G = np.empty((grid.dv,) + grid.shape)
    for i in range(grid.dv):
        acc = coeffs.A[i, 0] * grads[0]
        for j in range(1, grid.dv):
            acc += coeffs.A[i, j] * grads[j]
        G[i] = acc - fvals * drift[i]
    return sum(derivative(G[i], grid, grid.v_axes[i]) for i in range(grid.dv))


def step_explicit(f, dt, params, config=None):
    """One Strang step: transport dt/2, collision dt, transport dt/2."""
    config = config or SchemeConfig()
    g = f.grid
    half = shift_transport(f, 0.5 * dt)
    pipe = get_pipeline(g, params, regularized=False)
    coeffs = pipe.coefficients(half)
    dt_max, lam_max, node = cfl_limit(coeffs, g)
    if dt > config.cfl_safety * dt_max * (1 + 1e-12):
        raise CflViolationError(
            f"dt = {dt:.3e} exceeds the stability bound "
            f"{config.cfl_safety * dt_max:.3e} (lambda_max = {lam_max:.3e} "
            f"at node {node})", dt=dt, dt_max=dt_max,
            eigenvalue=lam_max, node=node)
    drift = coeffs.c if config.drift_form == "bilinear" else coeffs.b
    q1 = _collision_operator(half.values, coeffs, drift, g)
    if config.collision_integrator == "euler":
        collided = half.values + dt * q1
    else:  # Heun / RK2 on the frozen-coefficient linear substep
        mid = half.values + dt * q1
        q2 = _collision_operator(mid, coeffs, drift, g)
        collided = half.values + 0.5 * dt * (q1 + q2)
    out = shift_transport(DistributionField(g, collided), 0.5 * dt)
    return out


class _ExplicitRunner:
    """Fused Strang stepper in the real-FFT layout.

    Mathematically identical to `step_explicit`; reorganized so one step
    costs ~15 half-spectrum passes: the transport spectrum is reused for
    the x-smoothing stage, gradients and divergence share one velocity
    transform each, and kernel spectra are precomputed.  Transport phase
    factors are cached per dt, so the auto-CFL mode keeps dt fixed and
    only shrinks it when the stability bound tightens.
    """

    def __init__(self, grid, params, config):
        import scipy.fft as sfft
        self._sf = sfft
        self.g = grid
        self.params = params
        self.config = config
        self.pipe = get_pipeline(grid, params, regularized=False)
        self.pack = self.pipe.rfft_pack()
        self._phases = {}
        self._workers = _fft.get_workers()

    # -- transforms -------------------------------------------------------

    def _rv(self, a):
        return self._sf.rfftn(a, axes=self.g.v_axes, workers=self._workers)

    def _irv(self, a):
        return self._sf.irfftn(a, s=(self.g.nv,) * self.g.dv,
                               axes=self.g.v_axes, workers=self._workers)

    def _rx(self, a):
        return self._sf.rfftn(a, axes=self.g.x_axes, workers=self._workers)

    def _irx(self, a):
        return self._sf.irfftn(a, s=(self.g.nx,) * self.g.dx,
                               axes=self.g.x_axes, workers=self._workers)

    def _vb(self, arr):
        return arr.reshape((1,) * self.g.dx + arr.shape)

    def _phase(self, s):
        """x-spectrum multiplier for the shift x -> x - v s (r-layout)."""
        key = round(s, 15)
        if key in self._phases:
            return self._phases[key]
        g = self.g
        shape_r = [g.nx] * g.dx + [1] * g.dv
        shape_r[g.dx - 1] = g.nx // 2 + 1
        phase = np.ones(tuple(shape_r), dtype=complex)
        for i in range(min(g.dx, g.dv)):
            if i < g.dx - 1:
                k = g.kx
                m = g.nx
            else:
                k = 2.0 * np.pi * np.fft.rfftfreq(g.nx, d=g.hx)
                m = g.nx // 2 + 1
            kshape = [1] * (g.dx + g.dv)
            kshape[i] = m
            v = g.bcast(g.v_coords, g.v_axes[i])
            phase = phase * np.exp(-1j * s * k.reshape(kshape) * v)
        self._phases[key] = phase
        return phase

    # -- one Strang step ----------------------------------------------------

    def step(self, fvals, dt):
        g = self.g
        dv = g.dv
        fx = self._rx(fvals)
        fx *= self._phase(0.5 * dt)
        half = self._irx(fx)
        H = self._irx(fx * self._vb_x(self.pack["kappa"]))
        Hv = self._rv(H)
        A = {}
        for i in range(dv):
            for j in range(i, dv):
                A[(i, j)] = self._irv(Hv * self._vb(self.pack["n"][(i, j)]))
        c = [self._irv(Hv * self._vb(self.pack["c"][i])) for i in range(dv)]
        del Hv, H
        dt_max = self._cfl_from_entries(A)
        if dt > self.config.cfl_safety * dt_max * (1 + 1e-12):
            raise CflViolationError(
                f"dt = {dt:.3e} exceeds the stability bound "
                f"{self.config.cfl_safety * dt_max:.3e}",
                dt=dt, dt_max=dt_max)
        fv = self._rv(half)
        grads = [self._irv(fv * self._vb(self.pack["ikv"][j]))
                 for j in range(dv)]

        def operator(base, grads_list):
            qv = 0.0
            for i in range(dv):
                gi = A[(i, i)] * grads_list[i] - base * c[i]
                for j in range(dv):
                    if j != i:
                        key = (i, j) if i < j else (j, i)
                        gi += A[key] * grads_list[j]
                qv = qv + self._vb(self.pack["ikv"][i]) * self._rv(gi)
            return qv

        qv1 = operator(half, grads)
        if self.config.collision_integrator == "euler":
            fv += dt * qv1
        else:
            mid_v = fv + dt * qv1
            mid = self._irv(mid_v)
            grads_mid = [self._irv(mid_v * self._vb(self.pack["ikv"][j]))
                         for j in range(dv)]
            qv2 = operator(mid, grads_mid)
            fv += 0.5 * dt * (qv1 + qv2)
        fnew = self._irv(fv)
        fx2 = self._rx(fnew)
        fx2 *= self._phase(0.5 * dt)
        return self._irx(fx2), dt_max

    def _vb_x(self, arr):
        return arr.reshape(arr.shape + (1,) * self.g.dv)

    def _cfl_from_entries(self, A):
        g = self.g
        if g.dv == 2:
            tr = A[(0, 0)] + A[(1, 1)]
            disc = np.sqrt((A[(0, 0)] - A[(1, 1)]) ** 2 + 4.0 * A[(0, 1)] ** 2)
            lam_max = float((0.5 * (tr + disc)).max())
        else:
            lam_max = float((A[(0, 0)] + A[(1, 1)] + A[(2, 2)]).max())
        if lam_max <= 0:
            return np.inf
        return g.hv**2 / (2.0 * g.dv * lam_max)


class _FaithfulOperator:
    """Linear operator of one implicit step at frozen coefficients."""

    def __init__(self, grid, params, config, coeffs, sigma=1.0):
        self.g = grid
        self.params = params
        self.config = config
        self.coeffs = coeffs
        self.sigma = sigma
        self.vweight = np.exp(-params.delta * grid.v_norm2())
        # spectral symbol of 1/tau - eps * Laplacian (x and v)
        k2 = np.zeros(grid.shape)
        for a in grid.x_axes:
            k2 = k2 + grid.bcast(grid.kx**2, a)
        for a in grid.v_axes:
            k2 = k2 + grid.bcast(grid.kv**2, a)
        self.symbol = 1.0 / config.tau + params.epsilon * k2
        self.drift = (coeffs.c if config.drift_form == "bilinear"
                      else coeffs.b)

    def transport(self, fvals):
        from .grid import derivative
        out = np.zeros_like(fvals)
        for i, a in enumerate(self.g.x_axes):
            if i >= self.g.dv:
                break
            v = self.g.bcast(self.g.v_coords, self.g.v_axes[i])
            out += v * derivative(fvals, self.g, a)
        return self.vweight * out

    def matvec(self, flat):
        fvals = flat.reshape(self.g.shape)
        fhat = _fft.fftn(fvals.astype(complex),
                         axes=tuple(range(self.g.dx + self.g.dv)))
        base = _fft.ifftn(self.symbol * fhat,
                          axes=tuple(range(self.g.dx + self.g.dv))).real
        coll = _collision_operator(fvals, self.coeffs, self.drift, self.g)
        return (base + self.transport(fvals) - self.sigma * coll).ravel()

    def precond(self, flat):
        fvals = flat.reshape(self.g.shape)
        fhat = _fft.fftn(fvals.astype(complex),
                         axes=tuple(range(self.g.dx + self.g.dv)))
        return _fft.ifftn(fhat / self.symbol,
                          axes=tuple(range(self.g.dx + self.g.dv))).real.ravel()


def step_faithful(f_prev, config, params, sigma=1.0, pipe=None):
    """One implicit step solved by Picard iteration.

    Returns (f_next, info) with info holding picard_iters, the update
    history, and the final linear-solver residual.  Raises
    PicardNonConvergenceError with the residual history when the cap is
    hit (reducing tau is the standard remedy).
    """
    g = f_prev.grid
    if pipe is None:
        pipe = get_pipeline(g, params, regularized=True)
    rhs = (f_prev.values / config.tau).ravel()
    tilde = f_prev
    history = []
    n = f_prev.values.size
    lin_res = np.nan
    for it in range(1, config.picard_max + 1):
        coeffs = pipe.coefficients(tilde)
        op = _FaithfulOperator(g, params, config, coeffs, sigma=sigma)
        A = spla.LinearOperator((n, n), matvec=op.matvec)
        M = spla.LinearOperator((n, n), matvec=op.precond)
        x0 = tilde.values.ravel()
        sol, info = spla.gmres(A, rhs, x0=x0, M=M, rtol=1e-13, atol=0.0,
                               maxiter=400)
        if info != 0:
            raise NumericalError(f"GMRES did not converge (info={info})")
        lin_res = float(np.linalg.norm(A.matvec(sol) - rhs)
                        / max(np.linalg.norm(rhs), 1e-300))
        f_new = DistributionField(g, sol.reshape(g.shape))
        update = (np.abs(f_new.values - tilde.values).sum()
                  / max(np.abs(tilde.values).sum(), 1e-300))
        history.append(update)
        tilde = f_new
        if update < config.picard_tol:
            return f_new, {"picard_iters": it, "residual": update,
                           "history": history, "linear_residual": lin_res}
    raise PicardNonConvergenceError(
        f"Picard iteration did not reach {config.picard_tol:.1e} within "
        f"{config.picard_max} iterations (last update {history[-1]:.3e}); "
        "a smaller tau restores the contraction", residuals=history)


def _negativity_check(f, config, t):
    fmin = float(f.values.min())
    fmax = float(f.values.max())
    if fmin < -config.negative_tol * max(fmax, 1e-300):
        msg = (f"density fell below -{config.negative_tol:.1e} * max f "
               f"at t = {t:.6g} (min f = {fmin:.3e})")
        if config.halt_on_negative:
            raise NumericalError(msg)
        warnings.warn(msg, LeakWarning)
        return True
    return False


def run(config, params, f_in, recorder=None):
    """Advance f_in to t_end, recording frames every snapshot_every steps.

    `recorder(f, params, t, extra) -> record` is called on stored frames
    (the diagnostics module provides one).  Deterministic: no wall-clock
    input, fixed iteration orders.
    """
    config.validate(params)
    f = initial_condition(f_in, params,
                          mode=config.mode)
    if boundary_leak(f) > LEAK_TOLERANCE:
        warnings.warn(
            "velocity-boundary density exceeds the containment bound; "
            "enlarge Lv", LeakWarning)
    traj = Trajectory(config=config, params=params)
    extra = {"negative_flag": False, "picard_iters": 0}

    def record_frame(t, fld):
        rec = recorder(fld, params, t, dict(extra)) if recorder else None
        traj.append(t, fld.copy(), rec)

    t = 0.0
    record_frame(t, f)
    step_index = 0
    while t < config.t_end - 1e-14:
        if config.mode == EXPLICIT:
            if config.dt > 0:
                dt = min(config.dt, config.t_end - t)
            else:
                pipe = get_pipeline(f.grid, params, regularized=False)
                coeffs = pipe.coefficients(f)
                dt_max, _, _ = cfl_limit(coeffs, f.grid)
                dt = min(config.cfl_safety * dt_max, config.t_end - t)
            f = step_explicit(f, dt, params, config)
            extra["picard_iters"] = 0
        else:
            dt = min(config.tau, config.t_end - t)
            if dt < config.tau * (1 - 1e-12):
                cfg = SchemeConfig(**{**config.__dict__, "tau": dt})
            else:
                cfg = config
            f, info = step_faithful(f, cfg, params)
            extra["picard_iters"] = info["picard_iters"]
        t += dt
        step_index += 1
        extra["negative_flag"] = _negativity_check(f, config, t)
        if (step_index % max(config.snapshot_every, 1) == 0
                or t >= config.t_end - 1e-14):
            record_frame(t, f)
    return traj


def limit_sweep(config, params, f_in, schedule):
    """Run the implicit scheme along a (delta, eps, tau) schedule.

    The schedule must be non-increasing in every parameter.  Returns the
    per-run final fields' L1 Cauchy differences and entropy-balance
    residual trend; on smooth data the differences decrease along the
    schedule.
    """
    from dataclasses import replace as _replace
    from .collision import entropy_flog

    prev_final = None
    report = {"schedule": list(schedule), "cauchy_l1": [],
              "entropy_final": [], "runs": 0}
    last = None
    for (delta, eps, tau) in schedule:
        if last is not None:
            if delta > last[0] or eps > last[1] or tau > last[2]:
                raise ConfigError("schedule must decrease monotonically")
        last = (delta, eps, tau)
        p = _replace(params, delta=delta, epsilon=eps, tau=tau)
        cfg = SchemeConfig(**{**config.__dict__, "mode": FAITHFUL,
                              "tau": tau})
        traj = run(cfg, p, f_in)
        final = traj.final()
        report["entropy_final"].append(entropy_flog(final))
        if prev_final is not None:
            diff = float(np.abs(final.values - prev_final.values).sum()
                         * final.grid.weight)
            report["cauchy_l1"].append(diff)
        prev_final = final
        report["runs"] += 1
    return report
