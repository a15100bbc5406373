"""Periodic phase-space discretization and spectral calculus.

The computational domain is the torus [-Lx, Lx)^dx x [-Lv, Lv)^dv sampled on
a uniform tensor grid with nx (resp. nv) points per axis.  Fields are dense
arrays with the x-axes outermost; the quadrature weight of every cell is
hx^dx * hv^dv (midpoint rule, which on a periodic uniform grid coincides
with the trapezoidal rule and is spectrally accurate for smooth data).

Differentiation is spectral: exact for band-limited fields, with the Nyquist
mode of odd-order derivatives zeroed so the result stays real and
antisymmetric.  Free transport is an exact per-velocity-slice phase shift.

The unbounded problem is truncated to this box; `boundary_leak` measures how
much density sits on the velocity-box boundary so runs can warn when the
truncation is no longer harmless.
"""

from dataclasses import dataclass

import numpy as np

from . import _fft
from .errors import ConfigError, NonFiniteFieldError


class PhaseGrid:
    """Uniform periodic tensor grid on [-Lx,Lx)^dx x [-Lv,Lv)^dv.

    Parameters
    ----------
    dx, dv : int
        Spatial and velocity dimensions; dx in {1,2,3}, dv in {2,3}.
        (dv = 1 is rejected: the transverse projection in the collision
        kernel vanishes identically there.)
    nx, nv : int
        Points per spatial / velocity axis, >= 4.  Even counts are the
        standard layout; odd counts are admitted for the tiny verifier
        grids (they have no Nyquist mode at all).
    Lx, Lv : float
        Box half-widths.
    """

    def __init__(self, dx, dv, nx, nv, Lx, Lv):
        if dx not in (1, 2, 3):
            raise ConfigError(f"dx must be 1, 2 or 3, got {dx}")
        if dv not in (2, 3):
            raise ConfigError(f"dv must be 2 or 3, got {dv}")
        for name, n in (("nx", nx), ("nv", nv)):
            if n < 4:
                raise ConfigError(f"{name} must be >= 4, got {n}")
        if Lx <= 0 or Lv <= 0:
            raise ConfigError("box half-widths must be positive")
        self.dx = int(dx)
        self.dv = int(dv)
        self.nx = int(nx)
        self.nv = int(nv)
        self.Lx = float(Lx)
        self.Lv = float(Lv)
        self.hx = 2.0 * self.Lx / self.nx
        self.hv = 2.0 * self.Lv / self.nv
        self.shape = (self.nx,) * self.dx + (self.nv,) * self.dv
        self.size = int(np.prod(self.shape))
        self.x_axes = tuple(range(self.dx))
        self.v_axes = tuple(range(self.dx, self.dx + self.dv))
        self.weight = self.hx**self.dx * self.hv**self.dv
        self.x_coords = -self.Lx + self.hx * np.arange(self.nx)
        self.v_coords = -self.Lv + self.hv * np.arange(self.nv)
        # Angular wavenumbers; on even grids the derivative multiplier
        # zeroes the Nyquist mode (odd grids have none).
        self.kx = 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.hx)
        self.kv = 2.0 * np.pi * np.fft.fftfreq(self.nv, d=self.hv)
        self._kx_diff = self.kx.copy()
        if self.nx % 2 == 0:
            self._kx_diff[self.nx // 2] = 0.0
        self._kv_diff = self.kv.copy()
        if self.nv % 2 == 0:
            self._kv_diff[self.nv // 2] = 0.0

    # -- identity ---------------------------------------------------------

    def _key(self):
        return (self.dx, self.dv, self.nx, self.nv, self.Lx, self.Lv)

    def __eq__(self, other):
        return isinstance(other, PhaseGrid) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return ("PhaseGrid(dx={}, dv={}, nx={}, nv={}, Lx={}, Lv={})"
                .format(*self._key()))

    # -- coordinates ------------------------------------------------------

    def axis_coords(self, axis):
        return self.x_coords if axis < self.dx else self.v_coords

    def bcast(self, arr1d, axis):
        """Reshape a per-axis 1-d array so it broadcasts over the grid."""
        shape = [1] * (self.dx + self.dv)
        shape[axis] = len(arr1d)
        return arr1d.reshape(shape)

    def x_mesh(self):
        """Broadcastable coordinate arrays for the spatial axes."""
        return [self.bcast(self.x_coords, a) for a in self.x_axes]

    def v_mesh(self):
        return [self.bcast(self.v_coords, a) for a in self.v_axes]

    def v_norm2(self):
        """|v|^2 on the velocity part of the grid, broadcastable."""
        out = np.zeros((1,) * self.dx + (self.nv,) * self.dv)
        for a in self.v_axes:
            out = out + self.bcast(self.v_coords, a) ** 2
        return out

    def x_norm2(self):
        out = np.zeros((self.nx,) * self.dx + (1,) * self.dv)
        for a in self.x_axes:
            out = out + self.bcast(self.x_coords, a) ** 2
        return out

    def node_values(self, fn):
        """Evaluate fn(x_mesh, v_mesh) -> array broadcast over the grid."""
        return np.broadcast_to(np.asarray(fn(self.x_mesh(), self.v_mesh()),
                                          dtype=float), self.shape)

    def displacement_coords(self, n, h):
        """Signed displacements in FFT (wrapped) order for an n-point axis."""
        j = np.arange(n)
        d = j * h
        d[j > n // 2] -= n * h
        if n % 2 == 0:
            # the ambiguous +-L cell maps to -L by convention
            d[n // 2] = -h * (n // 2)
        return d

    def v_displacements(self):
        """dv broadcastable displacement arrays over a velocity-shaped grid."""
        d = self.displacement_coords(self.nv, self.hv)
        out = []
        for i in range(self.dv):
            shape = [1] * self.dv
            shape[i] = self.nv
            out.append(d.reshape(shape))
        return out

    def x_displacements(self):
        d = self.displacement_coords(self.nx, self.hx)
        out = []
        for i in range(self.dx):
            shape = [1] * self.dx
            shape[i] = self.nx
            out.append(d.reshape(shape))
        return out


@dataclass
class DistributionField:
    """A nonnegative scalar field f(x, v) sampled on a PhaseGrid.

    Negativity produced by the solver is monitored, never clipped, so
    `values` is only required to be finite here.
    """

    grid: PhaseGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ConfigError(
                f"field shape {self.values.shape} != grid shape {self.grid.shape}")

    def copy(self):
        return DistributionField(self.grid, self.values.copy())

    def mass(self):
        return float(self.values.sum() * self.grid.weight)


def _check_finite(values, what="field"):
    if not np.all(np.isfinite(values)):
        node = np.unravel_index(
            int(np.argmin(np.isfinite(values))), values.shape)
        raise NonFiniteFieldError(
            f"non-finite {what} value at node {node}", node=node)


def integrate(field, weight=None):
    """Quadrature of weight(x,v) * f over the box.

    `weight` may be None (constant 1), an array broadcastable to the grid
    shape, or a callable of (x_mesh, v_mesh) broadcastable arrays.
    """
    g = field.grid
    _check_finite(field.values)
    if weight is None:
        s = field.values.sum()
    else:
        if callable(weight):
            weight = weight(g.x_mesh(), g.v_mesh())
        w = np.asarray(weight, dtype=float)
        _check_finite(np.broadcast_to(w, g.shape), "weight")
        s = (field.values * w).sum()
    return float(s * g.weight)


def _spectral_derivative(values, grid, axis):
    k = grid._kx_diff if axis < grid.dx else grid._kv_diff
    fhat = _fft.fft(values.astype(complex), axis=axis)
    fhat *= 1j * grid.bcast(k, axis)
    return _fft.ifft(fhat, axis=axis).real


def derivative(values, grid, axis):
    """Spectral partial derivative of a raw array along one grid axis."""
    return _spectral_derivative(np.asarray(values, dtype=float), grid, axis)


def gradient_x(field):
    """Spatial gradient; returns an array of shape (dx,) + grid.shape."""
    g = field.grid
    return np.stack([_spectral_derivative(field.values, g, a)
                     for a in g.x_axes])


def gradient_v(field):
    """Velocity gradient; returns an array of shape (dv,) + grid.shape."""
    g = field.grid
    return np.stack([_spectral_derivative(field.values, g, a)
                     for a in g.v_axes])


def shift_transport(field, dt):
    """Advect f by x -> x - v*dt via an exact spectral phase shift.

    Each velocity slice is translated rigidly by v*dt (with v_i driving
    x_i for i <= dx), so the mass of every slice is preserved exactly and
    shifts compose: T(dt1) o T(dt2) = T(dt1+dt2) on band-limited fields.
    """
    g = field.grid
    fhat = _fft.fftn(field.values.astype(complex), axes=g.x_axes)
    for i, a in enumerate(g.x_axes):
        if i >= g.dv:
            break
        k = g.bcast(g.kx, a)
        v = g.bcast(g.v_coords, g.v_axes[i])
        fhat *= np.exp(-1j * dt * k * v)
    out = _fft.ifftn(fhat, axes=g.x_axes).real
    return DistributionField(g, out)


def boundary_leak(field):
    """max |f| over the velocity-box boundary slices, relative to max |f|."""
    g = field.grid
    fmax = float(np.abs(field.values).max())
    if fmax == 0.0:
        return 0.0
    worst = 0.0
    for a in g.v_axes:
        sl = [slice(None)] * (g.dx + g.dv)
        sl[a] = 0
        worst = max(worst, float(np.abs(field.values[tuple(sl)]).max()))
    return worst / fmax


LEAK_TOLERANCE = 1e-10
