"""Grid quadrature, spectral differentiation, and exact transport."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flandau.errors import ConfigError, NonFiniteFieldError
from flandau.grid import (DistributionField, PhaseGrid, boundary_leak,
                          gradient_v, gradient_x, integrate, shift_transport)


def maxwellian_field(grid, sigma=1.0, rho_profile=None):
    """rho(x) * (2 pi sigma^2)^{-dv/2} exp(-|v|^2 / 2 sigma^2), unit mass."""
    v2 = grid.v_norm2()
    mv = (2.0 * np.pi * sigma**2) ** (-grid.dv / 2.0) * np.exp(
        -v2 / (2.0 * sigma**2))
    if rho_profile is None:
        rho = np.ones(grid.shape[:grid.dx] + (1,) * grid.dv)
        rho /= (2.0 * grid.Lx) ** grid.dx
    else:
        rho = rho_profile
    return DistributionField(grid, np.broadcast_to(mv * rho, grid.shape).copy())


def band_limited_field(grid, seed=0, max_mode=3, offset=2.0):
    """Random positive field built from a few low trigonometric modes.

    The mode content depends only on `seed` and `max_mode`, so sampling the
    same function on refined grids is possible.
    """
    rng = np.random.default_rng(seed)
    vals = np.full(grid.shape, offset)
    for _ in range(6):
        amp = rng.uniform(-0.3, 0.3)
        phase = rng.uniform(0, 2 * np.pi)
        axis = int(rng.integers(0, grid.dx + grid.dv))
        L = grid.Lx if axis < grid.dx else grid.Lv
        mode = int(rng.integers(1, max_mode + 1))
        c = grid.axis_coords(axis)
        vals = vals + amp * grid.bcast(
            np.cos(np.pi * mode * c / L + phase), axis)
    return DistributionField(grid, vals)


class TestPhaseGrid:
    def test_spacing_exact(self):
        g = PhaseGrid(2, 2, 8, 12, 3.0, 6.0)
        assert g.hx == 2 * 3.0 / 8
        assert g.hv == 2 * 6.0 / 12
        assert g.weight == g.hx**2 * g.hv**2

    @pytest.mark.parametrize("bad", [dict(nx=2), dict(nv=3),
                                     dict(dv=1), dict(dx=4), dict(Lx=-1.0)])
    def test_invalid_construction(self, bad):
        kw = dict(dx=2, dv=2, nx=8, nv=8, Lx=3.0, Lv=3.0)
        kw.update(bad)
        with pytest.raises(ConfigError):
            PhaseGrid(**kw)

    def test_displacements_wrap(self):
        g = PhaseGrid(1, 2, 8, 8, 4.0, 4.0)
        d = g.displacement_coords(8, 1.0)
        assert d[0] == 0.0
        assert d[1] == 1.0
        assert d[7] == -1.0
        assert d[4] == -4.0  # ambiguous +-L cell maps to -L


class TestIntegrate:
    def test_zero_field(self):
        g = PhaseGrid(1, 2, 4, 4, 1.0, 1.0)
        f = DistributionField(g, np.zeros(g.shape))
        assert integrate(f) == 0.0

    def test_gaussian_unit_mass(self):
        g = PhaseGrid(1, 2, 4, 16, 1.0, 6.0)
        f = maxwellian_field(g)
        assert abs(integrate(f) - 1.0) <= 1e-8

    def test_gaussian_second_moment(self):
        g = PhaseGrid(1, 3, 4, 20, 1.0, 7.5)
        f = maxwellian_field(g)
        v2 = integrate(f, lambda xm, vm: sum(c**2 for c in vm))
        assert abs(v2 - g.dv) <= 1e-8

    def test_nonfinite_rejected(self):
        g = PhaseGrid(1, 2, 4, 4, 1.0, 1.0)
        vals = np.ones(g.shape)
        vals[2, 1, 3] = np.nan
        f = DistributionField(g, vals)
        with pytest.raises(NonFiniteFieldError) as err:
            integrate(f)
        assert err.value.node == (2, 1, 3)

    @settings(max_examples=25, deadline=None, derandomize=True)
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 50))
    def test_linearity(self, a, b, seed):
        g = PhaseGrid(1, 2, 4, 6, 1.0, 2.0)
        rng = np.random.default_rng(seed)
        f1 = DistributionField(g, rng.random(g.shape))
        f2 = DistributionField(g, rng.random(g.shape))
        w = rng.standard_normal(g.shape)
        combo = DistributionField(g, a * f1.values + b * f2.values)
        lhs = integrate(combo, w)
        rhs = a * integrate(f1, w) + b * integrate(f2, w)
        assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs) + abs(rhs))


class TestGradients:
    def test_constant_field(self):
        g = PhaseGrid(2, 2, 8, 8, 2.0, 3.0)
        f = DistributionField(g, np.full(g.shape, 1.7))
        assert np.abs(gradient_x(f)).max() < 1e-13
        assert np.abs(gradient_v(f)).max() < 1e-13

    def test_single_mode_exact(self):
        g = PhaseGrid(2, 2, 16, 8, 2.0, 3.0)
        x1 = g.bcast(g.x_coords, 0)
        f = DistributionField(
            g, np.broadcast_to(np.sin(np.pi * x1 / g.Lx), g.shape).copy())
        expected = (np.pi / g.Lx) * np.cos(np.pi * x1 / g.Lx)
        got = gradient_x(f)
        assert np.abs(got[0] - expected).max() < 1e-12
        assert np.abs(got[1]).max() < 1e-12

    def test_matches_finite_differences_second_order(self):
        # Sample the same band-limited function at n and 2n; the FD error
        # against the (exact) spectral derivative must drop ~4x.
        def run(nv):
            g = PhaseGrid(1, 2, 4, nv, 1.0, 3.0)
            v1 = g.bcast(g.v_coords, 1)
            v2 = g.bcast(g.v_coords, 2)
            vals = 2.0 + np.sin(np.pi * v1 / g.Lv) * np.cos(
                2 * np.pi * v2 / g.Lv) + 0.3 * np.cos(3 * np.pi * v1 / g.Lv)
            f = DistributionField(g, np.broadcast_to(vals, g.shape).copy())
            spec = gradient_v(f)[0]
            fd = (np.roll(f.values, -1, axis=1)
                  - np.roll(f.values, 1, axis=1)) / (2 * g.hv)
            return np.abs(fd - spec).max()

        e1, e2 = run(16), run(32)
        assert e2 < e1 / 3.0


class TestShiftTransport:
    def test_dt_zero_identity(self):
        g = PhaseGrid(1, 2, 8, 8, 2.0, 2.0)
        f = band_limited_field(g, seed=1)
        out = shift_transport(f, 0.0)
        assert np.abs(out.values - f.values).max() < 1e-14

    def test_zero_velocity_slice_unchanged(self):
        g = PhaseGrid(1, 2, 8, 8, 2.0, 2.0)
        f = band_limited_field(g, seed=2)
        iz = np.argmin(np.abs(g.v_coords))
        assert g.v_coords[iz] == 0.0
        out = shift_transport(f, 0.37)
        assert np.abs(out.values[:, iz, :] - f.values[:, iz, :]).max() < 1e-13

    def test_mass_per_slice_preserved(self):
        g = PhaseGrid(2, 2, 8, 6, 2.0, 2.0)
        f = band_limited_field(g, seed=3)
        out = shift_transport(f, 0.21)
        before = f.values.sum(axis=(0, 1))
        after = out.values.sum(axis=(0, 1))
        assert np.abs(before - after).max() < 1e-12

    def test_shifts_compose(self):
        g = PhaseGrid(1, 2, 16, 8, 2.0, 2.0)
        f = band_limited_field(g, seed=4)
        one = shift_transport(shift_transport(f, 0.13), 0.29)
        two = shift_transport(f, 0.42)
        assert np.abs(one.values - two.values).max() < 1e-12

    def test_exact_against_known_translation(self):
        # Single x-mode: the advected field is the phase-shifted mode.
        g = PhaseGrid(1, 2, 16, 8, 2.0, 2.0)
        x = g.bcast(g.x_coords, 0)
        v1 = g.bcast(g.v_coords, 1)
        f = DistributionField(
            g, np.broadcast_to(2.0 + np.cos(np.pi * x / g.Lx), g.shape).copy())
        dt = 0.3
        out = shift_transport(f, dt)
        expected = 2.0 + np.cos(np.pi * (x - v1 * dt) / g.Lx)
        assert np.abs(out.values - np.broadcast_to(expected, g.shape)).max() < 1e-12


def test_boundary_leak_detects_fat_tails():
    g = PhaseGrid(1, 2, 4, 16, 1.0, 6.0)
    contained = maxwellian_field(g)
    assert boundary_leak(contained) < 1e-7
    fat = maxwellian_field(g, sigma=4.0)
    assert boundary_leak(fat) > 1e-3
