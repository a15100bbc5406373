"""Pointwise kernel identities, regularized kernels, and the commutator table."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flandau.errors import ConfigError
from flandau.kernels import (ModelParams, bracket, commutator,
                             div_landau_kernel, div_reg_landau_kernel,
                             landau_kernel, lifted_field, projection,
                             reg_landau_kernel, rotation_field,
                             scaled_rotation_field, spatial_kernel,
                             sqrt_reg_landau_kernel)

unit = st.floats(-5, 5).filter(lambda x: abs(x) > 1e-3)
vec3 = st.tuples(unit, unit, unit).map(np.array)


class TestProjection:
    def test_axis_vector(self):
        assert np.allclose(projection(np.array([1.0, 0, 0])),
                           np.diag([0.0, 1.0, 1.0]))

    def test_trace_rank(self):
        w = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
        assert abs(np.trace(projection(w)) - 2.0) < 1e-14

    def test_zero_convention(self):
        assert np.all(projection(np.zeros(3)) == 0.0)

    @settings(max_examples=50, deadline=None, derandomize=True)
    @given(w=vec3)
    def test_idempotent_symmetric_annihilates(self, w):
        p = projection(w)
        assert np.allclose(p, p.T, atol=1e-14)
        assert np.allclose(p @ p, p, atol=1e-12)
        assert np.allclose(p @ w, 0.0, atol=1e-12 * np.linalg.norm(w))


class TestLandauKernel:
    def test_direct_substitution(self):
        p = ModelParams(gamma=0.0)
        n = landau_kernel(np.array([2.0, 0, 0]), p)
        assert np.allclose(n, 4.0 * np.diag([0.0, 1.0, 1.0]))

    @settings(max_examples=40, deadline=None, derandomize=True)
    @given(w=vec3, gamma=st.floats(-3, 1))
    def test_trace_and_kernel_vector(self, w, gamma):
        p = ModelParams(gamma=gamma)
        n = landau_kernel(w, p)
        r = np.linalg.norm(w)
        assert abs(np.trace(n) - 2.0 * r ** (gamma + 2.0)) < 1e-10 * max(
            1, r ** (gamma + 2))
        assert np.allclose(n @ w, 0.0, atol=1e-10 * max(1, r ** (gamma + 3)))

    def test_origin(self):
        assert np.all(landau_kernel(np.zeros(3), ModelParams(gamma=0.0)) == 0)
        assert np.all(landau_kernel(np.zeros(3), ModelParams(gamma=-2.0)) == 0)


class TestDivLandauKernel:
    def test_paper_value(self):
        p = ModelParams(gamma=0.0)
        got = div_landau_kernel(np.array([1.0, 0, 0]), p)
        assert np.allclose(got, [-2.0, 0, 0])

    def test_odd_at_origin(self):
        assert np.all(div_landau_kernel(np.zeros(3), ModelParams(gamma=-1.0)) == 0)

    @pytest.mark.parametrize("gamma", [-1.0, 0.0, 0.5])
    def test_matches_finite_difference_divergence(self, gamma):
        p = ModelParams(gamma=gamma)
        rng = np.random.default_rng(7)
        h = 1e-4
        for _ in range(20):
            w = rng.uniform(-2, 2, size=3)
            if np.linalg.norm(w) < 0.3:
                continue
            fd = np.zeros(3)
            for j in range(3):
                e = np.zeros(3)
                e[j] = h
                fd += (landau_kernel(w + e, p)[:, j]
                       - landau_kernel(w - e, p)[:, j]) / (2 * h)
            exact = div_landau_kernel(w, p)
            assert np.linalg.norm(fd - exact) <= 1e-6 * max(
                1.0, np.linalg.norm(exact))


class TestRegularizedKernels:
    def test_value_at_origin(self):
        p = ModelParams(gamma=-1.0, delta=0.1)
        n0 = reg_landau_kernel(np.zeros(3), p)
        assert np.allclose(n0, 0.1 ** (1 - 0.5) * np.eye(3))

    @settings(max_examples=40, deadline=None, derandomize=True)
    @given(w=vec3, xi=vec3, gamma=st.floats(-3, 1),
           delta=st.floats(1e-3, 0.5))
    def test_quantitative_lower_bound(self, w, xi, gamma, delta):
        p = ModelParams(gamma=gamma, delta=delta)
        n = reg_landau_kernel(w, p)
        r2 = w @ w
        quad = xi @ n @ xi
        lower = (xi @ xi) * np.exp(-delta * r2) * (delta + r2) ** (
            gamma / 2.0) * delta
        assert quad >= lower * (1 - 1e-10)

    def test_first_order_convergence_to_landau(self):
        w = np.array([0.7, -0.4, 1.1])
        p0 = ModelParams(gamma=-1.0)
        target = landau_kernel(w, p0)
        errs = []
        for delta in (1e-2, 1e-3, 1e-4):
            nd = reg_landau_kernel(w, ModelParams(gamma=-1.0, delta=delta))
            errs.append(np.abs(nd - target).max())
        assert errs[1] < 0.2 * errs[0]
        assert errs[2] < 0.2 * errs[1]

    def test_delta_required(self):
        with pytest.raises(ConfigError):
            reg_landau_kernel(np.ones(3), ModelParams(gamma=0.0, delta=0.0))

    def test_div_reg_matches_finite_differences(self):
        p = ModelParams(gamma=-1.0, delta=0.2)
        rng = np.random.default_rng(3)
        h = 1e-4
        for _ in range(10):
            w = rng.uniform(-2, 2, size=3)
            fd = np.zeros(3)
            for j in range(3):
                e = np.zeros(3)
                e[j] = h
                fd += (reg_landau_kernel(w + e, p)[:, j]
                       - reg_landau_kernel(w - e, p)[:, j]) / (2 * h)
            exact = div_reg_landau_kernel(w, p)
            assert np.linalg.norm(fd - exact) <= 1e-6 * max(
                1.0, np.linalg.norm(exact))

    def test_div_reg_limits_to_unregularized(self):
        w = np.array([0.9, 0.2, -0.5])
        p0 = ModelParams(gamma=-1.0)
        exact = div_landau_kernel(w, p0)
        nd = div_reg_landau_kernel(w, ModelParams(gamma=-1.0, delta=1e-7))
        assert np.linalg.norm(nd - exact) < 1e-5


class TestSqrtRegKernel:
    @settings(max_examples=40, deadline=None, derandomize=True)
    @given(w=vec3, gamma=st.floats(-3, 1), delta=st.floats(1e-3, 0.5))
    def test_square_recovers_kernel(self, w, gamma, delta):
        p = ModelParams(gamma=gamma, delta=delta)
        m = sqrt_reg_landau_kernel(w, p)
        n = reg_landau_kernel(w, p)
        assert np.abs(m @ m - n).max() <= 1e-12 * max(1.0, np.abs(n).max())

    def test_origin(self):
        p = ModelParams(gamma=-1.0, delta=0.3)
        m0 = sqrt_reg_landau_kernel(np.zeros(3), p)
        assert np.allclose(m0, 0.3 ** ((2 - 1.0) / 4.0) * np.eye(3))

    def test_eigenvector_along_w(self):
        p = ModelParams(gamma=0.0, delta=0.2)
        w = np.array([1.0, -2.0, 0.5])
        m = sqrt_reg_landau_kernel(w, p)
        n = reg_landau_kernel(w, p)
        lam_n = (w @ n @ w) / (w @ w)
        lam_m = (w @ m @ w) / (w @ w)
        assert abs(lam_m - np.sqrt(lam_n)) < 1e-12

    def test_closed_form_across_gaussian_factor(self):
        # The quoted closed form omits the Gaussian factor of N_delta; the
        # implemented principal root carries exp(-delta|w|^2 / 2) extra.
        gamma, delta = -1.0, 0.2
        p = ModelParams(gamma=gamma, delta=delta)
        w = np.array([0.6, 0.1, -0.8])
        r2 = w @ w
        pfac = delta + r2
        closed = pfac ** ((gamma + 2) / 4.0) * (
            np.eye(3) - (1 - np.sqrt(delta) / np.sqrt(pfac))
            * np.outer(w, w) / r2)
        m = sqrt_reg_landau_kernel(w, p)
        assert np.abs(m - np.exp(-delta * r2 / 2.0) * closed).max() < 1e-12


class TestSpatialKernel:
    def test_constant(self):
        p = ModelParams(kappa_choice="constant_one")
        assert spatial_kernel(np.array([0.3, -2.0, 5.0]), p) == 1.0

    def test_inverse_bracket_at_zero(self):
        p = ModelParams(kappa_choice="inverse_bracket", lam=2.0, kappa1=0.7,
                        kappa2=0.7)
        assert abs(spatial_kernel(np.zeros(3), p) - 0.7) < 1e-15

    def test_regularized_ratio(self):
        p = ModelParams(kappa_choice="inverse_bracket", lam=1.0, delta=0.3)
        rng = np.random.default_rng(1)
        for _ in range(10):
            y = rng.uniform(-3, 3, size=3)
            ratio = (spatial_kernel(y, p, regularized=True)
                     / spatial_kernel(y, p))
            assert abs(ratio - np.exp(-0.3 * (y @ y))) < 1e-14

    def test_two_sided_bound(self):
        p = ModelParams(kappa_choice="inverse_bracket", lam=1.5, kappa1=0.5,
                        kappa2=2.0)
        rng = np.random.default_rng(2)
        for _ in range(50):
            x = rng.uniform(-5, 5, size=2)
            val = spatial_kernel(x, p)
            br = bracket(np.linalg.norm(x)) ** (-1.5)
            assert 0.5 * br * (1 - 1e-14) <= val <= 2.0 * br * (1 + 1e-14)

    def test_derivative_domination(self):
        # |d kappa / d x_i| <= C kappa for the built-in family (C ~ lambda).
        p = ModelParams(kappa_choice="inverse_bracket", lam=2.0)
        h = 1e-6
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = rng.uniform(-4, 4, size=3)
            for j in range(3):
                e = np.zeros(3)
                e[j] = h
                d = (spatial_kernel(x + e, p) - spatial_kernel(x - e, p)) / (2 * h)
                assert abs(d) <= (p.lam + 1e-3) * spatial_kernel(x, p)

    def test_misconfiguration(self):
        with pytest.raises(ConfigError):
            ModelParams(kappa_choice="constant_one", lam=1.0)


class TestRotationFields:
    def test_displayed_sign(self):
        # u = e3, k = 1: second component is w3 - v3 = -1.
        b1 = rotation_field(1, np.array([0, 0, 1.0]), np.zeros(3))
        assert np.allclose(b1, [0.0, -1.0, 0.0])

    @settings(max_examples=40, deadline=None, derandomize=True)
    @given(v=vec3, w=vec3)
    def test_tangency(self, v, w):
        u = v - w
        for k in (1, 2, 3):
            assert abs(rotation_field(k, v, w) @ u) <= 1e-12 * max(1, u @ u)

    def test_sum_outer_products_is_projection(self):
        rng = np.random.default_rng(11)
        p = ModelParams(gamma=-1.0)
        for _ in range(1000):
            v, w = rng.uniform(-3, 3, size=(2, 3))
            u = v - w
            r2 = u @ u
            if r2 < 1e-6:
                continue
            acc = np.zeros((3, 3))
            for k in (1, 2, 3):
                b = rotation_field(k, v, w)
                acc += np.outer(b, b)
            target = r2 * projection(u)
            assert np.abs(acc - target).max() <= 1e-12 * max(1.0, r2)
            n_target = r2 ** (p.gamma / 2.0) * acc
            assert np.abs(landau_kernel(u, p) - n_target).max() <= 1e-10 * max(
                1.0, np.abs(n_target).max())

    def test_dimension_guard(self):
        with pytest.raises(ConfigError):
            rotation_field(1, np.ones(2), np.zeros(2))
        with pytest.raises(ConfigError):
            rotation_field(4, np.ones(3), np.zeros(3))


class TestLiftedFields:
    def test_displays(self):
        z = np.arange(12.0)
        e1 = np.array([1.0, 0, 0])
        et = lifted_field("e~1").value(z)
        assert np.allclose(et, np.concatenate([e1, 0 * e1, e1, 0 * e1]))
        xih = lifted_field("xi^2").value(z)
        e2 = np.array([0, 1.0, 0])
        assert np.allclose(xih, np.concatenate([0 * e2, e2, 0 * e2, -e2]))

    def test_b_tilde_from_rotation(self):
        z = np.zeros(12)
        z[3:6] = [0, 0, 1.0]  # v - w = e3
        bt = lifted_field("b~1").value(z)
        assert np.allclose(bt[3:6], [0, -1.0, 0])
        assert np.allclose(bt[9:12], [0, 1.0, 0])
        assert np.allclose(bt[:3], 0) and np.allclose(bt[6:9], 0)

    def test_bad_tag(self):
        with pytest.raises(ConfigError):
            lifted_field("q7")


def random_z(rng, min_sep=0.3):
    while True:
        z = rng.uniform(-3, 3, size=12)
        if np.linalg.norm(z[3:6] - z[9:12]) > min_sep:
            return z


class TestCommutatorTable:
    """Every identity of the commutator table, exact at random points."""

    N_POINTS = 1000

    def test_vanishing_commutators(self):
        rng = np.random.default_rng(42)
        gamma = -1.3
        for _ in range(self.N_POINTS):
            z = random_z(rng)
            for i in (1, 2, 3):
                for k in (1, 2, 3):
                    sab = scaled_rotation_field(k, gamma)
                    for tag in (f"e~{i}", f"e^{i}"):
                        c = commutator(lifted_field(tag), sab, z)
                        assert np.abs(c).max() <= 1e-12
                    c = commutator(lifted_field(f"xi~{i}"),
                                   lifted_field(f"b~{k}"), z)
                    assert np.abs(c).max() <= 1e-12
                c = commutator(lifted_field(f"xi^{i}"),
                               lifted_field(f"b~{i}"), z)
                assert np.abs(c).max() <= 1e-12

    def test_rotation_algebra(self):
        rng = np.random.default_rng(43)
        pairs = [((1, 2), -2, 3), ((2, 1), 2, 3),
                 ((1, 3), 2, 2), ((3, 1), -2, 2),
                 ((3, 2), 2, 1), ((2, 3), -2, 1)]
        for _ in range(self.N_POINTS):
            z = random_z(rng)
            for (i, k), coef, out in pairs:
                got = commutator(lifted_field(f"xi^{i}"),
                                 lifted_field(f"b~{k}"), z)
                expected = coef * lifted_field(f"xi^{out}").value(z)
                assert np.abs(got - expected).max() <= 1e-12

    def test_scaled_xi_hat_formula(self):
        rng = np.random.default_rng(44)
        gamma = -0.7
        for _ in range(self.N_POINTS):
            z = random_z(rng)
            u = z[3:6] - z[9:12]
            r2 = u @ u
            alpha_sqrt = r2 ** (gamma / 4.0)
            for i in (1, 2, 3):
                for k in (1, 2, 3):
                    got = commutator(lifted_field(f"xi^{i}"),
                                     scaled_rotation_field(k, gamma), z)
                    plain = commutator(lifted_field(f"xi^{i}"),
                                       lifted_field(f"b~{k}"), z)
                    expected = (alpha_sqrt * plain
                                + gamma * u[i - 1] * alpha_sqrt / r2
                                * lifted_field(f"b~{k}").value(z))
                    scale = max(1.0, np.abs(expected).max())
                    assert np.abs(got - expected).max() <= 1e-12 * scale
