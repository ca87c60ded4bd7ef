import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esavg.averaging import AveragingContext, average_field
from esavg.costs import (
    check_assumption5a,
    check_assumption5b,
    check_drift_bound,
    check_hessian_bound,
    cost_nonconvex_sin,
    cost_quadratic,
    cost_tanh_norm,
    linear_drift,
    make_cost,
    no_drift,
)
from esavg.eslaws import (
    assemble_es_system,
    assemble_vibrational_system,
    averaged_es_field_closed_form,
    bracket_sign,
    control_directions,
    law1_u,
    law2_u,
    skew_gram,
    vibrational_averaged_matrix,
    vibrational_matrix,
)


def _fd_grad(f, x, h=1e-6):
    return np.array([(f(x + e) - f(x - e)) / (2 * h) for e in np.eye(x.size) * h])


class TestCosts:
    @pytest.mark.parametrize("cost", [cost_nonconvex_sin([1.0, -2.0]), cost_tanh_norm([0.5, 0.5]),
                                      cost_quadratic([0.0, 1.0], [[2.0, 0.5], [0.5, 1.0]])])
    def test_gradient_matches_differences(self, cost):
        rng = np.random.default_rng(5)
        for _ in range(10):
            x = cost.x_star + rng.uniform(-4.0, 4.0, 2)
            np.testing.assert_allclose(cost.gradient(x), _fd_grad(cost.value, x), rtol=1e-6, atol=1e-6)

    def test_minimum_values(self):
        assert cost_nonconvex_sin([3.0, 4.0]).value(np.array([3.0, 4.0])) == 1.0
        assert cost_tanh_norm([0.0, 0.0]).value(np.zeros(2)) == -100.0
        np.testing.assert_array_equal(cost_tanh_norm([0.0, 0.0]).gradient(np.zeros(2)), 0.0)

    def test_quadratic_validation(self):
        with pytest.raises(ValueError, match="symmetric"):
            cost_quadratic([0.0, 0.0], [[1.0, 1.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="positive definite"):
            cost_quadratic([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])

    def test_declared_constants_hold(self):
        nc, th = cost_nonconvex_sin([0.0, 0.0]), cost_tanh_norm([0.0, 0.0])
        assert check_assumption5a(nc, n_samples=2000)["passed"]
        assert check_assumption5b(th, n_samples=2000)["passed"]
        assert check_hessian_bound(nc, n_samples=300)["passed"]
        assert check_hessian_bound(th, n_samples=300)["passed"]

    def test_tanh_gradient_bounded_far_away(self):
        th = cost_tanh_norm([0.0, 0.0])
        assert np.linalg.norm(th.gradient(np.array([1e8, -1e8]))) == pytest.approx(1.0)

    def test_overstated_constant_detected(self):
        q = cost_quadratic([0.0, 0.0], np.diag([1.0, 2.0]))
        weak = type(q)(**{**q.__dict__, "alpha_J": lambda s: 1.5 * np.tanh(s)})
        assert not check_assumption5a(weak, n_samples=2000)["passed"]

    def test_drift_bound(self):
        nc = cost_nonconvex_sin([0.0, 0.0])
        assert check_drift_bound(linear_drift([0.0, 0.0], 0.5, 0.8), nc)["passed"]
        assert not check_drift_bound(linear_drift([0.0, 0.0], 0.5, 0.3), nc)["passed"]
        np.testing.assert_array_equal(no_drift(2).b0(np.ones((3, 2))), 0.0)

    def test_make_cost(self):
        assert make_cost("tanh_norm").x_star.tolist() == [1e3, -1e3]
        with pytest.raises(ValueError):
            make_cost("quadratic")
        with pytest.raises(ValueError, match="unknown cost"):
            make_cost("rosenbrock")


class TestDirections:
    def test_gamma_defaults_to_smallest_eigenvalue(self):
        d = control_directions([[[2.0, 0.0], [0.0, 1.0]]])
        assert d.gamma == pytest.approx(1.0)

    def test_rejects_overstated_gamma(self):
        with pytest.raises(ValueError):
            control_directions([[[1.0, 0.0], [0.0, 1.0]]], gamma=1.5)

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            control_directions([[[1.0, 0.0], [2.0, 0.0]]])

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            control_directions([[1.0, 0.0], [0.0, 1.0]])


class TestLaws:
    def test_law1_amplitude_and_phase(self):
        J, tau, w = 3.0, 0.7, 2.0
        assert law1_u(0, 1, J, tau, w) == pytest.approx(np.sqrt(2 * w * J) * np.cos(np.log(J) + w * tau))
        assert law1_u(0, 2, J, tau, w) == pytest.approx(np.sqrt(2 * w * J) * np.sin(np.log(J) + w * tau))
        assert law1_u(0, 1, 0.0, tau, w) == 0.0

    def test_law2_amplitude_and_phase(self):
        J, tau, w = -4.0, 1.1, 1.0
        assert law2_u(0, 1, J, tau, w) == pytest.approx(np.sqrt(2 * w) * np.cos(J + w * tau))
        assert law2_u(0, 2, J, tau, w) == pytest.approx(np.sqrt(2 * w) * np.sin(J + w * tau))
        with pytest.raises(ValueError):
            law2_u(0, 0, J, tau, w)

    @pytest.mark.parametrize("law", [1, 2])
    def test_jacobian_matches_differences(self, law):
        cost = cost_quadratic([0.3, -0.2], [[1.0, 0.2], [0.2, 2.0]])
        dirs = control_directions([[[1.0, 0.0], [0.0, 1.0]], [[1.0, 1.0], [1.0, -1.0]]])
        s = assemble_es_system(cost, no_drift(2), dirs, [1, 2], law)
        rng = np.random.default_rng(7)
        for _ in range(8):
            x, tau = rng.uniform(-2, 2, 2), rng.uniform(0, 7)
            fd = np.stack([(s.f1(x + e, tau) - s.f1(x - e, tau)) / 2e-6 for e in np.eye(2) * 1e-6], axis=-1)
            np.testing.assert_allclose(s.jac_f1(x, tau), fd, rtol=1e-5, atol=1e-6)

    @settings(max_examples=300)
    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(0.0, 1e3))
    def test_law2_fast_field_bounded(self, a, b, tau):
        cost = cost_tanh_norm([0.0, 0.0])
        dirs = control_directions([[[2.0, 0.0], [0.0, 2.0]], [[0.0, 1.0], [1.0, 0.0]]])
        s = assemble_es_system(cost, no_drift(2), dirs, [1, "3/2"], 2)
        bound = np.sqrt(2.0) * 4.0 + np.sqrt(3.0) * 2.0
        assert np.linalg.norm(s.f1(np.array([a, b]), tau)) <= bound

    def test_mismatched_frequencies(self):
        cost = cost_tanh_norm([0.0, 0.0])
        dirs = control_directions([[[1.0, 0.0], [0.0, 1.0]]])
        with pytest.raises(ValueError, match="one frequency per channel"):
            assemble_es_system(cost, no_drift(2), dirs, [1, 2], 2)
        with pytest.raises(ValueError, match="law"):
            assemble_es_system(cost, no_drift(2), dirs, [1], 3)


class TestAveragedES:
    def test_bracket_sign_is_descent(self):
        assert bracket_sign(1) == -1
        assert bracket_sign(2) == -1

    @pytest.mark.parametrize("law", [1, 2])
    def test_closed_form_matches_quadrature(self, law):
        cost = cost_nonconvex_sin([0.0, 0.0])
        drift = linear_drift([0.0, 0.0], 0.5, 0.8)
        dirs = control_directions([[[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.5], [-0.5, 1.0]]])
        s = assemble_es_system(cost, drift, dirs, [1, 2], law)
        ctx = AveragingContext(s)
        closed = averaged_es_field_closed_form(cost, drift, dirs, law)
        for x in np.random.default_rng(9).uniform(-4, 4, (6, 2)):
            ref = closed(x)
            np.testing.assert_allclose(average_field(ctx, x), ref, atol=1e-6 * max(1.0, np.abs(ref).max()))

    def test_law1_skew_term_is_orthogonal_to_gradient(self):
        dirs = control_directions([[[1.0, 0.3], [-0.2, 1.0]]])
        S = skew_gram(dirs)
        np.testing.assert_allclose(S, -S.T)
        g = np.array([0.7, -1.3])
        assert g @ S @ g == pytest.approx(0.0, abs=1e-15)

    def test_minimiser_is_equilibrium(self):
        cost = cost_tanh_norm([0.0, 0.0])
        dirs = control_directions([[[2.0, 0.0], [0.0, 2.0]]])
        ctx = AveragingContext(assemble_es_system(cost, no_drift(2), dirs, [1], 2))
        np.testing.assert_allclose(average_field(ctx, np.zeros(2)), 0.0, atol=1e-12)


class TestVibrational:
    def test_rank_check(self):
        with pytest.raises(ValueError, match="full rank"):
            assemble_vibrational_system([[1.0, 1.0], [1.0, 1.0]], 0.75, 1.0)

    def test_reference_matrix_is_hurwitz(self):
        A = vibrational_matrix([[1.0, 1.0], [1.0, -1.0]], 0.75, 1.0)
        assert np.linalg.eigvals(A).real.max() <= -1e-3

    def test_quadrature_average_is_linear(self):
        B = [[1.0, 1.0], [1.0, -1.0]]
        ctx = AveragingContext(assemble_vibrational_system(B, 0.75, 1.0))
        A2 = vibrational_averaged_matrix(B, 0.75, 1.0)
        for z in np.random.default_rng(4).uniform(-3, 3, (8, 4)):
            np.testing.assert_allclose(average_field(ctx, z), A2 @ z, atol=1e-6)
        assert np.linalg.eigvals(A2).real.max() < 0
