import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esavg.core import SimConfig, make_system
from esavg.eslaws import vibrational_averaged_matrix, vibrational_matrix
from esavg.presets import nonlipschitz_average, nonlipschitz_system
from esavg.rng import SplitMix64, sphere_points
from esavg.sim import (
    Trajectory,
    averaging_order_sweep,
    estimate_ultimate_bound,
    has_exact_average,
    integrate,
    integrate_averaged,
    integrate_batch,
    tau_consistent,
)


def _decay():
    return make_system(None, lambda x, tau: -np.asarray(x, dtype=float), [1], dim=1)


def _sine_kick(b):
    b = np.asarray(b, dtype=float)
    return make_system(lambda x, tau: np.sin(np.asarray(tau, dtype=float))[..., None] * b * np.ones_like(x),
                       None, [1], dim=b.size)


def _blowup():
    return make_system(None, lambda x, tau: np.asarray(x, dtype=float) ** 2, [1], dim=1)


class TestIntegrate:
    def test_zero_fields_constant(self):
        s = make_system(None, None, [1], dim=2)
        tr = integrate(s, SimConfig(epsilon=0.3, t_final=1.0, x0=[1.0, -2.0]))
        assert np.all(tr.states == np.array([1.0, -2.0]))

    def test_exact_fast_oscillation(self):
        b, eps = np.array([1.0, -2.0]), 0.1
        tr = integrate(_sine_kick(b), SimConfig(epsilon=eps, t_final=0.5, x0=[3.0, 4.0]))
        exact = np.array([3.0, 4.0]) + eps * np.outer(1.0 - np.cos(tr.tau), b)
        np.testing.assert_allclose(tr.states, exact, atol=1e-8)
        assert np.max(np.linalg.norm(tr.states - [3.0, 4.0], axis=1)) <= 2 * eps * np.linalg.norm(b) * (1 + 1e-8)

    def test_tau_consistency(self):
        tr = integrate(_decay(), SimConfig(epsilon=0.2, t_final=2.0, x0=[1.0], tau0=0.5, record_stride=7))
        assert tau_consistent(tr)
        assert tr.tau[0] == 0.5

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.05, 1.0), st.floats(0.0, 10.0), st.integers(1, 9))
    def test_tau_consistency_property(self, eps, tau0, stride):
        tr = integrate(_decay(), SimConfig(epsilon=eps, t_final=0.05, x0=[1.0], tau0=tau0, record_stride=stride))
        assert tau_consistent(tr)
        assert tr.times[-1] >= 0.05 - 1e-12

    def test_rk4_order(self):
        errs = []
        for m in (10, 20, 40):
            eps = math.sqrt(16.0 / (2.0 * math.pi * m))
            tr = integrate(_decay(), SimConfig(epsilon=eps, t_final=1.0, x0=[1.0], steps_per_fast_period=16))
            errs.append(abs(tr.states[-1, 0] - math.exp(-tr.times[-1])))
        for a, b in zip(errs, errs[1:]):
            assert 12.0 <= a / b <= 20.0

    def test_horizon_shorter_than_step(self):
        with pytest.raises(ValueError, match="horizon shorter than one step"):
            integrate(_decay(), SimConfig(epsilon=1.0, t_final=0.01, x0=[1.0], steps_per_fast_period=16))

    def test_escape_is_data(self):
        tr = integrate(_blowup(), SimConfig(epsilon=0.5, t_final=2.0, x0=[1.0]))
        assert tr.escaped
        assert np.all(np.isfinite(tr.states))
        assert tr.times[-1] < 1.1

    def test_batch_isolates_escape(self):
        trs = integrate_batch(_blowup(), np.array([[1.0], [-1.0]]), SimConfig(epsilon=0.5, t_final=2.0, x0=[0.0]))
        assert trs[0].escaped and not trs[1].escaped
        assert trs[1].states[-1, 0] == pytest.approx(-1.0 / (1.0 + trs[1].times[-1]), rel=1e-8)

    def test_deterministic(self, tmp_path):
        cfg = SimConfig(epsilon=0.1, t_final=1.0, x0=[2.0], seed=5)
        integrate(nonlipschitz_system(), cfg).to_csv(tmp_path / "a.csv")
        integrate(nonlipschitz_system(), cfg).to_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_csv_format(self, tmp_path):
        tr = integrate(_sine_kick([1.0, 1.0]), SimConfig(epsilon=0.5, t_final=0.2, x0=[1.0 / 3.0, 0.0]))
        tr.to_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "t,tau,x1,x2"
        assert lines[1].split(",")[2] == "0.33333333333333331"
        back = Trajectory.from_csv(tmp_path / "t.csv")
        np.testing.assert_array_equal(back.states, tr.states)
        np.testing.assert_array_equal(back.tau, tr.tau)

    def test_nonlipschitz_reaches_origin(self):
        tr = integrate(nonlipschitz_system(), SimConfig(epsilon=0.1, t_final=60.0, x0=[100.0], record_stride=50))
        assert abs(tr.states[-1, 0]) <= 0.1


class TestAveraged:
    def test_zero_field_constant(self):
        tr = integrate_averaged(lambda x: np.zeros_like(x), [1.0, 2.0], 1.0, 0.1)
        assert np.all(tr.states == [1.0, 2.0])

    def test_finite_time_arrival(self):
        tr = integrate_averaged(nonlipschitz_average, [100.0], 40.01, 0.01)
        assert abs(tr.states[-1, 0]) <= 1e-2
        early = tr.times <= 30.0
        np.testing.assert_allclose(tr.states[early, 0], (10.0 - tr.times[early] / 4.0) ** 2, atol=1e-6)

    def test_vibrational_decay_envelope(self):
        B = [[1.0, 1.0], [1.0, -1.0]]
        for A in (vibrational_matrix(B, 0.75, 1.0), vibrational_averaged_matrix(B, 0.75, 1.0)):
            z0 = np.array([1e3, -1e3, 10.0, -10.0])
            tr = integrate_averaged(lambda z: A @ z, z0, 10.0, 0.01)
            ratio = tr.norms()[tr.times >= 1.0] / (np.linalg.norm(z0) * np.exp(-tr.times[tr.times >= 1.0]))
            assert np.all((ratio >= 0.1) & (ratio <= 10.0))

    def test_bad_step(self):
        with pytest.raises(ValueError):
            integrate_averaged(nonlipschitz_average, [1.0], 1.0, 0.0)


class TestSweep:
    def test_exact_average_flag(self):
        assert has_exact_average(_decay())
        assert not has_exact_average(nonlipschitz_system())
        rep = averaging_order_sweep(_decay(), [1.0], 1.0, [0.4, 0.2, 0.1])
        assert rep["exact_average"] and rep["passed"]

    def test_first_order_band_for_fast_systems(self):
        # xdot = cos(tau)/eps * x: averaged gap is first order
        s = make_system(lambda x, tau: 0.3 * np.asarray(x) * np.cos(np.asarray(tau))[..., None],
                        lambda x, tau: -np.asarray(x), [1], dim=1)
        rep = averaging_order_sweep(s, [1.0], 1.0, [0.2, 0.1, 0.05], n_compare=200)
        assert rep["order"] == 1
        assert rep["passed"], rep

    def test_second_order_without_fast_part(self):
        rep = averaging_order_sweep(nonlipschitz_system(), [10.0], 4.0, [0.2, 0.1, 0.05], fbar=nonlipschitz_average)
        assert rep["order"] == 2
        assert all(0.2 <= q <= 0.3 for q in rep["ratios"])
        assert rep["passed"]

    @pytest.mark.parametrize("eps", [[0.1, 0.2, 0.05], [0.2, 0.1]])
    def test_bad_eps_list(self, eps):
        with pytest.raises(ValueError):
            averaging_order_sweep(_decay(), [1.0], 1.0, eps)

    def test_escape_reported(self):
        rep = averaging_order_sweep(_blowup(), [1.0], 2.0, [0.4, 0.2, 0.1], fbar=lambda x: x * x)
        assert not rep["passed"]


class TestBound:
    def test_stable_linear(self):
        est = estimate_ultimate_bound(_decay(), 5, 1.0, SimConfig(epsilon=0.5, t_final=40.0, x0=[0.0]))
        assert est.ultimate_radius < 1e-6
        assert est.escaped_runs == []
        assert len(est.overshoot_envelope) == 5
        assert set(json.loads(est.to_json())) >= {"settle_time", "ultimate_radius", "overshoot_envelope"}

    def test_escapes_are_counterexamples(self):
        est = estimate_ultimate_bound(_blowup(), 4, 2.0, SimConfig(epsilon=0.5, t_final=2.0, x0=[0.0], seed=3))
        assert est.escaped_runs
        assert len(est.escaped_runs) < 4


class TestRng:
    def test_reference_stream(self):
        g = SplitMix64(0)
        assert [g.next_u64() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]

    def test_uniform_range(self):
        g = SplitMix64(42)
        u = np.array([g.uniform() for _ in range(1000)])
        assert u.min() >= 0.0 and u.max() < 1.0

    def test_sphere(self):
        pts = sphere_points(9, 50, 3, 7.0)
        np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 7.0)
        np.testing.assert_array_equal(pts, sphere_points(9, 50, 3, 7.0))
        assert not np.array_equal(pts, sphere_points(10, 50, 3, 7.0))

    def test_seed_range(self):
        with pytest.raises(ValueError):
            SplitMix64(2 ** 64)
