"""Fixed-step simulation of oscillatory and averaged systems, plus empirical stability metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .averaging import AveragingContext, average_field
from .bump import Deltas
from .core import OscillatorySystem, SimConfig, as_vec
from .rng import sphere_points


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    tau: np.ndarray
    meta: dict = field(default_factory=dict)
    escaped: bool = False

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def to_csv(self, path) -> None:
        n = self.states.shape[1]
        header = ",".join(["t", "tau"] + [f"x{i + 1}" for i in range(n)])
        data = np.column_stack([self.times, self.tau, self.states])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
        return cls(times=data[:, 0], states=data[:, 2:], tau=data[:, 1])


def tau_consistent(traj: Trajectory, rtol: float = 1e-9) -> bool:
    """Check ``tau[k] = tau0 + (t[k] - t[0]) / eps**2`` for an oscillatory trajectory."""
    eps = traj.meta["epsilon"]
    expect = traj.tau[0] + (traj.times - traj.times[0]) / eps ** 2
    return bool(np.all(np.abs(traj.tau - expect) <= rtol * np.maximum(1.0, np.abs(expect))))


def _step_size(system: OscillatorySystem, config: SimConfig) -> tuple[float, int]:
    dt = config.epsilon ** 2 * system.period_T / config.steps_per_fast_period
    if dt >= config.t_final:
        raise ValueError("horizon shorter than one step")
    return dt, int(math.ceil(config.t_final / dt - 1e-9))


def integrate_batch(system: OscillatorySystem, X0, config: SimConfig) -> list[Trajectory]:
    """RK4 on all rows of ``X0`` at once; they share the fast time.

    A run whose state turns non-finite is truncated at its last finite record
    and flagged ``escaped``; the others continue.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if X0.shape[1] != system.dim:
        raise ValueError(f"initial conditions are {X0.shape[1]}-D, system is {system.dim}-D")
    eps = config.epsilon
    dt, n_steps = _step_size(system, config)
    dtau = system.period_T / config.steps_per_fast_period
    half_dt, half_dtau = 0.5 * dt, 0.5 * dtau
    stride = config.record_stride
    rec_idx = list(range(0, n_steps + 1, stride))
    if rec_idx[-1] != n_steps:
        rec_idx.append(n_steps)
    rec = np.empty((len(rec_idx), X0.shape[0], system.dim))
    m = X0.shape[0]
    alive = np.ones(m, dtype=bool)
    last_rec = np.full(m, len(rec_idx) - 1)
    f1, f2 = system.f1, system.f2
    inv_eps = 1.0 / eps

    if system.f1_is_zero:
        F = f2
    else:
        def F(x, tau):
            return f1(x, tau) * inv_eps + f2(x, tau)

    x = X0.copy()
    tau0 = float(config.tau0)
    rec[0] = x
    r = 1
    with np.errstate(all="ignore"):
        for k in range(n_steps):
            tk = tau0 + k * dtau
            k1 = F(x, tk)
            k2 = F(x + half_dt * k1, tk + half_dtau)
            k3 = F(x + half_dt * k2, tk + half_dtau)
            k4 = F(x + dt * k3, tk + dtau)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if r < len(rec_idx) and k + 1 == rec_idx[r]:
                rec[r] = x
                r += 1
            ok = np.isfinite(x).all(axis=1)
            if not ok.all():
                newly = alive & ~ok
                if newly.any():
                    last_rec[newly] = r - 2 if k + 1 == rec_idx[r - 1] else r - 1
                    alive &= ok
                    if not alive.any():
                        break
    steps = np.asarray(rec_idx)
    out = []
    for i in range(m):
        kmax = last_rec[i] + 1 if not alive[i] else r
        idx = steps[:kmax]
        times = idx * dt
        out.append(Trajectory(
            times=times, states=rec[:kmax, i, :].copy(), tau=tau0 + times / eps ** 2,
            meta={"epsilon": eps, "seed": int(config.seed), "steps_per_fast_period": config.steps_per_fast_period,
                  "dt": dt, "record_stride": stride, "system": system.name, "integrator": "rk4"},
            escaped=not bool(alive[i])))
    return out


def integrate(system: OscillatorySystem, config: SimConfig) -> Trajectory:
    """Simulate ``x' = f1/eps + f2``, ``tau' = 1/eps**2`` from ``config.x0``."""
    return integrate_batch(system, as_vec(config.x0, system.dim)[None, :], config)[0]


def integrate_averaged(fbar: Callable[[np.ndarray], np.ndarray], x0, t_final: float, dt: float) -> Trajectory:
    """RK4 on the autonomous field ``x' = fbar(x)``; tau is not tracked."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt >= t_final:
        raise ValueError("horizon shorter than one step")
    x = as_vec(x0)
    n_steps = int(math.ceil(t_final / dt - 1e-9))
    states = np.empty((n_steps + 1, x.size))
    states[0] = x
    escaped = False
    k_end = n_steps
    with np.errstate(all="ignore"):
        for k in range(n_steps):
            k1 = fbar(x)
            k2 = fbar(x + 0.5 * dt * k1)
            k3 = fbar(x + 0.5 * dt * k2)
            k4 = fbar(x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)):
                escaped, k_end = True, k
                break
            states[k + 1] = x
    times = np.arange(k_end + 1) * dt
    return Trajectory(times=times, states=states[:k_end + 1], tau=np.zeros(k_end + 1),
                      meta={"averaged": True, "dt": dt}, escaped=escaped)


def has_exact_average(system: OscillatorySystem, n_samples: int = 8, seed: int = 0) -> bool:
    """True when f1 is zero and f2 does not depend on tau, so the system is its own average."""
    if not system.f1_is_zero:
        return False
    rng = np.random.default_rng(seed)
    for _ in range(n_samples):
        x = 3.0 * rng.standard_normal(system.dim)
        taus = rng.uniform(0.0, system.period_T, size=4)
        vals = np.array([system.f2(x, t) for t in taus])
        if np.max(np.abs(vals - vals[0])) > 1e-12 * max(1.0, np.abs(vals).max()):
            return False
    return True


def averaging_order_sweep(system: OscillatorySystem, x0, t_final: float, eps_list: Sequence[float],
                          fbar: Optional[Callable] = None, deltas: Optional[Deltas] = None,
                          steps_per_fast_period: int = 200, n_compare: int = 400,
                          band: tuple = (0.3, 0.7), averaged_dt: Optional[float] = None,
                          order: Optional[int] = None) -> dict:
    """Compare oscillatory runs with the averaged run as epsilon shrinks.

    ``e(eps)`` is the largest gap ``|x_eps(t) - xbar(t)|`` over ``n_compare``
    shared sample times.  ``band`` is the accepted range for the ratio
    ``e(eps_{k+1}) / e(eps_k)`` of a first-order gap when epsilon halves.
    A gap of order p should shrink by ``(eps_{k+1}/eps_k)**p``, so the band is
    multiplied by ``(2 eps_{k+1}/eps_k)**p / 2**(p-1)``.  The order defaults to
    1, or 2 when the system has no fast part: its fast time then runs on the
    scale ``eps**2`` and so does the gap.
    """
    eps = [float(e) for e in eps_list]
    if len(eps) < 3:
        raise ValueError("need at least three epsilon values")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    x0 = as_vec(x0, system.dim)
    exact = has_exact_average(system)
    if order is None:
        order = 2 if system.f1_is_zero else 1
    if fbar is None:
        ctx = AveragingContext(system, deltas or Deltas())

        def fbar(x):
            return average_field(ctx, x)

    dtb = averaged_dt or min(0.01, t_final / 1000.0)
    # the last oscillatory step may overshoot t_final by up to one step of the largest epsilon
    overshoot = eps[0] ** 2 * system.period_T / steps_per_fast_period
    avg = integrate_averaged(fbar, x0, t_final + overshoot + dtb, dtb)
    report = {"eps": eps, "errors": [], "ratios": [], "escaped": [], "exact_average": exact,
              "band": list(band), "order": order, "averaged_escaped": avg.escaped}
    if avg.escaped:
        report["passed"] = False
        return report
    spline = CubicSpline(avg.times, avg.states, axis=0)
    t_shared = np.linspace(0.0, t_final, n_compare + 1)[1:]
    for e in eps:
        cfg = SimConfig(epsilon=e, t_final=t_final, x0=x0, steps_per_fast_period=steps_per_fast_period)
        tr = integrate(system, cfg)
        report["escaped"].append(tr.escaped)
        if tr.escaped:
            report["errors"].append(float("nan"))
            continue
        dt = tr.meta["dt"]
        idx = np.minimum(np.rint(t_shared / dt).astype(int), len(tr.times) - 1)
        gap = np.linalg.norm(tr.states[idx] - spline(tr.times[idx]), axis=1)
        report["errors"].append(float(gap.max()))
    errs = report["errors"]
    ratios = [b / a if a > 0 else float("nan") for a, b in zip(errs, errs[1:])]
    report["ratios"] = ratios
    if any(report["escaped"]):
        report["passed"] = False
    elif exact:
        report["passed"] = bool(max(errs) < 1e-6 or all(q < band[0] for q in ratios))
    else:
        ok = True
        for (a, b), q in zip(zip(eps, eps[1:]), ratios):
            s = (2.0 * b / a) ** order / 2.0 ** (order - 1)
            ok &= bool(band[0] * s <= q <= band[1] * s)
        report["passed"] = ok
    return report


@dataclass
class BoundEstimate:
    settle_time: float
    ultimate_radius: float
    overshoot_envelope: list
    final_window_max: list
    escaped_runs: list
    n_runs: int
    radius0: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def estimate_ultimate_bound(system: OscillatorySystem, n_runs: int, radius0: float, config: SimConfig,
                            final_fraction: float = 0.2) -> BoundEstimate:
    """Empirical ultimate bound from ``n_runs`` seeded initial conditions on a sphere.

    Each run's floor is its largest ``|x|`` over the final ``final_fraction`` of
    the horizon.  The settle time is the first recorded time after which every
    run stays within twice its floor; the ultimate radius is the largest ``|x|``
    of any run from then on.  Escaped runs are reported, not raised.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    X0 = sphere_points(config.seed, n_runs, system.dim, radius0)
    trajs = integrate_batch(system, X0, config)
    escaped = [i for i, tr in enumerate(trajs) if tr.escaped]
    envelope = [[float(np.linalg.norm(X0[i])), float(tr.norms().max())] for i, tr in enumerate(trajs)]
    ok = [tr for tr in trajs if not tr.escaped]
    if not ok:
        return BoundEstimate(math.inf, math.inf, envelope, [], escaped, n_runs, radius0)
    t_end = config.t_final
    times = ok[0].times
    settle_k = 0
    floors = []
    for tr in ok:
        r = tr.norms()
        floor = float(r[tr.times >= (1.0 - final_fraction) * t_end].max())
        floors.append(floor)
        above = np.nonzero(r > 2.0 * floor)[0]
        if above.size:
            settle_k = max(settle_k, int(above[-1]) + 1)
    settle_k = min(settle_k, len(times) - 1)
    ult = max(float(tr.norms()[settle_k:].max()) for tr in ok)
    fwm = [float(tr.norms()[tr.times >= (1.0 - final_fraction) * t_end].max()) if not tr.escaped
           else math.inf for tr in trajs]
    return BoundEstimate(settle_time=float(times[settle_k]), ultimate_radius=ult, overshoot_envelope=envelope,
                         final_window_max=fwm, escaped_runs=escaped, n_runs=n_runs, radius0=float(radius0))
