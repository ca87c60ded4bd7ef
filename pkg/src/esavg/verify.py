"""Named verification suites with a machine-readable report."""

from __future__ import annotations

import time
from typing import Callable

import numpy as np

from .averaging import AveragingContext, Psi_inverse, Phi, average_field, period_residuals
from .bump import Deltas, _dchi2, chi2, grad_phi, phi
from .costs import (
    check_assumption5a,
    check_assumption5b,
    check_drift_bound,
    check_hessian_bound,
    cost_nonconvex_sin,
    cost_quadratic,
    cost_tanh_norm,
    nonconvex_dh,
    sample_ball,
)
from .eslaws import vibrational_averaged_matrix, vibrational_matrix
from .presets import PRESETS, build, preset
from .sim import averaging_order_sweep, estimate_ultimate_bound

SUITES = ("bump", "costs", "averaging", "descent", "order", "bounds")


def _check(name: str, passed, **detail) -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def suite_bump() -> list[dict]:
    out = []
    rng = np.random.default_rng(0)
    for d in (Deltas(0.5, 1.0, 2.0), Deltas(1.0, 3.0, 10.0), Deltas(0.0, 0.0, 1.0)):
        pts = rng.standard_normal((2000, 2))
        pts *= (rng.uniform(0.0, 2.5 * max(d.delta2, 1.0), 2000) / np.linalg.norm(pts, axis=1))[:, None]
        r = np.linalg.norm(pts, axis=1)
        v = phi(pts, d)
        outer = r >= d.delta2
        inner = r <= d.delta1
        out.append(_check(f"plateau {d.delta1},{d.delta2}", np.all(v[outer] == 1.0) and np.all(v[inner] == 0.0),
                          outer=int(outer.sum()), inner=int(inner.sum())))
    grid = np.linspace(-0.5, 1.5, 1000)
    sym = float(np.max(np.abs(chi2(grid) + chi2(1.0 - grid) - 1.0)))
    out.append(_check("chi2 symmetry", sym <= 1e-12, max_residual=sym))
    d = Deltas(0.5, 1.0, 2.0)
    jumps = []
    for edge in (d.delta1, d.delta2):
        for h in (1e-3, 1e-4):
            x = np.array([[edge - h, 0.0], [edge, 0.0], [edge + h, 0.0]])
            v = phi(x, d)
            left, right = (v[1] - v[0]) / h, (v[2] - v[1]) / h
            jumps.append(abs(right - left))
    out.append(_check("C1 across radii", max(jumps) < 1e-4, max_jump=max(jumps)))
    s = np.linspace(0.01, 0.99, 99)
    fd = (chi2(s + 1e-6) - chi2(s - 1e-6)) / 2e-6
    out.append(_check("chi2 derivative", np.max(np.abs(fd - _dchi2(s))) < 1e-6,
                      max_error=float(np.max(np.abs(fd - _dchi2(s))))))
    x = np.array([0.6, 0.5])
    g_fd = np.array([(phi(x + e, d) - phi(x - e, d)) / 2e-7 for e in np.eye(2) * 1e-7])
    out.append(_check("grad phi", np.max(np.abs(g_fd - grad_phi(x, d))) < 1e-6))
    return out


def suite_costs() -> list[dict]:
    out = []
    nc, th = cost_nonconvex_sin([0.0, 0.0]), cost_tanh_norm([0.0, 0.0])
    q = cost_quadratic([0.0, 0.0], np.diag([1.0, 2.0]))
    for c in (nc, q):
        out.append(_check(f"gradient lower bound {c.name}", **_passed(check_assumption5a(c))))
    out.append(_check("gradient bounds tanh_norm", **_passed(check_assumption5b(th))))
    for c in (nc, th):
        out.append(_check(f"hessian bound {c.name}", **_passed(check_hessian_bound(c, n_samples=2000))))
    pts = sample_ball(nc.x_star, 10.0, 10_000, np.random.default_rng(1))
    dh = nonconvex_dh(np.linalg.norm(pts, axis=1))
    out.append(_check("Dh range", np.all((dh > 0.25) & (dh < 4.0)), min=float(dh.min()), max=float(dh.max())))
    built = build(preset("example5_law1_nonconvex", desk_scale=True))
    out.append(_check("drift bound example5", **_passed(check_drift_bound(built.extras["drift"], nc))))
    return out


def _passed(rep: dict) -> dict:
    rep = dict(rep)
    return {"passed": rep.pop("passed"), **rep}


def suite_averaging() -> list[dict]:
    out = []
    rng = np.random.default_rng(2)
    for name in PRESETS:
        cfg = preset(name, desk_scale=True)
        b = build(cfg)
        ctx = AveragingContext(b.system, cfg.deltas_obj())
        worst = 0.0
        for _ in range(16):
            x = rng.uniform(-5.0, 5.0, b.system.dim)
            worst = max(worst, *period_residuals(ctx, x).values())
        out.append(_check(f"period identities {name}", worst <= 1e-7, max_norm=worst))
        if b.fbar_closed is not None:
            xs = rng.uniform(-5.0, 5.0, (8, b.system.dim))
            if cfg.kind == "nonlipschitz":
                xs = np.sign(xs) * np.maximum(np.abs(xs), cfg.deltas["delta2"])
            err = 0.0
            for x in xs:
                ref = b.fbar_closed(x)
                err = max(err, float(np.max(np.abs(average_field(ctx, x) - ref))) / max(1.0, float(np.abs(ref).max())))
            tol = 1e-8 if cfg.kind == "nonlipschitz" else 1e-6
            out.append(_check(f"closed-form average {name}", err <= tol, max_rel_error=err))
        if cfg.kind == "vibrational":
            v = cfg.vibrational
            A = vibrational_averaged_matrix(v["B"], v["gamma1"], v["gamma2"])
            xs = rng.uniform(-3.0, 3.0, (8, 4))
            err = max(float(np.max(np.abs(average_field(ctx, x) - A @ x))) for x in xs)
            out.append(_check("vibrational linear average", err <= 1e-6, max_abs_error=err))
            eig = np.linalg.eigvals(vibrational_matrix(v["B"], v["gamma1"], v["gamma2"]))
            out.append(_check("vibrational Hurwitz", eig.real.max() <= -1e-3, max_real=float(eig.real.max())))
    b = build(preset("example1_nonlipschitz"))
    for eps in (0.2, 0.05):
        ctx = AveragingContext(b.system, Deltas(0.5, 1.0, 2.0), epsilon=eps)
        worst = 0.0
        for x0 in (2.5, -4.0, 7.0):
            for tau in (0.7, 2.9, 5.1):
                xt = Phi(ctx, x0, tau)
                worst = max(worst, float(np.max(np.abs(Psi_inverse(ctx, xt, tau) - x0))))
        out.append(_check(f"inversion round trip eps={eps}", worst <= 1e-10, max_error=worst))
    return out


def descent_samples(name: str, n: int = 1000, seed: int = 3) -> dict:
    """Sampled margin of ``<grad J, fbar> <= (kappa3 - gamma) |grad J|**2`` on ``delta3 <= |x~| <= 100``."""
    cfg = preset(name, desk_scale=True)
    b = build(cfg)
    ctx = AveragingContext(b.system, cfg.deltas_obj())
    cost, dirs, drift = b.extras["cost"], b.extras["dirs"], b.extras["drift"]
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, 2))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    X = g * rng.uniform(cfg.deltas["delta3"], 100.0, n)[:, None]
    worst = -np.inf
    for x in X:
        gr = cost.gradient(x + cost.x_star)
        lhs = float(gr @ average_field(ctx, x))
        rhs = (drift.kappa3 - dirs.gamma) * float(gr @ gr)
        worst = max(worst, lhs - rhs)
    return {"passed": worst <= 1e-6, "worst_excess": worst, "n_samples": n,
            "coefficient": drift.kappa3 - dirs.gamma}


def suite_descent() -> list[dict]:
    return [_check(f"descent {n}", **_passed(descent_samples(n)))
            for n in ("example5_law1_nonconvex", "example6_law2_bounded")]


def suite_order() -> list[dict]:
    out = []
    for name in ("example1_nonlipschitz", "example2_vibrational"):
        cfg = preset(name)
        b = build(cfg)
        sw = cfg.sweep
        rep = averaging_order_sweep(b.system, sw["x0"], sw["t_final"], sw["eps_list"], fbar=b.fbar_closed,
                                    deltas=cfg.deltas_obj())
        out.append(_check(f"order sweep {name}", rep["passed"], errors=rep["errors"], ratios=rep["ratios"],
                          order=rep["order"]))
    return out


def bound_run(name: str, threshold: float = 5.0) -> dict:
    cfg = preset(name, desk_scale=True)
    b = build(cfg)
    est = estimate_ultimate_bound(b.system, cfg.n_runs, cfg.radius0, cfg.sim_config())
    worst = max(est.final_window_max)
    return {"passed": not est.escaped_runs and worst <= threshold, "final_window_max": worst,
            "ultimate_radius": est.ultimate_radius, "settle_time": est.settle_time,
            "escaped_runs": est.escaped_runs}


def suite_bounds() -> list[dict]:
    return [_check(f"ultimate bound {n}", **_passed(bound_run(n)))
            for n in ("example5_law1_nonconvex", "example6_law2_bounded")]


_RUNNERS: dict[str, Callable[[], list[dict]]] = {
    "bump": suite_bump,
    "costs": suite_costs,
    "averaging": suite_averaging,
    "descent": suite_descent,
    "order": suite_order,
    "bounds": suite_bounds,
}


def run_suite(name: str) -> dict:
    """Run one suite (or ``all``) and return ``{"suite", "passed", "checks", "seconds"}``."""
    if name == "all":
        names = list(SUITES)
    elif name in _RUNNERS:
        names = [name]
    else:
        raise ValueError(f"unknown suite {name!r}; expected one of {', '.join(SUITES + ('all',))}")
    checks = []
    t0 = time.perf_counter()
    for n in names:
        for c in _RUNNERS[n]():
            checks.append({"suite": n, **c})
    return {"suite": name, "passed": all(c["passed"] for c in checks), "checks": checks,
            "seconds": time.perf_counter() - t0}
