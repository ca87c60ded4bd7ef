"""Cost functions from the worked examples and checkers for their regularity constants."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import as_vec

PRESET_X_STAR = {
    "nonconvex_sin": (1e10, -1e10),
    "tanh_norm": (1e3, -1e3),
}


@dataclass(frozen=True)
class CostFunction:
    """Cost J with gradient, minimiser and declared constants.

    ``value`` and ``gradient`` broadcast over leading axes of ``x``.
    """

    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    x_star: np.ndarray
    J_star: float
    L_J: float
    alpha_J: Callable[[np.ndarray], np.ndarray]
    M_J: Optional[float] = None
    name: str = "cost"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DriftField:
    b0: Callable[[np.ndarray], np.ndarray]
    kappa3: float = 0.0
    L0: float = 1.0
    name: str = "none"
    coefficient: float = 0.0


def no_drift(dim: int) -> DriftField:
    return DriftField(b0=lambda x: np.zeros_like(np.asarray(x, dtype=float)), kappa3=0.0, L0=1.0)


def linear_drift(x_star, coefficient: float, kappa3: float) -> DriftField:
    """``b0(x) = c * (x - x_star)``; ``kappa3`` is declared, not derived."""
    xs = as_vec(x_star)
    c = float(coefficient)
    return DriftField(b0=lambda x: c * (np.asarray(x, dtype=float) - xs), kappa3=float(kappa3),
                      L0=abs(c), name="linear_destabilizing", coefficient=c)


def nonconvex_dh(s):
    """Derivative of ``h(u) = u + 3 sin(sqrt(u))**2`` at ``u = s**2``."""
    s = np.asarray(s, dtype=float)
    # sin(2s)/(2s) with the removable singularity handled by sinc
    return 1.0 + 3.0 * np.sinc(2.0 * s / np.pi)


def cost_nonconvex_sin(x_star=PRESET_X_STAR["nonconvex_sin"]) -> CostFunction:
    """``J(x) = |x-x*|**2 + 3 sin(|x-x*|)**2 + 1``."""
    xs = as_vec(x_star)

    def value(x):
        d = np.asarray(x, dtype=float) - xs
        s = np.linalg.norm(d, axis=-1)
        return s * s + 3.0 * np.sin(s) ** 2 + 1.0

    def gradient(x):
        d = np.asarray(x, dtype=float) - xs
        s = np.linalg.norm(d, axis=-1)
        return (2.0 * nonconvex_dh(s))[..., None] * d

    return CostFunction(dim=xs.size, value=value, gradient=gradient, x_star=xs, J_star=1.0, L_J=20.0,
                        alpha_J=lambda s: 0.5 * np.tanh(s), name="nonconvex_sin")


def _tanh_over_s(s):
    small = s < 1e-4
    ss = np.where(small, 1.0, s)
    return np.where(small, 1.0 - s * s / 3.0, np.tanh(ss) / ss)


def cost_tanh_norm(x_star=PRESET_X_STAR["tanh_norm"]) -> CostFunction:
    """``J(x) = |x-x*| tanh(|x-x*|) - 100`` with globally bounded gradient."""
    xs = as_vec(x_star)

    def value(x):
        s = np.linalg.norm(np.asarray(x, dtype=float) - xs, axis=-1)
        return s * np.tanh(s) - 100.0

    def gradient(x):
        d = np.asarray(x, dtype=float) - xs
        s = np.linalg.norm(d, axis=-1)
        sech2 = 1.0 / np.cosh(np.minimum(s, 350.0)) ** 2
        return (_tanh_over_s(s) + sech2)[..., None] * d

    return CostFunction(dim=xs.size, value=value, gradient=gradient, x_star=xs, J_star=-100.0, L_J=3.0,
                        M_J=2.0, alpha_J=np.tanh, name="tanh_norm")


def cost_quadratic(x_star, H) -> CostFunction:
    """``J(x) = 0.5 (x-x*)^T H (x-x*)`` for symmetric positive definite H."""
    xs = as_vec(x_star)
    H = np.asarray(H, dtype=float)
    if H.shape != (xs.size, xs.size):
        raise ValueError(f"H must be {xs.size}x{xs.size}")
    if not np.allclose(H, H.T, rtol=0, atol=1e-12 * max(1.0, np.abs(H).max())):
        raise ValueError("H must be symmetric")
    eig = np.linalg.eigvalsh(H)
    if eig[0] <= 0:
        raise ValueError("H must be positive definite")
    mu, L = float(eig[0]), float(eig[-1])

    def value(x):
        d = np.asarray(x, dtype=float) - xs
        return 0.5 * np.einsum("...i,ij,...j->...", d, H, d)

    def gradient(x):
        return (np.asarray(x, dtype=float) - xs) @ H

    return CostFunction(dim=xs.size, value=value, gradient=gradient, x_star=xs, J_star=0.0, L_J=L,
                        alpha_J=lambda s: mu * np.tanh(s), name="quadratic", params={"H": H.tolist()})


def sample_ball(center, radius: float, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples in the closed ball around ``center``."""
    c = as_vec(center)
    g = rng.standard_normal((n_samples, c.size))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(size=n_samples) ** (1.0 / c.size)
    return c + r[:, None] * g


def check_assumption5a(c: CostFunction, n_samples: int = 10_000, radius: float = 10.0, seed: int = 0,
                       points=None) -> dict:
    """Worst margin of ``|grad J|**2 - alpha_J(s)**2 s**2`` over sampled points."""
    pts = sample_ball(c.x_star, radius, n_samples, np.random.default_rng(seed)) if points is None else points
    s = np.linalg.norm(pts - c.x_star, axis=-1)
    g2 = np.sum(c.gradient(pts) ** 2, axis=-1)
    margin = g2 - (c.alpha_J(s) * s) ** 2
    k = int(np.argmin(margin))
    return {"passed": bool(margin[k] >= -1e-9), "worst_margin": float(margin[k]),
            "worst_point": pts[k].tolist(), "n_samples": int(len(pts))}


def check_assumption5b(c: CostFunction, n_samples: int = 10_000, radius: float = 10.0, seed: int = 0) -> dict:
    """Check ``alpha_J(s)**2 <= |grad J|**2 <= M_J**2`` on samples."""
    if c.M_J is None:
        raise ValueError(f"cost {c.name} declares no gradient bound M_J")
    pts = sample_ball(c.x_star, radius, n_samples, np.random.default_rng(seed))
    s = np.linalg.norm(pts - c.x_star, axis=-1)
    g2 = np.sum(c.gradient(pts) ** 2, axis=-1)
    lower = g2 - c.alpha_J(s) ** 2
    upper = c.M_J ** 2 - g2
    return {"passed": bool(lower.min() >= -1e-9 and upper.min() >= -1e-9),
            "worst_lower_margin": float(lower.min()), "worst_upper_margin": float(upper.min()),
            "max_grad_norm": float(np.sqrt(g2.max()))}


def hessian_fd(c: CostFunction, x, rel_step: float = 1e-5) -> np.ndarray:
    """Symmetrised central-difference Hessian from the analytic gradient."""
    x = as_vec(x)
    # step scales with the distance to the minimiser, the length scale of every shipped cost
    h = rel_step * max(1.0, float(np.linalg.norm(x - c.x_star)))
    E = np.eye(x.size) * h
    cols = (c.gradient(x + E) - c.gradient(x - E)) / (2.0 * h)
    return 0.5 * (cols + cols.T)


def check_hessian_bound(c: CostFunction, n_samples: int = 10_000, radius: float = 10.0, seed: int = 0) -> dict:
    pts = sample_ball(c.x_star, radius, n_samples, np.random.default_rng(seed))
    norms = np.array([np.max(np.abs(np.linalg.eigvalsh(hessian_fd(c, p)))) for p in pts])
    return {"passed": bool(norms.max() <= c.L_J * (1.0 + 1e-3)), "max_norm": float(norms.max()),
            "L_J": c.L_J, "n_samples": n_samples}


def check_drift_bound(drift: DriftField, c: CostFunction, n_samples: int = 10_000, radius: float = 10.0,
                      seed: int = 0) -> dict:
    """Sampled check of ``|b0(x)| <= kappa3 |grad J(x)|``."""
    pts = sample_ball(c.x_star, radius, n_samples, np.random.default_rng(seed))
    b = np.linalg.norm(drift.b0(pts), axis=-1)
    g = np.linalg.norm(c.gradient(pts), axis=-1)
    margin = drift.kappa3 * g - b
    return {"passed": bool(margin.min() >= -1e-12 * max(1.0, g.max())), "worst_margin": float(margin.min()),
            "max_ratio": float(np.max(np.where(g > 0, b / np.where(g > 0, g, 1.0), 0.0)))}


def make_cost(name: str, x_star=None, H=None) -> CostFunction:
    """Look up a shipped cost by name."""
    if name == "nonconvex_sin":
        return cost_nonconvex_sin(PRESET_X_STAR[name] if x_star is None else x_star)
    if name == "tanh_norm":
        return cost_tanh_norm(PRESET_X_STAR[name] if x_star is None else x_star)
    if name == "quadratic":
        if x_star is None or H is None:
            raise ValueError("quadratic cost needs explicit x_star and H")
        return cost_quadratic(x_star, H)
    raise ValueError(f"unknown cost {name!r}; expected nonconvex_sin, tanh_norm or quadratic")
