"""Second-order averaging by quadrature.

Everything here is evaluated numerically over one period of the fast time:
the first-order generator ``v1``, the correction ``w``, the second-order
generator ``v2``, the averaged field ``fbar`` (plain average of the slow field
plus half the averaged Lie bracket ``[v1, f1]``), the near-identity map
``Phi(x, tau) = x - eps v1 - eps**2 v2``, its inverse, and the pushforward of
the oscillatory field under that map.

Integrals over ``[0, tau]`` use composite Simpson on an even number of panels;
running integrals use the cumulative variant (Simpson on even nodes, a
three-point half-panel rule on odd nodes).  ``D_x v1`` is obtained by
integrating the Jacobian of the fast field rather than by differencing ``v1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bump import Deltas, grad_phi, hat_field, phi
from .core import OscillatorySystem, as_vec


class InversionError(RuntimeError):
    """Fixed-point inversion of the near-identity map did not contract."""


def simpson(y: np.ndarray, h: float) -> np.ndarray:
    """Composite Simpson rule along axis 0 for an even number of panels."""
    m = y.shape[0] - 1
    if m < 2 or m % 2:
        raise ValueError(f"Simpson needs an even, positive number of panels, got {m}")
    return (h / 3.0) * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum(axis=0) + 2.0 * y[2:-1:2].sum(axis=0))


def cumulative_simpson(y: np.ndarray, h: float) -> np.ndarray:
    """Running integral from node 0, same shape as ``y``; even panel count."""
    m = y.shape[0] - 1
    if m < 2 or m % 2:
        raise ValueError(f"cumulative Simpson needs an even, positive number of panels, got {m}")
    out = np.empty_like(y)
    out[0] = 0.0
    pair = (h / 3.0) * (y[0:-2:2] + 4.0 * y[1:-1:2] + y[2::2])
    out[2::2] = np.cumsum(pair, axis=0)
    half = (h / 12.0) * (5.0 * y[0:-2:2] + 8.0 * y[1:-1:2] - y[2::2])
    out[1::2] = out[0:-2:2] + half
    return out


@dataclass
class AveragingContext:
    system: OscillatorySystem
    deltas: Deltas = field(default_factory=Deltas)
    epsilon: float = 0.0
    quad_nodes: int = 512
    fd_rel_step: float = 1e-7
    _fbar_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.quad_nodes < 64 or self.quad_nodes % 2:
            raise ValueError("quad_nodes must be even and >= 64")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        self.f1_hat = hat_field(self.system.f1, self.deltas)
        self.f2_hat = hat_field(self.system.f2, self.deltas)

    @property
    def T(self) -> float:
        return self.system.period_T

    def fd_step(self, x: np.ndarray) -> float:
        return max(self.fd_rel_step, self.fd_rel_step * float(np.linalg.norm(x)))

    def with_epsilon(self, epsilon: float) -> "AveragingContext":
        """Same system, radii and quadrature, new epsilon; the fbar cache is shared."""
        ctx = AveragingContext(self.system, self.deltas, epsilon, self.quad_nodes, self.fd_rel_step)
        ctx._fbar_cache = self._fbar_cache
        return ctx


def _jac_f1(ctx: AveragingContext, X: np.ndarray, tau) -> np.ndarray:
    """Jacobian of the unmodified fast field at rows of X (all rows share one x)."""
    sys_ = ctx.system
    if sys_.jac_f1 is not None:
        return sys_.jac_f1(X, tau)
    x = X.reshape(-1, X.shape[-1])[0]
    h = ctx.fd_step(x)
    n = x.size
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        cols.append((sys_.f1(X + e, tau) - sys_.f1(X - e, tau)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def jac_f1_hat(ctx: AveragingContext, x, tau) -> np.ndarray:
    """Jacobian in x of the bump-modified fast field, by the product rule.

    ``tau`` may be an array, in which case the result has shape ``tau.shape + (n, n)``.
    """
    x = np.asarray(x, dtype=float)
    tau = np.asarray(tau, dtype=float)
    X = np.broadcast_to(x, tau.shape + x.shape[-1:])
    n = x.shape[-1]
    if ctx.system.f1_is_zero:
        return np.zeros(tau.shape + (n, n))
    if ctx.deltas.trivial:
        return _jac_f1(ctx, X, tau)
    p = float(phi(x, ctx.deltas))
    if p == 0.0:
        return np.zeros(tau.shape + (n, n))
    gp = grad_phi(x, ctx.deltas)
    J = p * _jac_f1(ctx, X, tau)
    if np.any(gp):
        J = J + ctx.system.f1(X, tau)[..., :, None] * gp
    return J


def _grid(ctx: AveragingContext, x: np.ndarray, tau_end: float, panels: int):
    tau = np.linspace(0.0, tau_end, panels + 1)
    h = tau_end / panels
    X = np.broadcast_to(x, (panels + 1, x.size))
    F2 = ctx.f2_hat(X, tau)
    if ctx.system.f1_is_zero:
        zn = np.zeros((panels + 1, x.size))
        znn = np.zeros((panels + 1, x.size, x.size))
        return h, zn, znn, F2, zn, znn
    F1 = ctx.f1_hat(X, tau)
    JF1 = jac_f1_hat(ctx, x, tau)
    V1 = cumulative_simpson(F1, h)
    DV1 = cumulative_simpson(JF1, h)
    return h, F1, JF1, F2, V1, DV1


def _key(x: np.ndarray) -> bytes:
    return np.round(x, 14).tobytes()


def average_field(ctx: AveragingContext, x) -> np.ndarray:
    """Second-order average ``(1/2T) * int_0^T (2 f2_hat + [v1, f1_hat]) dtau``."""
    x = as_vec(x)
    key = _key(x)
    hit = ctx._fbar_cache.get(key)
    if hit is not None:
        return hit.copy()
    h, F1, JF1, F2, V1, DV1 = _grid(ctx, x, ctx.T, ctx.quad_nodes)
    integrand = 2.0 * F2
    if not ctx.system.f1_is_zero:
        bracket = np.einsum("kij,kj->ki", JF1, V1) - np.einsum("kij,kj->ki", DV1, F1)
        integrand = integrand + bracket
    fbar = simpson(integrand, h) / (2.0 * ctx.T)
    ctx._fbar_cache[key] = fbar
    return fbar.copy()


def reduce_tau(tau: float, T: float) -> float:
    r = math.fmod(float(tau), T)
    if r < 0:
        r += T
    return r


def _panels_for(ctx: AveragingContext, span: float) -> int:
    m = math.ceil(ctx.quad_nodes * span / ctx.T)
    m += m % 2
    return max(16, m)


@dataclass(frozen=True)
class TransformTerms:
    v1: np.ndarray
    Dv1: np.ndarray
    w: np.ndarray
    v2: np.ndarray


def transform_terms(ctx: AveragingContext, x, tau, reduce: bool = True) -> TransformTerms:
    """``v1``, ``D_x v1``, ``w`` and ``v2`` at one point from a single quadrature pass.

    With ``reduce=False`` the integrals run over ``[0, tau]`` literally instead
    of over ``[0, tau mod T]``; used to check the full-period identities.
    """
    x = as_vec(x)
    n = x.size
    span = reduce_tau(tau, ctx.T) if reduce else float(tau)
    if span < 0:
        raise ValueError("tau must be nonnegative")
    if span == 0.0:
        z = np.zeros(n)
        return TransformTerms(z, np.zeros((n, n)), z.copy(), z.copy())
    fbar = average_field(ctx, x)
    h, F1, JF1, F2, V1, DV1 = _grid(ctx, x, span, _panels_for(ctx, span))
    w_integrand = F2 - fbar
    if not ctx.system.f1_is_zero:
        w_integrand = w_integrand + np.einsum("kij,kj->ki", JF1, V1)
    w = simpson(w_integrand, h)
    v1, Dv1 = V1[-1], DV1[-1]
    return TransformTerms(v1=v1, Dv1=Dv1, w=w, v2=w - Dv1 @ v1)


def v1(ctx: AveragingContext, x, tau) -> np.ndarray:
    """Running integral of the bump-modified fast field over ``[0, tau]``."""
    x = as_vec(x)
    span = reduce_tau(tau, ctx.T)
    if span == 0.0 or ctx.system.f1_is_zero:
        return np.zeros_like(x)
    m = _panels_for(ctx, span)
    t = np.linspace(0.0, span, m + 1)
    return simpson(ctx.f1_hat(np.broadcast_to(x, (m + 1, x.size)), t), span / m)


def w_func(ctx: AveragingContext, x, tau) -> np.ndarray:
    return transform_terms(ctx, x, tau).w


def v2(ctx: AveragingContext, x, tau) -> np.ndarray:
    return transform_terms(ctx, x, tau).v2


def period_residuals(ctx: AveragingContext, x) -> dict:
    """Norms of ``v1``, ``w`` and ``v2`` integrated over exactly one full period."""
    t = transform_terms(ctx, x, ctx.T, reduce=False)
    return {"v1": float(np.linalg.norm(t.v1)), "w": float(np.linalg.norm(t.w)),
            "v2": float(np.linalg.norm(t.v2))}


def Phi(ctx: AveragingContext, x, tau) -> np.ndarray:
    """Near-identity map ``x - eps v1 - eps**2 v2``."""
    x = as_vec(x)
    if ctx.epsilon == 0.0:
        return x.copy()
    t = transform_terms(ctx, x, tau)
    e = ctx.epsilon
    return x - e * t.v1 - e * e * t.v2


def Psi_inverse(ctx: AveragingContext, x_tilde, tau, max_iter: int = 100, tol: float = 1e-12,
                info: Optional[dict] = None) -> np.ndarray:
    """Solve ``Phi(x, tau) = x_tilde`` by the fixed-point iteration ``x <- x_tilde + eps v1 + eps**2 v2``.

    Raises :class:`InversionError` when the step grows on five consecutive
    iterations or the iteration does not settle within ``max_iter``.
    """
    xt = as_vec(x_tilde)
    e = ctx.epsilon
    if e == 0.0 or reduce_tau(tau, ctx.T) == 0.0:
        return xt.copy()
    x = xt.copy()
    scale = max(1.0, float(np.linalg.norm(xt)))
    prev, growth = math.inf, 0
    for k in range(1, max_iter + 1):
        t = transform_terms(ctx, x, tau)
        x_new = xt + e * t.v1 + e * e * t.v2
        if not np.all(np.isfinite(x_new)):
            raise InversionError("epsilon too large for inversion")
        step = float(np.linalg.norm(x_new - x))
        x = x_new
        if step <= tol * scale:
            if info is not None:
                info["iterations"] = k
                info["last_step"] = step
            return x
        growth = growth + 1 if step > prev else 0
        if growth >= 5:
            raise InversionError("epsilon too large for inversion")
        prev = step
    raise InversionError(f"epsilon too large for inversion (no convergence in {max_iter} iterations)")


@dataclass(frozen=True)
class PushforwardSplit:
    fbar_part: np.ndarray
    residual_g: np.ndarray
    raw: np.ndarray
    x_preimage: np.ndarray


def _dv2_fd(ctx: AveragingContext, x: np.ndarray, tau) -> np.ndarray:
    h = ctx.fd_step(x)
    cols = []
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = h
        cols.append((transform_terms(ctx, x + e, tau).v2 - transform_terms(ctx, x - e, tau).v2) / (2.0 * h))
    return np.stack(cols, axis=-1)


def pushforward_split(ctx: AveragingContext, x_tilde, tau) -> PushforwardSplit:
    """Evaluate the transformed field at ``(x_tilde, tau)`` and split off ``fbar``.

    ``raw = D_x Phi f_eps + D_tau Phi / eps**2`` at the preimage of ``x_tilde``,
    with ``D_tau v2 = f2_hat - D_x v1 f1_hat - fbar``.
    """
    e = ctx.epsilon
    if e <= 0:
        raise ValueError("pushforward needs epsilon > 0")
    xt = as_vec(x_tilde)
    x = Psi_inverse(ctx, xt, tau)
    t = transform_terms(ctx, x, tau)
    n = x.size
    DPhi = np.eye(n) - e * t.Dv1 - e * e * _dv2_fd(ctx, x, tau)
    f_eps = ctx.system.field(x, tau, e)
    f1h = ctx.f1_hat(x, tau)
    dtau_v2 = ctx.f2_hat(x, tau) - t.Dv1 @ f1h - average_field(ctx, x)
    raw = DPhi @ f_eps - f1h / e - dtau_v2
    fbar = average_field(ctx, xt)
    return PushforwardSplit(fbar_part=fbar, residual_g=(raw - fbar) / e, raw=raw, x_preimage=x)
