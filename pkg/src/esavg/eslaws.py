"""Extremum-seeking feedback laws and closed-loop assembly.

Both laws excite each frequency channel ``i`` with a cosine/sine pair along
directions ``b[i, 0]`` and ``b[i, 1]``.  Law 1 scales the dither amplitude with
``sqrt(J)`` and shifts the phase by ``ln J``; law 2 keeps the amplitude fixed
and shifts the phase by ``J`` itself, so its fast field is globally bounded.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import OscillatorySystem, as_rational, as_vec, make_system
from .costs import CostFunction, DriftField, cost_quadratic, no_drift


@dataclass(frozen=True)
class ControlDirections:
    """Directions ``b`` of shape (r, 2, n) and the excitation constant gamma."""

    b: np.ndarray
    gamma: float

    @property
    def r(self) -> int:
        return self.b.shape[0]

    @property
    def dim(self) -> int:
        return self.b.shape[2]

    def gram(self) -> np.ndarray:
        """``sum_ij b_ij b_ij^T``."""
        B = self.b.reshape(-1, self.dim)
        return B.T @ B


def control_directions(b, gamma=None, n_random: int = 1000, seed: int = 0) -> ControlDirections:
    """Validate directions and the excitation bound ``sum (b^T v)^2 >= gamma |v|^2``.

    ``gamma`` defaults to the smallest eigenvalue of the Gram matrix.  The
    declared value is checked on the canonical basis and ``n_random`` random
    unit vectors.
    """
    b = np.asarray(b, dtype=float)
    if b.ndim != 3 or b.shape[1] != 2:
        raise ValueError(f"directions must have shape (r, 2, n), got {b.shape}")
    n = b.shape[2]
    G = b.reshape(-1, n).T @ b.reshape(-1, n)
    lam = float(np.linalg.eigvalsh(G)[0])
    if gamma is None:
        gamma = lam
    if gamma <= 0:
        raise ValueError("directions do not excite every direction (gamma <= 0)")
    rng = np.random.default_rng(seed)
    V = np.vstack([np.eye(n), rng.standard_normal((n_random, n))])
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    q = np.einsum("ki,ij,kj->k", V, G, V)
    if q.min() < gamma * (1.0 - 1e-12):
        raise ValueError(f"excitation condition fails: min sum (b^T v)^2 = {q.min():.6g} < gamma = {gamma}")
    return ControlDirections(b=b, gamma=float(gamma))


def frequencies(freqs: Sequence) -> tuple:
    qs = tuple(as_rational(w) for w in freqs)
    if len(set(qs)) != len(qs):
        raise ValueError("frequencies must be distinct")
    return qs


def default_frequencies(r: int) -> tuple:
    return tuple(Fraction(k) for k in range(1, r + 1))


def _check_pair(j):
    if j not in (1, 2):
        raise ValueError(f"pair index j must be 1 (cosine) or 2 (sine), got {j}")


def law1_u(i, j, Jval, tau, omega_i):
    """Law 1 dither: ``sqrt(2 w J) cos(ln J + w tau)`` (j=1) or ``sin`` (j=2); 0 when ``J <= 0``."""
    _check_pair(j)
    J = np.asarray(Jval, dtype=float)
    pos = J > 0
    Js = np.where(pos, J, 1.0)
    th = np.log(Js) + omega_i * np.asarray(tau, dtype=float)
    trig = np.cos(th) if j == 1 else np.sin(th)
    out = np.where(pos, np.sqrt(2.0 * omega_i * Js) * trig, 0.0)
    return out if out.ndim else float(out)


def law2_u(i, j, Jval, tau, omega_i):
    """Law 2 dither: ``sqrt(2 w) cos(J + w tau)`` (j=1) or ``sin`` (j=2)."""
    _check_pair(j)
    th = np.asarray(Jval, dtype=float) + omega_i * np.asarray(tau, dtype=float)
    out = np.sqrt(2.0 * omega_i) * (np.cos(th) if j == 1 else np.sin(th))
    return out if np.ndim(out) else float(out)


def _fast_field(cost: CostFunction, dirs: ControlDirections, omegas, law: int):
    xs = cost.x_star
    b = dirs.b
    om = [float(w) for w in omegas]

    def amp_phase(Jv, tau, w):
        if law == 1:
            pos = Jv > 0
            Js = np.where(pos, Jv, 1.0)
            return np.where(pos, np.sqrt(2.0 * w * Js), 0.0), np.log(Js) + w * tau, pos, Js
        return np.sqrt(2.0 * w), Jv + w * tau, None, None

    def f1(xt, tau):
        xt = np.asarray(xt, dtype=float)
        Jv = cost.value(xt + xs)
        tau = np.asarray(tau, dtype=float)
        out = 0.0
        for i, w in enumerate(om):
            a, th, _, _ = amp_phase(Jv, tau, w)
            out = out + (a * np.cos(th))[..., None] * b[i, 0] + (a * np.sin(th))[..., None] * b[i, 1]
        return out * np.ones_like(xt)

    def jac_f1(xt, tau):
        xt = np.asarray(xt, dtype=float)
        x = xt + xs
        Jv = cost.value(x)
        g = cost.gradient(x)
        tau = np.asarray(tau, dtype=float)
        col = 0.0
        for i, w in enumerate(om):
            _, th, pos, Js = amp_phase(Jv, tau, w)
            c, s = np.cos(th), np.sin(th)
            if law == 1:
                k = np.where(pos, np.sqrt(2.0 * w / Js), 0.0)
                d1, d2 = k * (0.5 * c - s), k * (0.5 * s + c)
            else:
                k = np.sqrt(2.0 * w)
                d1, d2 = -k * s, k * c
            col = col + d1[..., None] * b[i, 0] + d2[..., None] * b[i, 1]
        col = col * np.ones_like(xt)
        return col[..., :, None] * g[..., None, :]

    return f1, jac_f1


def assemble_es_system(cost: CostFunction, drift: DriftField, dirs: ControlDirections, freqs, law: int,
                       name: str = "es") -> OscillatorySystem:
    """Closed loop in shifted coordinates ``x~ = x - x*``."""
    if law not in (1, 2):
        raise ValueError(f"law must be 1 or 2, got {law}")
    if dirs.dim != cost.dim:
        raise ValueError(f"dimension mismatch: directions are {dirs.dim}-D, cost is {cost.dim}-D")
    omegas = frequencies(freqs)
    if len(omegas) != dirs.r:
        raise ValueError(f"need one frequency per channel: {dirs.r} channels, {len(omegas)} frequencies")
    if law == 1 and not np.isfinite(cost.J_star):
        raise ValueError("law 1 needs a cost bounded below")
    xs = cost.x_star
    f1, jac = _fast_field(cost, dirs, omegas, law)

    def f2(xt, tau):
        xt = np.asarray(xt, dtype=float)
        return drift.b0(xt + xs) * np.ones_like(xt)

    return make_system(f1, f2, omegas, jac_f1=jac, name=name, dim=cost.dim,
                       meta={"kind": "es", "law": law, "cost": cost, "drift": drift, "dirs": dirs,
                             "freqs": omegas})


def vibrational_V(B_state, gamma1: float, gamma2: float):
    """``V(x, v) = |gamma1 x + gamma2 v|**2 + 1/2`` on stacked states (..., 2n)."""
    z = np.asarray(B_state, dtype=float)
    n = z.shape[-1] // 2
    y = gamma1 * z[..., :n] + gamma2 * z[..., n:]
    return np.sum(y * y, axis=-1) + 0.5


def assemble_vibrational_system(B, gamma1: float, gamma2: float, name: str = "vibrational") -> OscillatorySystem:
    """Double integrator ``x' = v, v' = B u / eps`` with Lyapunov-phase dither.

    Input channel k (1-based) uses frequency k:
    ``u_k = sqrt(2 k V) cos(ln V + k tau)``.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("B must be square")
    if np.linalg.svd(B, compute_uv=False).min() <= 1e-10:
        raise ValueError("B must have full rank")
    n = B.shape[0]
    om = np.arange(1, n + 1, dtype=float)
    g1, g2 = float(gamma1), float(gamma2)

    def f1(z, tau):
        z = np.asarray(z, dtype=float)
        V = vibrational_V(z, g1, g2)
        th = np.log(V)[..., None] + om * np.asarray(tau, dtype=float)[..., None]
        u = np.sqrt(2.0 * om * V[..., None]) * np.cos(th)
        out = np.zeros(np.broadcast_shapes(z.shape, u.shape[:-1] + (2 * n,)))
        out[..., n:] = u @ B.T
        return out

    def f2(z, tau):
        z = np.asarray(z, dtype=float)
        out = np.zeros(np.broadcast_shapes(z.shape, np.shape(tau) + (2 * n,)))
        out[..., :n] = z[..., n:]
        return out

    def jac_f1(z, tau):
        z = np.asarray(z, dtype=float)
        V = vibrational_V(z, g1, g2)
        y = g1 * z[..., :n] + g2 * z[..., n:]
        gradV = np.concatenate([2.0 * g1 * y, 2.0 * g2 * y], axis=-1)
        th = np.log(V)[..., None] + om * np.asarray(tau, dtype=float)[..., None]
        du = np.sqrt(2.0 * om / V[..., None]) * (0.5 * np.cos(th) - np.sin(th))
        rows = (du @ B.T)[..., :, None] * gradV[..., None, :]
        shape = np.broadcast_shapes(z.shape, rows.shape[:-2] + (2 * n,))
        out = np.zeros(shape + (2 * n,))
        out[..., n:, :] = rows
        return out

    return make_system(f1, f2, [Fraction(k) for k in range(1, n + 1)], jac_f1=jac_f1, name=name, dim=2 * n,
                       meta={"kind": "vibrational", "B": B, "gamma1": g1, "gamma2": g2})


def vibrational_matrix(B, gamma1: float, gamma2: float) -> np.ndarray:
    """Reference closed form ``A = [[0, I], [-g1 g2 B B^T, -g2^2 B B^T]]`` of the averaged loop."""
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    BB = B @ B.T
    return np.block([[np.zeros((n, n)), np.eye(n)], [-gamma1 * gamma2 * BB, -gamma2 ** 2 * BB]])


def vibrational_averaged_matrix(B, gamma1: float, gamma2: float) -> np.ndarray:
    """Linear map the implemented dither actually averages to.

    The bracket term pulls ``-grad_v V = -2 gamma2 (gamma1 x + gamma2 v)``
    through ``B B^T``, so the lower blocks are twice the reference ones.
    """
    A = vibrational_matrix(B, gamma1, gamma2)
    n = A.shape[0] // 2
    A[n:, :] *= 2.0
    return A


def skew_gram(dirs: ControlDirections) -> np.ndarray:
    """``sum_i (b_i2 b_i1^T - b_i1 b_i2^T)``; law 1 rotates along this by half the gradient."""
    b1, b2 = dirs.b[:, 0], dirs.b[:, 1]
    return b2.T @ b1 - b1.T @ b2


def _closed_form_matrix(dirs: ControlDirections, law: int, s: int) -> np.ndarray:
    M = s * dirs.gram()
    if law == 1:
        M = M + 0.5 * skew_gram(dirs)
    return M


@functools.lru_cache(maxsize=None)
def bracket_sign(law: int) -> int:
    """Sign s in ``fbar = b0 + s * sum b b^T grad J (+ law-1 skew term)``, resolved by quadrature.

    Uses a 2-D quadratic cost with identity directions at eight fixed points.
    """
    from .averaging import AveragingContext, average_field

    cost = cost_quadratic([0.0, 0.0], [[1.0, 0.3], [0.3, 2.0]])
    dirs = control_directions([[[1.0, 0.0], [0.0, 1.0]]])
    sys_ = assemble_es_system(cost, no_drift(2), dirs, [1], law)
    ctx = AveragingContext(sys_)
    pts = np.random.default_rng(12345).uniform(-2.0, 2.0, size=(8, 2))
    quad = np.array([average_field(ctx, p) for p in pts])
    g = cost.gradient(pts)
    for s in (+1, -1):
        if np.max(np.abs(quad - g @ _closed_form_matrix(dirs, law, s).T)) <= 1e-6:
            return s
    raise RuntimeError("averaged-field mismatch")


def averaged_es_field_closed_form(cost: CostFunction, drift: DriftField, dirs: ControlDirections, law: int = 1):
    """Closed-form averaged ES field in shifted coordinates."""
    M = _closed_form_matrix(dirs, law, bracket_sign(law))
    xs = cost.x_star

    def fbar(xt):
        x = np.asarray(xt, dtype=float) + xs
        return drift.b0(x) + cost.gradient(x) @ M.T

    return fbar
