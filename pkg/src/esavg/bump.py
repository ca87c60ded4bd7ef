"""Smooth reverse bump function and the annulus radii that shape it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_MARGIN = math.sqrt(3.0) - 1.0

# below this, exp(-1/r) underflows to 0 anyway; skip the division
_CHI1_FLOOR = 1e-15


@dataclass(frozen=True)
class Deltas:
    """Radii delta1 <= delta2 < delta3 with the separation margin ``eps_margin``.

    ``phi`` vanishes on ``|x| <= delta1`` and equals one on ``|x| >= delta2``;
    ``delta3`` marks the outer set on which stability statements are made.
    """

    delta1: float = 0.0
    delta2: float = 0.0
    delta3: float = 1.0
    eps_margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        d1, d2, d3, m = self.delta1, self.delta2, self.delta3, self.eps_margin
        if m <= 0:
            raise ValueError("eps_margin must be positive")
        if d1 < 0:
            raise ValueError("delta1 must be nonnegative")
        if d2 < (1.0 + m) * d1:
            raise ValueError(f"need delta2 >= (1+eps)*delta1, got {d2} < {(1 + m) * d1}")
        if not d3 > (1.0 + m) * d2:
            raise ValueError(f"need delta3 > (1+eps)*delta2, got {d3} <= {(1 + m) * d2}")

    @property
    def trivial(self) -> bool:
        """True when phi is identically one."""
        return self.delta1 == 0.0 and self.delta2 == 0.0

    def in_M(self, x, j: int) -> np.ndarray:
        """Membership of ``x`` (shape (..., n)) in ``M_j = {|x| >= delta_j}``."""
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return r >= (self.delta1, self.delta2, self.delta3)[j - 1]

    def as_dict(self) -> dict:
        return {"delta1": self.delta1, "delta2": self.delta2, "delta3": self.delta3,
                "eps_margin": self.eps_margin}


def chi1(r):
    """``exp(-1/r)`` for r > 0 and 0 otherwise; vectorised."""
    r = np.asarray(r, dtype=float)
    pos = r > _CHI1_FLOOR
    out = np.zeros_like(r)
    out[pos] = np.exp(-1.0 / r[pos])
    return out if out.ndim else float(out)


def _dchi1(r):
    r = np.asarray(r, dtype=float)
    pos = r > _CHI1_FLOOR
    out = np.zeros_like(r)
    rp = r[pos]
    out[pos] = np.exp(-1.0 / rp) / (rp * rp)
    return out


def chi2(r):
    """Smooth step: 0 for r <= 0, 1 for r >= 1."""
    a = chi1(r)
    b = chi1(1.0 - np.asarray(r, dtype=float))
    return a / (a + b)


def _dchi2(r):
    r = np.asarray(r, dtype=float)
    a, b = chi1(r), chi1(1.0 - r)
    da, db = _dchi1(r), -_dchi1(1.0 - r)
    s = a + b
    return (da * s - a * (da + db)) / (s * s)


def phi(x, d: Deltas):
    """Reverse bump function of ``|x|``; broadcasts over leading axes."""
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    if d.delta2 <= d.delta1:
        return np.ones_like(r) if r.ndim else 1.0
    return chi2((r - d.delta1) / (d.delta2 - d.delta1))


def grad_phi(x, d: Deltas) -> np.ndarray:
    """Analytic gradient of :func:`phi`, zero outside the open annulus."""
    x = np.asarray(x, dtype=float)
    if d.delta2 <= d.delta1:
        return np.zeros_like(x)
    r = np.linalg.norm(x, axis=-1)
    width = d.delta2 - d.delta1
    s = (r - d.delta1) / width
    inside = (s > 0.0) & (s < 1.0)
    coef = np.where(inside, _dchi2(np.where(inside, s, 0.5)) / width, 0.0)
    rsafe = np.where(r > 0.0, r, 1.0)
    return (coef / rsafe)[..., None] * x


def hat_field(f, d: Deltas):
    """Return the field ``phi(x) * f(x, tau)``."""
    if d.trivial:
        return f

    def fhat(x, tau):
        return np.asarray(phi(x, d))[..., None] * f(x, tau)

    return fhat
