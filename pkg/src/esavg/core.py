"""Shared domain types: state vectors, oscillatory systems, simulation config.

Vector fields follow one broadcasting contract throughout the package: a
field is called as ``f(x, tau)`` with ``x`` of shape ``(..., n)`` and ``tau``
either a scalar or an array broadcastable to ``x.shape[:-1]``; it returns an
array of shape ``(..., n)``.  Jacobians return ``(..., n, n)``.  Fields written
for a single point can be adapted with :func:`pointwise`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

Field = Callable[[np.ndarray, "np.ndarray | float"], np.ndarray]
JacField = Callable[[np.ndarray, "np.ndarray | float"], np.ndarray]


class AssumptionError(ValueError):
    """Raised when a system violates a structural assumption."""


def as_vec(x, n: Optional[int] = None) -> np.ndarray:
    """Validate and convert ``x`` to a finite 1-D float array."""
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a nonempty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    if n is not None and v.size != n:
        raise ValueError(f"expected dimension {n}, got {v.size}")
    return v


def as_rational(w) -> Fraction:
    """Parse an int, Fraction or ``"p/q"`` string as a positive rational."""
    if isinstance(w, float):
        raise TypeError("frequencies must be rational; pass 'p/q' strings or Fractions, not floats")
    q = Fraction(w)
    if q <= 0:
        raise ValueError(f"frequency must be positive, got {q}")
    return q


def common_period(freqs: Sequence) -> float:
    """Smallest T > 0 with omega_i * T a multiple of 2*pi for every frequency.

    Computed exactly as ``2*pi * lcm(denominators) / gcd(numerators)``.
    """
    if len(freqs) == 0:
        raise ValueError("no frequencies")
    qs = [as_rational(w) for w in freqs]
    if len(set(qs)) != len(qs):
        raise ValueError("frequencies must be distinct")
    den = math.lcm(*(q.denominator for q in qs))
    num = math.gcd(*(q.numerator for q in qs))
    return 2.0 * math.pi * float(Fraction(den, num))


def zero_field(x, tau=0.0):
    return np.zeros_like(np.asarray(x, dtype=float))


def pointwise(f: Callable) -> Field:
    """Lift a single-point field ``f(x: (n,), tau: float)`` to the batch contract."""

    def lifted(x, tau):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and np.ndim(tau) == 0:
            return np.asarray(f(x, float(tau)), dtype=float)
        lead = np.broadcast_shapes(x.shape[:-1], np.shape(tau))
        xb = np.broadcast_to(x, lead + x.shape[-1:])
        tb = np.broadcast_to(tau, lead)
        out = [np.asarray(f(xi, float(ti)), dtype=float) for xi, ti in zip(xb.reshape(-1, x.shape[-1]), tb.ravel())]
        return np.asarray(out).reshape(lead + out[0].shape)

    lifted.__wrapped__ = f
    return lifted


@dataclass(frozen=True)
class OscillatorySystem:
    """The pair (f1, f2) of ``dx/dt = f1/eps + f2``, ``dtau/dt = 1/eps**2``.

    ``f1_is_zero`` lets the integrator and averaging code skip the fast field.
    """

    dim: int
    f1: Field
    f2: Field
    period_T: float
    jac_f1: Optional[JacField] = None
    name: str = "system"
    f1_is_zero: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def field(self, x, tau, epsilon: float) -> np.ndarray:
        if self.f1_is_zero:
            return self.f2(x, tau)
        return self.f1(x, tau) / epsilon + self.f2(x, tau)


def _simpson_mean(f, x, T, nodes=256):
    tau = np.linspace(0.0, T, nodes + 1)
    vals = f(np.broadcast_to(x, (nodes + 1, x.size)), tau)
    w = np.ones(nodes + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (w @ vals) * (T / nodes) / 3.0 / T


def check_system(system: OscillatorySystem, n_samples: int = 16, seed: int = 0,
                 scale: float = 3.0) -> dict:
    """Sample periodicity and zero-mean residuals of a system's fields."""
    rng = np.random.default_rng(seed)
    T = system.period_T
    per, mean = 0.0, 0.0
    for _ in range(n_samples):
        x = scale * rng.standard_normal(system.dim)
        tau = rng.uniform(0.0, T)
        for f in (system.f1, system.f2):
            a, b = f(x, tau), f(x, tau + T)
            per = max(per, float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a)))))
        m = _simpson_mean(system.f1, x, T)
        amp = max(1.0, float(np.max(np.abs(system.f1(x, tau)))))
        mean = max(mean, float(np.max(np.abs(m))) / amp)
    return {"periodicity": per, "zero_mean": mean}


def make_system(f1: Optional[Field], f2: Optional[Field], freqs: Sequence, jac_f1: Optional[JacField] = None,
                name: str = "system", dim: Optional[int] = None, vectorized: bool = True,
                seed: int = 0, meta: Optional[dict] = None) -> OscillatorySystem:
    """Build an :class:`OscillatorySystem` and spot-check its assumptions.

    ``f1=None`` or ``f2=None`` stands for the zero field.  Periodicity
    violations only warn; a fast field with nonzero mean is rejected.
    """
    if dim is None:
        raise ValueError("dim is required")
    T = common_period(freqs)
    f1_is_zero = f1 is None
    f1 = zero_field if f1 is None else (f1 if vectorized else pointwise(f1))
    f2 = zero_field if f2 is None else (f2 if vectorized else pointwise(f2))
    if jac_f1 is not None and not vectorized:
        jac_f1 = pointwise(jac_f1)
    if f1_is_zero and jac_f1 is None:
        jac_f1 = lambda x, tau: np.zeros(np.shape(x) + (np.shape(x)[-1],))  # noqa: E731
    sys_ = OscillatorySystem(dim=dim, f1=f1, f2=f2, period_T=T, jac_f1=jac_f1, name=name,
                             f1_is_zero=f1_is_zero, meta=dict(meta or {}))
    rep = check_system(sys_, seed=seed)
    if rep["zero_mean"] > 1e-6:
        raise AssumptionError("f1 not zero-mean")
    if rep["periodicity"] > 1e-9:
        warnings.warn(f"{name}: fields not {T:.6g}-periodic in tau (residual {rep['periodicity']:.3g})")
    return sys_


@dataclass(frozen=True)
class SimConfig:
    epsilon: float
    t_final: float
    x0: np.ndarray
    tau0: float = 0.0
    steps_per_fast_period: int = 200
    seed: int = 0
    record_stride: int = 1

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.steps_per_fast_period < 16:
            raise ValueError("steps_per_fast_period must be >= 16")
        if self.tau0 < 0:
            raise ValueError("tau0 must be nonnegative")
        if self.record_stride < 1:
            raise ValueError("record_stride must be positive")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "x0", as_vec(self.x0))

    def replace(self, **kw) -> "SimConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return SimConfig(**d)
