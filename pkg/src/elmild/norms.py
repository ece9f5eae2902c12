"""Lebesgue/Sobolev norms on the grid, time-weighted suprema and decay fits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import Domain, Field, gradient


class NormError(ValueError):
    pass


def _check_p(p: float) -> float:
    p = float(p)
    if not p > 1:
        raise NormError(f"exponent p must lie in (1, inf], got {p}")
    return p


def magnitude(values: np.ndarray, dimension: int) -> np.ndarray:
    """Pointwise Euclidean (Frobenius) magnitude over the component axes."""
    ncomp = values.ndim - dimension
    if ncomp == 0:
        return np.abs(values)
    axes = tuple(range(ncomp))
    return np.sqrt(np.sum(values**2, axis=axes))


def lp_norm_values(values: np.ndarray, p: float, domain: Domain) -> float:
    """Rectangle-rule L^p norm of raw samples with leading component axes."""
    p = _check_p(p)
    mag = magnitude(np.asarray(values), domain.dimension)
    if np.isinf(p):
        return float(mag.max())
    # scale before powering to avoid overflow for large p
    peak = mag.max()
    if peak == 0:
        return 0.0
    return float(peak * (np.sum((mag / peak) ** p) * domain.cell_volume) ** (1.0 / p))


def lp_norm(f: Field, p: float) -> float:
    return lp_norm_values(f.values, p, f.domain)


def w1p_norm(f: Field, p: float) -> float:
    """``||f||_p + ||grad f||_p``."""
    return lp_norm(f, p) + lp_norm(gradient(f), p)


@dataclass(frozen=True)
class WeightedSupSpec:
    """Weight ``e^{omega s / 2} s^{exponent}`` of the critical solution classes.

    ``omega`` is the domain decay rate; the factor 1/2 is applied here.
    """

    p: float
    q: float
    omega: float
    dimension: int = 3
    exponent: float = field(init=False)

    def __post_init__(self):
        _check_p(self.p)
        _check_p(self.q)
        if self.q < self.p:
            raise NormError(f"need q >= p, got p={self.p}, q={self.q}")
        if self.omega < 0:
            raise NormError("omega must be nonnegative")
        object.__setattr__(self, "exponent", 0.5 * self.dimension * (1.0 / self.p - 1.0 / self.q))

    def weight(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.exponent == 0:
            power = np.ones_like(s)
        else:
            power = np.where(s > 0, np.abs(s) ** self.exponent, 0.0)
        return np.exp(0.5 * self.omega * s) * power


def weighted_sup(norms: Sequence[float], spec: WeightedSupSpec, times: Sequence[float]) -> float:
    """Grid supremum of ``weight(s) * norm(s)``.

    The ``s = 0`` node contributes 0 when the exponent is positive and the
    plain norm when it is zero.
    """
    norms = np.asarray(norms, dtype=float)
    times = np.asarray(times, dtype=float)
    if norms.size == 0:
        raise NormError("weighted_sup needs a nonempty time grid")
    if norms.shape != times.shape:
        raise NormError("norms and times must have the same length")
    return float(np.max(spec.weight(times) * norms))


@dataclass(frozen=True)
class KQuantities:
    k_u: float
    k_grad_y: float
    k_y: float
    k_x: float

    @property
    def k_q(self) -> float:
        return self.k_u + self.k_grad_y

    @property
    def k_inf(self) -> float:
        return self.k_y + self.k_x

    @property
    def total(self) -> float:
        return self.k_q + self.k_inf


@dataclass(frozen=True)
class DeltaQuantities:
    d_u: float
    d_grad_y: float
    d_y: float
    d_x: float

    @property
    def total(self) -> float:
        return self.d_u + self.d_grad_y + self.d_y + self.d_x


def fit_decay_exponent(
    times: Sequence[float], norms: Sequence[float], omega: float = 0.0
) -> tuple[float, float]:
    """Least-squares slope of ``log norm + omega t`` against ``log t``.

    Returns ``(slope, r2)``; a fit to (numerically) constant data has ``r2 = 1``.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    if t.size < 8 or t.shape != y.shape:
        raise NormError("need at least 8 (t, norm) samples")
    if np.any(t <= 0):
        raise NormError("sample times must be positive")
    if np.any(~(y > 0)) or not np.all(np.isfinite(y)):
        raise NormError("norms must be positive and finite")
    if t.max() / t.min() < 10.0 * (1 - 1e-12):
        raise NormError("sample times must span at least one decade")
    x = np.log(t)
    z = np.log(y) + omega * t
    slope, intercept = np.polyfit(x, z, 1)
    resid = z - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((z - z.mean()) ** 2))
    if ss_tot <= 1e-24 * max(1.0, float(np.sum(z**2))):
        return float(slope), 1.0
    return float(slope), 1.0 - ss_res / ss_tot
