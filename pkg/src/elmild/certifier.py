"""Explicit constants of the contraction estimates and the smallness tests.

For exponents ``p <= q`` in dimension ``n`` with decay rate ``omega``::

    gamma = n (1/p - 1/q)
    C1(T) = sup_{0<t<T} e^{-omega t / 2} t^{1/2 - n/(2p)}
    C2(T) = sup_{0<t<T} e^{-omega t} t^{1 - n/p}
    C3(T) = int_0^T e^{-omega s} s^{-gamma} ds
    C_tilde = max(C1, C2, C3)

and the global-existence test ``144 C C_tilde K (1 + ||b||_inf) < 1`` with
``K1 = 2 k0_q``, ``K2 = max(2 k0_inf, |b_mean|, 1)``, ``K = max(K1, K1^2)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .domain import Domain, Field
from .iteration import data_gradient, k_quantities, linear_trajectory, uniform_times
from .norms import WeightedSupSpec, lp_norm

STATED_P_RANGE = (3.0, 3.5)


class CertifierError(ValueError):
    pass


def beta_fn(x: float, y: float, labels: tuple[str, str] = ("x", "y")) -> float:
    """Beta function ``Gamma(x) Gamma(y) / Gamma(x + y)`` via log-gamma.

    ``labels`` name the exponent expressions so a failure says which
    admissibility inequality was violated.
    """
    for val, lab in zip((x, y), labels):
        if not val > 0:
            raise CertifierError(f"beta function argument {lab} = {val:.6g} must be > 0")
    return float(np.exp(special.betaln(x, y)))


def sup_exp_power(a: float, beta: float, T: float) -> float:
    """``sup_{0<t<T} e^{-a t} t^beta`` for ``a >= 0``.

    ``beta > 0``: maximiser ``beta / a`` capped at ``T``.  ``beta = 0``: the
    supremum 1 is approached as ``t -> 0``.  ``beta < 0``: unbounded.
    """
    if beta < 0:
        return math.inf
    if beta == 0:
        return 1.0
    if a == 0:
        return math.inf if math.isinf(T) else T**beta
    t_star = min(beta / a, T)
    return float(math.exp(-a * t_star) * t_star**beta)


def c3_integral(omega: float, gamma: float, T: float) -> float:
    """``int_0^T e^{-omega s} s^{-gamma} ds`` for ``gamma < 1``."""
    if gamma >= 1:
        return math.inf
    s = 1.0 - gamma
    if omega == 0:
        return math.inf if math.isinf(T) else T**s / s
    if gamma == 0:
        return -math.expm1(-omega * T) / omega if not math.isinf(T) else 1.0 / omega
    full = omega ** (-s) * special.gamma(s)
    frac = 1.0 if math.isinf(T) else special.gammainc(s, omega * T)
    return float(full * frac)


@dataclass(frozen=True)
class ConstantsReport:
    p: float
    q: float
    n: int
    omega: float
    T: float
    beta_1: float
    beta_2: float
    beta_3: float
    C1: float
    C2: float
    C3: float
    C_tilde: float
    K1: float = math.nan
    K2: float = math.nan
    K: float = math.nan
    kappa: float = math.nan
    b_inf: float = math.nan
    generic_C: float = math.nan
    lhs_conv22: float = math.nan
    lhs_remark32: float = math.nan
    breakeven_C: float = math.nan
    passes_conv22: Optional[bool] = None
    passes_remark32: Optional[bool] = None
    in_stated_range: bool = True

    def as_dict(self) -> dict:
        return asdict(self)


def _exponents(p: float, q: float, n: int):
    if not (1 < p <= q):
        raise CertifierError(f"need 1 < p <= q, got p={p}, q={q}")
    gamma = n * (1.0 / p - 1.0 / q)
    return gamma, 0.5 - n / (2.0 * q), 1.0 - n / q


def proof_constants(p: float, q: float, n: int, omega: float, T: float) -> ConstantsReport:
    """Beta factors and ``C1, C2, C3, C_tilde`` (no data-dependent entries)."""
    if not T > 0:
        raise CertifierError(f"horizon T must be positive, got {T}")
    if not omega > 0:
        raise CertifierError(f"omega must be positive, got {omega}")
    gamma, y1, y3 = _exponents(p, q, n)
    first = "1 - n(1/p - 1/q) (q too far from p)"
    b1 = beta_fn(1 - gamma, y1, (first, "1/2 - n/(2q)"))
    # the gradient estimate uses the same kernel as the velocity estimate
    b2 = beta_fn(1 - gamma, y1, (first, "1/2 - n/(2q)"))
    b3 = beta_fn(1 - gamma, y3, (first, "1 - n/q"))
    e1 = 0.5 - n / (2.0 * p)
    e2 = 1.0 - n / p
    if e1 < 0 or e2 < 0:
        raise CertifierError(f"need p >= n for bounded C1, C2 (1/2 - n/(2p) = {e1:.4g})")
    c1 = sup_exp_power(omega / 2.0, e1, T)
    c2 = sup_exp_power(omega, e2, T)
    c3 = c3_integral(omega, gamma, T)
    return ConstantsReport(
        p=p, q=q, n=n, omega=omega, T=T,
        beta_1=b1, beta_2=b2, beta_3=b3,
        C1=c1, C2=c2, C3=c3, C_tilde=max(c1, c2, c3),
        in_stated_range=STATED_P_RANGE[0] <= p <= STATED_P_RANGE[1],
    )


def k0_bounds(
    a: Field,
    b: Field,
    domain: Domain,
    p: float,
    q: float,
    T: float,
    time_grid: Sequence[float] | int = 64,
    e=None,
) -> tuple[float, float, float]:
    """Weighted suprema of the linear trajectories: ``(k0_q, k0_inf, k0_x)``.

    ``time_grid`` is either an explicit grid on ``[0, T]`` or a step count.
    ``k0_x`` is returned for completeness and is exactly 0.
    """
    times = uniform_times(T, time_grid) if np.isscalar(time_grid) else np.asarray(time_grid, float)
    spec = WeightedSupSpec(p, q, domain.omega, domain.dimension)
    kq = k_quantities(linear_trajectory(domain, a, b, times, e), spec)
    return kq.k_q, kq.k_inf, kq.k_x


def smallness_check(
    base: ConstantsReport,
    k0_q: float,
    k0_inf: float,
    b_mean_norm: float,
    b_inf: float,
    kappa: float,
    generic_C: float = 1.0,
) -> ConstantsReport:
    """Evaluate both smallness conditions on top of ``proof_constants`` output.

    ``lhs_remark32`` is ``max(kappa, kappa^2)(1 + ||b||_inf)`` and passes when
    it is below ``generic_C``.
    """
    if not generic_C > 0:
        raise CertifierError("generic_C must be positive")
    K1 = 2.0 * k0_q
    K2 = max(2.0 * k0_inf, b_mean_norm, 1.0)
    K = max(K1, K1 * K1)
    factor = base.C_tilde * K * (1.0 + b_inf)
    lhs22 = 144.0 * generic_C * factor
    lhs32 = max(kappa, kappa * kappa) * (1.0 + b_inf)
    breakeven = math.inf if factor == 0 else 1.0 / (144.0 * factor)
    return ConstantsReport(
        **{**base.as_dict(),
           "K1": K1, "K2": K2, "K": K, "kappa": kappa, "b_inf": b_inf,
           "generic_C": generic_C, "lhs_conv22": lhs22, "lhs_remark32": lhs32,
           "breakeven_C": breakeven,
           "passes_conv22": bool(lhs22 < 1.0), "passes_remark32": bool(lhs32 < generic_C)}
    )


def certify(
    domain: Domain,
    a: Field,
    b: Field,
    p: float,
    q: float,
    T: float,
    time_nodes: int = 64,
    generic_C: float = 1.0,
    e=None,
    horizon_for_constants: Optional[float] = None,
) -> ConstantsReport:
    """Full pipeline: constants, computed ``k0`` and both smallness verdicts.

    The k-quantities need a finite horizon ``T``; the constants may be taken at
    ``horizon_for_constants`` (for instance ``inf``) instead.
    """
    Tc = T if horizon_for_constants is None else horizon_for_constants
    base = proof_constants(p, q, domain.dimension, domain.omega, Tc)
    k0_q, k0_inf, _ = k0_bounds(a, b, domain, p, q, T, time_nodes, e)
    axes = tuple(range(1, b.values.ndim))
    b_mean = np.linalg.norm(b.values.mean(axis=axes))
    b_inf = float(np.sqrt(np.sum(b.values**2, axis=0)).max())
    kappa = lp_norm(a, p) + lp_norm(data_gradient(domain, b, e), p)
    return smallness_check(base, k0_q, k0_inf, b_mean, b_inf, kappa, generic_C)
