"""Checks of the qualitative properties of computed solutions and semigroups."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .domain import (
    Domain,
    DomainError,
    Field,
    SemigroupQuery,
    director_field,
    gradient,
    make_domain,
    scalar_field,
    semigroup_apply,
    tensor_field,
    velocity_field,
)
from .iteration import PicardSettings, Trajectory, picard_solve
from .norms import fit_decay_exponent, lp_norm, lp_norm_values


# ---------------------------------------------------------------------------
# unit-norm preservation


@dataclass
class PhiReport:
    times: np.ndarray
    sup_phi: np.ndarray
    energy_residual: np.ndarray
    transport: np.ndarray
    drift_order: Optional[float] = None

    @property
    def max_sup_phi(self) -> float:
        return float(np.max(self.sup_phi))

    @property
    def max_energy_residual(self) -> float:
        return float(np.max(self.energy_residual))

    @property
    def max_transport(self) -> float:
        return float(np.max(np.abs(self.transport)))


def _trapezoid_cumulative(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def phi_diagnostics(traj: Trajectory) -> PhiReport:
    """Track ``phi = |d|^2 - 1`` and the terms of its energy balance.

    ``energy_residual(t) = |1/2 ||phi(t)||^2 - 1/2 ||phi(0)||^2
    + int_0^t ||grad phi||^2 - 2 int_0^t int |grad d|^2 phi^2|``; the transport
    term ``int phi u . grad phi`` is reported separately per node.
    """
    dom = traj.domain
    n = dom.dimension
    d = traj.director_values()  # (N+1, 3, *grid)
    grad_d = traj.grad_y_values()  # (N+1, 3, n, *grid)
    u = traj.u_values()
    phi = np.sum(d**2, axis=1) - 1.0
    grad_phi = 2.0 * np.sum(d[:, :, None] * grad_d, axis=1)  # (N+1, n, *grid)
    grid_axes = tuple(range(1, 1 + n))
    dv = dom.cell_volume

    phi_sq = np.sum(phi**2, axis=grid_axes) * dv
    grad_phi_sq = np.sum(grad_phi**2, axis=tuple(range(1, 2 + n))) * dv
    grad_d_sq = np.sum(grad_d**2, axis=(1, 2))
    source = np.sum(grad_d_sq * phi**2, axis=grid_axes) * dv

    if dom.director_bc == "periodic-mean-split":
        # spectral gradient of phi^2 / 2: the discrete cancellation is exact
        psi_hat = dom.forward(0.5 * phi**2, dom.velocity_basis)
        k = dom.fourier_vectors()
        grad_psi = np.stack([dom.inverse(1j * ki * psi_hat, dom.velocity_basis) for ki in k], axis=1)
        transport = np.sum(u * grad_psi, axis=tuple(range(1, 2 + n))) * dv
    else:
        transport = np.sum(phi[:, None] * u * grad_phi, axis=tuple(range(1, 2 + n))) * dv

    t = traj.times
    resid = np.abs(
        0.5 * (phi_sq - phi_sq[0])
        + _trapezoid_cumulative(grad_phi_sq, t)
        - 2.0 * _trapezoid_cumulative(source, t)
    )
    return PhiReport(t.copy(), np.max(np.abs(phi), axis=grid_axes), resid, transport)


def phi_refinement_study(solve: Callable[[int], Trajectory], levels: Sequence[int]) -> list[PhiReport]:
    """Run ``solve(level)`` per level and attach observed convergence orders.

    ``levels`` are refinement factors (e.g. ``[1, 2]``); the order of
    ``max sup_phi`` between consecutive levels is stored on the finer report.
    """
    reports = [phi_diagnostics(solve(lv)) for lv in levels]
    for (lc, rc), (lf, rf) in zip(zip(levels, reports), zip(levels[1:], reports[1:])):
        if rc.max_sup_phi > 0 and rf.max_sup_phi > 0:
            rf.drift_order = math.log(rc.max_sup_phi / rf.max_sup_phi) / math.log(lf / lc)
    return reports


# ---------------------------------------------------------------------------
# smoothing rates


@dataclass(frozen=True)
class SmoothingFit:
    p: float
    q: float
    wrap: str
    slope: float
    prediction: float
    r2: float
    prefactor: float

    @property
    def rel_error(self) -> float:
        if self.prediction == 0:
            return abs(self.slope)
        return abs(self.slope - self.prediction) / abs(self.prediction)

    @property
    def passed(self) -> bool:
        return self.rel_error <= 0.1 and self.r2 >= 0.99

    @property
    def degenerate(self) -> bool:
        return self.r2 < 0.99

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(rel_error=self.rel_error, passed=self.passed)
        return out


_WRAP_OPERATOR = {"none": "heat", "gradient": "heat", "pdiv": "stokes"}


def smoothing_prediction(p: float, q: float, n: int, wrap: str) -> float:
    return -0.5 * n * (1.0 / p - 1.0 / q) - (0.0 if wrap == "none" else 0.5)


def _bump(dom: Domain, sigma: float, centre) -> np.ndarray:
    """Gaussian of width ``sigma`` centred at ``centre``, periodised once per axis."""
    out = np.ones(dom.shape)
    for ax, (X, c, L) in enumerate(zip(dom.coordinates, centre, dom.extent)):
        r = X - c
        out = out * sum(np.exp(-((r + s * L) ** 2) / (2 * sigma**2)) for s in (-1, 0, 1))
    return out


def _lowest_mode(dom: Domain, basis) -> np.ndarray:
    lam = dom.eigenvalues(basis)
    pos = np.where(lam > 0, lam, np.inf)
    c = np.zeros(dom.shape)
    c[np.unravel_index(np.argmin(pos), dom.shape)] = 1.0
    return dom.inverse(c, basis)


def _probe(dom: Domain, wrap: str, scalar: np.ndarray) -> Field:
    n = dom.dimension
    if wrap == "pdiv":
        vals = np.zeros((n, n) + dom.shape)
        vals[0, 1] = scalar
        return tensor_field(dom, vals)
    return scalar_field(dom, scalar, kind="director")


def smoothing_rate_suite(
    domain: Domain,
    pq_list: Sequence[tuple[float, float]],
    wraps: Sequence[str] = ("none", "gradient", "pdiv"),
    seed: int = 0,
    n_widths: int = 20,
    n_times: int = 12,
    window: tuple[float, float] = (2.0, 20.0),
) -> list[SmoothingFit]:
    """Fit ``sup_f e^{omega t} ||S(t) f||_q / ||f||_p`` against ``t``.

    The sup runs over a probe family of mean-free Gaussian bumps (random grid
    centres, widths on a geometric ladder) plus the lowest eigenmode.  Times
    span ``window`` in units of ``h^2`` (largest grid spacing), which keeps the
    fit away from lattice effects and from the exponential regime.
    """
    h = max(domain.spacing)
    times = np.geomspace(window[0] * h * h, window[1] * h * h, n_times)
    smax = min(8.0 * math.sqrt(times[-1]), min(domain.extent) / 8.0)
    widths = np.geomspace(0.7 * math.sqrt(times[0]), smax, n_widths)
    rng = np.random.default_rng(seed)
    fits = []
    for wrap in wraps:
        op = _WRAP_OPERATOR[wrap]
        basis = domain.velocity_basis if op == "stokes" else domain.director_basis
        probes = []
        for sigma in widths:
            centre = [
                domain.coordinates[ax].flat[0] + domain.spacing[ax] * rng.integers(domain.resolution[ax])
                for ax in range(domain.dimension)
            ]
            g = _bump(domain, sigma, centre)
            probes.append(g - g.mean())
        probes.append(_lowest_mode(domain, basis))
        best = {pq: np.zeros(n_times) for pq in pq_list}
        for scalar in probes:
            f = _probe(domain, wrap, scalar)
            data_norm = {pq: lp_norm(f, pq[0]) for pq in pq_list}
            for i, t in enumerate(times):
                out = semigroup_apply(SemigroupQuery(op, float(t), wrap), f)
                for pq in pq_list:
                    best[pq][i] = max(best[pq][i], lp_norm(out, pq[1]) / data_norm[pq])
        for pq in pq_list:
            slope, r2 = fit_decay_exponent(times, best[pq], domain.omega)
            pref = float(np.exp(np.mean(np.log(best[pq]) + domain.omega * times - slope * np.log(times))))
            fits.append(
                SmoothingFit(pq[0], pq[1], wrap, slope, smoothing_prediction(*pq, domain.dimension, wrap), r2, pref)
            )
    return fits


# ---------------------------------------------------------------------------
# scaling invariance


def dilate(domain: Domain, alpha: float) -> Domain:
    return make_domain(domain.dimension, [L / alpha for L in domain.extent], domain.resolution, domain.director_bc)


def scaling_invariance_check(
    domain: Domain,
    a: Field,
    b: Field,
    settings: PicardSettings,
    alpha: float = 2.0,
    e=None,
) -> float:
    """Max relative deviation between a dilated solve and the rescaled base solve.

    The dilated problem lives on extent ``L / alpha`` with the same grid,
    horizon ``T / alpha^2`` and data ``alpha a(alpha x)``, ``b(alpha x)``; node
    ``n`` of both grids corresponds to the same rescaled point.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if domain.director_bc != "periodic-mean-split":
        raise DomainError("scaling check is defined for the torus regime")
    small = dilate(domain, alpha)
    base, _ = picard_solve(domain, a, b, settings, e)
    dil_settings = PicardSettings(
        settings.p, settings.q, settings.T / alpha**2, settings.time_nodes, settings.tol, settings.max_iter
    )
    a_s = velocity_field(small, alpha * a.values)
    b_s = director_field(small, b.values)
    dil, _ = picard_solve(small, a_s, b_s, dil_settings, e)

    def rel(x, y):
        scale = np.max(np.abs(y))
        diff = np.max(np.abs(x - y))
        return 0.0 if diff == 0 else diff / scale

    return max(
        rel(dil.u_values(), alpha * base.u_values()),
        rel(dil.director_values(), base.director_values()),
    )


# ---------------------------------------------------------------------------
# maximum principle and square-root equivalence


def random_smooth_field(domain: Domain, rng: np.random.Generator, components: int = 3, band: int = 4,
                        mean_free: bool = False) -> np.ndarray:
    """Random band-limited samples in the director basis (modes below ``band`` per axis)."""
    basis = domain.director_basis
    c = np.zeros((components,) + domain.shape)
    sl = []
    for ax, kind in enumerate(basis):
        if kind == "fourier":
            idx = np.r_[0:band, domain.resolution[ax] - band + 1:domain.resolution[ax]]
        else:
            idx = np.arange(band)
        sl.append(idx)
    block = np.ix_(range(components), *sl)
    c = c.astype(complex) if basis[0] == "fourier" else c
    c[block] = rng.standard_normal(c[block].shape)
    vals = domain.inverse(c, basis)
    if mean_free:
        vals = vals - vals.mean(axis=tuple(range(1, vals.ndim)), keepdims=True)
    return vals


def max_principle_times(domain: Domain, count: int = 5) -> np.ndarray:
    """Sample times from ``4 h^2`` up to 1.

    Below about ``4 h^2`` the grid-restricted heat kernel has lobes of relative
    size ``exp(-pi^2 t / h^2)`` and is no longer positivity preserving.
    """
    h = max(domain.spacing)
    return np.geomspace(4.0 * h * h, 1.0, count)


def max_principle_check(domain: Domain, batch_size: int = 100, times: Optional[Sequence[float]] = None,
                        seed: int = 0) -> float:
    """Worst ``||e^{-tB} d||_inf / ||d||_inf`` over random fields and times."""
    rng = np.random.default_rng(seed)
    times = max_principle_times(domain) if times is None else times
    worst = 0.0
    for _ in range(batch_size):
        f = director_field(domain, random_smooth_field(domain, rng))
        ref = lp_norm(f, np.inf)
        for t in times:
            out = semigroup_apply(SemigroupQuery("heat", float(t)), f)
            worst = max(worst, lp_norm(out, np.inf) / ref)
    return worst


def sqrt_equivalence_check(domain: Domain, p_list: Sequence[float] = (2.0, 3.0, 3.5), batch_size: int = 50,
                           seed: int = 0) -> dict[float, tuple[float, float]]:
    """Min and max of ``||B^{1/2} f||_p / ||grad f||_p`` over random fields."""
    rng = np.random.default_rng(seed)
    ratios = {p: [] for p in p_list}
    for _ in range(batch_size):
        f = scalar_field(domain, random_smooth_field(domain, rng, components=1, mean_free=True)[0])
        root = semigroup_apply(SemigroupQuery("heat", 0.0, "sqrt"), f)
        g = gradient(f)
        for p in p_list:
            ratios[p].append(lp_norm(root, p) / lp_norm(g, p))
    return {p: (float(min(v)), float(max(v))) for p, v in ratios.items()}
