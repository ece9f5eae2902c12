"""Picard iteration of the mild (Duhamel) formulation.

Two regimes are supported.  In the ``neumann`` regime (periodic or cosine
director) the director is split as ``d = y + x + b_mean`` with ``y`` mean-free
and ``x(t)`` a spatially constant 3-vector.  In the ``dirichlet`` regime the
unknown is ``delta = d - e`` for the constant boundary value ``e``.

Every iterate is a full trajectory on a uniform time grid, stored in spectral
coefficients.  The Duhamel integrals are evaluated mode by mode with
second-order exponential time differencing (ETD) product quadrature: the
source is interpolated linearly between nodes and integrated exactly against
``e^{-lambda (t - s)}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .domain import (
    Domain,
    DomainError,
    Field,
    director_field,
    gradient,
    inverse_transform,
    leray_coeffs,
    pdiv_coeffs,
    tensor_field,
    velocity_field,
)
from .norms import DeltaQuantities, KQuantities, WeightedSupSpec, lp_norm_values, weighted_sup


_CHUNK = 32


class BlowUpError(RuntimeError):
    """Non-finite values appeared in an iterate."""

    def __init__(self, node: int, t: float, iteration: Optional[int] = None):
        self.node = node
        self.t = t
        self.iteration = iteration
        where = f" in iterate {iteration}" if iteration is not None else ""
        super().__init__(f"non-finite values at time node {node} (t={t:.6g}){where}")


# ---------------------------------------------------------------------------
# containers


@dataclass(frozen=True)
class State:
    """Coupled state at one time; ``y`` holds ``delta`` in the dirichlet regime."""

    regime: str
    u: Field
    y: Field
    x: np.ndarray
    anchor: np.ndarray  # b_mean (neumann) or e (dirichlet)
    t: float

    @property
    def delta(self) -> Field:
        return self.y

    @property
    def b_mean(self) -> np.ndarray:
        return self.anchor

    @property
    def e(self) -> np.ndarray:
        return self.anchor

    def director_values(self) -> np.ndarray:
        return director_values(self.y.values, self.x, self.anchor, self.regime)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One iterate on the uniform grid ``times``.

    ``u_hat``: ``(N+1, n, *grid)`` Fourier coefficients of the velocity;
    ``y_hat``: ``(N+1, 3, *grid)`` director-basis coefficients of ``y``
    (or ``delta``); ``x``: ``(N+1, 3)``.
    """

    domain: Domain
    times: np.ndarray
    u_hat: np.ndarray
    y_hat: np.ndarray
    x: np.ndarray
    anchor: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("trajectory times must be strictly increasing")

    @property
    def regime(self) -> str:
        return self.domain.regime

    @property
    def nodes(self) -> int:
        return len(self.times)

    def u_values(self) -> np.ndarray:
        return self.domain.inverse(self.u_hat, self.domain.velocity_basis)

    def y_values(self) -> np.ndarray:
        return self.domain.inverse(self.y_hat, self.domain.director_basis)

    def grad_y_values(self) -> np.ndarray:
        return _grad_values(self.domain, self.y_hat)

    def director_values(self) -> np.ndarray:
        """Full director ``d`` at every node, shape ``(N+1, 3, *grid)``."""
        return director_values(self.y_values(), self.x, self.anchor, self.regime)

    def state(self, i: int) -> State:
        dom = self.domain
        u = velocity_field(dom, dom.inverse(self.u_hat[i], dom.velocity_basis))
        y = director_field(dom, dom.inverse(self.y_hat[i], dom.director_basis))
        return State(self.regime, u, y, self.x[i].copy(), self.anchor.copy(), float(self.times[i]))

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        return replace(
            self,
            u_hat=self.u_hat - other.u_hat,
            y_hat=self.y_hat - other.y_hat,
            x=self.x - other.x,
            anchor=np.zeros(3),
        )


def director_values(y: np.ndarray, x: np.ndarray, anchor: np.ndarray, regime: str) -> np.ndarray:
    """Reassemble ``d`` from ``y`` (or ``delta``), ``x`` and the anchor vector."""
    n_grid = y.ndim - np.ndim(x)
    shift = np.asarray(x) + np.asarray(anchor) if regime == "neumann" else np.broadcast_to(anchor, np.shape(x))
    return y + shift.reshape(shift.shape + (1,) * n_grid)


def uniform_times(T: float, steps: int) -> np.ndarray:
    if not T > 0 or steps < 1:
        raise DomainError("need T > 0 and at least one time step")
    return np.linspace(0.0, T, steps + 1)


# ---------------------------------------------------------------------------
# spectral helpers on raw arrays (leading axes allowed)


def _grad_values(dom: Domain, y_hat: np.ndarray) -> np.ndarray:
    """Director-basis coefficients ``(..., 3, *grid)`` -> gradient values ``(..., 3, n, *grid)``."""
    basis = dom.director_basis
    out = []
    for ax in range(dom.dimension):
        dc, db = dom.derivative(y_hat, basis, ax)
        out.append(dom.inverse(dc, db))
    return np.stack(out, axis=y_hat.ndim - dom.dimension)


def _dealias_coeffs(dom: Domain, values: np.ndarray, basis) -> np.ndarray:
    return dom.forward(values, basis) * dom.dealias_mask(basis)


def _stress_values(u: np.ndarray, grad_y: np.ndarray, n: int) -> np.ndarray:
    """``u_i u_j + sum_l d_i y_l d_j y_l`` with the tensor axes before the grid."""
    lead = u.ndim - n - 1
    g = np.expand_dims(u, lead + 1) * np.expand_dims(u, lead)
    # grad_y: (..., 3, n, *grid); sum over the director index
    gi = np.expand_dims(grad_y, lead + 2)
    gj = np.expand_dims(grad_y, lead + 1)
    return g + np.sum(gi * gj, axis=lead)


def _transport(u: np.ndarray, grad_y: np.ndarray, n: int) -> np.ndarray:
    """``(u . grad) y`` from velocity values and gradient values."""
    lead = u.ndim - n - 1
    return np.sum(np.expand_dims(u, lead) * grad_y, axis=lead + 1)


def _cubic(grad_y: np.ndarray, shifted: np.ndarray, n: int) -> np.ndarray:
    """``|grad y|^2 * shifted``."""
    lead = grad_y.ndim - n - 2
    g2 = np.sum(grad_y**2, axis=(lead, lead + 1))
    return np.expand_dims(g2, lead) * shifted


def _fu_coeffs(dom: Domain, u: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
    """Dealiased Fourier coefficients of the stress tensor G."""
    return _dealias_coeffs(dom, _stress_values(u, grad_y, dom.dimension), dom.velocity_basis)


def _fy_coeffs(dom, u, y, grad_y, x, anchor):
    """Dealiased director-basis coefficients of the full director source and its mean."""
    n = dom.dimension
    shifted = director_values(y, x, anchor, "neumann")
    vals = _cubic(grad_y, shifted, n) - _transport(u, grad_y, n)
    c = _dealias_coeffs(dom, vals, dom.director_basis)
    mean_index = (Ellipsis,) + (0,) * n
    fx = np.real(c[mean_index]).copy()
    c[mean_index] = 0.0
    return c, fx


def _fdelta_coeffs(dom, u, delta, grad_d, e):
    n = dom.dimension
    shifted = director_values(delta, np.zeros(delta.shape[: delta.ndim - n]), e, "dirichlet")
    vals = _cubic(grad_d, shifted, n) - _transport(u, grad_d, n)
    return _dealias_coeffs(dom, vals, dom.director_basis)


# ---------------------------------------------------------------------------
# public nonlinearity evaluators on Fields


def eval_Fu(u: Field, grad_director: Field) -> Field:
    """Stress tensor ``G = u (x) u + [grad y]^T grad y`` (dealiased).

    The velocity source is ``-P div G``; the projection and divergence are
    applied in coefficient space by the Duhamel step.
    """
    dom = u.domain
    n = dom.dimension
    if u.values.shape != (n,) + dom.shape or grad_director.values.shape != (3, n) + dom.shape:
        raise DomainError("eval_Fu: shape mismatch between u and grad y")
    c = _fu_coeffs(dom, u.values, grad_director.values)
    return tensor_field(dom, dom.inverse(c, dom.velocity_basis))


def _director_inputs(y: Field, u: Optional[Field]):
    dom = y.domain
    n = dom.dimension
    if y.values.shape != (3,) + dom.shape:
        raise DomainError("director input must have 3 components on the grid")
    uv = np.zeros((n,) + dom.shape) if u is None else u.values
    if uv.shape != (n,) + dom.shape:
        raise DomainError("velocity input has the wrong shape")
    return dom, uv, _grad_values(dom, y.coeffs)


def eval_Fy(u: Field, y: Field, x, b_mean) -> Field:
    """Mean-free part of ``-(u . grad) y + |grad y|^2 (x + y + b_mean)``."""
    dom, uv, gy = _director_inputs(y, u)
    c, _ = _fy_coeffs(dom, uv, y.values, gy, np.asarray(x, float), np.asarray(b_mean, float))
    return director_field(dom, dom.inverse(c, dom.director_basis))


def eval_Fx(y: Field, x, b_mean, u: Optional[Field] = None) -> np.ndarray:
    """Spatial mean of ``|grad y|^2 (x + y + b_mean) - (u . grad) y``.

    On the torus the transport term has zero mean, so ``u`` may be omitted.
    """
    dom, uv, gy = _director_inputs(y, u)
    _, fx = _fy_coeffs(dom, uv, y.values, gy, np.asarray(x, float), np.asarray(b_mean, float))
    return fx


def eval_Fdelta(u: Field, delta: Field, e) -> Field:
    """``-(u . grad) delta + |grad delta|^2 (delta + e)`` (dealiased)."""
    e = np.asarray(e, float)
    if abs(np.linalg.norm(e) - 1.0) > 1e-12:
        raise DomainError("the boundary director e must be a unit vector")
    dom, uv, gd = _director_inputs(delta, u)
    c = _fdelta_coeffs(dom, uv, delta.values, gd, e)
    return director_field(dom, dom.inverse(c, dom.director_basis))


# ---------------------------------------------------------------------------
# ETD product quadrature


def etd_weights(lam: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weights ``(E, w_prev, w_next)`` of the exact integral of a linear source.

    ``int_0^h e^{-lam (h - s)} [F_prev (1 - s/h) + F_next s/h] ds
    = w_prev F_prev + w_next F_next``; ``lam = 0`` gives the trapezoid rule.
    """
    z = np.asarray(lam, dtype=float) * h
    E = np.exp(-z)
    small = z < 1e-3
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(-zs)
    w_next = np.where(small, 0.5 - z / 6 + z**2 / 24 - z**3 / 120, (zs + em1) / zs**2)
    w_prev = np.where(small, 0.5 - z / 3 + z**2 / 8 - z**3 / 30, (-em1 - zs * np.exp(-zs)) / zs**2)
    return E, h * w_prev, h * w_next


def _etd_integrate(source: np.ndarray, lam: np.ndarray, h: float) -> np.ndarray:
    """``I_n = int_0^{t_n} e^{-lam (t_n - s)} F(s) ds`` for a piecewise linear F."""
    E, wp, wn = etd_weights(lam, h)
    out = np.zeros_like(source)
    for i in range(1, source.shape[0]):
        out[i] = E * out[i - 1] + wp * source[i - 1] + wn * source[i]
    return out


# ---------------------------------------------------------------------------
# trajectories


def _data_coeffs(dom: Domain, a: Field, b: Field, e=None):
    """Initial coefficients of the velocity and of ``y`` (or ``delta``)."""
    a_hat = leray_coeffs(dom, dom.forward(a.values, dom.velocity_basis))
    a_hat[(Ellipsis,) + (0,) * dom.dimension] = 0.0
    if dom.regime == "neumann":
        b_hat = dom.forward(b.values, dom.director_basis)
        mean_index = (Ellipsis,) + (0,) * dom.dimension
        anchor = np.real(b_hat[mean_index]).copy()
        b_hat[mean_index] = 0.0
    else:
        if e is None:
            raise DomainError("the dirichlet regime needs the boundary director e")
        anchor = np.asarray(e, dtype=float)
        if abs(np.linalg.norm(anchor) - 1.0) > 1e-12:
            raise DomainError("the boundary director e must be a unit vector")
        shifted = b.values - anchor.reshape((3,) + (1,) * dom.dimension)
        b_hat = dom.forward(shifted, dom.director_basis)
    return a_hat.astype(complex), b_hat.astype(complex), anchor


def data_gradient(domain: Domain, b: Field, e=None) -> Field:
    """Gradient of the initial director.

    In the dirichlet regime only ``b - e`` lies in the sine space, so the
    gradient is taken of that deviation (the constant ``e`` contributes 0).
    """
    vals = b.values
    if domain.regime == "dirichlet":
        if e is None:
            raise DomainError("the dirichlet regime needs the boundary director e")
        vals = vals - np.asarray(e, dtype=float).reshape((3,) + (1,) * domain.dimension)
    return gradient(director_field(domain, vals))


def linear_trajectory(domain: Domain, a: Field, b: Field, times: np.ndarray, e=None) -> Trajectory:
    """Iterate zero: ``u_0 = e^{-tA} a``, ``y_0 = e^{-tB} b_s`` (or ``e^{-tB}(b - e)``), ``x_0 = 0``."""
    a_hat, b_hat, anchor = _data_coeffs(domain, a, b, e)
    times = np.asarray(times, dtype=float)
    lam_u = domain.eigenvalues(domain.velocity_basis)
    lam_d = domain.eigenvalues(domain.director_basis)
    tt = times.reshape((-1, 1) + (1,) * domain.dimension)
    u_hat = np.exp(-lam_u * tt) * a_hat[None]
    y_hat = np.exp(-lam_d * tt) * b_hat[None]
    return Trajectory(domain, times, u_hat, y_hat, np.zeros((len(times), 3)), anchor)


def zero_trajectory(linear: Trajectory) -> Trajectory:
    return replace(
        linear,
        u_hat=np.zeros_like(linear.u_hat),
        y_hat=np.zeros_like(linear.y_hat),
        x=np.zeros_like(linear.x),
    )


def _first_bad_node(*arrays) -> Optional[int]:
    bad = None
    for arr in arrays:
        flat = np.reshape(arr, (arr.shape[0], -1))
        idx = np.flatnonzero(~np.all(np.isfinite(flat), axis=1))
        if idx.size:
            bad = int(idx[0]) if bad is None else min(bad, int(idx[0]))
    return bad


def duhamel_update(prev: Trajectory, linear: Trajectory, nonlinear: bool = True) -> Trajectory:
    """Next Picard iterate from ``prev`` at every node of the shared grid.

    ``linear`` supplies the linear parts (iterate zero).  With
    ``nonlinear=False`` the sources are forced to zero and the linear
    trajectory is returned unchanged.
    """
    dom = prev.domain
    if prev.times.shape != linear.times.shape or not np.allclose(prev.times, linear.times):
        raise DomainError("prev and linear trajectories must share the time grid")
    if not nonlinear:
        return replace(linear, u_hat=linear.u_hat.copy(), y_hat=linear.y_hat.copy(), x=linear.x.copy())
    steps = np.diff(prev.times)
    h = float(steps[0])
    if not np.allclose(steps, h, rtol=1e-12, atol=0):
        raise DomainError("duhamel_update needs a uniform time grid")

    src_u = np.empty_like(prev.u_hat, dtype=complex)
    src_y = np.empty_like(prev.y_hat, dtype=complex)
    src_x = np.zeros_like(prev.x)
    # evaluate the sources in chunks of nodes to bound the grid-value temporaries
    for start in range(0, prev.nodes, _CHUNK):
        sl = slice(start, start + _CHUNK)
        u = dom.inverse(prev.u_hat[sl], dom.velocity_basis)
        y = dom.inverse(prev.y_hat[sl], dom.director_basis)
        grad_y = _grad_values(dom, prev.y_hat[sl])
        bad = _first_bad_node(u, y, grad_y, prev.x[sl])
        if bad is not None:
            raise BlowUpError(start + bad, float(prev.times[start + bad]))
        src_u[sl] = -pdiv_coeffs(dom, _fu_coeffs(dom, u, grad_y))
        if dom.regime == "neumann":
            src_y[sl], src_x[sl] = _fy_coeffs(dom, u, y, grad_y, prev.x[sl], prev.anchor)
        else:
            src_y[sl] = _fdelta_coeffs(dom, u, y, grad_y, prev.anchor)

    lam_u = dom.eigenvalues(dom.velocity_basis)
    lam_d = dom.eigenvalues(dom.director_basis)
    u_hat = linear.u_hat + _etd_integrate(src_u, lam_u, h)
    y_hat = linear.y_hat + _etd_integrate(src_y, lam_d, h)
    x = _etd_integrate(src_x, np.zeros(()), h)

    bad = _first_bad_node(u_hat, y_hat, x)
    if bad is not None:
        raise BlowUpError(bad, float(prev.times[bad]))
    return replace(prev, u_hat=u_hat, y_hat=y_hat, x=x, anchor=linear.anchor)


# ---------------------------------------------------------------------------
# weighted quantities


def node_norms(traj: Trajectory, q: float) -> dict[str, np.ndarray]:
    """Per-node ``||u||_q``, ``||grad y||_q``, ``||y||_inf`` and ``|x|``."""
    dom = traj.domain
    u = traj.u_values()
    y = traj.y_values()
    gy = traj.grad_y_values()
    return {
        "u": np.array([lp_norm_values(v, q, dom) for v in u]),
        "grad_y": np.array([lp_norm_values(v, q, dom) for v in gy]),
        "y": np.array([lp_norm_values(v, np.inf, dom) for v in y]),
        "x": np.linalg.norm(traj.x, axis=1),
    }


def _weighted(norms: dict, spec: WeightedSupSpec, times) -> tuple[float, float, float, float]:
    return (
        weighted_sup(norms["u"], spec, times),
        weighted_sup(norms["grad_y"], spec, times),
        float(np.max(norms["y"])),
        float(np.max(norms["x"])),
    )


def k_quantities(traj: Trajectory, spec: WeightedSupSpec) -> KQuantities:
    return KQuantities(*_weighted(node_norms(traj, spec.q), spec, traj.times))


def delta_quantities(new: Trajectory, old: Trajectory, spec: WeightedSupSpec) -> DeltaQuantities:
    return DeltaQuantities(*_weighted(node_norms(new - old, spec.q), spec, new.times))


# ---------------------------------------------------------------------------
# Picard driver


@dataclass(frozen=True)
class PicardSettings:
    p: float = 3.0
    q: float = 3.5
    T: float = 0.1
    time_nodes: int = 64
    tol: float = 1e-10
    max_iter: int = 40

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.time_nodes < 1 or self.max_iter < 1:
            raise ValueError("time_nodes and max_iter must be positive")


@dataclass
class IterationTrace:
    k: list[KQuantities] = field(default_factory=list)
    delta: list[DeltaQuantities] = field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0
    reference_norm: float = 0.0

    @property
    def ratios(self) -> list[Optional[float]]:
        """``theta_j = delta_j / delta_{j-1}`` for ``j >= 1`` (None if undefined)."""
        out = []
        for j in range(1, len(self.delta)):
            prev = self.delta[j - 1].total
            out.append(self.delta[j].total / prev if prev > 0 else None)
        return out

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "reference_norm": self.reference_norm,
            "k": [dict(k_u=k.k_u, k_grad_y=k.k_grad_y, k_y=k.k_y, k_x=k.k_x, k_q=k.k_q, k_inf=k.k_inf) for k in self.k],
            "delta": [dict(d_u=d.d_u, d_grad_y=d.d_grad_y, d_y=d.d_y, d_x=d.d_x, total=d.total) for d in self.delta],
            "theta": self.ratios,
        }


def picard_solve(
    domain: Domain,
    a: Field,
    b: Field,
    settings: PicardSettings = PicardSettings(),
    e=None,
    start: str = "linear",
) -> tuple[Trajectory, IterationTrace]:
    """Iterate ``duhamel_update`` until the difference norm drops below tolerance.

    ``start`` selects the seed iterate: ``"linear"`` (iterate zero) or
    ``"zero"``.  Non-convergence is reported through the trace.
    """
    if start not in ("linear", "zero"):
        raise ValueError(f"unknown start {start!r}")
    times = uniform_times(settings.T, settings.time_nodes)
    spec = WeightedSupSpec(settings.p, settings.q, domain.omega, domain.dimension)
    linear = linear_trajectory(domain, a, b, times, e)
    trace = IterationTrace()
    k0 = k_quantities(linear, spec)
    trace.reference_norm = k0.total
    threshold = settings.tol * k0.total if k0.total > 0 else settings.tol

    current = linear if start == "linear" else zero_trajectory(linear)
    trace.k.append(k0 if start == "linear" else k_quantities(current, spec))
    for j in range(settings.max_iter):
        try:
            new = duhamel_update(current, linear)
        except BlowUpError as err:
            raise BlowUpError(err.node, err.t, iteration=j + 1) from None
        d = delta_quantities(new, current, spec)
        trace.k.append(k_quantities(new, spec))
        trace.delta.append(d)
        trace.iterations_used = j + 1
        current = new
        if d.total <= threshold:
            trace.converged = True
            break
    return current, trace
