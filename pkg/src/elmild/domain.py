"""Discrete function spaces on rectangles and exact spectral operators.

Velocity fields always live on the torus ``[0, L_1) x ... x [0, L_n)`` and are
expanded in Fourier modes.  The director uses one of three regimes:

``periodic-mean-split``
    Fourier modes on the same torus; the constant mode is split off.
``neumann-box``
    Cosine modes ``cos(pi m x / L)`` on the box (homogeneous Neumann data).
``dirichlet-box``
    Sine modes ``sin(pi m x / L)`` on the box (homogeneous Dirichlet data).

The no-slip Stokes operator of a bounded domain has no closed-form spectral
realisation on a box, so in the box regimes the velocity is still periodic.
All grids are cell centred, ``x_j = (j + 1/2) h``, which is the natural grid of
the type-II cosine and sine transforms and is harmless for the FFT.

Every operator is a mode-wise multiplier, which makes the semigroups exact
(up to round-off) for any time ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft

DIRECTOR_BCS = ("periodic-mean-split", "neumann-box", "dirichlet-box")
_DIRECTOR_BASIS = {
    "periodic-mean-split": "fourier",
    "neumann-box": "cos",
    "dirichlet-box": "sin",
}
# after differentiation along an axis
_DERIVED_BASIS = {"fourier": "fourier", "cos": "sin", "sin": "cos"}

Basis = tuple  # one of "fourier" | "cos" | "sin" per spatial axis


class DomainError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Domain:
    dimension: int
    extent: tuple[float, ...]
    resolution: tuple[int, ...]
    director_bc: str
    velocity_bc: str = "periodic"
    omega: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "omega", self._smallest_eigenvalue())

    # -- geometry ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.extent, self.resolution))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Cell-centred grid coordinates, ``indexing='ij'``."""
        axes = [(np.arange(N) + 0.5) * L / N for L, N in zip(self.extent, self.resolution)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @property
    def regime(self) -> str:
        return "dirichlet" if self.director_bc == "dirichlet-box" else "neumann"

    @property
    def velocity_basis(self) -> Basis:
        return ("fourier",) * self.dimension

    @property
    def director_basis(self) -> Basis:
        return (_DIRECTOR_BASIS[self.director_bc],) * self.dimension

    def gradient_basis(self, basis: Basis, axis: int) -> Basis:
        out = list(basis)
        out[axis] = _DERIVED_BASIS[basis[axis]]
        return tuple(out)

    # -- per-axis spectral tables ----------------------------------------
    def wavenumbers(self, kind: str, axis: int) -> np.ndarray:
        """Angular wavenumbers of the 1-D basis ``kind`` along ``axis``."""
        return self._wavenumbers(kind, axis)

    def _wavenumbers(self, kind, axis):
        N, L = self.resolution[axis], self.extent[axis]
        if kind == "fourier":
            return 2.0 * np.pi / L * np.fft.fftfreq(N, 1.0 / N)
        if kind == "cos":
            return np.pi / L * np.arange(N)
        if kind == "sin":
            return np.pi / L * np.arange(1, N + 1)
        raise DomainError(f"unknown basis {kind!r}")

    def _axis_view(self, arr, axis):
        shape = [1] * self.dimension
        shape[axis] = -1
        return arr.reshape(shape)

    def eigenvalues(self, basis: Basis) -> np.ndarray:
        """Symbol of the negative Laplacian on the spectral grid of ``basis``."""
        lam = np.zeros(self.resolution)
        for ax, kind in enumerate(basis):
            lam = lam + self._axis_view(self._wavenumbers(kind, ax) ** 2, ax)
        return lam

    def fourier_vectors(self, nyquist: bool = False) -> list[np.ndarray]:
        """Broadcastable Fourier wavevector components.

        With ``nyquist=False`` the Nyquist wavenumber is zeroed, which is the
        convention used for first derivatives of real fields.
        """
        out = []
        for ax in range(self.dimension):
            k = self._wavenumbers("fourier", ax).copy()
            N = self.resolution[ax]
            if not nyquist:
                k[N // 2] = 0.0
            out.append(self._axis_view(k, ax))
        return out

    def _smallest_eigenvalue(self) -> float:
        vel = min((2.0 * np.pi / L) ** 2 for L in self.extent)
        if self.director_bc == "periodic-mean-split":
            director = vel
        elif self.director_bc == "neumann-box":
            director = min((np.pi / L) ** 2 for L in self.extent)
        else:
            director = sum((np.pi / L) ** 2 for L in self.extent)
        return float(min(vel, director))

    # -- transforms on raw arrays (spatial axes last) ----------------------
    def forward(self, values: np.ndarray, basis: Basis) -> np.ndarray:
        """Grid samples -> coefficients ``c`` with ``values = sum c_m phi_m``."""
        n = self.dimension
        out = np.asarray(values)
        nb = out.ndim - n
        for ax, kind in enumerate(basis):
            a = nb + ax
            N = self.resolution[ax]
            if kind == "cos":
                out = sfft.dct(out, type=2, axis=a) / N
                idx = [slice(None)] * out.ndim
                idx[a] = 0
                out[tuple(idx)] *= 0.5
            elif kind == "sin":
                out = sfft.dst(out, type=2, axis=a) / N
                idx = [slice(None)] * out.ndim
                idx[a] = N - 1
                out[tuple(idx)] *= 0.5
        fourier_axes = [nb + ax for ax, kind in enumerate(basis) if kind == "fourier"]
        if fourier_axes:
            norm = np.prod([self.resolution[a - nb] for a in fourier_axes])
            out = sfft.fftn(out, axes=fourier_axes) / norm
        return out

    def inverse(self, coeffs: np.ndarray, basis: Basis) -> np.ndarray:
        n = self.dimension
        out = np.asarray(coeffs)
        nb = out.ndim - n
        fourier_axes = [nb + ax for ax, kind in enumerate(basis) if kind == "fourier"]
        if fourier_axes:
            norm = np.prod([self.resolution[a - nb] for a in fourier_axes])
            out = sfft.ifftn(out * norm, axes=fourier_axes).real
        for ax, kind in enumerate(basis):
            a = nb + ax
            N = self.resolution[ax]
            if kind == "cos":
                out = np.array(out, copy=True)
                idx = [slice(None)] * out.ndim
                idx[a] = 0
                out[tuple(idx)] *= 2.0
                out = sfft.idct(out * N, type=2, axis=a)
            elif kind == "sin":
                out = np.array(out, copy=True)
                idx = [slice(None)] * out.ndim
                idx[a] = N - 1
                out[tuple(idx)] *= 2.0
                out = sfft.idst(out * N, type=2, axis=a)
        return np.real(out)

    def derivative(self, coeffs: np.ndarray, basis: Basis, axis: int) -> tuple[np.ndarray, Basis]:
        """Exact derivative along ``axis`` in coefficient space."""
        kind = basis[axis]
        a = coeffs.ndim - self.dimension + axis
        N = self.resolution[axis]
        if kind == "fourier":
            k = self.fourier_vectors()[axis]
            return 1j * k * coeffs, basis
        kappa = self._wavenumbers("cos", axis)
        out = np.zeros_like(coeffs)
        src = [slice(None)] * coeffs.ndim
        dst = [slice(None)] * coeffs.ndim
        if kind == "cos":
            # cos(m) -> -kappa_m sin(m); sine slot m-1 holds frequency m
            src[a], dst[a] = slice(1, N), slice(0, N - 1)
            scale = -kappa[1:]
        else:
            # sin(m) -> kappa_m cos(m); frequency N has no cosine on the grid
            src[a], dst[a] = slice(0, N - 1), slice(1, N)
            scale = kappa[1:]
        shape = [1] * coeffs.ndim
        shape[a] = N - 1
        out[tuple(dst)] = coeffs[tuple(src)] * scale.reshape(shape)
        return out, self.gradient_basis(basis, axis)

    def dealias_mask(self, basis: Basis) -> np.ndarray:
        """Two-thirds rule truncation mask for ``basis``."""
        mask = np.ones(self.resolution, dtype=bool)
        for ax, kind in enumerate(basis):
            N = self.resolution[ax]
            if kind == "fourier":
                keep = np.abs(np.fft.fftfreq(N, 1.0 / N)) <= N // 3
            else:
                keep = np.arange(N) < (2 * N) // 3
            mask &= self._axis_view(keep, ax)
        return mask

    def dealias(self, values: np.ndarray, basis: Basis) -> np.ndarray:
        coeffs = self.forward(values, basis)
        return self.inverse(coeffs * self.dealias_mask(basis), basis)


def make_domain(
    dimension: int = 2,
    extent: Sequence[float] | None = None,
    resolution: Sequence[int] | int = 64,
    director_bc: str = "periodic-mean-split",
) -> Domain:
    if dimension not in (2, 3):
        raise DomainError(f"dimension must be 2 or 3, got {dimension}")
    if extent is None:
        extent = [2.0 * np.pi] * dimension
    if np.isscalar(resolution):
        resolution = [int(resolution)] * dimension
    extent = tuple(float(L) for L in extent)
    resolution = tuple(int(N) for N in resolution)
    if len(extent) != dimension or len(resolution) != dimension:
        raise DomainError("extent and resolution need one entry per axis")
    if any(L <= 0 for L in extent):
        raise DomainError(f"extent must be positive, got {extent}")
    for N in resolution:
        if N < 4 or N % 2:
            raise DomainError(f"resolution entries must be even and >= 4, got {resolution}")
    if director_bc not in DIRECTOR_BCS:
        raise DomainError(f"director_bc must be one of {DIRECTOR_BCS}, got {director_bc!r}")
    return Domain(dimension, extent, resolution, director_bc)


# ---------------------------------------------------------------------------
# Fields


@dataclass(frozen=True, eq=False)
class Field:
    """Grid samples of one physical quantity at one time.

    ``values`` has shape ``components + domain.shape``; ``basis`` holds one
    axis-basis tuple per flattened component.
    """

    domain: Domain
    values: np.ndarray
    basis: tuple
    rank: str

    def __post_init__(self):
        ncomp = int(np.prod(self.component_shape)) if self.component_shape else 1
        if len(self.basis) != ncomp:
            raise DomainError(f"need {ncomp} basis tags, got {len(self.basis)}")

    @property
    def component_shape(self) -> tuple[int, ...]:
        return self.values.shape[: self.values.ndim - self.domain.dimension]

    @cached_property
    def coeffs(self) -> np.ndarray:
        return transform(self)

    def components(self):
        """Yield ``(index, values, basis)`` per flattened component."""
        cshape = self.component_shape
        flat = self.values.reshape((-1,) + self.domain.shape)
        for i, b in enumerate(self.basis):
            yield np.unravel_index(i, cshape) if cshape else (), flat[i], b


def scalar_field(domain: Domain, values, kind: str = "director") -> Field:
    basis = domain.director_basis if kind == "director" else domain.velocity_basis
    return Field(domain, np.asarray(values, dtype=float), (basis,), "scalar")


def director_field(domain: Domain, values) -> Field:
    values = np.asarray(values, dtype=float)
    if values.shape[0] != 3:
        raise DomainError("a director field has 3 components")
    return Field(domain, values, (domain.director_basis,) * 3, "vector")


def velocity_field(domain: Domain, values) -> Field:
    values = np.asarray(values, dtype=float)
    if values.shape[0] != domain.dimension:
        raise DomainError(f"a velocity field has {domain.dimension} components")
    return Field(domain, values, (domain.velocity_basis,) * domain.dimension, "vector")


def tensor_field(domain: Domain, values) -> Field:
    """Periodic rank-2 tensor field (velocity forcing)."""
    values = np.asarray(values, dtype=float)
    n = domain.dimension
    return Field(domain, values, (domain.velocity_basis,) * (values.shape[0] * values.shape[1]), "tensor")


def _group(field: Field):
    """Group components sharing a basis so each group is transformed once."""
    groups: dict = {}
    for i, b in enumerate(field.basis):
        groups.setdefault(b, []).append(i)
    return groups


def transform(field: Field) -> np.ndarray:
    dom = field.domain
    flat = field.values.reshape((-1,) + dom.shape)
    out = np.zeros(flat.shape, dtype=complex)
    for b, idx in _group(field).items():
        out[idx] = dom.forward(flat[idx], b)
    return out.reshape(field.values.shape)


def inverse_transform(domain: Domain, coeffs: np.ndarray, basis: tuple, rank: str) -> Field:
    flat = np.asarray(coeffs).reshape((-1,) + domain.shape)
    out = np.zeros(flat.shape)
    groups: dict = {}
    for i, b in enumerate(basis):
        groups.setdefault(b, []).append(i)
    for b, idx in groups.items():
        out[idx] = domain.inverse(flat[idx], b)
    return Field(domain, out.reshape(np.shape(coeffs)), tuple(basis), rank)


_RANK_UP = {"scalar": "vector", "vector": "tensor"}
_RANK_DOWN = {"vector": "scalar", "tensor": "vector"}


def gradient(field: Field) -> Field:
    """Spectral gradient; output index order is ``(component..., axis)``."""
    if field.rank == "tensor":
        raise DomainError("gradient of a tensor field is not supported")
    dom = field.domain
    n = dom.dimension
    cshape = field.component_shape
    flat = field.values.reshape((-1,) + dom.shape)
    out = np.zeros((flat.shape[0], n) + dom.shape)
    bases = []
    for i, b in enumerate(field.basis):
        c = dom.forward(flat[i], b)
        for ax in range(n):
            dc, db = dom.derivative(c, b, ax)
            out[i, ax] = dom.inverse(dc, db)
            bases.append(db)
    return Field(dom, out.reshape(cshape + (n,) + dom.shape), tuple(bases), _RANK_UP[field.rank])


def divergence(field: Field) -> Field:
    """Contract the last component index with the spatial derivative."""
    if field.rank == "scalar":
        raise DomainError("divergence needs a vector or tensor field")
    dom = field.domain
    n = dom.dimension
    cshape = field.component_shape
    if cshape[-1] != n:
        raise DomainError(f"last component index must have length {n}")
    flat = field.values.reshape((-1, n) + dom.shape)
    bases = [field.basis[i * n:(i + 1) * n] for i in range(flat.shape[0])]
    out = np.zeros((flat.shape[0],) + dom.shape)
    out_basis = []
    for i in range(flat.shape[0]):
        acc = None
        target = None
        for ax in range(n):
            b = bases[i][ax]
            dc, db = dom.derivative(dom.forward(flat[i, ax], b), b, ax)
            target = db if target is None else target
            v = dom.inverse(dc, db)
            acc = v if acc is None else acc + v
        out[i] = acc
        out_basis.append(target)
    return Field(dom, out.reshape(cshape[:-1] + dom.shape), tuple(out_basis), _RANK_DOWN[field.rank])


def laplacian_apply(field: Field) -> Field:
    """Apply the Laplacian ``Delta`` (not its negative)."""
    dom = field.domain
    coeffs = field.coeffs.reshape((-1,) + dom.shape)
    out = np.empty_like(coeffs)
    for i, b in enumerate(field.basis):
        out[i] = -dom.eigenvalues(b) * coeffs[i]
    return inverse_transform(dom, out.reshape(field.values.shape), field.basis, field.rank)


# ---------------------------------------------------------------------------
# Leray projection and semigroups (coefficient-level helpers are reused by the
# iteration for speed)


def leray_coeffs(domain: Domain, coeffs: np.ndarray) -> np.ndarray:
    """``(I - k k^T / |k|^2)`` on Fourier coefficients of shape ``(..., n, *grid)``."""
    n = domain.dimension
    ax = coeffs.ndim - n - 1
    k = domain.fourier_vectors()
    k2 = sum(ki**2 for ki in k)
    safe = np.where(k2 > 0, k2, 1.0)
    comps = [np.take(coeffs, i, axis=ax) for i in range(n)]
    kdotc = sum(ki * c for ki, c in zip(k, comps))
    return np.stack([comps[i] - k[i] * kdotc / safe for i in range(n)], axis=ax)


def pdiv_coeffs(domain: Domain, tensor_coeffs: np.ndarray) -> np.ndarray:
    """Fourier coefficients of ``P div F`` with ``(div F)_i = sum_j d_j F_ij``.

    ``tensor_coeffs`` has shape ``(..., n, n, *grid)``.
    """
    n = domain.dimension
    k = domain.fourier_vectors()
    ax = tensor_coeffs.ndim - n - 2
    rows = []
    for i in range(n):
        row = np.take(tensor_coeffs, i, axis=ax)
        rows.append(sum(1j * k[j] * np.take(row, j, axis=ax) for j in range(n)))
    return leray_coeffs(domain, np.stack(rows, axis=ax))


def leray_project(field: Field) -> Field:
    dom = field.domain
    if field.rank != "vector" or field.component_shape != (dom.dimension,):
        raise DomainError("leray_project needs a velocity-shaped vector field")
    if any(b != dom.velocity_basis for b in field.basis):
        raise DomainError("leray_project needs a periodic (Fourier) field")
    out = leray_coeffs(dom, field.coeffs)
    return inverse_transform(dom, out, field.basis, "vector")


@dataclass(frozen=True)
class SemigroupQuery:
    operator: str  # "stokes" | "heat"
    t: float
    derivative_wrap: str = "none"  # "none" | "gradient" | "pdiv" | "sqrt"

    def __post_init__(self):
        if self.operator not in ("stokes", "heat"):
            raise DomainError(f"unknown operator {self.operator!r}")
        if self.derivative_wrap not in ("none", "gradient", "pdiv", "sqrt"):
            raise DomainError(f"unknown wrap {self.derivative_wrap!r}")
        if self.derivative_wrap == "pdiv" and self.operator != "stokes":
            raise DomainError("pdiv wrap is only defined for the Stokes semigroup")
        if self.derivative_wrap in ("gradient", "sqrt") and self.operator != "heat":
            raise DomainError(f"{self.derivative_wrap} wrap is only defined for the heat semigroup")
        if not self.t >= 0:
            raise DomainError(f"semigroup time must be >= 0, got {self.t}")


def semigroup_apply(query: SemigroupQuery, f: Field) -> Field:
    """Mode-wise ``e^{-lambda t}`` composed with the requested wrap.

    The Stokes semigroup acts on mean-zero solenoidal fields; inputs are
    projected (``P``) and their mean is dropped, which is the identity on that
    subspace.  The heat semigroup keeps the mean.
    """
    dom = f.domain
    t = query.t
    if query.operator == "stokes":
        lam = dom.eigenvalues(dom.velocity_basis)
        decay = np.exp(-lam * t)
        decay.flat[0] = 0.0  # mean mode
        if query.derivative_wrap == "pdiv":
            if f.rank != "tensor":
                raise DomainError("pdiv wrap needs a tensor field")
            c = pdiv_coeffs(dom, f.coeffs)
        else:
            if f.rank != "vector":
                raise DomainError("the Stokes semigroup acts on vector fields")
            c = leray_coeffs(dom, f.coeffs)
        return inverse_transform(dom, c * decay, (dom.velocity_basis,) * dom.dimension, "vector")

    if query.derivative_wrap == "gradient":
        return gradient(semigroup_apply(SemigroupQuery("heat", t), f))
    coeffs = f.coeffs.reshape((-1,) + dom.shape)
    out = np.empty_like(coeffs)
    for i, b in enumerate(f.basis):
        lam = dom.eigenvalues(b)
        mult = np.exp(-lam * t)
        if query.derivative_wrap == "sqrt":
            mult = mult * np.sqrt(lam)
        out[i] = coeffs[i] * mult
    return inverse_transform(dom, out.reshape(f.values.shape), f.basis, f.rank)


def mean_split(field: Field) -> tuple[np.ndarray, Field]:
    """Split into the spatial average and the mean-free remainder."""
    axes = tuple(range(field.values.ndim - field.domain.dimension, field.values.ndim))
    mean = field.values.mean(axis=axes)
    fluct = field.values - np.expand_dims(mean, axes)
    return mean, Field(field.domain, fluct, field.basis, field.rank)
