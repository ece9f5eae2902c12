"""Run configuration (INI text) and initial-data generation.

Recognised sections and keys (all optional except ``model.p`` and ``model.q``)::

    [domain]   dimension, extent, resolution, director_bc
    [model]    p, q, T, time_nodes, e
    [data]     velocity_norm, director_gradient_norm, band
    [solver]   tol, max_iter
    [certify]  generic_C, horizon
    [run]      seed, output_dir

``extent``, ``resolution`` and ``e`` accept a single value or a comma list.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .domain import (
    DIRECTOR_BCS,
    Domain,
    DomainError,
    Field,
    director_field,
    leray_project,
    make_domain,
    velocity_field,
)
from .iteration import PicardSettings, data_gradient
from .norms import lp_norm

STATED_P_RANGE = (3.0, 3.5)


class ConfigError(ValueError):
    pass


class ConfigWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RunConfig:
    dimension: int = 2
    extent: tuple[float, ...] = (2 * math.pi, 2 * math.pi)
    resolution: tuple[int, ...] = (64, 64)
    director_bc: str = "periodic-mean-split"
    p: float = 3.0
    q: float = 3.5
    T: float = 0.1
    time_nodes: int = 64
    e: tuple[float, float, float] = (0.0, 0.0, 1.0)
    velocity_norm: float = 1e-3
    director_gradient_norm: float = 1e-3
    band: int = 3
    tol: float = 1e-10
    max_iter: int = 40
    generic_C: float = 1.0
    horizon: float | None = None
    seed: int = 0
    output_dir: str = "output"

    @property
    def regime(self) -> str:
        return "dirichlet" if self.director_bc == "dirichlet-box" else "neumann"

    def domain(self) -> Domain:
        return make_domain(self.dimension, self.extent, self.resolution, self.director_bc)

    def settings(self) -> PicardSettings:
        return PicardSettings(self.p, self.q, self.T, self.time_nodes, self.tol, self.max_iter)

    def replace(self, **changes) -> "RunConfig":
        return validate(RunConfig(**{**asdict(self), **changes}))

    def config_hash(self) -> str:
        """Stable hash of the validated configuration."""
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SCHEMA = {
    "domain": {"dimension": int, "extent": "floats", "resolution": "ints", "director_bc": str},
    "model": {"p": float, "q": float, "T": float, "time_nodes": int, "e": "floats"},
    "data": {"velocity_norm": float, "director_gradient_norm": float, "band": int},
    "solver": {"tol": float, "max_iter": int},
    "certify": {"generic_C": float, "horizon": float},
    "run": {"seed": int, "output_dir": str},
}
_REQUIRED = {("model", "p"), ("model", "q")}


def _convert(kind, raw: str, where: str):
    try:
        if kind == "floats":
            return tuple(float(v) for v in raw.split(","))
        if kind == "ints":
            return tuple(int(v) for v in raw.split(","))
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate INI text; unknown sections or keys are rejected."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (T, generic_C)
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"malformed config: {err}") from None
    values: dict = {}
    seen = set()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            values[key] = _convert(_SCHEMA[section][key], raw, f"{section}.{key}")
            seen.add((section, key))
    missing = _REQUIRED - seen
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(f"{s}.{k}" for s, k in sorted(missing)))

    dim = values.get("dimension", 2)
    for key, default in (("extent", 2 * math.pi), ("resolution", 64)):
        if key in values and len(values[key]) == 1:
            values[key] = values[key] * dim
        elif key not in values:
            values[key] = (default,) * dim
    return validate(RunConfig(**values))


def validate(cfg: RunConfig) -> RunConfig:
    try:
        cfg.domain()
    except DomainError as err:
        raise ConfigError(str(err)) from None
    if not cfg.p > 1:
        raise ConfigError(f"need p > 1, got {cfg.p}")
    if cfg.q < cfg.p:
        raise ConfigError(f"violated q >= p (p={cfg.p}, q={cfg.q})")
    if not STATED_P_RANGE[0] <= cfg.p <= STATED_P_RANGE[1]:
        warnings.warn(f"p={cfg.p} lies outside the stated range [3, 3.5]", ConfigWarning, stacklevel=3)
    if cfg.q > 2 * cfg.p:
        warnings.warn(f"q={cfg.q} exceeds 2p; the closeness assumption on q fails", ConfigWarning, stacklevel=3)
    if cfg.time_nodes < 8:
        raise ConfigError(f"violated time_nodes >= 8 (got {cfg.time_nodes})")
    if not cfg.T > 0:
        raise ConfigError(f"violated T > 0 (got {cfg.T})")
    if len(cfg.e) != 3 or not np.linalg.norm(cfg.e) > 0:
        raise ConfigError("e must be a nonzero 3-vector")
    if abs(np.linalg.norm(cfg.e) - 1.0) > 1e-12:
        raise ConfigError(f"violated |e| = 1 (|e| = {np.linalg.norm(cfg.e):.6g})")
    if cfg.velocity_norm < 0 or cfg.director_gradient_norm < 0:
        raise ConfigError("data amplitudes must be nonnegative")
    if cfg.band < 1:
        raise ConfigError("violated band >= 1")
    if not cfg.tol > 0 or cfg.max_iter < 1:
        raise ConfigError("need tol > 0 and max_iter >= 1")
    if not cfg.generic_C > 0:
        raise ConfigError("violated generic_C > 0")
    if cfg.horizon is not None and not cfg.horizon > 0:
        raise ConfigError("violated horizon > 0")
    if cfg.director_bc not in DIRECTOR_BCS:
        raise ConfigError(f"director_bc must be one of {DIRECTOR_BCS}")
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None


# ---------------------------------------------------------------------------
# initial data


def _band_coeffs(dom: Domain, basis, rng: np.random.Generator, components: int, band: int) -> np.ndarray:
    """Random coefficients on modes ``1..band`` (or ``-band..band``) per axis."""
    c = np.zeros((components,) + dom.shape, dtype=complex if "fourier" in basis else float)
    idx = []
    for ax, kind in enumerate(basis):
        N = dom.resolution[ax]
        if kind == "fourier":
            idx.append(np.r_[0:band + 1, N - band:N])
        elif kind == "cos":
            idx.append(np.arange(band + 1))
        else:
            idx.append(np.arange(band))
    block = np.ix_(range(components), *idx)
    shape = c[block].shape
    draw = rng.standard_normal(shape)
    if c.dtype == complex:
        draw = draw + 1j * rng.standard_normal(shape)
    c[block] = draw
    return c


def gen_initial_data(cfg: RunConfig, seed: int | None = None) -> tuple[Field, Field]:
    """Velocity ``a`` (solenoidal, mean-free, ``||a||_p`` prescribed) and unit director ``b``.

    ``b = (e + eps w) / |e + eps w|`` with a band-limited random ``w`` and
    ``eps`` chosen so that ``||grad b||_p`` matches the requested value.
    """
    dom = cfg.domain()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    n = dom.dimension

    raw = dom.inverse(_band_coeffs(dom, dom.velocity_basis, rng, n, cfg.band), dom.velocity_basis)
    a = leray_project(velocity_field(dom, raw)).values
    a = a - a.mean(axis=tuple(range(1, n + 1)), keepdims=True)
    norm = lp_norm(velocity_field(dom, a), cfg.p)
    a = a * (cfg.velocity_norm / norm) if cfg.velocity_norm > 0 and norm > 0 else np.zeros_like(a)

    e = np.asarray(cfg.e, dtype=float).reshape((3,) + (1,) * n)
    w = dom.inverse(_band_coeffs(dom, dom.director_basis, rng, 3, cfg.band), dom.director_basis)

    def director(eps: float) -> np.ndarray:
        v = e + eps * w
        return v / np.sqrt(np.sum(v**2, axis=0))

    def grad_norm(eps: float) -> float:
        return lp_norm(data_gradient(dom, director_field(dom, director(eps)), cfg.e), cfg.p)

    target = cfg.director_gradient_norm
    if target == 0:
        b = np.broadcast_to(e, (3,) + dom.shape).copy()
    else:
        hi = target / max(grad_norm(1.0), 1e-300)
        for _ in range(60):
            if grad_norm(hi) >= target:
                break
            hi *= 2.0
        else:
            raise ConfigError("director_gradient_norm is not attainable with this perturbation")
        eps = brentq(lambda s: grad_norm(s) - target, 0.0, hi, xtol=1e-15, rtol=1e-13)
        b = director(eps)
    return velocity_field(dom, a), director_field(dom, b)
