"""Command line entry point: ``elmild {solve,certify,diagnose}``.

Output files go to ``[run] output_dir`` unless ``ELMILD_OUTPUT_DIR`` is set.
Exit status: 0 success, 1 blow-up, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .certifier import certify
from .config import ConfigError, RunConfig, gen_initial_data, load_config
from .diagnostics import (
    max_principle_check,
    phi_diagnostics,
    scaling_invariance_check,
    smoothing_rate_suite,
    sqrt_equivalence_check,
)
from .domain import DomainError
from .iteration import BlowUpError, picard_solve
from .norms import WeightedSupSpec, lp_norm_values

OUTPUT_ENV = "ELMILD_OUTPUT_DIR"
EXIT_OK, EXIT_BLOWUP, EXIT_CONFIG = 0, 1, 2
TRAJECTORY_COLUMNS = ("t", "u_Lp", "grad_d_Lp", "weighted_u_Lq", "weighted_grad_y_Lq", "sup_phi")
SMOOTHING_COLUMNS = ("p", "q", "wrap", "slope", "prediction", "rel_error", "r2", "passed")
SUITES = ("phi", "smoothing", "scaling", "maxprinciple", "sqrt")


# ---------------------------------------------------------------------------
# bit-stable writers


def fmt(value) -> str:
    """Format a scalar with 17 significant digits (``inf``/``nan`` as words)."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def _json_value(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return f'"{fmt(v)}"' if not math.isfinite(v) else fmt(v)
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_value(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{_json_value(str(k))}: {_json_value(v)}" for k, v in value.items()) + "}"
    raise TypeError(f"cannot serialise {type(value).__name__}")


def write_json(path: Path, record: dict) -> None:
    """One key per line; non-finite floats become the strings "inf"/"nan"."""
    lines = [f"  {_json_value(str(k))}: {_json_value(v)}" for k, v in record.items()]
    path.write_text("{\n" + ",\n".join(lines) + "\n}\n", encoding="utf-8")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence], stamp: str) -> None:
    """CSV with a leading ``#`` provenance line, then the header row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {stamp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# ---------------------------------------------------------------------------
# verbs


def _stamp(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "version": __version__}


def _stamp_line(cfg: RunConfig) -> str:
    return f"elmild {__version__} config_hash={cfg.config_hash()}"


def output_dir(cfg: RunConfig) -> Path:
    out = Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solve(cfg: RunConfig, seed: Optional[int] = None):
    dom = cfg.domain()
    a, b = gen_initial_data(cfg, seed)
    e = cfg.e if dom.regime == "dirichlet" else None
    traj, trace = picard_solve(dom, a, b, cfg.settings(), e)
    return dom, traj, trace


def run_solve(cfg: RunConfig, out: Path, seed: Optional[int] = None) -> int:
    dom, traj, trace = _solve(cfg, seed)
    spec = WeightedSupSpec(cfg.p, cfg.q, dom.omega, dom.dimension)
    u = traj.u_values()
    gy = traj.grad_y_values()
    phi = phi_diagnostics(traj)
    weights = spec.weight(traj.times)
    rows = []
    for i, t in enumerate(traj.times):
        rows.append((
            t,
            lp_norm_values(u[i], cfg.p, dom),
            lp_norm_values(gy[i], cfg.p, dom),
            weights[i] * lp_norm_values(u[i], cfg.q, dom),
            weights[i] * lp_norm_values(gy[i], cfg.q, dom),
            phi.sup_phi[i],
        ))
    write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS, rows, _stamp_line(cfg))
    write_json(out / "trace.json", {**_stamp(cfg), **trace.to_dict()})
    return EXIT_OK


def run_certify(cfg: RunConfig, out: Path, seed: Optional[int] = None) -> int:
    dom = cfg.domain()
    a, b = gen_initial_data(cfg, seed)
    e = cfg.e if dom.regime == "dirichlet" else None
    report = certify(dom, a, b, cfg.p, cfg.q, cfg.T, cfg.time_nodes, cfg.generic_C, e, cfg.horizon)
    record = {**_stamp(cfg), **report.as_dict(),
              "note": "one generic_C is used for both smallness conditions"}
    write_json(out / "certificate.json", record)
    return EXIT_OK


def run_diagnose(cfg: RunConfig, suite: str, out: Path, seed: Optional[int] = None) -> int:
    dom = cfg.domain()
    stamp = _stamp(cfg)
    if suite == "phi":
        reports = []
        for level in (1, 2):
            fine = cfg.replace(resolution=tuple(level * N for N in cfg.resolution),
                               time_nodes=cfg.time_nodes * level)
            _, traj, _ = _solve(fine, seed)
            reports.append(phi_diagnostics(traj))
        coarse, finer = reports
        order = math.log2(coarse.max_sup_phi / finer.max_sup_phi) if finer.max_sup_phi > 0 else math.inf
        write_json(out / "phi_report.json", {
            **stamp,
            "max_sup_phi": coarse.max_sup_phi,
            "max_sup_phi_refined": finer.max_sup_phi,
            "drift_order": order,
            "max_energy_residual": coarse.max_energy_residual,
            "max_energy_residual_refined": finer.max_energy_residual,
            "max_transport": coarse.max_transport,
        })
        rows = zip(coarse.times, coarse.sup_phi, coarse.energy_residual, coarse.transport)
        write_csv(out / "phi_timeseries.csv", ("t", "sup_phi", "energy_residual", "transport"), rows,
                  _stamp_line(cfg))
    elif suite == "smoothing":
        fits = smoothing_rate_suite(dom, [(2.0, 2.0), (2.0, math.inf), (cfg.p, cfg.q)], seed=cfg.seed)
        rows = [(f.p, f.q, f.wrap, f.slope, f.prediction, f.rel_error, f.r2, fmt(f.passed)) for f in fits]
        write_csv(out / "smoothing_slopes.csv", SMOOTHING_COLUMNS, rows, _stamp_line(cfg))
    elif suite == "scaling":
        if dom.director_bc != "periodic-mean-split":
            raise ConfigError("the scaling suite needs director_bc = periodic-mean-split")
        a, b = gen_initial_data(cfg, seed)
        dev = scaling_invariance_check(dom, a, b, cfg.settings(), 2.0)
        write_json(out / "scaling.json", {**stamp, "alpha": 2.0, "max_relative_deviation": dev,
                                          "passed": dev <= 1e-6})
    elif suite == "maxprinciple":
        worst = max_principle_check(dom, 100, seed=cfg.seed)
        write_json(out / "maxprinciple.json", {**stamp, "worst_ratio": worst, "passed": worst <= 1 + 1e-12})
    elif suite == "sqrt":
        bounds = sqrt_equivalence_check(dom, (2.0, 3.0, 3.5), seed=cfg.seed)
        record = {**stamp}
        for p, (lo, hi) in bounds.items():
            record[f"ratio_min_L{fmt(p)}"] = lo
            record[f"ratio_max_L{fmt(p)}"] = hi
        write_json(out / "sqrt.json", record)
    else:
        raise ConfigError(f"unknown suite {suite!r}")
    return EXIT_OK


def run(verb: str, cfg: RunConfig, suite: Optional[str] = None, seed: Optional[int] = None) -> int:
    """Execute one verb and map failures to exit codes."""
    try:
        out = output_dir(cfg)
        if verb == "solve":
            return run_solve(cfg, out, seed)
        if verb == "certify":
            return run_certify(cfg, out, seed)
        if verb == "diagnose":
            return run_diagnose(cfg, suite or "phi", out, seed)
        raise ConfigError(f"unknown verb {verb!r}")
    except BlowUpError as err:
        print(f"blow-up: {err}", file=sys.stderr)
        return EXIT_BLOWUP
    except (ConfigError, DomainError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elmild", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("solve", "certify", "diagnose"):
        sp = sub.add_parser(verb)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, default=None)
        if verb == "diagnose":
            sp.add_argument("--suite", choices=SUITES, required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return run(args.verb, cfg, getattr(args, "suite", None))


if __name__ == "__main__":
    sys.exit(main())
