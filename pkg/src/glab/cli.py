"""Command-line front end: ``glab <kind> --config FILE`` and ``glab verify --suite NAME``.

Configs are YAML or JSON mappings validated against a per-kind schema. The
result records of a run are a pure function of (config, seed); wall time and
timestamp live only in the run summary.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__
from .constants import Bound, compute_K, compute_M_star, constants_report
from .disorder import fixed_disorder, sample_disorder, tail_from_dict
from .errors import ConfigError, DivergenceError, GlabError, VolumeCapError
from .green import g_star, g_star_alpha_sum, green_infinite
from .lattice import ScalarField, make_box
from .rng import derive_seed
from .sampler import dump_field, sample_annealed, sample_metadata, sample_quenched
from .spectral import green_entries, make_plan, solve_poisson_array
from .statistics import (
    _jsonable,
    default_shift,
    deviation_experiment,
    equilibrium_potential,
    high_point_count,
    max_mean_field,
    max_sweep,
    repulsion_probability,
    variance_scan,
    write_csv,
    write_jsonl,
)

log = logging.getLogger("glab")

KINDS = ("constants", "green", "variance-scan", "sample-field", "max-sweep", "deviation", "highpoints", "repulsion")

_INT = {"type": "integer"}
_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_NUM = {"type": "number"}
_TAIL = {
    "type": "object",
    "required": ["variant"],
    "properties": {
        "variant": {"enum": ["stretched_exp", "gaussian", "bounded"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 2},
        "c_alpha": {"type": "number", "exclusiveMinimum": 0},
        "sigma2": {"type": "number", "exclusiveMinimum": 0},
        "range": {"type": "number", "exclusiveMinimum": 0},
        "kind": {"enum": ["uniform", "rademacher"]},
    },
    "additionalProperties": False,
}
_COMMON = {
    "kind": {"enum": list(KINDS)},
    "seed": _NONNEG_INT,
    "jobs": _POS_INT,
    "output": {"type": "string"},
    "tail": {"oneOf": [_TAIL, {"type": "null"}]},
}


def _schema(required, **props):
    return {
        "type": "object",
        "required": list(required),
        "properties": {**_COMMON, **props},
        "additionalProperties": False,
    }


def _grid(item):
    return {"type": "array", "items": item, "minItems": 1}


SCHEMAS = {
    "constants": _schema(
        ["d", "tail"],
        d={"type": "integer", "minimum": 3},
        L_values=_grid(_NONNEG_INT),
        tol={"type": "number", "exclusiveMinimum": 0},
        alpha_tol={"type": "number", "exclusiveMinimum": 0},
        capacity_eps=_grid({"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}),
        capacity_walkers=_POS_INT,
    ),
    "green": _schema(
        ["d", "points"],
        d=_POS_INT,
        N={"oneOf": [_NONNEG_INT, {"type": "null"}]},
        points=_grid(_grid(_INT)),
        tol={"type": "number", "exclusiveMinimum": 0},
    ),
    "variance-scan": _schema(["d_grid", "N_grid"], d_grid=_grid(_POS_INT), N_grid=_grid(_NONNEG_INT), sigma2=_NUM),
    "sample-field": _schema(
        ["d", "N"], d=_POS_INT, N=_NONNEG_INT, mode={"enum": ["quenched", "annealed"]}, dump={"type": "string"}
    ),
    "max-sweep": _schema(["d", "N_grid", "samples"], d=_POS_INT, N_grid=_grid({"type": "integer", "minimum": 2}), samples=_POS_INT),
    "deviation": _schema(
        ["d", "L", "N_grid", "tail", "replicates"],
        d={"type": "integer", "minimum": 3},
        L=_NONNEG_INT,
        N_grid=_grid({"type": "integer", "minimum": 2}),
        b_grid=_grid({"type": "number", "exclusiveMinimum": 0}),
        Kb_grid=_grid({"type": "number", "exclusiveMinimum": 0}),
        K_L={"oneOf": [_NONNEG_INT, {"type": "null"}]},
        region={"enum": ["near", "far", "full"]},
        replicates=_POS_INT,
        x=_grid(_INT),
    ),
    "highpoints": _schema(
        ["d", "N", "tail", "realizations"],
        d={"type": "integer", "minimum": 3},
        N={"type": "integer", "minimum": 2},
        b_grid=_grid({"type": "number", "exclusiveMinimum": 0}),
        Kb_grid=_grid({"type": "number", "exclusiveMinimum": 0}),
        K_L={"oneOf": [_NONNEG_INT, {"type": "null"}]},
        realizations=_POS_INT,
    ),
    "repulsion": _schema(
        ["d", "N_grid", "eps"],
        d=_POS_INT,
        N_grid=_grid(_POS_INT),
        eps={"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        estimator={"enum": ["plain", "mean-shift"]},
        replicates=_POS_INT,
        shift={"enum": ["default", "equilibrium"]},
        shift_scale={"type": "number", "exclusiveMinimum": 0},
    ),
}


@dataclass
class RunRecord:
    kind: str
    config: dict
    config_hash: str
    version: str
    wall_time: float
    timestamp: str
    partial: bool
    payload: list

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return __version__


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return data


def validate(kind: str, config: dict) -> dict:
    if kind not in SCHEMAS:
        raise ConfigError(f"unknown experiment kind {kind!r}", field="kind")
    if config.get("kind", kind) != kind:
        raise ConfigError(f"config is for kind {config['kind']!r}, not {kind!r}", field="kind")
    errors = sorted(jsonschema.Draft7Validator(SCHEMAS[kind]).iter_errors(config), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.path) or (
            err.message.split("'")[1] if "'" in err.message else "<root>"
        )
        raise ConfigError(f"invalid config field '{where}': {err.message}", field=where)
    if kind in ("deviation", "highpoints") and ("b_grid" in config) == ("Kb_grid" in config):
        raise ConfigError("exactly one of 'b_grid' and 'Kb_grid' is required", field="b_grid")
    if kind in ("constants", "deviation", "highpoints") and not config.get("tail"):
        raise ConfigError(f"invalid config field 'tail': a disorder tail is required for {kind}", field="tail")
    if config.get("tail"):
        try:
            tail_from_dict(config["tail"])
        except (GlabError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config field 'tail': {exc}", field="tail") from exc
    cfg = dict(config)
    cfg["kind"] = kind
    cfg.setdefault("seed", 0)
    return cfg


def _tail(cfg):
    return tail_from_dict(cfg["tail"]) if cfg.get("tail") else None


def _K(d, tail, L):
    """K for tails with alpha in (1, 2] at finite L or L = infinity (None); c/G*^alpha otherwise."""
    gs = g_star(d)
    gsb = Bound(gs.value, gs.error_bound)
    if tail.alpha is not None and tail.alpha > 1:
        s = g_star_alpha_sum(d, tail.alpha, L)
        K = compute_K(d, tail, gsb, Bound(s.value, s.error))
    else:
        K = compute_K(d, tail, gsb)
    return None if K is None else K.value


# No convergence rate toward M* is known; this bracket is an engineering tolerance.
MAX_BRACKET = (0.6, 1.3)


def _M_star(d, tail):
    """M* for the normalised maximum, or None where it is undefined (d < 3, divergent sums)."""
    if d < 3:
        return None
    gs = g_star(d)
    gsb = Bound(gs.value, gs.error_bound)
    if tail is None or tail.alpha is None:
        return (2 * d * gs.value) ** 0.5
    try:
        ga = None
        if tail.alpha > 1:
            s = g_star_alpha_sum(d, tail.alpha, None)
            ga = Bound(s.value, s.error)
        return compute_M_star(d, tail, gsb, ga).value
    except DivergenceError:
        return None


def _b_grid(cfg, tail):
    if "b_grid" in cfg:
        return [float(b) for b in cfg["b_grid"]], None
    K = _K(cfg["d"], tail, cfg.get("K_L"))
    if K is None:
        raise ConfigError("invalid config field 'Kb_grid': K is undefined for bounded disorder; give b_grid", field="Kb_grid")
    return [kb / K for kb in cfg["Kb_grid"]], K


def run_constants(cfg, jobs):
    rep = constants_report(
        cfg["d"],
        _tail(cfg),
        L_values=cfg.get("L_values", ()),
        tol=cfg.get("tol", 1e-7),
        alpha_tol=cfg.get("alpha_tol", 1e-3),
        capacity_eps=cfg.get("capacity_eps", ()),
        capacity_walkers=cfg.get("capacity_walkers", 20000),
        seed=derive_seed(cfg["seed"], "capacity"),
    )
    return [rep.to_dict()], False


def run_green(cfg, jobs):
    d, N = cfg["d"], cfg.get("N")
    out = []
    for x in cfg["points"]:
        if len(x) != d:
            raise ConfigError(f"point {x} does not have {d} coordinates", field="points")
        if N is None:
            est = green_infinite(d, x, cfg.get("tol", 1e-7))
            out.append({"x": list(x), "N": None, "value": est.value, "error": est.error_bound, "radius": est.box_radius_used})
        else:
            make_box(d, N).check_site(x)
            val = float(green_entries(d, N, (0,) * d, [x])[0])
            out.append({"x": list(x), "N": N, "value": val, "error": 0.0})
    return out, False


def run_variance(cfg, jobs):
    rows = variance_scan(cfg["d_grid"], cfg["N_grid"], cfg.get("sigma2", 1.0))
    return [asdict(r) for r in rows], False


def run_sample_field(cfg, jobs):
    d, N, tail = cfg["d"], cfg["N"], _tail(cfg)
    plan = make_plan(make_box(d, N))
    dseed, fseed = derive_seed(cfg["seed"], "disorder"), derive_seed(cfg["seed"], "field")
    if cfg.get("mode", "quenched") == "annealed":
        if tail is None:
            raise ConfigError("annealed sampling needs a tail", field="tail")
        s = sample_annealed(plan, tail, (dseed, fseed))
    else:
        eta = sample_disorder(plan.geometry, tail, dseed) if tail else fixed_disorder(plan.geometry, np.zeros(plan.geometry.shape))
        s = sample_quenched(plan, eta, fseed)
    rec = {
        "d": d,
        "N": N,
        "mode": cfg.get("mode", "quenched"),
        **sample_metadata(s, tail),
        "max_phi": float(s.phi.values.max()),
        "min_phi": float(s.phi.values.min()),
        "max_mean": float(s.mean_part.values.max()),
        "phi_origin": s.phi[(0,) * d],
    }
    if cfg.get("dump"):
        path, sidecar = dump_field(cfg["dump"], s.phi, sample_metadata(s, tail))
        rec["dump"] = str(path)
    return [rec], False


def run_max_sweep(cfg, jobs):
    d, tail = cfg["d"], _tail(cfg)
    dseed, fseed = derive_seed(cfg["seed"], "disorder"), derive_seed(cfg["seed"], "field")
    M = _M_star(d, tail)
    out, partial = [], False
    for N in cfg["N_grid"]:
        try:
            plan = make_plan(make_box(d, N))
            eta = sample_disorder(plan.geometry, tail, dseed) if tail else fixed_disorder(plan.geometry, np.zeros(plan.geometry.shape))
            rec = max_sweep(plan, eta, derive_seed(fseed, N), cfg["samples"]).to_dict()
            rec["disorder_seed"] = dseed if tail else None
            rec["M_star"] = M
            rec["median_over_M_star"] = rec["summary"]["q50"] / M if M else None
            rec["bracket"] = list(MAX_BRACKET)
            rec["bracket_is_engineering_choice"] = True
            out.append(rec)
        except VolumeCapError:
            raise
        except GlabError as exc:
            partial = True
            out.append({"N": N, "error": str(exc)})
    return out, partial


def run_deviation(cfg, jobs):
    tail = _tail(cfg)
    b_grid, K = _b_grid(cfg, tail)
    if K is None and tail.alpha is not None:
        K = _K(cfg["d"], tail, cfg.get("K_L"))
    rec = deviation_experiment(
        cfg["d"],
        cfg["L"],
        cfg["N_grid"],
        b_grid,
        cfg.get("region", "near"),
        tail,
        cfg["replicates"],
        seed=derive_seed(cfg["seed"], "deviation"),
        x=cfg.get("x"),
        K=K,
        jobs=jobs,
    )
    return [rec.to_dict()], False


def run_highpoints(cfg, jobs):
    d, N, tail = cfg["d"], cfg["N"], _tail(cfg)
    b_grid, K = _b_grid(cfg, tail)
    if K is None and tail.alpha is not None:
        K = _K(d, tail, cfg.get("K_L"))
    plan = make_plan(make_box(d, N))
    counts = {b: [] for b in b_grid}
    maxima = []
    for i in range(cfg["realizations"]):
        eta = sample_disorder(plan.geometry, tail, derive_seed(cfg["seed"], "highpoints", i))
        m = ScalarField(plan.geometry, solve_poisson_array(plan, eta.values.values))
        maxima.append(max_mean_field(m))
        for b in b_grid:
            counts[b].append(high_point_count(m, tail, b, N))
    out = []
    for b in b_grid:
        out.append(
            {
                "d": d,
                "N": N,
                "b": b,
                "K": K,
                "mean_count": float(np.mean(counts[b])),
                "bound": float(N ** (d - K * b + 0.5)) if K is not None else None,
                "counts": counts[b],
                "max_mean_field": maxima,
            }
        )
    return out, False


def run_repulsion(cfg, jobs):
    d, eps, tail = cfg["d"], cfg["eps"], _tail(cfg)
    estimator = cfg.get("estimator", "plain")
    out, partial = [], False
    for N in cfg["N_grid"]:
        try:
            plan = make_plan(make_box(d, N))
            eta = sample_disorder(plan.geometry, tail, derive_seed(cfg["seed"], "disorder")) if tail else None
            shift = None
            if estimator == "mean-shift":
                build = equilibrium_potential if cfg.get("shift", "default") == "equilibrium" else default_shift
                shift = build(plan, eps, cfg.get("shift_scale", 1.0))
            rec = repulsion_probability(
                plan, eta, eps, estimator, cfg.get("replicates", 100_000), derive_seed(cfg["seed"], "repulsion", N), shift, jobs=jobs
            )
            out.append(rec.to_dict())
        except VolumeCapError:
            raise
        except GlabError as exc:
            partial = True
            out.append({"N": N, "error": str(exc)})
    return out, partial


RUNNERS = {
    "constants": run_constants,
    "green": run_green,
    "variance-scan": run_variance,
    "sample-field": run_sample_field,
    "max-sweep": run_max_sweep,
    "deviation": run_deviation,
    "highpoints": run_highpoints,
    "repulsion": run_repulsion,
}


def run(kind: str, config: dict, jobs: int | None = None) -> RunRecord:
    cfg = validate(kind, config)
    jobs = jobs or cfg.get("jobs", 1)
    t0 = time.perf_counter()
    payload, partial = RUNNERS[kind](cfg, jobs)
    return RunRecord(
        kind=kind,
        config=cfg,
        config_hash=config_hash(cfg),
        version=code_version(),
        wall_time=time.perf_counter() - t0,
        timestamp=datetime.now(timezone.utc).isoformat(),
        partial=partial,
        payload=_jsonable(payload),
    )


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not KEY=VALUE", field=text)
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glab", description="Disordered Gaussian free field experiments")
    parser.add_argument("--version", action="version", version=f"glab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="YAML or JSON config file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--jobs", type=int, help="worker threads for replicate loops")
        p.add_argument("--out", help="JSON-lines output path (default: stdout)")
        p.add_argument("--csv", action="store_true", help="also write a flat CSV next to --out")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
    v = sub.add_parser("verify", help="run a named acceptance suite")
    v.add_argument("--suite", required=True)
    v.add_argument("--out", help="write the pass/fail table as JSON")
    return parser


def _verify(args) -> int:
    from .verify import SUITES, run_suite, suite_passed

    if args.suite not in SUITES:
        print(f"glab: unknown suite {args.suite!r}; available: {', '.join(sorted(SUITES))}", file=sys.stderr)
        return 2
    results = run_suite(args.suite)
    for r in results:
        print(r.line())
    table = {"suite": args.suite, "passed": suite_passed(results), "results": [_jsonable(r.to_dict()) for r in results]}
    if args.out:
        Path(args.out).write_text(json.dumps(table, indent=2, sort_keys=True))
    return 0 if table["passed"] else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        return _verify(args)
    try:
        config = load_config(args.config)
        for item in args.set:
            key, value = _parse_override(item)
            config[key] = value
        if args.seed is not None:
            config["seed"] = args.seed
        if args.jobs is not None:
            config["jobs"] = args.jobs
        rec = run(args.command, config)
    except ConfigError as exc:
        print(f"glab: config error: {exc}", file=sys.stderr)
        return 2
    except VolumeCapError as exc:
        print(f"glab: resource cap: {exc}", file=sys.stderr)
        return 3
    except GlabError as exc:
        print(f"glab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 5
    out = args.out or rec.config.get("output")
    extra = {"config_hash": rec.config_hash, "kind": rec.kind}
    summary = rec.to_dict()
    if out:
        write_jsonl(rec.payload, out, extra)
        if args.csv:
            write_csv(_csv_rows(rec), Path(out).with_suffix(".csv"))
        summary.pop("payload")
        summary["output"] = str(out)
        print(json.dumps(summary, sort_keys=True))
    else:
        for row in rec.payload:
            print(json.dumps({**extra, **row}, sort_keys=True))
        summary.pop("payload")
        print(json.dumps(summary, sort_keys=True), file=sys.stderr)
    return 4 if rec.partial else 0


def _flatten(prefix: str, obj, out: dict):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, list) and obj and not isinstance(obj[0], (dict, list)) and len(obj) <= 8:
        for i, v in enumerate(obj):
            out[f"{prefix}.{i}"] = v
    elif isinstance(obj, list):
        pass  # long per-sample arrays stay in the JSON-lines output
    else:
        out[prefix] = obj


def _csv_rows(rec: RunRecord) -> list[dict]:
    rows = []
    for row in rec.payload:
        flat = {"config_hash": rec.config_hash, "kind": rec.kind}
        _flatten("", row, flat)
        rows.append(flat)
    return rows


if __name__ == "__main__":
    sys.exit(main())
