"""Command-line entry point: ``rehearsal generate | decide | evaluate``.

Configuration files are flat TOML documents with dotted keys::

    estimator.lambda_h = 0.02
    estimator.lambda_x = 0.03
    estimator.eta = "adaptive"          # or a number
    estimator.standardize = false
    estimator.bandwidth_scale.a = 0.5   # multiplies the median heuristic
    estimator.sigma_x = 1.2             # fixes a bandwidth outright
    optimizer.K = 20
    optimizer.nu = 0.2
    optimizer.T = 200
    optimizer.grad_tol = 1e-7
    evaluation.seeds = [0, 1, 2, 3, 4]
    evaluation.contexts_per_seed = 10
    evaluation.mc_trials = 100
    evaluation.n = 1000

``--set key=value`` (repeatable) overrides file values; values are parsed as
TOML scalars, falling back to plain strings.

Exit codes: 0 success, 2 validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from . import rng
from .benchmarks import BENCHMARKS, DEFAULT_NOISE, NOISE_MODES, get_benchmark
from .dataset import DatasetError, load_csv
from .estimator import EstimatorConfig, EstimatorError, fit, fit_conditional
from .evaluator import (
    TABLE_BENCHMARKS,
    ablation_fig5,
    consistency_curve,
    default_estimator_config,
    gap_reference_probability,
    quadrature_reference_probability,
    reproduce_table,
    run_episode,
    surrogate_gap_curve,
)
from .kernels import Bandwidths, IllConditionedError
from .optimizer import ActionBox, OptimizerConfig, optimize
from .region import RegionError, region_from_dict, region_to_json

log = logging.getLogger("rehearsal")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3


class ValidationError(Exception):
    pass


# -- config ---------------------------------------------------------------------


def _flatten(doc: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def _parse_scalar(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def load_config(path: Optional[str], overrides: list[str]) -> dict:
    flat = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ValidationError(f"config file {path} does not exist")
        try:
            flat = _flatten(tomli.loads(p.read_text(encoding="utf-8")))
        except tomli.TOMLDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        flat[k.strip()] = _parse_scalar(v.strip())
    known = ("estimator.", "optimizer.", "evaluation.")
    unknown = sorted(k for k in flat if not k.startswith(known))
    if unknown:
        raise ValidationError(f"unknown config keys: {unknown}")
    return flat


def estimator_config(flat: dict, base: Optional[EstimatorConfig] = None) -> EstimatorConfig:
    base = base or EstimatorConfig()
    doc = base.to_dict()
    scale = dict(doc["bandwidth_scale"])
    sigmas = {}
    for k, v in flat.items():
        if not k.startswith("estimator."):
            continue
        key = k[len("estimator."):]
        if key.startswith("bandwidth_scale."):
            scale[key.split(".", 1)[1]] = float(v)
        elif key in ("sigma_x", "sigma_u", "sigma_a"):
            sigmas[key] = float(v)
        elif key in ("lambda_h", "lambda_x"):
            doc[key] = float(v)
        elif key == "eta":
            doc[key] = v if v == "adaptive" else float(v)
        elif key == "standardize":
            doc[key] = bool(v)
        else:
            raise ValidationError(f"unknown estimator key {k!r}")
    doc["bandwidth_scale"] = scale
    if sigmas:
        if "sigma_x" not in sigmas or "sigma_a" not in sigmas:
            raise ValidationError("fixed bandwidths need at least estimator.sigma_x and estimator.sigma_a")
        doc["bandwidths"] = sigmas
    try:
        return EstimatorConfig.from_dict(doc)
    except (ValueError, TypeError) as exc:
        raise ValidationError(str(exc)) from exc


def optimizer_config(flat: dict) -> OptimizerConfig:
    kw = {}
    casts = {"K": int, "nu": float, "T": int, "grad_tol": float, "seed": int}
    for k, v in flat.items():
        if not k.startswith("optimizer."):
            continue
        key = k[len("optimizer."):]
        if key not in casts:
            raise ValidationError(f"unknown optimizer key {k!r}")
        kw[key] = casts[key](v)
    try:
        return OptimizerConfig(**kw)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def evaluation_config(flat: dict) -> dict:
    out = {"seeds": [0, 1, 2, 3, 4], "contexts_per_seed": 10, "mc_trials": 100, "n": 1000}
    for k, v in flat.items():
        if not k.startswith("evaluation."):
            continue
        key = k[len("evaluation."):]
        if key == "seeds":
            out["seeds"] = [int(s) for s in (v if isinstance(v, list) else str(v).split(","))]
        elif key in ("contexts_per_seed", "mc_trials", "n"):
            out[key] = int(v)
        else:
            raise ValidationError(f"unknown evaluation key {k!r}")
    if not out["seeds"] or out["contexts_per_seed"] < 1 or out["mc_trials"] < 1 or out["n"] < 2:
        raise ValidationError(f"invalid evaluation config {out}")
    return out


# -- output helpers -------------------------------------------------------------


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _resolve_bench(name: str, noise: Optional[str]):
    try:
        return get_benchmark(name, noise)
    except KeyError as exc:
        raise ValidationError(exc.args[0]) from None


def _ensure_writable_dir(path: Path) -> None:
    parent = Path(path).resolve().parent
    probe = parent
    while not probe.exists():
        probe = probe.parent
    if not probe.is_dir() or not os.access(probe, os.W_OK):
        raise ValidationError(f"cannot write to {parent}")


# -- commands -----------------------------------------------------------------


def manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


def cmd_generate(args) -> int:
    oracle = _resolve_bench(args.bench, args.noise)
    if args.n < 1:
        raise ValidationError("--n must be at least 1")
    out = Path(args.out)
    _ensure_writable_dir(out)
    data = oracle.generate_observational(args.n, rng.derive_seed(args.seed, rng.DATASET))
    manifest = {
        "benchmark": oracle.id,
        "seed": args.seed,
        "n": args.n,
        "noise": oracle.noise,
        "region": json.loads(region_to_json(oracle.region)),
        "box": oracle.box.to_dict(),
        "columns": data.schema.header(),
    }
    writes = [(out, data.to_csv()), (manifest_path(out), _dumps(manifest))]
    if args.context_out:
        x = oracle.sample_context(rng.derive_seed(args.seed, rng.CONTEXT, 0))
        writes.append((Path(args.context_out), _dumps({"x": [float(v) for v in x]})))
    for path, text in writes:
        write_atomic(path, text)
    return EXIT_OK


def _read_json(path: str, what: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{what} file {path} does not exist")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} file {path}: invalid JSON ({exc})") from exc


def _read_context(path: str, d_x: int) -> np.ndarray:
    doc = _read_json(path, "context")
    vals = doc.get("x") if isinstance(doc, dict) else doc
    try:
        x = np.asarray(vals, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ValidationError(f"context file {path} must hold a list of numbers") from None
    if x.shape != (d_x,):
        raise ValidationError(f"context has dimension {x.size}, dataset expects {d_x}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("context values must be finite")
    return x


def cmd_decide(args) -> int:
    flat = load_config(args.config, args.set or [])
    data = load_csv(args.data)
    region_doc = _read_json(args.region, "region")
    region, eta_file = region_from_dict(region_doc.get("region", region_doc))
    if region.d_y != data.blocks().Y.shape[1]:
        raise ValidationError(
            f"region has d_y={region.d_y} but the dataset has {data.blocks().Y.shape[1]} outcome columns"
        )
    box_doc = region_doc.get("box")
    if args.box_lower is not None or args.box_upper is not None:
        if args.box_lower is None or args.box_upper is None:
            raise ValidationError("--box-lower and --box-upper go together")
        box_doc = {"lower": args.box_lower, "upper": args.box_upper}
    if box_doc is None:
        raise ValidationError("no action box: pass --box-lower/--box-upper or a manifest with a box")
    try:
        box = ActionBox(box_doc["lower"], box_doc["upper"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"bad action box: {exc}") from exc
    d_a = data.blocks().A.shape[1]
    if box.dim != d_a:
        raise ValidationError(f"action box has dimension {box.dim}, dataset has {d_a} actionable columns")
    x = _read_context(args.context, data.blocks().X.shape[1])

    base = default_estimator_config(region_doc["benchmark"]) if "benchmark" in region_doc else None
    est_cfg = estimator_config(flat, base)
    if eta_file is not None and "estimator.eta" not in flat:
        est_cfg = EstimatorConfig.from_dict({**est_cfg.to_dict(), "eta": eta_file})
    opt_cfg = optimizer_config(flat)
    out = Path(args.out)
    _ensure_writable_dir(out)

    fitter = fit_conditional if args.method == "conditional" else fit
    est = fitter(data, region, est_cfg)
    w = est.context_weights(x)
    result = optimize(est, w, box, opt_cfg)
    record = {
        "method": args.method,
        "context": [float(v) for v in x],
        "eta": est.eta,
        "lambda_h": est.lambda_h,
        "lambda_x": est.lambda_x,
        "bandwidths": est.bandwidths.to_dict(),
        "n_train": est.n,
        "optimizer": opt_cfg.to_dict(),
        **result.to_dict(),
    }
    write_atomic(out, _dumps(record))
    if args.save_model:
        buf = Path(args.save_model)
        _ensure_writable_dir(buf)
        fd, tmp = tempfile.mkstemp(dir=buf.resolve().parent, suffix=".npz.tmp")
        os.close(fd)
        est.save(tmp)
        os.replace(tmp, buf)
    return EXIT_OK


def _episode_lines(episodes) -> str:
    return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in episodes)


def _aggregate_csv(rows) -> str:
    return _csv_text(
        ["benchmark", "method", "mean", "std", "context_std", "seeds", "episodes"],
        [[r.benchmark, r.method, r.mean, r.std, r.context_std, r.seeds, r.episodes] for r in rows],
    )


def cmd_evaluate(args) -> int:
    flat = load_config(args.config, args.set or [])
    ev = evaluation_config(flat)
    opt_cfg = optimizer_config(flat)
    out = Path(args.out)
    _ensure_writable_dir(out / "x")
    est_overrides = {k: v for k, v in flat.items() if k.startswith("estimator.")}
    if args.noise is not None and args.noise not in NOISE_MODES:
        raise ValidationError(f"--noise must be one of {NOISE_MODES}")

    if args.check == "thm1":
        curve = surrogate_gap_curve([5, 10, 20, 50, 100])
        text = _csv_text(["eta", "gap"], [[float(e), float(g)] for e, g in curve])
        write_atomic(out / "thm1_gap_curve.csv", text)
        write_atomic(out / "thm1_reference.json", _dumps({
            "closed_form": gap_reference_probability(),
            "quadrature": quadrature_reference_probability(),
        }))
        return EXIT_OK
    if args.check == "thm2":
        curve = consistency_curve(ns=(100, 400, 1600), probes=20, seed=ev["seeds"][0])
        write_atomic(out / "thm2_consistency.csv",
                     _csv_text(["n", "median_abs_error"], [[n, e] for n, e in curve]))
        return EXIT_OK

    def cfg_for(bench_id):
        return estimator_config(est_overrides, default_estimator_config(bench_id))

    if args.check == "fig5":
        rows, episodes = ablation_fig5(len(ev["seeds"]), ev["contexts_per_seed"], ev["mc_trials"],
                                       ev["n"], cfg_for("bank_exp"), opt_cfg)
        write_atomic(out / "fig5_episodes.jsonl", _episode_lines(episodes))
        write_atomic(out / "fig5_aggregate.csv", _aggregate_csv(rows))
        return EXIT_OK

    if args.reproduce == "table1":
        benches = TABLE_BENCHMARKS
        methods = ("none", "nested")
    else:
        if not args.bench:
            raise ValidationError("evaluate needs --reproduce table1, --check, or --bench")
        benches = [_resolve_bench(b, args.noise).id for b in args.bench]
        methods = tuple(args.method or ["none", "nested"])
    configs = {b: cfg_for(b) for b in benches}
    rows, episodes = reproduce_table(benches, methods, ev["seeds"], ev["contexts_per_seed"],
                                     ev["mc_trials"], ev["n"], opt_cfg, configs, args.noise)
    write_atomic(out / "episodes.jsonl", _episode_lines(episodes))
    write_atomic(out / "aggregate.csv", _aggregate_csv(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rehearsal", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    bench_ids = ", ".join(b.replace("_", "-") for b in sorted(BENCHMARKS))

    g = sub.add_parser("generate", help="sample an observational dataset from a benchmark")
    g.add_argument("--bench", required=True, help=f"one of: {bench_ids}")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--noise", choices=NOISE_MODES, default=None,
                   help=f"Gaussian noise reading (default per benchmark: {DEFAULT_NOISE})")
    g.add_argument("--context-out", help="also write one sampled context as JSON")
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("decide", help="fit on a dataset and choose an action for a context")
    d.add_argument("--data", required=True)
    d.add_argument("--region", required=True, help="region JSON, or a generate manifest")
    d.add_argument("--context", required=True, help='JSON: {"x": [...]} or a bare list')
    d.add_argument("--config")
    d.add_argument("--set", action="append", metavar="KEY=VALUE")
    d.add_argument("--box-lower", type=float, nargs="+")
    d.add_argument("--box-upper", type=float, nargs="+")
    d.add_argument("--method", choices=("nested", "conditional"), default="nested")
    d.add_argument("--out", required=True)
    d.add_argument("--save-model")
    d.set_defaults(func=cmd_decide)

    e = sub.add_parser("evaluate", help="Monte Carlo evaluation against benchmark oracles")
    mode = e.add_mutually_exclusive_group()
    mode.add_argument("--reproduce", choices=("table1",))
    mode.add_argument("--check", choices=("thm1", "thm2", "fig5"))
    e.add_argument("--bench", action="append", help="benchmark id (repeatable)")
    e.add_argument("--method", action="append", choices=("none", "nested", "conditional"))
    e.add_argument("--noise", choices=NOISE_MODES, default=None)
    e.add_argument("--config")
    e.add_argument("--set", action="append", metavar="KEY=VALUE")
    e.add_argument("--out", default="results")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, DatasetError, RegionError, EstimatorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IllConditionedError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
