"""Batch driver: generate benchmarks, discover models, run baselines,
validate against references, and sweep noise robustness.

Exit codes: 0 success, 2 structure-recovery failure in validate,
3 numerical abort, 4 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import stlsq, train_stridge
from .benchmarks import discovery_recipe, run_discovery, run_sweep, sweep_recipe
from .core import DatasetError, DiscoveredModel, load_dataset, save_dataset
from .metrics import coefficient_error, relative_l2, structure_match
from .simulate import (BenchmarkConfig, SolverInstability, default_config,
                       generate_benchmark, integrate_model, reference_model)

EXIT_OK = 0
EXIT_STRUCTURE = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_manifest(outdir: Path, command: str, config: dict):
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "config_sha256": hashlib.sha256(_canonical(config).encode()).hexdigest(),
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def _dump_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=1, sort_keys=True))


def cmd_generate(args) -> int:
    if args.config:
        config = BenchmarkConfig.from_json_dict(_read_json(args.config))
    else:
        config = default_config(args.benchmark, args.resolution)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    dataset = generate_benchmark(args.benchmark, config)
    save_dataset(dataset, outdir / args.benchmark)
    _write_manifest(outdir, "generate", config.to_json_dict())
    print(f"wrote {outdir / args.benchmark}.json/.bin "
          f"shape={dataset.shape}", file=sys.stdout)
    return EXIT_OK


def _load_recipe(args) -> dict:
    recipe = discovery_recipe(args.benchmark, args.target) if args.benchmark else None
    if args.library_spec:
        overrides = _read_json(args.library_spec)
        if recipe is None:
            if "benchmark" not in overrides:
                raise CliError("library spec without --benchmark must name one")
            recipe = discovery_recipe(overrides["benchmark"], args.target)
        for key, val in overrides.items():
            if isinstance(val, dict) and isinstance(recipe.get(key), dict):
                recipe[key] = {**recipe[key], **val}
            else:
                recipe[key] = val
    if recipe is None:
        raise CliError("discover needs --benchmark and/or --library-spec")
    if args.tau is not None:
        recipe["pruner"] = {**recipe["pruner"], "tau": args.tau}
    if args.target:
        recipe["target_field"] = args.target
    return recipe


def cmd_discover(args) -> int:
    recipe = _load_recipe(args)
    dataset = load_dataset(args.data)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    model, trace, lib = run_discovery(dataset, recipe)
    _dump_json(outdir / "model.json", model.to_json_dict())
    _dump_json(outdir / "trace.json", trace.to_json_dict())
    trace.to_csv(outdir / "trace.csv")
    _write_manifest(outdir, "discover", recipe)
    if len(model.terms) == lib.n_terms:
        print("warning: selection kept the full library (no pruning achieved); "
              "tau may be too close to 1", file=sys.stderr)
    print(model.equation_string())
    return EXIT_OK


def cmd_baseline(args) -> int:
    recipe = _load_recipe(args)
    params = _read_json(args.params) if args.params else {}
    dataset = load_dataset(args.data)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    from .benchmarks import build_reduced_library
    lib = build_reduced_library(dataset, recipe)
    if args.method == "stlsq":
        model = stlsq(lib, params.get("threshold", 0.1),
                      params.get("max_iter", 25))
    else:
        model = train_stridge(lib, params.get("lam", 1e-5),
                              params.get("split", 0.8),
                              params.get("search_iters", 10),
                              params.get("inner_iters", 10),
                              params.get("seed", 0),
                              params.get("l0_penalty"))
    _dump_json(outdir / "model.json", model.to_json_dict())
    _write_manifest(outdir, f"baseline-{args.method}", {**recipe, "params": params})
    if model.empty:
        print("warning: all coefficients thresholded away (empty model)",
              file=sys.stderr)
    print(model.equation_string())
    return EXIT_OK


def cmd_validate(args) -> int:
    model = DiscoveredModel.from_json_dict(_read_json(args.model))
    reference = load_dataset(args.reference)
    meta = reference.metadata
    benchmark = meta.get("benchmark")
    if benchmark is None:
        raise CliError("reference dataset has no benchmark provenance")
    eps = meta["config"]["epsilon"]
    ref_model = reference_model(benchmark, model.target_field, epsilon=eps)
    ok, report = structure_match(model, ref_model)
    try:
        coeff = coefficient_error(model, ref_model)
    except DatasetError:
        coeff = None
    out = {"benchmark": benchmark, "structure": report,
           "coefficient_error": coeff}
    if not args.no_integrate:
        models = [model]
        if benchmark == "rd2d":
            other = "v" if model.target_field == "u" else "u"
            models.append(reference_model(benchmark, other, epsilon=eps))
        dt = meta["config"]["dt"] if benchmark == "kdv" else None
        predicted = integrate_model(models, reference, dt=dt)
        out["relative_l2"] = {
            model.target_field: relative_l2(predicted, reference, model.target_field)}
    if args.out:
        _dump_json(Path(args.out), out)
    print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK if ok else EXIT_STRUCTURE


def _parse_noise(spec: str):
    try:
        lo, hi, count = spec.split(":")
        return np.linspace(float(lo), float(hi), int(count))
    except ValueError as exc:
        raise CliError(f"bad --noise spec {spec!r} (want lo:hi:count)") from exc


def cmd_sweep(args) -> int:
    dataset = load_dataset(args.data)
    gammas = _parse_noise(args.noise)
    ns = [int(s) for s in args.samples.split(",")]
    workers = int(os.environ.get("BGSINDY_THREADS", "1"))
    recipe = sweep_recipe(dataset.metadata.get("benchmark", "kdv"))
    results = run_sweep(dataset, gammas, ns, args.seeds, args.seed, recipe,
                        workers=max(1, workers))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _dump_json(outdir / "sweep.json", results)
    lines = ["gamma," + ",".join(f"n={n}" for n in ns)]
    for g in gammas:
        row = [f"{g:g}"]
        for n in ns:
            cells = [r for r in results if r["gamma"] == g and r["n"] == n]
            oks = [c for c in cells if c["structure_ok"]]
            errs = [c["coefficient_error"] for c in cells
                    if np.isfinite(c["coefficient_error"])]
            mean = float(np.mean(errs)) if errs else float("nan")
            tag = f"{mean:.6g}" if oks else f"FAIL({mean:.3g})"
            row.append(tag)
        lines.append(",".join(row))
    (outdir / "sweep.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(outdir, "sweep", {"noise": args.noise, "samples": args.samples,
                                      "seeds": args.seeds, "seed": args.seed})
    print("\n".join(lines))
    return EXIT_OK


def cmd_report(args) -> int:
    rundir = Path(args.run)
    out = {}
    model_path = rundir / "model.json"
    if model_path.exists():
        model = DiscoveredModel.from_json_dict(_read_json(model_path))
        out["equation"] = model.equation_string()
        out["n_terms"] = len(model.terms)
        out["residual"] = model.residual
    trace_path = rundir / "trace.json"
    if trace_path.exists():
        trace = _read_json(trace_path)
        out["residual_history"] = [it["residual"] for it in trace["iterations"]]
        out["selected_iteration"] = trace["selected_iteration"]
        out["removed_terms"] = [it["removed_name"] for it in trace["iterations"]
                                if it["removed_name"]]
    if not out:
        raise CliError(f"no artifacts found under {rundir}")
    _dump_json(rundir / "report.json", out)
    if "residual_history" in out:
        lines = ["iteration,residual"] + [
            f"{k},{r!r}" for k, r in enumerate(out["residual_history"])]
        (rundir / "report.csv").write_text("\n".join(lines) + "\n")
    print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="bgsindy", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a benchmark dataset")
    g.add_argument("benchmark", choices=["kdv", "burgers-hyper", "modified-ks", "rd2d"])
    g.add_argument("--config", help="BenchmarkConfig JSON overriding defaults")
    g.add_argument("--resolution", choices=["half", "full"], default="half")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("discover", help="run balance-guided discovery")
    d.add_argument("--data", required=True)
    d.add_argument("--benchmark")
    d.add_argument("--library-spec")
    d.add_argument("--target", default="u")
    d.add_argument("--tau", type=float, default=None)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_discover)

    b = sub.add_parser("baseline", help="run a thresholding baseline")
    b.add_argument("--method", choices=["stlsq", "stridge"], required=True)
    b.add_argument("--data", required=True)
    b.add_argument("--benchmark")
    b.add_argument("--library-spec")
    b.add_argument("--target", default="u")
    b.add_argument("--tau", type=float, default=None)
    b.add_argument("--params", help="JSON with method parameters")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline)

    v = sub.add_parser("validate", help="compare a model against its reference")
    v.add_argument("--model", required=True)
    v.add_argument("--reference", required=True)
    v.add_argument("--out")
    v.add_argument("--no-integrate", action="store_true")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("sweep", help="noise/sample-count robustness sweep")
    s.add_argument("--data", required=True)
    s.add_argument("--noise", default="0:0.25:6")
    s.add_argument("--samples", default="1000,10000,100000")
    s.add_argument("--seeds", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="consolidate run artifacts")
    r.add_argument("--run", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverInstability as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
