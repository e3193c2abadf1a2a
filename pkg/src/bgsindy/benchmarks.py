"""End-to-end discovery recipes for the benchmark problems.

A recipe bundles the preprocessing (optional smoothing passes), sampling
plan, library spec, and pruner settings that turn a benchmark dataset into
a discovered model. Recipes are plain dicts so CLI config files can override
any entry.
"""

from __future__ import annotations

import numpy as np

from .core import Dataset, DatasetError, add_noise, subsample
from .differentiation import sg_smooth
from .library import LibrarySpec, build_library, reduce_independent
from .metrics import coefficient_error, structure_match
from .pruner import PrunerConfig, discover
from .simulate import default_config, generate_benchmark, reference_model

AXIS_INDEX = {"x": 0, "y": 1, "t": -1}


def generate(benchmark: str, config=None) -> Dataset:
    return generate_benchmark(benchmark, config)


def discovery_recipe(benchmark: str, target_field: str = "u") -> dict:
    """Default discovery settings per benchmark.

    The KdV grid radiates marginally resolved dispersive waves whose
    frequencies alias at the output cadence, so its recipe smooths lightly in
    t and x before differentiating. Periodic benchmarks differentiate the raw
    spectra directly. The reaction-diffusion recipe samples after the Gibbs
    transient of the published non-periodic initial condition has decayed.
    """
    if benchmark == "kdv":
        return {
            "benchmark": benchmark,
            "target_field": "u",
            "library": {"kind": "poly-deriv-1d", "poly_degree": 2, "deriv_order": 4,
                        "fd_accuracy": 4, "time_accuracy": 4, "method": "auto"},
            "smooth": [{"axis": "t", "window": 31, "degree": 3},
                       {"axis": "x", "window": 7, "degree": 3}],
            "sample": {"strategy": "all", "n": None, "seed": 0, "time_window": None},
            "pruner": {"tau": 3.0, "epsilon_rel": 1e-6, "min_terms": 1,
                       "record_full_trace": True},
            "independence_tol": 1e-10,
        }
    if benchmark == "burgers-hyper":
        return {
            "benchmark": benchmark,
            "target_field": "u",
            "library": {"kind": "poly-deriv-1d", "poly_degree": 2, "deriv_order": 4,
                        "fd_accuracy": 4, "time_accuracy": 6, "method": "auto"},
            "smooth": [],
            "sample": {"strategy": "uniform-random", "n": 100_000, "seed": 0,
                       "time_window": None},
            "pruner": {"tau": 3.0, "epsilon_rel": 1e-6, "min_terms": 1,
                       "record_full_trace": True},
            "independence_tol": 1e-10,
        }
    if benchmark == "modified-ks":
        return {
            "benchmark": benchmark,
            "target_field": "u",
            "library": {"kind": "poly-deriv-1d", "poly_degree": 10, "deriv_order": 10,
                        "fd_accuracy": 4, "time_accuracy": 4, "method": "auto"},
            "smooth": [],
            "sample": {"strategy": "uniform-random", "n": 100_000, "seed": 0,
                       "time_window": None},
            "pruner": {"tau": 3.0, "epsilon_rel": 1e-6, "min_terms": 1,
                       "record_full_trace": True},
            "independence_tol": 1e-10,
        }
    if benchmark == "rd2d":
        return {
            "benchmark": benchmark,
            "target_field": target_field,
            "library": {"kind": "rd-2d", "poly_degree": 3, "deriv_order": 2,
                        "fd_accuracy": 4, "time_accuracy": 4, "method": "auto"},
            "smooth": [],
            "sample": {"strategy": "uniform-random", "n": 100_000, "seed": 0,
                       "time_window": [10, None]},
            "pruner": {"tau": 3.0, "epsilon_rel": 1e-6, "min_terms": 1,
                       "record_full_trace": True},
            "independence_tol": 1e-10,
        }
    raise DatasetError(f"unknown benchmark {benchmark!r}")


def apply_smoothing(dataset: Dataset, field: str, passes) -> Dataset:
    """Apply local-polynomial smoothing passes ({axis, window, degree}) to a field."""
    if not passes:
        return dataset
    values = dataset.fields[field]
    ndim = values.ndim
    for p in passes:
        ax = AXIS_INDEX[p["axis"]]
        ax = ndim - 1 if ax == -1 else ax
        values = sg_smooth(values, ax, p["window"], p["degree"])
    return dataset.with_field(field, values)


def build_reduced_library(dataset: Dataset, recipe: dict):
    """Smooth, sample, build, and reduce to independent columns."""
    target = recipe["target_field"]
    work = apply_smoothing(dataset, target, recipe.get("smooth", []))
    if recipe["library"]["kind"] == "rd-2d":
        for f in work.field_names():
            if f != target:
                work = apply_smoothing(work, f, recipe.get("smooth", []))

    plan = recipe["sample"]
    window = plan.get("time_window")
    if window is not None:
        lo = window[0] or 0
        hi = window[1] if window[1] is not None else dataset.time_axis.count
        window = (lo, hi)
    total = int(np.prod(work.shape[:-1])) * (
        (window[1] - window[0]) if window else work.shape[-1])
    n = plan["n"] if plan["n"] is not None else total
    if plan["strategy"] != "all":
        n = min(n, total)
    samples = subsample(work, n, plan["strategy"], plan.get("seed", 0), window)

    spec = LibrarySpec(**recipe["library"])
    lib = build_library(work, samples, spec, target)
    return reduce_independent(lib, recipe.get("independence_tol", 1e-10))


def run_discovery(dataset: Dataset, recipe: dict):
    """Smooth, sample, build, reduce, and prune. Returns (model, trace, library)."""
    lib = build_reduced_library(dataset, recipe)
    config = PrunerConfig(**recipe.get("pruner", {}))
    model, trace = discover(lib, config)
    return model, trace, lib


def sweep_cell(dataset: Dataset, recipe: dict, gamma: float, n: int,
               cell_seed: int) -> dict:
    """One noise-robustness cell: perturb, rediscover, score against truth."""
    noisy = add_noise(dataset, recipe["target_field"], gamma, cell_seed)
    r = {**recipe, "sample": {**recipe["sample"], "strategy": "uniform-random",
                              "n": n, "seed": cell_seed}}
    model, _, _ = run_discovery(noisy, r)
    ref = reference_model(recipe["benchmark"],
                          epsilon=dataset.metadata["config"]["epsilon"])
    ok, report = structure_match(model, ref)
    try:
        err = coefficient_error(model, ref)
    except DatasetError:
        err = float("nan")
    return {"gamma": gamma, "n": n, "seed": cell_seed, "structure_ok": bool(ok),
            "coefficient_error": err, "n_terms": len(model.terms)}


def sweep_recipe(benchmark: str = "kdv") -> dict:
    """Noise-sweep variant of the discovery recipe (heavier smoothing)."""
    r = discovery_recipe(benchmark)
    r["smooth"] = [{"axis": "t", "window": 51, "degree": 3},
                   {"axis": "x", "window": 9, "degree": 3}]
    r["library"] = {**r["library"], "time_accuracy": 2}
    return r


def cell_seed(base_seed: int, i_gamma: int, i_n: int, rep: int) -> int:
    ss = np.random.SeedSequence((base_seed, i_gamma, i_n, rep))
    return int(ss.generate_state(1)[0])


def run_sweep(dataset: Dataset, gammas, sample_counts, n_seeds: int = 3,
              base_seed: int = 0, recipe: dict | None = None,
              workers: int = 1) -> list[dict]:
    """Full noise/sample-count sweep; deterministic in base_seed regardless of
    worker count."""
    recipe = recipe or sweep_recipe("kdv")
    jobs = []
    for ig, g in enumerate(gammas):
        for i_n, n in enumerate(sample_counts):
            for rep in range(n_seeds):
                jobs.append((float(g), int(n), cell_seed(base_seed, ig, i_n, rep)))
    if workers > 1:
        import multiprocessing
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers, initializer=_init_pool,
                      initargs=(dataset, recipe)) as pool:
            results = pool.starmap(_pool_cell, jobs)
    else:
        results = [sweep_cell(dataset, recipe, *job) for job in jobs]
    return results


_POOL_STATE: dict = {}


def _init_pool(dataset, recipe):
    _POOL_STATE["dataset"] = dataset
    _POOL_STATE["recipe"] = recipe


def _pool_cell(gamma, n, seed):
    return sweep_cell(_POOL_STATE["dataset"], _POOL_STATE["recipe"], gamma, n, seed)
