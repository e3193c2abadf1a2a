"""Grid datasets, persistence, sampling, noise injection, and shared result types.

A Dataset is an immutable spatiotemporal grid (1 or 2 uniform space axes plus
time) carrying one or more real fields. Persistence uses a JSON header next to
a raw little-endian float64 binary so round-trips are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BOUNDARY_KINDS = ("periodic", "dirichlet-homogeneous")
SAMPLE_STRATEGIES = ("all", "uniform-random", "latin-hypercube")


class DatasetError(ValueError):
    """Malformed dataset construction or persistence."""


@dataclass(frozen=True)
class Axis:
    origin: float
    spacing: float
    count: int

    def __post_init__(self):
        if self.spacing <= 0:
            raise DatasetError(f"axis spacing must be positive, got {self.spacing}")
        if self.count < 4:
            raise DatasetError(f"axis count must be >= 4, got {self.count}")

    def points(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.count)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    space_axes: tuple[Axis, ...]
    time_axis: Axis
    fields: dict[str, np.ndarray]
    boundary: dict[str, str]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= len(self.space_axes) <= 2:
            raise DatasetError("expected 1 or 2 space axes")
        if not self.fields:
            raise DatasetError("dataset has no fields")
        shape = self.shape
        frozen = {}
        for name, arr in self.fields.items():
            arr = np.asarray(arr)
            if arr.shape != shape:
                raise DatasetError(
                    f"field '{name}' has shape {arr.shape}, axes imply {shape}")
            if not np.isfinite(arr).all():
                raise DatasetError(f"field '{name}' contains non-finite values")
            frozen[name] = _freeze(arr)
            kind = self.boundary.get(name)
            if kind not in BOUNDARY_KINDS:
                raise DatasetError(f"field '{name}' boundary kind {kind!r} invalid")
        object.__setattr__(self, "fields", frozen)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.count for a in self.space_axes) + (self.time_axis.count,)

    @property
    def total_points(self) -> int:
        return int(np.prod(self.shape))

    @property
    def ndim_space(self) -> int:
        return len(self.space_axes)

    def field_names(self) -> list[str]:
        return list(self.fields)

    def with_field(self, name: str, values: np.ndarray, metadata: dict | None = None) -> "Dataset":
        """Copy of the dataset with one field replaced."""
        fields = dict(self.fields)
        if name not in fields:
            raise DatasetError(f"unknown field '{name}'")
        fields[name] = values
        return Dataset(self.space_axes, self.time_axis, fields, dict(self.boundary),
                       dict(metadata if metadata is not None else self.metadata))


def save_dataset(dataset: Dataset, path) -> None:
    """Write `<path>.json` header and `<path>.bin` payload (row-major f64le)."""
    base = Path(path)
    if base.suffix in (".json", ".bin"):
        base = base.with_suffix("")
    names = dataset.field_names()
    header = {
        "dtype": "f64le",
        "order": "row-major",
        "axes": {
            "space": [vars(a) for a in dataset.space_axes],
            "time": vars(dataset.time_axis),
        },
        "fields": [
            {"name": n, "shape": list(dataset.shape),
             "offset_bytes": i * dataset.total_points * 8}
            for i, n in enumerate(names)
        ],
        "boundary": {n: dataset.boundary[n] for n in names},
        "metadata": dataset.metadata,
    }
    base.with_suffix(".json").write_text(json.dumps(header, indent=1, sort_keys=True))
    with open(base.with_suffix(".bin"), "wb") as fh:
        for n in names:
            fh.write(np.ascontiguousarray(dataset.fields[n], dtype="<f8").tobytes())


def load_dataset(path) -> Dataset:
    base = Path(path)
    if base.suffix in (".json", ".bin"):
        base = base.with_suffix("")
    try:
        header = json.loads(base.with_suffix(".json").read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed header: {exc}") from exc
    if header.get("dtype") != "f64le" or header.get("order") != "row-major":
        raise DatasetError("unsupported dtype/order in header")
    try:
        space = tuple(Axis(**a) for a in header["axes"]["space"])
        time = Axis(**header["axes"]["time"])
        field_specs = header["fields"]
        boundary = header["boundary"]
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"malformed header: missing {exc}") from exc
    payload = base.with_suffix(".bin").read_bytes()
    expected = sum(int(np.prod(f["shape"])) for f in field_specs) * 8
    if len(payload) != expected:
        raise DatasetError(
            f"payload size mismatch: {len(payload)} bytes, header implies {expected}")
    fields = {}
    for spec in field_specs:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape))
        off = spec["offset_bytes"]
        arr = np.frombuffer(payload[off:off + 8 * n], dtype="<f8").reshape(shape)
        if not np.isfinite(arr).all():
            raise DatasetError(f"field '{spec['name']}' contains non-finite values")
        fields[spec["name"]] = arr
    return Dataset(space, time, fields, boundary, header.get("metadata", {}))


@dataclass(frozen=True)
class SampleSet:
    """Flat spatiotemporal indices into a dataset's row-major grid."""
    indices: np.ndarray
    seed: int
    strategy: str
    shape: tuple[int, ...]

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        total = int(np.prod(self.shape))
        if idx.size == 0:
            raise DatasetError("empty sample set")
        if idx.min() < 0 or idx.max() >= total:
            raise DatasetError("sample index out of range")
        if np.unique(idx).size != idx.size:
            raise DatasetError("duplicate sample indices")
        idx.flags.writeable = False
        object.__setattr__(self, "indices", idx)

    @property
    def n(self) -> int:
        return int(self.indices.size)


def subsample(dataset: Dataset, n: int, strategy: str = "uniform-random",
              seed: int = 0, time_window: tuple[int, int] | None = None) -> SampleSet:
    """Draw n distinct grid points, deterministically in (inputs, seed).

    `time_window` restricts draws to output slices [lo, hi) along the time
    axis; the stored indices still address the full grid.
    """
    if strategy not in SAMPLE_STRATEGIES:
        raise DatasetError(f"unknown strategy {strategy!r}")
    shape = dataset.shape
    total = dataset.total_points
    lo, hi = (0, shape[-1]) if time_window is None else time_window
    if not (0 <= lo < hi <= shape[-1]):
        raise DatasetError(f"invalid time window {time_window}")
    window_total = int(np.prod(shape[:-1])) * (hi - lo)
    if not 1 <= n <= window_total:
        raise DatasetError(f"n={n} out of range (window holds {window_total} points)")
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    if strategy == "all":
        if n != window_total:
            raise DatasetError("strategy 'all' requires n == total point count")
        idx = np.arange(total, dtype=np.int64).reshape(shape)[..., lo:hi].ravel()
        return SampleSet(idx, seed, strategy, shape)

    if strategy == "uniform-random":
        flat_window = rng.choice(window_total, size=n, replace=False)
        idx = _window_to_full(flat_window, shape, lo, hi)
        return SampleSet(idx, seed, strategy, shape)

    # latin-hypercube: n strata per dimension, one point per stratum,
    # snapped to the containing grid cell; collisions resolved by the
    # nearest unused flat index (outward search).
    counts = list(shape[:-1]) + [hi - lo]
    dims = len(counts)
    coords = np.empty((n, dims), dtype=np.int64)
    for d in range(dims):
        perm = rng.permutation(n)
        jitter = rng.random(n)
        cont = (perm + jitter) / n          # in [0, 1)
        coords[:, d] = np.minimum((cont * counts[d]).astype(np.int64), counts[d] - 1)
    coords[:, -1] += lo
    flat = np.ravel_multi_index(tuple(coords.T), shape)
    used = set()
    out = np.empty(n, dtype=np.int64)
    for i, f in enumerate(flat):
        g = int(f)
        if g in used:
            step = 1
            while True:
                for cand in (g + step, g - step):
                    if 0 <= cand < total and cand not in used:
                        g = cand
                        break
                else:
                    step += 1
                    continue
                break
        used.add(g)
        out[i] = g
    return SampleSet(out, seed, strategy, shape)


def _window_to_full(flat_window, shape, lo, hi):
    nt = shape[-1]
    wt = hi - lo
    space = flat_window // wt
    t = flat_window % wt + lo
    return (space * nt + t).astype(np.int64)


def add_noise(dataset: Dataset, field_name: str, gamma: float, seed: int = 0) -> Dataset:
    """Gaussian noise scaled by gamma times the field's population std."""
    if gamma < 0:
        raise DatasetError("gamma must be >= 0")
    if field_name not in dataset.fields:
        raise DatasetError(f"unknown field '{field_name}'")
    if gamma == 0:
        return dataset
    u = dataset.fields[field_name]
    sigma = float(u.std())  # population (1/N) convention
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    noisy = u + gamma * sigma * rng.standard_normal(u.shape)
    meta = dict(dataset.metadata)
    meta["noise"] = {"field": field_name, "gamma": gamma, "seed": seed,
                     "std": sigma, "std_convention": "population"}
    return dataset.with_field(field_name, noisy, meta)


@dataclass(frozen=True)
class DiscoveredModel:
    """Sparse model: active terms with fitted coefficients for one target field."""
    terms: tuple
    coefficients: np.ndarray
    target_field: str
    residual: float

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=np.float64)
        if len(self.terms) != coef.size:
            raise DatasetError("terms and coefficients must have equal length")
        if len(set(self.terms)) != len(self.terms):
            raise DatasetError("duplicate terms in model")
        if self.residual < 0:
            raise DatasetError("residual must be >= 0")
        coef.flags.writeable = False
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "coefficients", coef)

    @property
    def empty(self) -> bool:
        return len(self.terms) == 0

    def coefficient_of(self, term) -> float:
        return float(self.coefficients[self.terms.index(term)])

    def equation_string(self) -> str:
        if self.empty:
            return f"{self.target_field}_t = 0"
        parts = [f"{c:+.6g} {t.name}" for t, c in zip(self.terms, self.coefficients)]
        return f"{self.target_field}_t = " + " ".join(parts)

    def to_json_dict(self) -> dict:
        return {
            "target_field": self.target_field,
            "residual": self.residual,
            "empty": self.empty,
            "terms": [
                {**t.to_json_dict(), "coefficient": float(c)}
                for t, c in zip(self.terms, self.coefficients)
            ],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "DiscoveredModel":
        from .library import TermDescriptor
        terms = tuple(TermDescriptor.from_json_dict(t) for t in d["terms"])
        coefs = np.array([t["coefficient"] for t in d["terms"]], dtype=float)
        return DiscoveredModel(terms, coefs, d["target_field"], d["residual"])


@dataclass(frozen=True)
class PruneIteration:
    active: tuple[int, ...]
    coefficients: np.ndarray
    importances: np.ndarray     # global importance per active term
    removed: int | None         # library term index removed after this iteration
    residual: float


@dataclass(frozen=True)
class PruneTrace:
    """Per-iteration pruning record; iteration k has M - k active terms."""
    iterations: tuple[PruneIteration, ...]
    selected_iteration: int
    term_names: tuple[str, ...]

    def __post_init__(self):
        sizes = [len(it.active) for it in self.iterations]
        for a, b in zip(sizes, sizes[1:]):
            if b != a - 1:
                raise DatasetError("active-set size must decrease by exactly 1")
        if not 0 <= self.selected_iteration < len(self.iterations):
            raise DatasetError("selected iteration out of range")

    @property
    def residuals(self) -> np.ndarray:
        return np.array([it.residual for it in self.iterations])

    def to_json_dict(self) -> dict:
        return {
            "selected_iteration": self.selected_iteration,
            "term_names": list(self.term_names),
            "iterations": [
                {
                    "active": list(it.active),
                    "coefficients": [float(c) for c in it.coefficients],
                    "importances": [float(w) for w in it.importances],
                    "removed": it.removed,
                    "removed_name": None if it.removed is None else self.term_names[it.removed],
                    "residual": it.residual,
                }
                for it in self.iterations
            ],
        }

    def to_csv(self, path) -> None:
        """One row per iteration: residual history plus the global importance
        of every still-active term (blank once pruned), heatmap-ready."""
        header = ["iteration", "active_size", "residual", "removed_term",
                  "selected"] + [f"W[{n}]" for n in self.term_names]
        lines = [",".join(header)]
        for k, it in enumerate(self.iterations):
            name = "" if it.removed is None else self.term_names[it.removed]
            sel = 1 if k == self.selected_iteration else 0
            w = {j: f"{v!r}" for j, v in zip(it.active, it.importances)}
            cells = [w.get(j, "") for j in range(len(self.term_names))]
            lines.append(",".join([str(k), str(len(it.active)), repr(it.residual),
                                   name, str(sel)] + cells))
        Path(path).write_text("\n".join(lines) + "\n")
