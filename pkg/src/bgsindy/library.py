"""Candidate-term construction and the evaluated regression library.

Terms are monomials in the state fields optionally multiplied by a single
derivative factor. The evaluated library is an N x M matrix over sample
points together with the time-derivative target.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from .core import Dataset, DatasetError, SampleSet
from .differentiation import fd_diff, spectral_diff, time_derivative

AXIS_LETTERS = ("x", "y")


@dataclass(frozen=True, order=False)
class TermDescriptor:
    """Monomial exponents per field with at most one derivative factor."""
    powers: tuple[tuple[str, int], ...] = ()
    deriv: tuple[str, tuple[int, ...]] | None = None

    def __post_init__(self):
        powers = tuple(sorted((f, int(p)) for f, p in self.powers if p != 0))
        if any(p < 0 for _, p in powers):
            raise DatasetError("negative monomial exponent")
        if self.deriv is not None:
            f, orders = self.deriv
            orders = tuple(int(o) for o in orders)
            if any(o < 0 for o in orders) or sum(orders) < 1:
                raise DatasetError("derivative factor must have total order >= 1")
            object.__setattr__(self, "deriv", (f, orders))
        object.__setattr__(self, "powers", powers)

    def canonical_key(self) -> tuple:
        if self.deriv is None:
            dkey = (0, "", 0, ())
        else:
            f, orders = self.deriv
            dkey = (1, f, sum(orders), tuple(-o for o in orders))
        pkey = (sum(p for _, p in self.powers),
                tuple((f, -p) for f, p in self.powers))
        return dkey + pkey

    def __lt__(self, other: "TermDescriptor") -> bool:
        return self.canonical_key() < other.canonical_key()

    @property
    def name(self) -> str:
        return render_term(self)

    def evaluate(self, field_values: dict, deriv_values: dict) -> np.ndarray:
        """Pointwise term value from per-field arrays and derivative arrays."""
        out = None
        for f, p in self.powers:
            v = field_values[f] ** p
            out = v if out is None else out * v
        if self.deriv is not None:
            d = deriv_values[self.deriv]
            out = d if out is None else out * d
        if out is None:
            base = next(iter(field_values.values()))
            out = np.ones_like(base)
        return out

    def to_json_dict(self) -> dict:
        d = {"powers": {f: p for f, p in self.powers}}
        if self.deriv is not None:
            d["deriv"] = {"field": self.deriv[0], "orders": list(self.deriv[1])}
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "TermDescriptor":
        powers = tuple(d.get("powers", {}).items())
        deriv = None
        if d.get("deriv"):
            deriv = (d["deriv"]["field"], tuple(d["deriv"]["orders"]))
        return TermDescriptor(powers, deriv)


def render_term(term: TermDescriptor) -> str:
    """Canonical display form, e.g. "u u_x", "u^2 u_{xxx}", "v_yy", "1"."""
    parts = []
    for f, p in term.powers:
        parts.append(f if p == 1 else f"{f}^{p}")
    if term.deriv is not None:
        f, orders = term.deriv
        letters = "".join(AXIS_LETTERS[i] * o for i, o in enumerate(orders))
        sub = letters if len(letters) < 3 else "{" + letters + "}"
        parts.append(f"{f}_{sub}")
    return " ".join(parts) if parts else "1"


@dataclass(frozen=True)
class LibrarySpec:
    """Library construction rules.

    kind 'poly-deriv-1d': powers of the target field up to poly_degree times
    derivatives up to deriv_order, (P+1)(Q+1) terms with the constant first.
    kind 'rd-2d': all two-field monomials up to total degree 3 plus the ten
    first and second space derivatives of both fields.
    """
    kind: str = "poly-deriv-1d"
    poly_degree: int = 2
    deriv_order: int = 4
    method: str = "auto"          # 'auto' | 'finite-difference' | 'spectral'
    fd_accuracy: int = 4
    time_accuracy: int = 2

    def __post_init__(self):
        if self.kind not in ("poly-deriv-1d", "rd-2d"):
            raise DatasetError(f"unknown library kind {self.kind!r}")
        if self.poly_degree < 0 or self.deriv_order < 0:
            raise DatasetError("library bounds must be non-negative")


@dataclass(frozen=True)
class Library:
    terms: tuple[TermDescriptor, ...]
    matrix: np.ndarray            # N x M
    target: np.ndarray            # N
    sample_set: SampleSet
    target_field: str
    singular_values: np.ndarray
    spec: LibrarySpec
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix.shape[1] != len(self.terms):
            raise DatasetError("column count must equal term count")
        if self.matrix.shape[0] != self.target.size:
            raise DatasetError("matrix rows must match target length")
        if not (np.isfinite(self.matrix).all() and np.isfinite(self.target).all()):
            raise DatasetError("library contains non-finite entries")

    @property
    def n_samples(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_terms(self) -> int:
        return self.matrix.shape[1]

    def term_names(self) -> list[str]:
        return [t.name for t in self.terms]

    def to_csv(self, path) -> None:
        header = ",".join(["target"] + self.term_names())
        data = np.column_stack([self.target, self.matrix])
        with open(Path(path), "w") as fh:
            fh.write(header + "\n")
            np.savetxt(fh, data, delimiter=",")


def terms_for_spec(spec: LibrarySpec, target_field: str,
                   field_names: list[str] | None = None) -> list[TermDescriptor]:
    """Deterministic, canonically ordered term list for a library spec."""
    if spec.kind == "poly-deriv-1d":
        terms = []
        for q in range(spec.deriv_order + 1):
            for p in range(spec.poly_degree + 1):
                powers = ((target_field, p),) if p else ()
                deriv = (target_field, (q,)) if q else None
                if p == 0 and q == 0:
                    terms.append(TermDescriptor())
                else:
                    terms.append(TermDescriptor(powers, deriv))
        return sorted(terms)
    # rd-2d
    if field_names is None or len(field_names) != 2:
        raise DatasetError("rd-2d library needs exactly two fields")
    fa, fb = sorted(field_names)
    terms = [TermDescriptor(((fa, i), (fb, j)))
             for d in range(4) for i in range(d, -1, -1) for j in (d - i,)]
    for f in (fa, fb):
        for orders in ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2)):
            terms.append(TermDescriptor((), (f, orders)))
    return sorted(terms)


def _space_derivative(dataset: Dataset, fname: str, orders: tuple[int, ...],
                      spec: LibrarySpec) -> np.ndarray:
    method = spec.method
    if method == "auto":
        method = "spectral" if dataset.boundary[fname] == "periodic" else "finite-difference"
    out = dataset.fields[fname]
    for ax, o in enumerate(orders):
        if o == 0:
            continue
        spacing = dataset.space_axes[ax].spacing
        if method == "spectral":
            if dataset.boundary[fname] != "periodic":
                raise DatasetError(f"spectral derivatives need periodic field '{fname}'")
            out = spectral_diff(out, ax, spacing, o)
        else:
            out = fd_diff(out, ax, spacing, o, spec.fd_accuracy,
                          periodic=dataset.boundary[fname] == "periodic")
    return out


def build_library(dataset: Dataset, sample_set: SampleSet, spec: LibrarySpec,
                  target_field: str) -> Library:
    """Evaluate the candidate terms and the time-derivative target at samples."""
    if target_field not in dataset.fields:
        raise DatasetError(f"unknown target field '{target_field}'")
    if sample_set.shape != dataset.shape:
        raise DatasetError("sample set was drawn from a different grid")
    idx = sample_set.indices
    names = (dataset.field_names() if spec.kind == "rd-2d" else [target_field])
    terms = terms_for_spec(spec, target_field, names)

    sampled_fields = {f: dataset.fields[f].ravel()[idx] for f in names}
    needed = sorted({t.deriv for t in terms if t.deriv is not None})
    sampled_derivs = {}
    for key in needed:
        fname, orders = key
        full = _space_derivative(dataset, fname, orders, spec)
        sampled_derivs[key] = full.ravel()[idx]

    cols = [t.evaluate(sampled_fields, sampled_derivs) for t in terms]
    matrix = np.column_stack(cols)

    if spec.time_accuracy == 2:
        ut = time_derivative(dataset, target_field)
    else:
        ax = len(dataset.space_axes)
        ut = fd_diff(dataset.fields[target_field], ax, dataset.time_axis.spacing,
                     1, spec.time_accuracy, periodic=False)
    target = ut.ravel()[idx]

    sv = np.linalg.svd(matrix, compute_uv=False)
    return Library(tuple(terms), matrix, target, sample_set, target_field, sv, spec)


def reduce_independent(library: Library, tol: float = 1e-10) -> Library:
    """Drop columns until a maximal numerically independent subset remains.

    Pivoted-QR diagonals below tol times the largest are treated as dependent;
    the numerical rank is cross-checked against the SVD of the full matrix.
    """
    if library.n_terms < 1:
        raise DatasetError("library has no columns")
    R, piv = scipy.linalg.qr(library.matrix, mode="r", pivoting=True)
    diag = np.abs(np.diag(R))
    dmax = diag.max()
    if dmax == 0:
        raise DatasetError("degenerate data: all columns below tolerance")
    rank = int((diag >= tol * dmax).sum())
    if rank == 0:
        raise DatasetError("degenerate data: all columns below tolerance")
    kept = np.sort(piv[:rank])
    dropped = np.sort(piv[rank:])
    sv = library.singular_values
    svd_rank = int((sv >= tol * sv.max()).sum())
    diagnostics = dict(library.diagnostics)
    diagnostics["independence"] = {
        "tol": tol,
        "qr_rank": rank,
        "svd_rank": svd_rank,
        "dropped": [library.terms[j].name for j in dropped],
    }
    if rank == library.n_terms:
        return replace(library, diagnostics=diagnostics)
    matrix = library.matrix[:, kept]
    return Library(
        tuple(library.terms[j] for j in kept), matrix, library.target,
        library.sample_set, library.target_field,
        np.linalg.svd(matrix, compute_uv=False), library.spec, diagnostics)
