"""Model evaluation: coefficient error, relative L2 misfit, structural match."""

from __future__ import annotations

import numpy as np

from .core import Dataset, DatasetError, DiscoveredModel


def coefficient_error(discovered: DiscoveredModel, reference: DiscoveredModel) -> float:
    """Mean relative coefficient error over terms present in both models."""
    ref = dict(zip(reference.terms, reference.coefficients))
    errs = [abs(c - ref[t]) / abs(ref[t])
            for t, c in zip(discovered.terms, discovered.coefficients) if t in ref]
    if not errs:
        raise DatasetError("no common terms between discovered and reference models")
    return float(np.mean(errs))


def relative_l2(predicted: Dataset, reference: Dataset, field: str) -> float:
    """||pred - ref||_2 / ||ref||_2 over all spatiotemporal points."""
    if predicted.shape != reference.shape:
        raise DatasetError("grid mismatch between predicted and reference datasets")
    for a, b in zip(predicted.space_axes + (predicted.time_axis,),
                    reference.space_axes + (reference.time_axis,)):
        if a.count != b.count or not np.isclose(a.spacing, b.spacing, rtol=1e-12):
            raise DatasetError("grid mismatch between predicted and reference datasets")
    p = predicted.fields[field]
    r = reference.fields[field]
    denom = float(np.linalg.norm(r.ravel()))
    if denom == 0:
        raise DatasetError("reference field has zero norm")
    return float(np.linalg.norm((p - r).ravel())) / denom


def structure_match(discovered: DiscoveredModel, reference: DiscoveredModel
                    ) -> tuple[bool, dict]:
    """True iff the term sets are identical; the report lists the differences."""
    got = set(discovered.terms)
    want = set(reference.terms)
    missing = sorted(want - got)
    spurious = sorted(got - want)
    report = {
        "match": not missing and not spurious,
        "missing": [{"term": t.name, "coefficient": reference.coefficient_of(t)}
                    for t in missing],
        "spurious": [{"term": t.name, "coefficient": discovered.coefficient_of(t)}
                     for t in spurious],
    }
    return report["match"], report
