import numpy as np
import pytest

from bgsindy import (DatasetError, Library, LibrarySpec, PrunerConfig,
                     TermDescriptor, discover, importance, prune_step)
from bgsindy.pruner import PruneState, initial_state
from tests.test_library import random_library


def synthetic_library(n=400, m=8, k_true=3, seed=0, noise=0.0):
    """Random full-rank library with a known sparse generating model."""
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((n, m))
    true = np.zeros(m)
    true[:k_true] = rng.uniform(1.0, 3.0, k_true) * rng.choice([-1, 1], k_true)
    target = matrix @ true + noise * rng.standard_normal(n)
    terms = tuple(TermDescriptor((("u", p + 1),)) for p in range(m))
    from bgsindy import Axis, Dataset, subsample
    ds = Dataset((Axis(0, 1.0, 20),), Axis(0, 1.0, max(4, n // 20)),
                 {"u": np.zeros((20, max(4, n // 20)))}, {"u": "periodic"})
    samples = subsample(ds, min(n, ds.total_points), "uniform-random", seed)
    return Library(terms, matrix, target, samples, "u",
                   np.linalg.svd(matrix, compute_uv=False),
                   LibrarySpec(poly_degree=m, deriv_order=0)), true


class TestImportance:
    def test_single_row_formula(self):
        phi = np.array([[3.0, -1.0, 0.5]])
        xi = np.ones(3)
        w, W = importance(phi, xi, epsilon=1e-15)
        assert np.allclose(w[0], [1.0, 1 / 3, 1 / 6], atol=1e-12)
        assert np.allclose(W, w[0])

    def test_single_term_near_one(self, rng):
        phi = rng.uniform(1.0, 2.0, (50, 1))
        _, W = importance(phi, np.array([2.0]))
        assert 0.999999 < W[0] <= 1.0

    def test_all_zero_row(self):
        phi = np.array([[0.0, 0.0], [1.0, 2.0]])
        w, _ = importance(phi, np.ones(2))
        assert np.array_equal(w[0], [0.0, 0.0])

    def test_bounds_1000_random_instances(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = rng.integers(1, 30)
            k = rng.integers(1, 8)
            phi = rng.standard_normal((n, k)) * 10.0 ** rng.integers(-6, 6)
            xi = rng.standard_normal(k) * 10.0 ** rng.integers(-6, 6)
            w, W = importance(phi, xi)
            assert (w >= 0).all() and (w <= 1.0).all()
            assert (W >= 0).all() and (W <= 1.0).all()

    def test_row_max_near_one(self, rng):
        phi = rng.standard_normal((200, 5)) + 2.0
        w, _ = importance(phi, np.ones(5))
        assert w.max(axis=1).min() > 1 - 1e-9

    def test_empty_rejected(self):
        with pytest.raises(DatasetError):
            importance(np.ones((3, 0)), np.array([]))


class TestPruneStep:
    def test_zero_column_removed_first(self):
        lib, _ = synthetic_library(m=4, k_true=4)
        matrix = lib.matrix.copy()
        matrix[:, 2] = 1e-300      # effectively dead column -> xi ~ 0
        from dataclasses import replace
        lib2 = replace(lib, matrix=matrix,
                       singular_values=np.linalg.svd(matrix, compute_uv=False))
        state = initial_state(lib2)
        new_state, removed, W = prune_step(lib2, state)
        assert removed == 2
        assert new_state.residual >= state.residual - 1e-15

    def test_needs_two_terms(self):
        lib, _ = synthetic_library(m=3)
        state = PruneState((1,), np.array([1.0]), 0.5)
        with pytest.raises(DatasetError):
            prune_step(lib, state)

    def test_matches_discover_path(self):
        # iterated prune_step reproduces discover's removal order exactly
        lib, _ = synthetic_library(n=2000, m=10, k_true=3, noise=1e-4, seed=5)
        model, trace = discover(lib, PrunerConfig(record_full_trace=True))
        state = initial_state(lib)
        removed_seq = []
        while len(state.active) > 1:
            state, removed, _ = prune_step(lib, state)
            removed_seq.append(removed)
        trace_removed = [it.removed for it in trace.iterations if it.removed is not None]
        assert removed_seq == trace_removed


class TestDiscover:
    def test_exact_generating_terms_only(self):
        # every term essential: first removal triggers, full set returned
        lib, true = synthetic_library(m=4, k_true=4, noise=1e-9)
        model, trace = discover(lib)
        assert len(model.terms) == 4
        assert trace.selected_iteration == 0

    def test_recovers_planted_support(self):
        lib, true = synthetic_library(n=3000, m=10, k_true=3, noise=1e-6, seed=11)
        model, trace = discover(lib)
        support = {lib.terms[j] for j in np.flatnonzero(true)}
        assert set(model.terms) == support
        coef = dict(zip(model.terms, model.coefficients))
        for j in np.flatnonzero(true):
            assert abs(coef[lib.terms[j]] - true[j]) < 1e-4

    def test_residuals_non_decreasing(self):
        lib, _ = synthetic_library(n=1500, m=12, k_true=4, noise=1e-5, seed=3)
        _, trace = discover(lib, PrunerConfig(record_full_trace=True))
        res = trace.residuals
        assert (np.diff(res) >= -1e-12 * np.maximum(res[:-1], 1e-300)).all()

    def test_full_trace_lengths(self):
        lib, _ = synthetic_library(m=6, k_true=2, noise=1e-6)
        _, trace = discover(lib, PrunerConfig(record_full_trace=True))
        assert [len(it.active) for it in trace.iterations] == [6, 5, 4, 3, 2, 1]

    def test_determinism(self):
        lib, _ = synthetic_library(n=2000, m=9, k_true=3, noise=1e-5, seed=7)
        m1, t1 = discover(lib)
        m2, t2 = discover(lib)
        assert m1.terms == m2.terms
        assert np.array_equal(m1.coefficients, m2.coefficients)
        assert t1.selected_iteration == t2.selected_iteration

    def test_column_rescaling_invariance_100_libraries(self):
        # scaling any column leaves the removal order and selection unchanged
        from dataclasses import replace
        for seed in range(100):
            lib, _ = synthetic_library(n=300, m=6, k_true=2, noise=1e-4, seed=seed)
            _, trace = discover(lib, PrunerConfig(record_full_trace=True))
            rng = np.random.default_rng(seed + 5000)
            scales = 2.0 ** rng.integers(-8, 9, lib.n_terms)
            scaled = lib.matrix * scales[None, :]
            lib2 = replace(lib, matrix=scaled,
                           singular_values=np.linalg.svd(scaled, compute_uv=False))
            _, trace2 = discover(lib2, PrunerConfig(record_full_trace=True))
            assert [it.removed for it in trace.iterations] == \
                   [it.removed for it in trace2.iterations]
            assert trace.selected_iteration == trace2.selected_iteration

    def test_near_exact_data_recovers_support(self):
        # residual stays at the tiny noise floor until a true term is removed
        lib, true = synthetic_library(n=500, m=5, k_true=2, noise=1e-12, seed=1)
        model, _ = discover(lib)
        support = {lib.terms[j] for j in np.flatnonzero(true)}
        assert set(model.terms) == support

    def test_tau_close_to_one_over_triggers(self):
        # degenerate tau: selection fires during the junk-removal phase, long
        # before the true 3-term support is reached
        lib, _ = synthetic_library(n=2000, m=10, k_true=3, noise=1e-3, seed=2)
        model, trace = discover(lib, PrunerConfig(tau=1.0001))
        assert len(model.terms) > 3
        assert trace.selected_iteration < 10 - 3

    def test_trace_export(self, tmp_path):
        lib, _ = synthetic_library(m=5, k_true=2, noise=1e-6)
        _, trace = discover(lib, PrunerConfig(record_full_trace=True))
        d = trace.to_json_dict()
        assert len(d["iterations"]) == len(trace.iterations)
        trace.to_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0].startswith("iteration,")
        assert all(f"W[{n}]" in lines[0] for n in trace.term_names)
        assert len(lines) == len(trace.iterations) + 1

    def test_config_validation(self):
        with pytest.raises(DatasetError):
            PrunerConfig(tau=1.0)
        with pytest.raises(DatasetError):
            PrunerConfig(epsilon=-1.0)
        with pytest.raises(DatasetError):
            PrunerConfig(min_terms=0)
