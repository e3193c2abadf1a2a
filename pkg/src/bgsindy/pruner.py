"""Balance-guided progressive pruning with residual-ratio model selection.

Each iteration scores active terms by their sample-averaged share of the
rowwise dominant contribution, removes the least important term, and refits.
Selection stops at the step before the residual ratio first exceeds tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DatasetError, DiscoveredModel, PruneIteration, PruneTrace
from .library import Library
from .regression import _svd_solve, least_squares

RES_FLOOR = 1e-30


@dataclass(frozen=True)
class PrunerConfig:
    tau: float = 3.0
    epsilon: float | None = None      # None: relative, epsilon_rel * max|phi_ij xi_j|
    epsilon_rel: float = 1e-12
    min_terms: int = 1
    record_full_trace: bool = True

    def __post_init__(self):
        if self.tau <= 1:
            raise DatasetError("tau must be > 1")
        if self.epsilon is not None and self.epsilon <= 0:
            raise DatasetError("epsilon must be > 0")
        if self.epsilon_rel <= 0:
            raise DatasetError("epsilon_rel must be > 0")
        if self.min_terms < 1:
            raise DatasetError("min_terms must be >= 1")


def importance(phi_active: np.ndarray, xi: np.ndarray, epsilon: float | None = None,
               epsilon_rel: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Local and global term importance.

    w_ij = |phi_ij xi_j| / (max_l |phi_il xi_l| + eps), W_j = mean_i w_ij.
    Both lie in [0, 1]. With epsilon=None the stabilizer is relative to the
    largest contribution in the active set, which keeps the scores invariant
    under paired column/coefficient rescaling.
    """
    phi_active = np.asarray(phi_active)
    xi = np.asarray(xi)
    if xi.size == 0 or phi_active.ndim != 2 or phi_active.shape[1] != xi.size:
        raise DatasetError("importance needs an N x K matrix and K coefficients")
    prod = np.abs(phi_active * xi[np.newaxis, :])
    if epsilon is None:
        gmax = prod.max()
        epsilon = epsilon_rel * gmax if gmax > 0 else 1.0
    if epsilon <= 0:
        raise DatasetError("epsilon must be > 0")
    w = prod / (prod.max(axis=1, keepdims=True) + epsilon)
    return w, w.mean(axis=0)


@dataclass(frozen=True)
class PruneState:
    active: tuple[int, ...]
    coefficients: np.ndarray
    residual: float


def initial_state(library: Library) -> PruneState:
    fit = least_squares(library.matrix, library.target)
    return PruneState(tuple(range(library.n_terms)), fit.coefficients, fit.residual)


def _argmin_with_tie_break(W: np.ndarray, active: list[int]) -> int:
    """Index into `active` of the minimal importance; ties remove the later term."""
    wmin = W.min()
    ties = np.flatnonzero(W == wmin)
    return int(ties[-1])   # library order is canonical order


def prune_step(library: Library, state: PruneState,
               config: PrunerConfig = PrunerConfig()) -> tuple[PruneState, int, np.ndarray]:
    """Remove the least important active term and refit.

    Returns the new state, the removed library term index, and the global
    importances of the pre-removal active set.
    """
    if len(state.active) < 2:
        raise DatasetError("prune_step needs at least 2 active terms")
    active = list(state.active)
    _, W = importance(library.matrix[:, active], state.coefficients,
                      config.epsilon, config.epsilon_rel)
    j_loc = _argmin_with_tie_break(W, active)
    removed = active.pop(j_loc)
    fit = least_squares(library.matrix[:, active], library.target)
    return PruneState(tuple(active), fit.coefficients, fit.residual), removed, W


class _Solver:
    """LS refits against a fixed library, through a one-time QR compression
    (N x M -> M x M) when the system is tall, which leaves solutions unchanged
    up to round-off. Residuals are always evaluated directly on the full data;
    the compressed form condenses large-magnitude rows and wobbles at the
    round-off floor."""

    def __init__(self, library: Library):
        n, m = library.matrix.shape
        self.n = n
        self.phi = library.matrix
        self.y = library.target
        self.compressed = n > 2 * m
        if self.compressed:
            q, r = np.linalg.qr(library.matrix)
            self.r = r
            self.c = q.T @ library.target

    def fit(self, active: list[int]) -> tuple[np.ndarray, float]:
        if self.compressed:
            xi, _ = _svd_solve(self.r[:, active], self.c)
        else:
            xi, _ = _svd_solve(self.phi[:, active], self.y)
        misfit = self.phi[:, active] @ xi - self.y
        return xi, float(misfit @ misfit) / self.n


def _ratio_triggers(res_prev: float, res_next: float, tau: float) -> bool:
    if res_prev <= RES_FLOOR:
        return res_next > RES_FLOOR
    return res_next / res_prev > tau


def discover(library: Library, config: PrunerConfig = PrunerConfig()
             ) -> tuple[DiscoveredModel, PruneTrace]:
    """Run progressive pruning from the full active set and select the model.

    The model selected is the one from the iteration immediately before the
    first residual-ratio trigger; if the ratio never exceeds tau down to
    min_terms, the iteration preceding the largest observed ratio is used.
    With record_full_trace the pruning continues past the trigger so the
    whole residual history is available.
    """
    if library.n_terms < 1:
        raise DatasetError("empty library")
    solver = _Solver(library)
    active = list(range(library.n_terms))
    xi, res = solver.fit(active)
    iterations: list[PruneIteration] = []
    selected: int | None = None
    while True:
        _, W = importance(library.matrix[:, active], xi,
                          config.epsilon, config.epsilon_rel)
        if len(active) <= config.min_terms:
            iterations.append(PruneIteration(tuple(active), xi, W, None, res))
            break
        j_loc = _argmin_with_tie_break(W, active)
        removed = active[j_loc]
        iterations.append(PruneIteration(tuple(active), xi, W, removed, res))
        new_active = active[:j_loc] + active[j_loc + 1:]
        xi_new, res_new = solver.fit(new_active)
        triggered = _ratio_triggers(res, res_new, config.tau)
        active, xi, res = new_active, xi_new, res_new
        if triggered and selected is None:
            selected = len(iterations) - 1
            if not config.record_full_trace:
                _, W_last = importance(library.matrix[:, active], xi,
                                       config.epsilon, config.epsilon_rel)
                iterations.append(PruneIteration(tuple(active), xi, W_last, None, res))
                break

    if selected is None:
        res_seq = [it.residual for it in iterations]
        ratios = []
        for a, b in zip(res_seq, res_seq[1:]):
            if a <= RES_FLOOR:
                ratios.append(np.inf if b > RES_FLOOR else 1.0)
            else:
                ratios.append(b / a)
        selected = int(np.argmax(ratios)) if ratios else 0

    sel = iterations[selected]
    model = DiscoveredModel(
        tuple(library.terms[j] for j in sel.active),
        sel.coefficients, library.target_field, sel.residual)
    trace = PruneTrace(tuple(iterations), selected,
                       tuple(t.name for t in library.terms))
    return model, trace
