"""Support-space search: exhaustive enumeration, tabu, and hybrid variants.

The outer combinatorial layer walks k-subsets of the asset universe; each
visited support is scored by solving its convex subproblem and evaluating
the full robust objective at the recovered weights.  Both metaheuristics
share one loop: start from the k assets with the highest estimation-window
mean return, draw single-swap neighbors uniformly without replacement,
and move only when a candidate strictly improves the incumbent best (a
tabu-listed support needs that same improvement, which is exactly the
aspiration rule).  Scores are cached per support, so revisits never pay
for a second solve and the reported evaluation count is the number of
distinct subproblem solves.

The tabu variant scores supports with the interior-point solver; the
hybrid variant uses the penalty continuation method and therefore trades
a little accuracy for cheaper evaluations.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core import DrpInstance, PortfolioSelection, evaluate_objective
from .exceptions import (
    NeighborhoodExhaustedError,
    TooManySubsetsError,
    ValidationError,
)
from .qp import assemble_subproblem, penalty_solve, solve_qp

__all__ = [
    "TabuConfig",
    "SearchResult",
    "enumerate_exact",
    "gen_neighbors",
    "tabu_search",
    "hybrid_search",
    "qp_evaluator",
    "penalty_evaluator",
    "initial_support",
]

#: refuse exhaustive enumeration beyond this many subsets
ENUMERATION_CAP = 200_000


@dataclass(frozen=True)
class TabuConfig:
    """Knobs of the tabu walk.

    ``neighborhood_size`` single-swap candidates are drawn per iteration
    (must not exceed the ``k * (N - k)`` swaps that exist); accepted
    supports stay on the tabu list for ``tenure`` iterations; with
    ``aspiration`` a listed support may still be accepted when it strictly
    improves the incumbent best.
    """

    neighborhood_size: int = 4
    tenure: int = 50
    max_iterations: int = 2000
    seed: int = 0
    aspiration: bool = True

    def __post_init__(self):
        if self.neighborhood_size < 1:
            raise ValidationError("neighborhood_size must be >= 1")
        if self.tenure < 1:
            raise ValidationError("tenure must be >= 1")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Outcome of a support search."""

    selection: PortfolioSelection
    objective: float
    trace: tuple            # best objective after each iteration (0 = init)
    evaluations: int        # distinct subproblem solves


def _sanitize_weights(x: np.ndarray) -> np.ndarray:
    # clip solver-level noise (|noise| ~ 1e-10) and renormalize so the
    # selection invariants hold exactly
    w = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    total = w.sum()
    if total <= 0.0:
        raise ValidationError("solver returned a zero weight vector")
    return w / total


def qp_evaluator(inst: DrpInstance, tol: float = 1e-8):
    """Score a support by its interior-point subproblem solve."""
    def evaluate(support):
        sp = assemble_subproblem(inst, support)
        sol = solve_qp(sp, tol=tol)
        sel = PortfolioSelection.from_support(
            _sanitize_weights(sol.x), support, inst.n_assets)
        return evaluate_objective(inst, sel), sel
    return evaluate


def penalty_evaluator(inst: DrpInstance, tau0: float = 1.0,
                      decay: float = 0.25, step_tol: float = 1e-6):
    """Score a support by the penalty continuation solve.

    The recovered weights are projected back onto the simplex before
    scoring, so the reported objective is always attained by a feasible
    portfolio (the continuation iterate itself is only feasible to
    O(step_tol)).
    """
    def evaluate(support):
        sp = assemble_subproblem(inst, support)
        sol = penalty_solve(sp, tau0=tau0, decay=decay, step_tol=step_tol)
        sel = PortfolioSelection.from_support(
            _sanitize_weights(sol.x), support, inst.n_assets)
        return evaluate_objective(inst, sel), sel
    return evaluate


class _Cache:
    """Support -> (objective, selection) memo with a solve counter."""

    def __init__(self, evaluate, threads: int = 1):
        self._evaluate = evaluate
        self._memo = {}
        self._threads = max(1, int(threads))
        self.evaluations = 0

    def get_many(self, supports):
        missing = []
        for sup in supports:
            if sup not in self._memo and sup not in missing:
                missing.append(sup)
        if missing:
            if self._threads > 1 and len(missing) > 1:
                with ThreadPoolExecutor(max_workers=self._threads) as pool:
                    results = list(pool.map(self._evaluate, missing))
            else:
                results = [self._evaluate(sup) for sup in missing]
            # insertion in submission order keeps the walk deterministic
            # regardless of which worker finished first
            for sup, res in zip(missing, results):
                self._memo[sup] = res
            self.evaluations += len(missing)
        return [self._memo[sup] for sup in supports]

    def get(self, support):
        return self.get_many([support])[0]


def initial_support(inst: DrpInstance) -> tuple:
    """The k assets with the highest scenario mean return (stable ties)."""
    means = inst.scenarios.mean_returns()
    order = np.argsort(-means, kind="stable")[:inst.k]
    return tuple(sorted(int(j) for j in order))


def gen_neighbors(support_mask, n: int, rng: np.random.Generator):
    """Draw ``n`` distinct single-swap neighbors uniformly at random.

    ``support_mask`` is a binary vector; a neighbor swaps one selected
    asset for one unselected asset.  Sampling is uniform over all
    ``k * (N - k)`` swaps, without replacement; asking for more raises
    NeighborhoodExhaustedError.  Returns supports as sorted index tuples.
    """
    y = np.asarray(support_mask)
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("support mask must be binary")
    inside = np.flatnonzero(y == 1)
    outside = np.flatnonzero(y == 0)
    total = inside.size * outside.size
    if n < 1:
        raise ValidationError("need n >= 1 neighbors")
    if n > total:
        raise NeighborhoodExhaustedError(
            f"requested {n} neighbors but only {total} single swaps exist"
        )
    picks = rng.choice(total, size=n, replace=False)
    out = []
    base = set(int(i) for i in inside)
    for f in picks:
        drop = int(inside[int(f) // outside.size])
        add = int(outside[int(f) % outside.size])
        sup = base - {drop} | {add}
        out.append(tuple(sorted(sup)))
    return out


def _support_to_mask(support, n_assets: int) -> np.ndarray:
    y = np.zeros(n_assets, dtype=np.int8)
    y[list(support)] = 1
    return y


def enumerate_exact(inst: DrpInstance, *, cap: int = ENUMERATION_CAP,
                    evaluator=None, threads: int = 1) -> SearchResult:
    """Score every k-subset in lexicographic order and keep the best.

    Ties go to the lexicographically smallest support.  Raises
    TooManySubsetsError when ``C(N, k)`` exceeds ``cap``.
    """
    total = math.comb(inst.n_assets, inst.k)
    if total > cap:
        raise TooManySubsetsError(
            f"C({inst.n_assets}, {inst.k}) = {total} exceeds cap {cap}"
        )
    cache = _Cache(evaluator or qp_evaluator(inst), threads=threads)
    supports = [tuple(c) for c in combinations(range(inst.n_assets), inst.k)]
    best_obj = -np.inf
    best_sel = None
    trace = []
    for chunk_start in range(0, len(supports), 64):
        chunk = supports[chunk_start:chunk_start + 64]
        for (obj, sel) in cache.get_many(chunk):
            # strict > keeps the earliest (lexicographically smallest) tie
            if obj > best_obj:
                best_obj, best_sel = obj, sel
            trace.append(best_obj)
    return SearchResult(selection=best_sel, objective=best_obj,
                        trace=tuple(trace), evaluations=cache.evaluations)


def _tabu_loop(inst: DrpInstance, config: TabuConfig, evaluate,
               threads: int) -> SearchResult:
    rng = np.random.default_rng(config.seed)
    cache = _Cache(evaluate, threads=threads)
    current = initial_support(inst)
    best_obj, best_sel = cache.get(current)
    tabu = {current: 0}
    trace = [best_obj]
    total_swaps = inst.k * (inst.n_assets - inst.k)
    if total_swaps == 0:
        # the support space is a single point; nothing to walk
        return SearchResult(selection=best_sel, objective=best_obj,
                            trace=tuple(trace), evaluations=cache.evaluations)
    if config.neighborhood_size > total_swaps:
        raise NeighborhoodExhaustedError(
            f"neighborhood_size {config.neighborhood_size} exceeds the "
            f"{total_swaps} swaps this instance admits"
        )

    for it in range(1, config.max_iterations + 1):
        mask = _support_to_mask(current, inst.n_assets)
        neighbors = gen_neighbors(mask, config.neighborhood_size, rng)
        scored = list(zip(neighbors, cache.get_many(neighbors)))
        # deterministic candidate order: objective desc, support lex asc
        scored.sort(key=lambda item: (-item[1][0], item[0]))
        for sup, (obj, sel) in scored:
            if obj <= best_obj:
                break  # sorted: nothing further improves
            if sup in tabu and not config.aspiration:
                continue
            current = sup
            best_obj, best_sel = obj, sel
            tabu[sup] = it
            break
        # release tabu entries whose tenure has elapsed
        tabu = {sup: t0 for sup, t0 in tabu.items()
                if it - t0 < config.tenure}
        trace.append(best_obj)
    return SearchResult(selection=best_sel, objective=best_obj,
                        trace=tuple(trace), evaluations=cache.evaluations)


def tabu_search(inst: DrpInstance, config: TabuConfig = TabuConfig(),
                *, evaluator=None, tol: float = 1e-8,
                threads: int = 1) -> SearchResult:
    """Tabu walk scoring supports with the interior-point solver."""
    return _tabu_loop(inst, config, evaluator or qp_evaluator(inst, tol=tol),
                      threads)


def hybrid_search(inst: DrpInstance, config: TabuConfig = TabuConfig(max_iterations=300),
                  *, evaluator=None, tau0: float = 1.0, decay: float = 0.25,
                  step_tol: float = 1e-6, threads: int = 1) -> SearchResult:
    """Tabu walk scoring supports with the penalty continuation solver."""
    return _tabu_loop(
        inst, config,
        evaluator or penalty_evaluator(inst, tau0=tau0, decay=decay,
                                       step_tol=step_tol),
        threads)
