"""Allocation strategies with the scikit-learn estimator interface.

Every allocator is a ``BaseEstimator``: construct with hyperparameters,
``fit(X)`` on an estimation window of per-period returns (rows = periods,
columns = assets), then read ``weights_``.  ``predict(X)`` maps return
scenarios to portfolio returns under the fitted weights.  ``get_params`` /
``set_params`` / ``clone`` work as usual, so allocators compose with
model-selection tooling.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array

from .core import AversionProfile, DrpInstance
from .data import CovarianceEstimate, ScenarioSet, sample_covariance
from .exceptions import (
    DimensionMismatchError,
    MaxIterationsError,
    MissingMarketCapsError,
    SingularCovarianceError,
    TooFewSamplesError,
    ValidationError,
)
from .qp import minimize_qp_on_simplex
from .search import TabuConfig, enumerate_exact, hybrid_search, tabu_search

__all__ = [
    "EqualWeight",
    "MarketValueWeight",
    "RiskParity",
    "MeanVariance",
    "DistributionallyRobust",
]


def _validate_returns(X, min_periods: int = 1) -> np.ndarray:
    X = check_array(X, dtype=np.float64)
    if X.shape[0] < min_periods:
        raise TooFewSamplesError(
            f"need at least {min_periods} periods, got {X.shape[0]}"
        )
    return X


def _scenario_matrix(X) -> np.ndarray:
    if isinstance(X, ScenarioSet):
        return np.asarray(X.returns)
    return X


class _BaseAllocator(BaseEstimator):
    """Shared fit/predict plumbing; subclasses implement ``_allocate``."""

    _min_periods = 1

    def fit(self, X, y=None):
        X = _validate_returns(_scenario_matrix(X), self._min_periods)
        self.n_assets_ = X.shape[1]
        w = np.asarray(self._allocate(X), dtype=np.float64)
        w = np.clip(w, 0.0, None)
        total = w.sum()
        if not np.isfinite(total) or total <= 0.0:
            raise ValidationError("allocation produced no positive weight")
        self.weights_ = w / total
        return self

    def predict(self, X):
        """Per-period portfolio returns under the fitted weights."""
        if not hasattr(self, "weights_"):
            raise ValidationError("allocator is not fitted yet")
        X = _validate_returns(_scenario_matrix(X))
        if X.shape[1] != self.n_assets_:
            raise DimensionMismatchError(
                f"fitted on {self.n_assets_} assets, got {X.shape[1]}"
            )
        return X @ self.weights_

    def _allocate(self, X):  # pragma: no cover - abstract
        raise NotImplementedError


class EqualWeight(_BaseAllocator):
    """1/N across all assets."""

    def _allocate(self, X):
        n = X.shape[1]
        return np.full(n, 1.0 / n)


class MarketValueWeight(_BaseAllocator):
    """Weights proportional to externally supplied market values."""

    def __init__(self, market_caps=None):
        self.market_caps = market_caps

    def _allocate(self, X):
        if self.market_caps is None:
            raise MissingMarketCapsError(
                "MarketValueWeight requires market_caps"
            )
        caps = np.asarray(self.market_caps, dtype=np.float64)
        if caps.shape != (X.shape[1],):
            raise DimensionMismatchError(
                f"{caps.shape[0] if caps.ndim == 1 else caps.shape} market "
                f"caps for {X.shape[1]} assets"
            )
        if not np.all(np.isfinite(caps)) or caps.min() <= 0.0:
            raise ValidationError("market caps must be positive")
        return caps / caps.sum()


class RiskParity(_BaseAllocator):
    """Equal risk contributions: each asset contributes 1/N of variance.

    Solves the strictly convex surrogate ``min 0.5 y'Sigma y - mean(log y)``
    over ``y > 0`` by damped Newton and normalizes; at the optimum
    ``y_i (Sigma y)_i`` is constant, which is the equal-contribution
    condition.  For diagonal covariance this reduces to inverse-volatility
    weights.
    """

    _min_periods = 2

    def __init__(self, tol: float = 1e-10, max_iter: int = 100):
        self.tol = tol
        self.max_iter = max_iter

    def _allocate(self, X):
        n = X.shape[1]
        if n == 1:
            return np.ones(1)
        raw_var = X.var(axis=0, ddof=1)
        scale = max(1.0, float(np.abs(X).max()))
        if raw_var.min() <= (1e-12 * scale) ** 2:
            raise SingularCovarianceError(
                "risk parity needs positive variance for every asset"
            )
        sigma = sample_covariance(
            ScenarioSet(X, [f"a{j}" for j in range(n)],
                        [f"p{i}" for i in range(X.shape[0])])
        ).matrix
        diag = np.diag(sigma)
        y = 1.0 / (np.sqrt(diag) * np.sqrt(n))
        eye = np.eye(n)
        for _ in range(self.max_iter):
            grad = sigma @ y - 1.0 / (n * y)
            if np.abs(grad).max() <= self.tol * max(1.0, np.abs(y).max()):
                break
            hess = sigma + np.diag(1.0 / (n * y * y))
            try:
                step = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError:
                step = np.linalg.solve(hess + 1e-12 * eye, -grad)
            alpha = 1.0
            neg = step < 0.0
            if np.any(neg):
                alpha = min(1.0, 0.99 * float(np.min(-y[neg] / step[neg])))
            # plain damped Newton: the objective is strictly convex and
            # self-concordant-like, halving until decrease is enough
            val = 0.5 * y @ sigma @ y - np.log(y).sum() / n
            for _ in range(60):
                y_try = y + alpha * step
                if y_try.min() > 0.0:
                    val_try = 0.5 * y_try @ sigma @ y_try \
                        - np.log(y_try).sum() / n
                    if val_try <= val + 1e-4 * alpha * float(grad @ step):
                        break
                alpha *= 0.5
            else:
                break
            y = y_try
        else:
            raise MaxIterationsError("risk parity Newton did not converge")
        return y / y.sum()


class MeanVariance(_BaseAllocator):
    """Long-only mean-variance portfolio on the simplex.

    Maximizes ``mu'x - (risk_aversion/2) x'Sigma x`` subject to the
    simplex constraints.
    """

    _min_periods = 2

    def __init__(self, risk_aversion: float = 1.0):
        self.risk_aversion = risk_aversion

    def _allocate(self, X):
        n = X.shape[1]
        if self.risk_aversion < 0.0:
            raise ValidationError("risk_aversion must be non-negative")
        mu = X.mean(axis=0)
        sigma = sample_covariance(
            ScenarioSet(X, [f"a{j}" for j in range(n)],
                        [f"p{i}" for i in range(X.shape[0])])
        ).matrix
        return minimize_qp_on_simplex(self.risk_aversion * sigma, -mu)


class DistributionallyRobust(_BaseAllocator):
    """Cardinality-constrained distributionally robust allocator.

    Hyperparameters mirror the underlying model: kink steepness
    ``loss_aversion``, variance penalty ``risk_aversion``, Wasserstein
    radius ``ambiguity_radius``, per-period ``reference_point``, support
    size ``k`` (defaults to the full universe), and the search algorithm
    (``"exact"``, ``"tabu"``, or ``"hybrid"``).

    After ``fit``: ``weights_``, ``support_``, ``objective_``,
    ``evaluations_``, and the full ``result_``.
    """

    _min_periods = 2

    def __init__(self, k=None, loss_aversion: float = 1.5,
                 risk_aversion: float = 1.5, ambiguity_radius: float = 0.003,
                 reference_point: float = 0.001, algorithm: str = "hybrid",
                 max_iterations: int = 300, neighborhood_size: int = 4,
                 tenure: int = 50, seed: int = 0, threads: int = 1):
        self.k = k
        self.loss_aversion = loss_aversion
        self.risk_aversion = risk_aversion
        self.ambiguity_radius = ambiguity_radius
        self.reference_point = reference_point
        self.algorithm = algorithm
        self.max_iterations = max_iterations
        self.neighborhood_size = neighborhood_size
        self.tenure = tenure
        self.seed = seed
        self.threads = threads

    def _allocate(self, X):
        n = X.shape[1]
        k = n if self.k is None else int(self.k)
        profile = AversionProfile(
            loss_aversion=self.loss_aversion,
            risk_aversion=self.risk_aversion,
            ambiguity_radius=self.ambiguity_radius,
            reference_point=self.reference_point,
        )
        scen = ScenarioSet(X, [f"a{j}" for j in range(n)],
                           [f"p{i}" for i in range(X.shape[0])])
        inst = DrpInstance.from_scenarios(scen, profile, k)
        if self.algorithm == "exact":
            result = enumerate_exact(inst, threads=self.threads)
        else:
            swaps = k * (n - k)
            config = TabuConfig(
                neighborhood_size=min(self.neighborhood_size, max(swaps, 1)),
                tenure=self.tenure,
                max_iterations=self.max_iterations,
                seed=self.seed,
            )
            if self.algorithm == "tabu":
                result = tabu_search(inst, config, threads=self.threads)
            elif self.algorithm == "hybrid":
                result = hybrid_search(inst, config, threads=self.threads)
            else:
                raise ValidationError(
                    f"unknown algorithm {self.algorithm!r}; expected "
                    "'exact', 'tabu', or 'hybrid'"
                )
        self.result_ = result
        self.support_ = result.selection.support
        self.objective_ = result.objective
        self.evaluations_ = result.evaluations
        return result.selection.weights
