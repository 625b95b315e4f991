"""Scenario data handling: return matrices, covariance, rolling windows.

Returns are simple per-period returns stored as a dense ``(S, N)`` float64
matrix: ``S`` scenarios (periods) over ``N`` assets.  CSV layout is one
header row (``period`` label column followed by asset identifiers) and one
row per period.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    DuplicateAssetIdError,
    EmptyDataError,
    MalformedCellError,
    MissingFileError,
    PlanTooLongError,
    TooFewSamplesError,
    ValidationError,
)

__all__ = [
    "ScenarioSet",
    "CovarianceEstimate",
    "WindowPlan",
    "load_returns",
    "save_returns",
    "sample_covariance",
    "rolling_windows",
]


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """An immutable matrix of per-period asset returns.

    Parameters
    ----------
    returns : ndarray of shape (S, N)
        Finite simple returns; ``S >= 1`` periods, ``N >= 1`` assets.
    asset_ids : tuple of str
        One unique identifier per column.
    period_ids : tuple of str
        One identifier per row.
    """

    returns: np.ndarray
    asset_ids: tuple
    period_ids: tuple

    def __post_init__(self):
        r = np.asarray(self.returns, dtype=np.float64)
        if r.ndim != 2:
            raise DimensionMismatchError("returns must be a 2-d matrix")
        if r.shape[0] < 1 or r.shape[1] < 1:
            raise EmptyDataError("need at least one period and one asset")
        if not np.all(np.isfinite(r)):
            raise ValidationError("returns must be finite")
        ids = tuple(str(a) for a in self.asset_ids)
        pids = tuple(str(p) for p in self.period_ids)
        if len(ids) != r.shape[1]:
            raise DimensionMismatchError(
                f"{len(ids)} asset ids for {r.shape[1]} columns"
            )
        if len(pids) != r.shape[0]:
            raise DimensionMismatchError(
                f"{len(pids)} period ids for {r.shape[0]} rows"
            )
        if len(set(ids)) != len(ids):
            raise DuplicateAssetIdError("asset ids must be unique")
        object.__setattr__(self, "returns", _as_readonly(r))
        object.__setattr__(self, "asset_ids", ids)
        object.__setattr__(self, "period_ids", pids)

    @classmethod
    def from_returns(cls, returns) -> "ScenarioSet":
        """Wrap a bare matrix, autogenerating ids ``a0.. / t0..``."""
        r = np.asarray(returns, dtype=np.float64)
        if r.ndim != 2:
            raise DimensionMismatchError("returns must be a 2-d matrix")
        return cls(
            r,
            tuple(f"a{j}" for j in range(r.shape[1])),
            tuple(f"t{i}" for i in range(r.shape[0])),
        )

    @property
    def n_periods(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    def mean_returns(self) -> np.ndarray:
        return self.returns.mean(axis=0)

    def window(self, start: int, stop: int) -> "ScenarioSet":
        """Row slice ``[start, stop)`` as a new ScenarioSet."""
        if not (0 <= start < stop <= self.n_periods):
            raise DimensionMismatchError(
                f"window [{start}, {stop}) outside 0..{self.n_periods}"
            )
        return ScenarioSet(
            self.returns[start:stop],
            self.asset_ids,
            self.period_ids[start:stop],
        )


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """A symmetric positive semidefinite covariance matrix."""

    matrix: np.ndarray
    n_samples: int = 0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError("covariance must be square")
        if not np.all(np.isfinite(m)):
            raise ValidationError("covariance must be finite")
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.T).max() > 1e-12 * scale:
            raise ValidationError("covariance must be symmetric within 1e-12")
        w = np.linalg.eigvalsh(0.5 * (m + m.T))
        if w.min() < -1e-10 * max(1.0, w.max(), 1.0):
            raise ValidationError(
                f"covariance not positive semidefinite (min eigenvalue {w.min():.3e})"
            )
        object.__setattr__(self, "matrix", _as_readonly(0.5 * (m + m.T)))

    @property
    def n_assets(self) -> int:
        return self.matrix.shape[0]

    def restrict(self, indices) -> np.ndarray:
        """Principal submatrix for the given asset indices."""
        idx = np.asarray(indices, dtype=int)
        return self.matrix[np.ix_(idx, idx)]


@dataclass(frozen=True)
class WindowPlan:
    """Rolling-window layout: estimation length, holding length, step."""

    estimation: int
    holding: int
    step: int

    def __post_init__(self):
        if self.estimation < 2:
            raise ValidationError("estimation window needs at least 2 periods")
        if self.holding < 1:
            raise ValidationError("holding window needs at least 1 period")
        if self.step < 1:
            raise ValidationError("step must be positive")

    @property
    def span(self) -> int:
        return self.estimation + self.holding


def load_returns(path) -> ScenarioSet:
    """Read a return matrix from CSV.

    First row: period-label column header followed by asset ids.  Every
    data cell must parse as a finite float; offending cells are reported
    with 1-based (row, column) coordinates inside the data section.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingFileError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and any(c.strip() for c in row)]
    if not rows:
        raise EmptyDataError(f"{path} is empty")
    header = rows[0]
    asset_ids = [c.strip() for c in header[1:]]
    if not asset_ids:
        raise EmptyDataError(f"{path} has no asset columns")
    if len(set(asset_ids)) != len(asset_ids):
        raise DuplicateAssetIdError(f"duplicate asset ids in {path}")
    data_rows = rows[1:]
    if not data_rows:
        raise EmptyDataError(f"{path} has a header but no data rows")
    values = np.empty((len(data_rows), len(asset_ids)), dtype=np.float64)
    period_ids = []
    for i, row in enumerate(data_rows):
        period_ids.append(row[0].strip())
        cells = row[1:]
        for j in range(len(asset_ids)):
            if j >= len(cells):
                raise MalformedCellError(i + 1, j + 1, message=(
                    f"data row {i + 1} has {len(cells)} cells, "
                    f"expected {len(asset_ids)}"
                ))
            try:
                v = float(cells[j])
            except ValueError:
                raise MalformedCellError(i + 1, j + 1) from None
            if not np.isfinite(v):
                raise MalformedCellError(i + 1, j + 1)
            values[i, j] = v
        if len(cells) > len(asset_ids):
            raise MalformedCellError(i + 1, len(asset_ids) + 1, message=(
                f"data row {i + 1} has {len(cells)} cells, "
                f"expected {len(asset_ids)}"
            ))
    return ScenarioSet(values, tuple(asset_ids), tuple(period_ids))


def save_returns(scenarios: ScenarioSet, path) -> None:
    """Write a ScenarioSet as CSV so that ``load_returns`` round-trips it."""
    with open(os.fspath(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", *scenarios.asset_ids])
        for pid, row in zip(scenarios.period_ids, scenarios.returns):
            # repr() of a Python float is the shortest exact representation
            writer.writerow([pid, *(repr(float(v)) for v in row)])


def sample_covariance(scenarios: ScenarioSet) -> CovarianceEstimate:
    """Unbiased (ddof=1) sample covariance, symmetrized and eigenvalue-clipped.

    Tiny negative eigenvalues produced by accumulated rounding are clipped
    to zero so downstream quadratic forms are certified PSD.
    """
    s = scenarios.n_periods
    if s < 2:
        raise TooFewSamplesError("covariance needs at least 2 periods")
    c = np.cov(scenarios.returns, rowvar=False, ddof=1)
    c = np.atleast_2d(c)
    c = 0.5 * (c + c.T)
    w, v = np.linalg.eigh(c)
    if w.min() < 0.0:
        w = np.clip(w, 0.0, None)
        c = (v * w) @ v.T
        c = 0.5 * (c + c.T)
    return CovarianceEstimate(c, n_samples=s)


def rolling_windows(scenarios: ScenarioSet, plan: WindowPlan):
    """Split periods into (estimation, holding) pairs advancing by ``step``.

    Returns a list of ``(estimation ScenarioSet, holding ScenarioSet)``
    tuples.  Raises PlanTooLongError when not even one full window fits.
    """
    s = scenarios.n_periods
    if plan.span > s:
        raise PlanTooLongError(
            f"plan spans {plan.span} periods but data has only {s}"
        )
    out = []
    offset = 0
    while offset + plan.span <= s:
        est = scenarios.window(offset, offset + plan.estimation)
        hold = scenarios.window(offset + plan.estimation, offset + plan.span)
        out.append((est, hold))
        offset += plan.step
    return out
