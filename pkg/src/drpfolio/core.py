"""Robust portfolio objective and its exact dual reformulation.

The investor maximizes expected loss-averse utility of portfolio return
under the worst distribution inside a type-1 Wasserstein ball (l1 ground
metric, radius ``theta``) centered at the empirical scenario distribution,
minus a quadratic variance penalty:

    maximize_x  inf_{Q in ball} E_Q[h(x' xi)] - (A/2) x' Sigma x

with the kinked utility ``h(r) = r - phi * max(ref - r, 0)``.

Because ``h`` is a minimum of two affine functions, the inner infimum has
an exact finite dual: the ball collapses to a transport-cost multiplier
``lam = (1 + phi) * max_j |x_j|`` (the l1 Lipschitz modulus of the scenario
utility) plus one bound ``nu_i`` per scenario,

    nu_i = max(phi*ref - (1+phi) * r_i,  -r_i)  =  -h(r_i),

so the certified worst-case expectation is ``-mean(nu) - lam * theta``.
Note the second branch is ``nu_i >= -r_i`` (it bounds the negated utility
in the no-loss region); using ``+r_i`` instead breaks the zero-radius
collapse to the sample average whenever mean returns are positive.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import CovarianceEstimate, ScenarioSet, sample_covariance
from .exceptions import (
    DimensionMismatchError,
    InvalidSelectionError,
    InvalidWeightsError,
    ValidationError,
)

__all__ = [
    "AversionProfile",
    "PortfolioSelection",
    "DualCertificate",
    "DrpInstance",
    "MixedIntegerQuadraticProgram",
    "piecewise_utility",
    "scenario_utilities",
    "evaluate_objective",
    "dual_certificate",
    "build_miqp",
]

#: smallest admissible risk-aversion coefficient; values below are lifted
#: to this floor so the quadratic term never degenerates to exactly zero
#: while still being numerically negligible.
RISK_AVERSION_FLOOR = 1e-12


@dataclass(frozen=True)
class AversionProfile:
    """Attitude parameters: loss aversion, risk aversion, ambiguity radius.

    Attributes
    ----------
    loss_aversion : float
        Kink steepness ``phi >= 0`` applied to shortfalls below the
        reference return.
    risk_aversion : float
        Variance penalty coefficient ``A`` (positive; floored at 1e-12).
    ambiguity_radius : float
        Wasserstein radius ``theta >= 0``; zero recovers the sample
        average model.
    reference_point : float
        Per-period reference return defining gains vs losses.
    """

    loss_aversion: float = 1.5
    risk_aversion: float = 1.5
    ambiguity_radius: float = 0.003
    reference_point: float = 0.001

    def __post_init__(self):
        for name in ("loss_aversion", "risk_aversion", "ambiguity_radius",
                     "reference_point"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValidationError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.loss_aversion < 0.0:
            raise ValidationError("loss_aversion must be non-negative")
        if self.risk_aversion < 0.0:
            raise ValidationError("risk_aversion must be positive")
        if self.risk_aversion < RISK_AVERSION_FLOOR:
            object.__setattr__(self, "risk_aversion", RISK_AVERSION_FLOOR)
        if self.ambiguity_radius < 0.0:
            raise ValidationError("ambiguity_radius must be non-negative")

    def with_dynamics(self, loss_aversion: float,
                      reference_point: float) -> "AversionProfile":
        return replace(self, loss_aversion=float(loss_aversion),
                       reference_point=float(reference_point))


@dataclass(frozen=True, eq=False)
class PortfolioSelection:
    """Long-only weights plus the binary support they live on.

    ``weights`` lie on the simplex, ``support_mask`` is 0/1 with exactly
    ``k`` ones, and every positive weight sits inside the support.
    """

    weights: np.ndarray
    support_mask: np.ndarray
    k: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        y = np.asarray(self.support_mask)
        if w.ndim != 1 or y.ndim != 1 or w.shape != y.shape:
            raise InvalidSelectionError("weights and support_mask must be "
                                        "1-d arrays of equal length")
        if not np.all(np.isfinite(w)):
            raise InvalidSelectionError("weights must be finite")
        if not np.all((y == 0) | (y == 1)):
            raise InvalidSelectionError("support_mask must be binary")
        if int(y.sum()) != int(self.k):
            raise InvalidSelectionError(
                f"support has {int(y.sum())} assets, expected k={self.k}"
            )
        if abs(w.sum() - 1.0) > 1e-9:
            raise InvalidSelectionError(
                f"weights must sum to one (got {w.sum()!r})"
            )
        if w.min() < -1e-9 or w.max() > 1.0 + 1e-9:
            raise InvalidSelectionError("weights must lie in [0, 1]")
        if np.any(w > y + 1e-9):
            raise InvalidSelectionError("positive weight outside the support")
        yi = y.astype(np.int8)
        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "support_mask", _readonly_int(yi))
        object.__setattr__(self, "k", int(self.k))

    @property
    def support(self) -> tuple:
        return tuple(int(i) for i in np.flatnonzero(self.support_mask))

    @classmethod
    def from_support(cls, weights: np.ndarray, support, n_assets: int,
                     ) -> "PortfolioSelection":
        """Build a selection from dense or support-local weights."""
        support = tuple(int(i) for i in support)
        w = np.asarray(weights, dtype=np.float64)
        if w.shape == (len(support),):
            full = np.zeros(n_assets)
            full[list(support)] = w
        elif w.shape == (n_assets,):
            full = w.copy()
        else:
            raise InvalidSelectionError("weights shape matches neither the "
                                        "support nor the asset universe")
        y = np.zeros(n_assets, dtype=np.int8)
        y[list(support)] = 1
        return cls(full, y, len(support))


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


def _readonly_int(a: np.ndarray) -> np.ndarray:
    out = np.array(a, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class DualCertificate:
    """Closed-form dual solution certifying the worst-case expectation.

    ``lam`` is the transport-cost multiplier (the utility's Lipschitz
    modulus under the l1 ground metric), ``nu`` the per-scenario bounds,
    and ``value`` the certified worst-case expected utility
    ``-mean(nu) - lam * theta``.
    """

    lam: float
    nu: np.ndarray
    value: float

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValidationError("multiplier lam must be non-negative")
        object.__setattr__(self, "nu", _readonly(np.asarray(self.nu)))


@dataclass(frozen=True, eq=False)
class DrpInstance:
    """One robust selection problem: scenarios, covariance, profile, k."""

    scenarios: ScenarioSet
    covariance: CovarianceEstimate
    profile: AversionProfile
    k: int

    def __post_init__(self):
        n = self.scenarios.n_assets
        if self.covariance.n_assets != n:
            raise DimensionMismatchError(
                f"covariance is {self.covariance.n_assets}x"
                f"{self.covariance.n_assets} but there are {n} assets"
            )
        if not (1 <= int(self.k) <= n):
            raise ValidationError(f"k must be in 1..{n}, got {self.k}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def n_assets(self) -> int:
        return self.scenarios.n_assets

    @property
    def n_scenarios(self) -> int:
        return self.scenarios.n_periods

    @classmethod
    def from_scenarios(cls, scenarios: ScenarioSet, profile: AversionProfile,
                       k: int) -> "DrpInstance":
        return cls(scenarios, sample_covariance(scenarios), profile, k)


def piecewise_utility(weights, profile: AversionProfile, scenario) -> float:
    """Loss-averse utility of one scenario's portfolio return.

    ``h(r) = r - phi * max(ref - r, 0)``; equivalently the minimum of the
    two affine pieces ``r`` and ``(1 + phi) * r - phi * ref``.
    """
    w = np.asarray(weights, dtype=np.float64)
    xi = np.asarray(scenario, dtype=np.float64)
    if w.shape != xi.shape or w.ndim != 1:
        raise DimensionMismatchError(
            f"weights {w.shape} and scenario {xi.shape} do not align"
        )
    r = float(w @ xi)
    return r - profile.loss_aversion * max(profile.reference_point - r, 0.0)


def _nu_terms(portfolio_returns: np.ndarray, profile: AversionProfile,
              *, stay_branch_sign: float = -1.0) -> np.ndarray:
    """Per-scenario dual bounds ``nu_i = max(phi*ref - (1+phi)*r, sign*r)``.

    The production sign is -1 (``nu_i >= -r_i``).  The +1 variant is kept
    reachable so regression tests can demonstrate that it destroys the
    zero-radius collapse to the sample average.
    """
    phi = profile.loss_aversion
    r = portfolio_returns
    return np.maximum(phi * profile.reference_point - (1.0 + phi) * r,
                      stay_branch_sign * r)


def scenario_utilities(returns_matrix: np.ndarray,
                       weights: np.ndarray,
                       profile: AversionProfile) -> np.ndarray:
    """Vector of per-scenario utilities ``h(r_i)`` (computed as ``-nu_i``)."""
    r = np.asarray(returns_matrix, dtype=np.float64) @ np.asarray(
        weights, dtype=np.float64)
    return -_nu_terms(r, profile)


def _check_simplex_weights(weights, n_assets: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n_assets,):
        raise InvalidWeightsError(
            f"expected {n_assets} weights, got shape {w.shape}"
        )
    if not np.all(np.isfinite(w)):
        raise InvalidWeightsError("weights must be finite")
    if abs(w.sum() - 1.0) > 1e-9 or w.min() < -1e-9:
        raise InvalidWeightsError("weights must lie on the simplex")
    return w


def dual_certificate(inst: DrpInstance, weights) -> DualCertificate:
    """Closed-form dual optimum for fixed weights.

    ``lam = (1 + phi) * max_j |x_j|``, ``nu_i = -h(r_i)``; the certified
    value ``-mean(nu) - lam * theta`` equals the worst-case expected
    utility over the ambiguity ball.
    """
    w = _check_simplex_weights(weights, inst.n_assets)
    prof = inst.profile
    lam = (1.0 + prof.loss_aversion) * float(np.abs(w).max())
    r = inst.scenarios.returns @ w
    nu = _nu_terms(r, prof)
    value = -float(np.mean(nu)) - lam * prof.ambiguity_radius
    return DualCertificate(lam=lam, nu=nu, value=value)


def evaluate_objective(inst: DrpInstance, selection: PortfolioSelection,
                       ) -> float:
    """Full robust objective of a feasible selection.

    worst-case expected utility minus the variance penalty:
    ``mean(h) - theta * (1 + phi) * max_j x_j - (A / 2) * x' Sigma x``.
    Strictly decreasing in ``theta`` (some weight is always positive) and
    non-increasing in ``phi``.
    """
    if selection.weights.shape[0] != inst.n_assets:
        raise InvalidSelectionError(
            f"selection covers {selection.weights.shape[0]} assets, "
            f"instance has {inst.n_assets}"
        )
    if selection.k != inst.k:
        raise InvalidSelectionError(
            f"selection cardinality {selection.k} != instance k {inst.k}"
        )
    prof = inst.profile
    w = selection.weights
    r = inst.scenarios.returns @ w
    nu = _nu_terms(r, prof)
    lam = (1.0 + prof.loss_aversion) * float(np.abs(w).max())
    risk = 0.5 * prof.risk_aversion * float(w @ inst.covariance.matrix @ w)
    return -float(np.mean(nu)) - prof.ambiguity_radius * lam - risk


@dataclass(frozen=True, eq=False)
class MixedIntegerQuadraticProgram:
    """Explicit MIQP statement of the cardinality-constrained problem.

    Variables are stacked ``z = [x (N), y (N), nu (S), lam]``; the sense is
    maximization of ``linear @ z + z @ quadratic @ z``.  Inequalities are
    ``row @ z <= rhs``.  This is a declarative description for export or
    for handing to an external MIP solver, not something solved here.
    """

    n_assets: int
    n_scenarios: int
    k: int
    linear: np.ndarray
    quadratic: np.ndarray
    equalities: tuple          # (coeffs, rhs, label)
    inequalities: tuple        # (coeffs, rhs, label)
    bounds: tuple              # (lo, hi) per variable
    integer_indices: tuple
    variable_names: tuple

    @property
    def n_variables(self) -> int:
        return 2 * self.n_assets + self.n_scenarios + 1

    def pack(self, x, y, nu, lam) -> np.ndarray:
        return np.concatenate([np.asarray(x, dtype=np.float64).ravel(),
                               np.asarray(y, dtype=np.float64).ravel(),
                               np.asarray(nu, dtype=np.float64).ravel(),
                               [float(lam)]])

    def objective_value(self, x, y, nu, lam) -> float:
        z = self.pack(x, y, nu, lam)
        return float(self.linear @ z + z @ self.quadratic @ z)


def build_miqp(inst: DrpInstance) -> MixedIntegerQuadraticProgram:
    """Assemble the exact mixed-integer statement of the instance.

    Objective (maximize): ``-(1/S) sum(nu) - theta*lam - (A/2) x'Sigma x``.
    Constraints: simplex and cardinality equalities, linking ``x_j <= y_j``,
    two dual-feasibility rows per scenario, the box ``|x_j| <= lam/(1+phi)``
    and ``lam >= 0``; ``x, y`` live in ``[0, 1]`` with ``y`` integral.
    """
    n, s, k = inst.n_assets, inst.n_scenarios, inst.k
    prof = inst.profile
    phi = prof.loss_aversion
    nv = 2 * n + s + 1
    ix = np.arange(0, n)
    iy = np.arange(n, 2 * n)
    inu = np.arange(2 * n, 2 * n + s)
    ilam = nv - 1

    linear = np.zeros(nv)
    linear[inu] = -1.0 / s
    linear[ilam] = -prof.ambiguity_radius
    quadratic = np.zeros((nv, nv))
    quadratic[:n, :n] = -0.5 * prof.risk_aversion * inst.covariance.matrix

    eqs = []
    row = np.zeros(nv)
    row[ix] = 1.0
    eqs.append((row, 1.0, "simplex"))
    row = np.zeros(nv)
    row[iy] = 1.0
    eqs.append((row, float(k), "cardinality"))

    ineqs = []
    for j in range(n):
        row = np.zeros(nv)
        row[ix[j]] = 1.0
        row[iy[j]] = -1.0
        ineqs.append((row, 0.0, f"linking[{j}]"))
    xi = inst.scenarios.returns
    for i in range(s):
        row = np.zeros(nv)
        row[ix] = -(1.0 + phi) * xi[i]
        row[inu[i]] = -1.0
        ineqs.append((row, -phi * prof.reference_point, f"dual_loss[{i}]"))
    for i in range(s):
        row = np.zeros(nv)
        row[ix] = -xi[i]
        row[inu[i]] = -1.0
        ineqs.append((row, 0.0, f"dual_stay[{i}]"))
    for j in range(n):
        row = np.zeros(nv)
        row[ix[j]] = 1.0
        row[ilam] = -1.0 / (1.0 + phi)
        ineqs.append((row, 0.0, f"box_upper[{j}]"))
    for j in range(n):
        row = np.zeros(nv)
        row[ix[j]] = -1.0
        row[ilam] = -1.0 / (1.0 + phi)
        ineqs.append((row, 0.0, f"box_lower[{j}]"))
    row = np.zeros(nv)
    row[ilam] = -1.0
    ineqs.append((row, 0.0, "lam_nonneg"))

    bounds = [(0.0, 1.0)] * n + [(0.0, 1.0)] * n \
        + [(-np.inf, np.inf)] * s + [(0.0, np.inf)]
    names = tuple([f"x[{j}]" for j in range(n)]
                  + [f"y[{j}]" for j in range(n)]
                  + [f"nu[{i}]" for i in range(s)]
                  + ["lam"])
    return MixedIntegerQuadraticProgram(
        n_assets=n, n_scenarios=s, k=k,
        linear=linear, quadratic=quadratic,
        equalities=tuple(eqs), inequalities=tuple(ineqs),
        bounds=tuple(bounds), integer_indices=tuple(int(j) for j in iy),
        variable_names=names,
    )
