"""Convex QP machinery for a fixed support.

Once the binary support is frozen the robust selection problem becomes a
convex QP in the stacked variable ``z = [x (k), nu (S), lam]``:

    maximize  -(1/S) sum(nu) - theta * lam - (A/2) z' Q z
    s.t.      sum(x) = 1
              phi*ref - (1+phi) * xi_i' x - nu_i <= 0     (loss branch)
              -xi_i' x - nu_i <= 0                        (stay branch)
              |x_j| <= lam / (1 + phi),  lam >= 0
              0 <= x_j <= 1

where ``Q`` is the covariance of the supported assets padded with zeros.
Two solvers are provided: a dense Mehrotra predictor-corrector
interior-point method (the workhorse; it delivers machine-accurate KKT
residuals on these small dense systems where textbook active-set updates
tend to cycle on the degenerate kink vertices), and a quadratic-penalty /
log-barrier continuation method used by the hybrid search.

When ``theta == 0`` the optimal face is unbounded in ``lam`` (the
objective no longer references it), so both solvers eliminate ``lam`` and
the box rows from the numeric system and restore ``lam = (1+phi) max x``
afterwards with zero multipliers on the eliminated rows; every optimality
residual is preserved exactly.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from .core import DrpInstance
from .exceptions import (
    BarrierDomainError,
    CardinalityMismatchError,
    DimensionMismatchError,
    MaxIterationsError,
    NegativeMultiplierError,
    PenaltyConfigError,
    ValidationError,
)

__all__ = [
    "SubproblemData",
    "QpSolution",
    "KktReport",
    "PenaltyState",
    "PenaltySolution",
    "assemble_subproblem",
    "solve_qp",
    "kkt_residual",
    "penalty_value",
    "penalty_gradient",
    "penalty_solve",
    "minimize_qp_on_simplex",
    "collect_kkt_reports",
]


# ---------------------------------------------------------------------------
# subproblem assembly


@dataclass(frozen=True, eq=False)
class SubproblemData:
    """Dense statement of the fixed-support QP.

    Inequalities are stored as ``ineq_matrix @ z <= ineq_rhs`` in block
    order: loss-branch rows (S), stay-branch rows (S), box upper (k), box
    lower (k), ``lam >= 0``, ``x >= 0`` (k), ``x <= 1`` (k).
    """

    support: tuple
    scenario_returns: np.ndarray      # (S, k) restricted to the support
    sigma: np.ndarray                 # (k, k)
    loss_aversion: float
    risk_aversion: float
    ambiguity_radius: float
    reference_point: float
    quad: np.ndarray                  # (n, n), covariance padded with zeros
    linear_max: np.ndarray            # (n,) gradient of the linear part
    eq_matrix: np.ndarray             # (1, n)
    eq_rhs: np.ndarray                # (1,)
    ineq_matrix: np.ndarray           # (l, n)
    ineq_rhs: np.ndarray              # (l,)
    row_labels: tuple

    @property
    def k(self) -> int:
        return len(self.support)

    @property
    def n_scenarios(self) -> int:
        return self.scenario_returns.shape[0]

    @property
    def n_vars(self) -> int:
        return self.k + self.n_scenarios + 1

    @property
    def n_rows(self) -> int:
        return self.ineq_matrix.shape[0]

    # row block slices, in storage order
    @property
    def rows_dual_loss(self) -> slice:
        return slice(0, self.n_scenarios)

    @property
    def rows_dual_stay(self) -> slice:
        return slice(self.n_scenarios, 2 * self.n_scenarios)

    @property
    def rows_box_upper(self) -> slice:
        s2 = 2 * self.n_scenarios
        return slice(s2, s2 + self.k)

    @property
    def rows_box_lower(self) -> slice:
        s2 = 2 * self.n_scenarios
        return slice(s2 + self.k, s2 + 2 * self.k)

    @property
    def row_lam(self) -> int:
        return 2 * self.n_scenarios + 2 * self.k

    @property
    def rows_x_lower(self) -> slice:
        base = self.row_lam + 1
        return slice(base, base + self.k)

    @property
    def rows_x_upper(self) -> slice:
        base = self.row_lam + 1 + self.k
        return slice(base, base + self.k)

    def selector_x(self) -> np.ndarray:
        v = np.zeros(self.n_vars)
        v[:self.k] = 1.0
        return v

    def selector_nu(self) -> np.ndarray:
        v = np.zeros(self.n_vars)
        v[self.k:self.k + self.n_scenarios] = 1.0
        return v

    def selector_lam(self) -> np.ndarray:
        v = np.zeros(self.n_vars)
        v[-1] = 1.0
        return v

    def objective(self, z: np.ndarray) -> float:
        """Maximized objective value at a stacked point ``z``."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.n_vars,):
            raise DimensionMismatchError(
                f"z has shape {z.shape}, expected ({self.n_vars},)"
            )
        return float(self.linear_max @ z
                     - 0.5 * self.risk_aversion * (z @ self.quad @ z))

    def split(self, z: np.ndarray):
        """Unstack ``z`` into ``(x, nu, lam)``."""
        k, s = self.k, self.n_scenarios
        return z[:k], z[k:k + s], float(z[-1])


def _normalize_support(inst: DrpInstance, support) -> tuple:
    arr = np.asarray(support)
    n = inst.n_assets
    if arr.ndim != 1:
        raise CardinalityMismatchError("support must be one-dimensional")
    if arr.shape[0] == n and np.all((arr == 0) | (arr == 1)):
        idx = np.flatnonzero(arr)
    else:
        idx = arr.astype(int)
        if np.any(idx < 0) or np.any(idx >= n):
            raise CardinalityMismatchError(
                f"support indices outside 0..{n - 1}"
            )
        if len(set(int(i) for i in idx)) != len(idx):
            raise CardinalityMismatchError("support indices must be unique")
    if len(idx) != inst.k:
        raise CardinalityMismatchError(
            f"support has {len(idx)} assets, instance requires k={inst.k}"
        )
    return tuple(sorted(int(i) for i in idx))


def assemble_subproblem(inst: DrpInstance, support) -> SubproblemData:
    """Restrict the instance to a support and build the dense QP blocks.

    ``support`` may be a length-N binary mask or a list of asset indices;
    its cardinality must equal the instance's ``k``.
    """
    support = _normalize_support(inst, support)
    k = len(support)
    s = inst.n_scenarios
    prof = inst.profile
    phi = prof.loss_aversion
    xi = inst.scenarios.returns[:, list(support)]
    sigma = inst.covariance.restrict(support)
    n = k + s + 1

    quad = np.zeros((n, n))
    quad[:k, :k] = sigma
    linear = np.zeros(n)
    linear[k:k + s] = -1.0 / s
    linear[-1] = -prof.ambiguity_radius

    eq = np.zeros((1, n))
    eq[0, :k] = 1.0
    eq_rhs = np.array([1.0])

    l_total = 2 * s + 4 * k + 1
    G = np.zeros((l_total, n))
    h = np.zeros(l_total)
    labels = []
    for i in range(s):
        G[i, :k] = -(1.0 + phi) * xi[i]
        G[i, k + i] = -1.0
        h[i] = -phi * prof.reference_point
        labels.append(f"dual_loss[{i}]")
    for i in range(s):
        G[s + i, :k] = -xi[i]
        G[s + i, k + i] = -1.0
        labels.append(f"dual_stay[{i}]")
    base = 2 * s
    for j in range(k):
        G[base + j, j] = 1.0
        G[base + j, -1] = -1.0 / (1.0 + phi)
        labels.append(f"box_upper[{j}]")
    for j in range(k):
        G[base + k + j, j] = -1.0
        G[base + k + j, -1] = -1.0 / (1.0 + phi)
        labels.append(f"box_lower[{j}]")
    G[base + 2 * k, -1] = -1.0
    labels.append("lam_nonneg")
    base = base + 2 * k + 1
    for j in range(k):
        G[base + j, j] = -1.0
        labels.append(f"x_lower[{j}]")
    for j in range(k):
        G[base + k + j, j] = 1.0
        h[base + k + j] = 1.0
        labels.append(f"x_upper[{j}]")

    return SubproblemData(
        support=support, scenario_returns=xi, sigma=sigma,
        loss_aversion=phi, risk_aversion=prof.risk_aversion,
        ambiguity_radius=prof.ambiguity_radius,
        reference_point=prof.reference_point,
        quad=quad, linear_max=linear,
        eq_matrix=eq, eq_rhs=eq_rhs,
        ineq_matrix=G, ineq_rhs=h, row_labels=tuple(labels),
    )


# ---------------------------------------------------------------------------
# KKT reporting


@dataclass(frozen=True)
class KktReport:
    """Max-norm optimality residuals of a candidate primal-dual point."""

    stationarity: float
    primal_infeasibility: float
    complementarity: float

    @property
    def max_residual(self) -> float:
        return max(self.stationarity, self.primal_infeasibility,
                   self.complementarity)


_KKT_SINK = None


@contextlib.contextmanager
def collect_kkt_reports():
    """Collect the KktReport of every ``solve_qp`` call in the block."""
    global _KKT_SINK
    prev = _KKT_SINK
    _KKT_SINK = sink = []
    try:
        yield sink
    finally:
        _KKT_SINK = prev


def kkt_residual(sp: SubproblemData, z, mu, omega) -> KktReport:
    """First-order residuals for the maximization form of the subproblem.

    Stationarity: ``grad f(z) - E' mu - G' omega`` with
    ``grad f = linear - A * Q z`` and ``omega >= 0`` paired with rows
    ``G z <= h``.  Complementarity is ``max_i |omega_i * (G z - h)_i|``.
    """
    z = np.asarray(z, dtype=np.float64)
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    omega = np.asarray(omega, dtype=np.float64)
    if z.shape != (sp.n_vars,):
        raise DimensionMismatchError(f"z shape {z.shape} != ({sp.n_vars},)")
    if mu.shape != (sp.eq_matrix.shape[0],):
        raise DimensionMismatchError("one multiplier per equality row")
    if omega.shape != (sp.n_rows,):
        raise DimensionMismatchError(
            f"omega shape {omega.shape} != ({sp.n_rows},)"
        )
    if omega.min(initial=0.0) < 0.0:
        raise NegativeMultiplierError(
            "inequality multipliers must be non-negative"
        )
    grad = sp.linear_max - sp.risk_aversion * (sp.quad @ z)
    stat = grad - sp.eq_matrix.T @ mu - sp.ineq_matrix.T @ omega
    slack = sp.ineq_matrix @ z - sp.ineq_rhs
    primal = max(float(np.abs(sp.eq_matrix @ z - sp.eq_rhs).max()),
                 float(np.maximum(slack, 0.0).max()))
    comp = float(np.abs(omega * slack).max())
    return KktReport(stationarity=float(np.abs(stat).max()),
                     primal_infeasibility=primal,
                     complementarity=comp)


# ---------------------------------------------------------------------------
# dense Mehrotra predictor-corrector interior-point core


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0.0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _solve_ipm(P, c, E, b, G, h, z0, tol=1e-10, max_iter=120):
    """Minimize ``0.5 z'Pz + c'z`` s.t. ``Ez = b``, ``Gz <= h``.

    Infeasible-start Mehrotra predictor-corrector on the slack form
    ``Gz + s = h, s > 0``.  Returns the best iterate found as
    ``(z, mu, omega, slacks, iterations, residual)``; raises
    MaxIterationsError if it never meets ``tol``.
    """
    n = c.size
    m = E.shape[0]
    l = G.shape[0]
    z = np.array(z0, dtype=np.float64)
    s_raw = h - G @ z
    shift = max(0.0, -1.5 * float(s_raw.min())) + 0.1 * max(
        1.0, float(np.abs(h).max()))
    s = s_raw + shift
    omega = np.ones(l)
    mu = np.zeros(m)
    sc_d = 1.0 + float(np.abs(c).max())
    sc_p = 1.0 + float(np.abs(h).max()) + (float(np.abs(b).max()) if m else 0.0)
    delta = 1e-13 * (1.0 + float(np.abs(P).max()))
    eye_n = np.eye(n)
    best = None

    for it in range(1, max_iter + 1):
        r_d = P @ z + c + G.T @ omega + (E.T @ mu if m else 0.0)
        r_p = E @ z - b if m else np.zeros(0)
        r_g = G @ z + s - h
        gap = float(s @ omega) / l
        sc_g = 1.0 + abs(float(c @ z))
        res = max(float(np.abs(r_d).max()) / sc_d,
                  (float(np.abs(r_p).max()) if m else 0.0) / sc_p,
                  float(np.abs(r_g).max()) / sc_p,
                  gap / sc_g)
        if best is None or res < best[-1]:
            best = (z.copy(), mu.copy(), omega.copy(), s.copy(), it, res)
        if res <= tol:
            return best

        d = omega / s
        M = P + (G.T * d) @ G + delta * eye_n
        if m:
            K = np.block([[M, E.T], [E, -delta * np.eye(m)]])
        else:
            K = M

        def newton(r_c):
            t = (-r_c + omega * r_g) / s
            rhs_top = -r_d - G.T @ t
            if m:
                rhs = np.concatenate([rhs_top, -r_p])
            else:
                rhs = rhs_top
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.solve(K + 1e-9 * np.eye(K.shape[0]), rhs)
            dz = sol[:n]
            dmu = sol[n:] if m else np.zeros(0)
            ds = -r_g - G @ dz
            domega = (-r_c - omega * ds) / s
            return dz, dmu, ds, domega

        # predictor
        dz_a, dmu_a, ds_a, dom_a = newton(s * omega)
        alpha_a = min(1.0, _max_step(s, ds_a), _max_step(omega, dom_a))
        gap_a = float((s + alpha_a * ds_a) @ (omega + alpha_a * dom_a)) / l
        sigma = min(1.0, max(1e-8, (max(gap_a, 0.0) / gap) ** 3))
        # corrector
        r_c = s * omega + ds_a * dom_a - sigma * gap
        dz, dmu, ds, dom = newton(r_c)
        alpha = min(1.0,
                    0.995 * _max_step(s, ds),
                    0.995 * _max_step(omega, dom))
        z += alpha * dz
        s += alpha * ds
        omega += alpha * dom
        if m:
            mu += alpha * dmu

    if best is not None and best[-1] <= tol:
        return best
    raise MaxIterationsError(
        f"interior-point method stalled at residual {best[-1]:.3e} "
        f"after {max_iter} iterations (target {tol:.1e})"
    )


def minimize_qp_on_simplex(P, c, tol=1e-10, max_iter=120) -> np.ndarray:
    """Minimize ``0.5 x'Px + c'x`` over the probability simplex."""
    P = np.asarray(P, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    n = c.size
    if P.shape != (n, n):
        raise DimensionMismatchError("P must be n x n")
    if n == 1:
        return np.array([1.0])
    # rescale the objective so extreme coefficient magnitudes (huge risk
    # aversion, say) do not wreck the iteration's conditioning; the
    # argmin is invariant under a positive scalar
    scale = max(float(np.abs(P).max()), float(np.abs(c).max()), 1.0)
    P = P / scale
    c = c / scale
    E = np.ones((1, n))
    b = np.array([1.0])
    G = -np.eye(n)
    h = np.zeros(n)
    z0 = np.full(n, 1.0 / n)
    z, _, _, _, _, _ = _solve_ipm(P, c, E, b, G, h, z0,
                                  tol=tol, max_iter=max_iter)
    return z


# ---------------------------------------------------------------------------
# fixed-support QP solve


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Primal-dual solution of one fixed-support QP."""

    z: np.ndarray
    x: np.ndarray
    nu: np.ndarray
    lam: float
    objective: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    iterations: int
    report: KktReport


def _default_start(sp: SubproblemData) -> np.ndarray:
    k, s = sp.k, sp.n_scenarios
    phi = sp.loss_aversion
    x0 = np.full(k, 1.0 / k)
    r0 = sp.scenario_returns @ x0
    nu0 = np.maximum(phi * sp.reference_point - (1.0 + phi) * r0, -r0) + 1.0
    lam0 = (1.0 + phi) / k + 1.0
    return np.concatenate([x0, nu0, [lam0]])


def solve_qp(sp: SubproblemData, tol: float = 1e-8,
             max_iter: int = 120) -> QpSolution:
    """Solve the fixed-support QP to interior-point accuracy.

    Returns the stacked optimum with multipliers aligned to *all*
    constraint blocks of ``sp`` (rows eliminated as redundant carry zero
    multipliers).  The ``x <= 1`` rows are implied by the simplex with
    ``x >= 0`` and never enter the numeric solve.
    """
    if tol <= 0.0:
        raise ValidationError("tol must be positive")
    k, s = sp.k, sp.n_scenarios
    n_full = sp.n_vars
    theta = sp.ambiguity_radius
    p_full = sp.risk_aversion * sp.quad
    c_full = -sp.linear_max
    z0_full = _default_start(sp)

    if theta == 0.0:
        cols = np.arange(k + s)
        rows = np.r_[np.arange(0, 2 * s),
                     np.arange(sp.rows_x_lower.start, sp.rows_x_lower.stop)]
    else:
        cols = np.arange(n_full)
        rows = np.arange(0, sp.rows_x_upper.start)

    P = p_full[np.ix_(cols, cols)]
    c = c_full[cols]
    E = sp.eq_matrix[:, cols]
    b = sp.eq_rhs
    G = sp.ineq_matrix[np.ix_(rows, cols)]
    h = sp.ineq_rhs[rows]
    inner_tol = max(min(tol * 1e-2, 1e-10), 1e-12)

    z_red, mu, om_red, _, iters, _ = _solve_ipm(
        P, c, E, b, G, h, z0_full[cols], tol=inner_tol, max_iter=max_iter)

    z = np.zeros(n_full)
    z[cols] = z_red
    omega = np.zeros(sp.n_rows)
    omega[rows] = np.maximum(om_red, 0.0)
    if theta == 0.0:
        # optimal lam is any value on the unbounded face; pin the smallest
        # dual-feasible one so the certificate invariant holds with slack 0
        z[-1] = (1.0 + sp.loss_aversion) * max(float(z[:k].max()), 0.0)

    report = kkt_residual(sp, z, mu, omega)
    if report.max_residual > tol:
        raise MaxIterationsError(
            f"QP residual {report.max_residual:.3e} exceeds tol {tol:.1e} "
            f"on support {sp.support}"
        )
    if _KKT_SINK is not None:
        _KKT_SINK.append(report)
    x, nu, lam = sp.split(z)
    return QpSolution(z=z, x=x.copy(), nu=nu.copy(), lam=lam,
                      objective=sp.objective(z), eq_multipliers=mu,
                      ineq_multipliers=omega, iterations=iters,
                      report=report)


# ---------------------------------------------------------------------------
# quadratic-penalty / log-barrier continuation


@dataclass(frozen=True, eq=False)
class PenaltyState:
    """A point of the penalty merit: primal ``z``, slack ``g > 0``, ``tau``."""

    z: np.ndarray
    slack: np.ndarray
    tau: float
    decay: float = 0.25

    def __post_init__(self):
        if self.tau <= 0.0:
            raise PenaltyConfigError("tau must be positive")
        if not (0.0 < self.decay < 1.0):
            raise PenaltyConfigError("decay must lie strictly in (0, 1)")


def _merit_terms(sp: SubproblemData, z: np.ndarray):
    q = float(-sp.linear_max @ z
              + 0.5 * sp.risk_aversion * (z @ sp.quad @ z))
    r_eq = sp.eq_matrix @ z - sp.eq_rhs
    r_in = sp.ineq_matrix @ z - sp.ineq_rhs
    return q, r_eq, r_in


def penalty_value(sp: SubproblemData, state: PenaltyState) -> float:
    """Merit minimized by the continuation method.

    Negated objective plus quadratic penalties on the equality residual
    and on ``G z - h + g``, minus a log barrier keeping ``g`` positive::

        q(z) + (1/2 tau) ||Ez - b||^2 + (1/2 tau) ||Gz - h + g||^2
             - tau * sum(log g)
    """
    z = np.asarray(state.z, dtype=np.float64)
    g = np.asarray(state.slack, dtype=np.float64)
    if z.shape != (sp.n_vars,) or g.shape != (sp.n_rows,):
        raise DimensionMismatchError("state does not match the subproblem")
    if g.min() <= 0.0:
        raise BarrierDomainError("slack must be strictly positive")
    q, r_eq, r_in = _merit_terms(sp, z)
    t = state.tau
    return (q
            + 0.5 / t * float(r_eq @ r_eq)
            + 0.5 / t * float((r_in + g) @ (r_in + g))
            - t * float(np.sum(np.log(g))))


def penalty_gradient(sp: SubproblemData, state: PenaltyState) -> np.ndarray:
    """Exact gradient of ``penalty_value`` stacked as ``[d/dz, d/dg]``."""
    z = np.asarray(state.z, dtype=np.float64)
    g = np.asarray(state.slack, dtype=np.float64)
    if z.shape != (sp.n_vars,) or g.shape != (sp.n_rows,):
        raise DimensionMismatchError("state does not match the subproblem")
    if g.min() <= 0.0:
        raise BarrierDomainError("slack must be strictly positive")
    t = state.tau
    r_eq = sp.eq_matrix @ z - sp.eq_rhs
    r_in = sp.ineq_matrix @ z - sp.ineq_rhs + g
    grad_z = (-sp.linear_max + sp.risk_aversion * (sp.quad @ z)
              + sp.eq_matrix.T @ r_eq / t
              + sp.ineq_matrix.T @ r_in / t)
    grad_g = r_in / t - t / g
    return np.concatenate([grad_z, grad_g])


@dataclass(frozen=True, eq=False)
class PenaltySolution:
    z: np.ndarray
    x: np.ndarray
    nu: np.ndarray
    lam: float
    objective: float
    slack: np.ndarray
    tau: float
    merit_trace: tuple
    outer_iterations: int
    inner_iterations: int


def _optimal_slack(r_in: np.ndarray, tau: float) -> np.ndarray:
    # per-coordinate minimizer of (r + g)^2/(2 tau) - tau log g over g > 0
    return 0.5 * (-r_in + np.sqrt(r_in * r_in + 4.0 * tau * tau))


def _penalty_newton(P, c, E, b, G, h, z, tau, inner_tol, max_inner):
    """Damped Newton on the merit at fixed tau; slack block eliminated."""
    m_eq = E.shape[0]
    delta = 1e-12 * (1.0 + float(np.abs(P).max()))
    eye_n = np.eye(z.size)
    r_in = G @ z - h
    g = _optimal_slack(r_in, tau)
    it = 0

    def merit(zv, gv):
        q = float(0.5 * zv @ P @ zv + c @ zv)
        re = E @ zv - b
        ri = G @ zv - h + gv
        return (q + 0.5 / tau * float(re @ re) + 0.5 / tau * float(ri @ ri)
                - tau * float(np.sum(np.log(gv))))

    val = merit(z, g)
    for it in range(1, max_inner + 1):
        r_eq = E @ z - b
        r_ing = G @ z - h + g
        gz = P @ z + c + E.T @ r_eq / tau + G.T @ r_ing / tau
        gg = r_ing / tau - tau / g
        if max(float(np.abs(gz).max()), float(np.abs(gg).max())) \
                <= inner_tol * (1.0 + 1.0 / tau):
            break
        g2 = g * g
        w_row = tau / (g2 + tau * tau)
        w2 = g2 / (g2 + tau * tau)
        schur = P + (E.T @ E) / tau + (G.T * w_row) @ G + delta * eye_n
        rhs = -gz + G.T @ (w2 * gg)
        try:
            dz = np.linalg.solve(schur, rhs)
        except np.linalg.LinAlgError:
            dz = np.linalg.solve(schur + 1e-8 * eye_n, rhs)
        dg = -(gg + (G @ dz) / tau) * (tau * g2 / (g2 + tau * tau))
        slope = float(gz @ dz + gg @ dg)
        alpha = min(1.0, 0.99 * _max_step(g, dg))
        for _ in range(60):
            z_try = z + alpha * dz
            g_try = g + alpha * dg
            if g_try.min() > 0.0:
                val_try = merit(z_try, g_try)
                if val_try <= val + 1e-4 * alpha * slope:
                    break
            alpha *= 0.5
        else:
            break
        z, g, val = z_try, g_try, val_try
    return z, g, val, it


def penalty_solve(sp: SubproblemData, tau0: float = 1.0, decay: float = 0.25,
                  step_tol: float = 1e-6, max_outer: int = 60,
                  inner_tol: float = 1e-9,
                  max_inner: int = 80) -> PenaltySolution:
    """Continuation solve: shrink ``tau`` until the minimizer stops moving.

    Each outer round minimizes the merit at fixed ``tau`` by damped Newton
    (slack block eliminated in closed form), then sets ``tau <- decay*tau``;
    stops when consecutive minimizers differ by at most ``step_tol``.
    """
    if tau0 <= 0.0:
        raise PenaltyConfigError("tau0 must be positive")
    if not (0.0 < decay < 1.0):
        raise PenaltyConfigError("decay must lie strictly in (0, 1)")
    if step_tol <= 0.0:
        raise PenaltyConfigError("step_tol must be positive")

    k, s = sp.k, sp.n_scenarios
    n_full = sp.n_vars
    theta = sp.ambiguity_radius
    if theta == 0.0:
        # lam is absent from the objective: along growing lam the box slack
        # grows and -tau*log(g) sinks without bound, so eliminate it
        cols = np.arange(k + s)
        rows = np.r_[np.arange(0, 2 * s),
                     np.arange(sp.rows_x_lower.start, sp.rows_x_upper.stop)]
    else:
        cols = np.arange(n_full)
        rows = np.arange(sp.n_rows)

    P = (sp.risk_aversion * sp.quad)[np.ix_(cols, cols)]
    c = (-sp.linear_max)[cols]
    E = sp.eq_matrix[:, cols]
    b = sp.eq_rhs
    G = sp.ineq_matrix[np.ix_(rows, cols)]
    h = sp.ineq_rhs[rows]

    z = _default_start(sp)[cols]
    tau = tau0
    trace = []
    inner_total = 0
    prev = None
    converged = False
    outer = 0
    g = None
    for outer in range(1, max_outer + 1):
        z, g, val, inner = _penalty_newton(P, c, E, b, G, h, z, tau,
                                           inner_tol, max_inner)
        inner_total += inner
        trace.append(val)
        if prev is not None and float(np.linalg.norm(z - prev)) <= step_tol:
            converged = True
            break
        prev = z.copy()
        tau *= decay
    if not converged:
        raise MaxIterationsError(
            f"penalty continuation did not settle within {max_outer} rounds"
        )

    z_full = np.zeros(n_full)
    z_full[cols] = z
    if theta == 0.0:
        z_full[-1] = (1.0 + sp.loss_aversion) * max(float(z_full[:k].max()),
                                                    0.0)
    slack_full = _optimal_slack(sp.ineq_matrix @ z_full - sp.ineq_rhs, tau)
    x, nu, lam = sp.split(z_full)
    return PenaltySolution(z=z_full, x=x.copy(), nu=nu.copy(), lam=lam,
                           objective=sp.objective(z_full), slack=slack_full,
                           tau=tau, merit_trace=tuple(trace),
                           outer_iterations=outer,
                           inner_iterations=inner_total)
