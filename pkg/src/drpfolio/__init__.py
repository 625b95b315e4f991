"""Distributionally robust portfolio selection under loss aversion.

The optimizer picks at most ``k`` assets and long-only weights that
maximize worst-case expected utility over a Wasserstein ball of return
distributions centered at the observed scenarios, minus a variance
penalty.  The worst case is priced exactly through a finite dual
reformulation, so every candidate subset reduces to a convex QP; subset
search is handled by exhaustive enumeration, tabu search, or a hybrid
that polishes with a penalty-barrier method.
"""
from .backtest import (
    BENCHMARK_NAME,
    BacktestResult,
    MetricsReport,
    WealthPath,
    compute_metrics,
    metrics_table,
    run_backtest,
)
from .core import (
    AversionProfile,
    DrpInstance,
    DualCertificate,
    PortfolioSelection,
    build_miqp,
    dual_certificate,
    evaluate_objective,
    piecewise_utility,
    scenario_utilities,
)
from .data import (
    CovarianceEstimate,
    ScenarioSet,
    WindowPlan,
    load_returns,
    rolling_windows,
    sample_covariance,
    save_returns,
)
from .dynamics import InvestorState, InvestorType, update_aversion
from .estimators import (
    DistributionallyRobust,
    EqualWeight,
    MarketValueWeight,
    MeanVariance,
    RiskParity,
)
from .exceptions import (
    DataError,
    DrpfolioError,
    MetricError,
    SolverError,
    ValidationError,
)
from .qp import (
    KktReport,
    PenaltySolution,
    QpSolution,
    SubproblemData,
    assemble_subproblem,
    collect_kkt_reports,
    kkt_residual,
    penalty_solve,
    solve_qp,
)
from .search import (
    SearchResult,
    TabuConfig,
    enumerate_exact,
    hybrid_search,
    tabu_search,
)
from .worstcase import WorstCaseDistribution, duality_gap, worst_case_distribution

__version__ = "0.1.0"

__all__ = [
    "AversionProfile",
    "BENCHMARK_NAME",
    "BacktestResult",
    "CovarianceEstimate",
    "DataError",
    "DistributionallyRobust",
    "DrpInstance",
    "DrpfolioError",
    "DualCertificate",
    "EqualWeight",
    "InvestorState",
    "InvestorType",
    "KktReport",
    "MarketValueWeight",
    "MeanVariance",
    "MetricError",
    "MetricsReport",
    "PenaltySolution",
    "PortfolioSelection",
    "QpSolution",
    "RiskParity",
    "ScenarioSet",
    "SearchResult",
    "SolverError",
    "SubproblemData",
    "TabuConfig",
    "ValidationError",
    "WealthPath",
    "WindowPlan",
    "WorstCaseDistribution",
    "assemble_subproblem",
    "build_miqp",
    "collect_kkt_reports",
    "compute_metrics",
    "dual_certificate",
    "duality_gap",
    "enumerate_exact",
    "evaluate_objective",
    "hybrid_search",
    "kkt_residual",
    "load_returns",
    "metrics_table",
    "penalty_solve",
    "piecewise_utility",
    "rolling_windows",
    "run_backtest",
    "sample_covariance",
    "save_returns",
    "scenario_utilities",
    "solve_qp",
    "tabu_search",
    "update_aversion",
    "worst_case_distribution",
]
