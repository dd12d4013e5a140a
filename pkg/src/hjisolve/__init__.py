"""Solver toolkit for zero-sum risk-sensitive stochastic differential games.

The pipeline: discretize the state space on a truncated box, solve pointwise
matrix games to form a mini-max generator, extract its principal eigenpair by
inverse iteration with Collatz-Wielandt bounds, grow the box until the
eigenvalue stabilizes, and cross-check the result with Monte Carlo estimates
and (on tiny grids) brute-force strategy enumeration.
"""

from .discretize import (
    DiscreteOperator,
    Grid,
    StencilPlan,
    assemble_fixed,
    build_grid,
    hamiltonian_matrix,
    hamiltonian_tensor,
    make_plan,
    nearest_interior,
    transfer_value,
)
from .eigen import EigenPair, cw_bounds, principal_eigenpair
from .errors import (
    BudgetExceededError,
    ConfigurationError,
    ConvergenceError,
    EstimationError,
    HJIError,
    InvalidGameError,
    ModelEvaluationError,
    NondegeneracyError,
    StructureError,
)
from .isaacs import (
    CostPerturbation,
    IsaacsSolve,
    StrategyField,
    SweepReport,
    dirichlet_isaacs,
    extract_saddle,
    radius_sweep,
    solve_single_player,
)
from .matrixgame import GameSolution, MatrixGame, solve_game
from .model import (
    ActionSet,
    AssumptionReport,
    ConditionReport,
    GameModel,
    LyapunovCertificate,
    builtin_certificate,
    builtin_model,
    builtin_names,
    certificate_from_spec,
    check_assumptions,
    check_condition,
    model_from_spec,
)
from .montecarlo import (
    DeviationOutcome,
    GrowthEstimate,
    PathEnsemble,
    RepresentationReport,
    RiskEstimate,
    SimConfig,
    VerifyReport,
    check_representation,
    estimate_growth_rate,
    estimate_horizon_trend,
    estimate_risk_sensitive,
    late_window,
    make_deviations,
    simulate_paths,
    verify_saddle,
)
from .oracle import (
    CertifyReport,
    OracleResult,
    certify,
    enumerate_strategies,
    export_tensor,
    pure_field,
)

__version__ = "0.1.0"

__all__ = [
    "ActionSet",
    "AssumptionReport",
    "BudgetExceededError",
    "CertifyReport",
    "ConditionReport",
    "ConfigurationError",
    "ConvergenceError",
    "CostPerturbation",
    "DeviationOutcome",
    "DiscreteOperator",
    "EigenPair",
    "EstimationError",
    "GameModel",
    "GameSolution",
    "Grid",
    "GrowthEstimate",
    "HJIError",
    "InvalidGameError",
    "IsaacsSolve",
    "LyapunovCertificate",
    "MatrixGame",
    "ModelEvaluationError",
    "NondegeneracyError",
    "OracleResult",
    "PathEnsemble",
    "RepresentationReport",
    "RiskEstimate",
    "SimConfig",
    "StencilPlan",
    "StrategyField",
    "StructureError",
    "SweepReport",
    "VerifyReport",
    "assemble_fixed",
    "build_grid",
    "builtin_certificate",
    "builtin_model",
    "builtin_names",
    "certificate_from_spec",
    "certify",
    "check_assumptions",
    "check_condition",
    "check_representation",
    "cw_bounds",
    "dirichlet_isaacs",
    "enumerate_strategies",
    "estimate_growth_rate",
    "estimate_horizon_trend",
    "estimate_risk_sensitive",
    "export_tensor",
    "extract_saddle",
    "hamiltonian_matrix",
    "hamiltonian_tensor",
    "late_window",
    "make_plan",
    "model_from_spec",
    "nearest_interior",
    "make_deviations",
    "pure_field",
    "principal_eigenpair",
    "radius_sweep",
    "simulate_paths",
    "solve_game",
    "solve_single_player",
    "transfer_value",
    "verify_saddle",
]
