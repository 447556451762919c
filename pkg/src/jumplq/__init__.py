"""Cone-constrained stochastic LQ control with jumps.

Modules
-------
conekit
    Cones, projections and the pointwise minimization behind the Riccati
    pair.
sre
    Backward solver for the coupled Riccati pair and its a-priori bounds.
bsdej
    Lattice BSDE solver with jumps and comparison checks.
simulate
    Monte Carlo for the controlled state under the synthesized feedback.
meanvariance
    Cone-constrained mean-variance frontier.
cli
    JSON-driven command-line runner.
"""

from .conekit import (Cone, HInput, Mark, dual_membership, eval_H1, eval_H2,
                      exact_minimize_1d, minimize, project)
from .errors import (BlowUpError, CapacityError, CertificateError,
                     ConvergenceError, DegenerateMarketError, InfeasibleError,
                     InvariantViolationError, JumpLQError, NumericError,
                     SolverDivergenceError, SolverError, StepSizeError,
                     UnsupportedConeError, ValidationError)
from .meanvariance import (MarketModel, check_feasibility, efficient_frontier,
                           solve_mv, to_lq)
from .simulate import (PathConfig, SimReport, optimality_probe,
                       simulate_controlled, verify_value)
from .sre import (LQCoefficients, RiccatiSolution, feedback, solve_sre,
                  solve_truncated, verify_bounds)

__version__ = "0.1.0"
