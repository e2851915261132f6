"""goatfocus: refraction-corrected acoustic focusing in known layered media.

Computes two-point times of flight through piecewise-constant-speed layered
media by solving the boundary-crossing system implied by Snell's law, derives
transmit/receive focusing delays from them, and evaluates the correction in a
synthetic delay-and-sum imaging harness.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateDenominatorError,
    DegenerateSegmentError,
    DomainError,
    GoatFocusError,
    NoBracketError,
    NoIntersectionError,
    NonConvergenceError,
    RoiError,
    ScenarioError,
    SingularSlopeError,
    TotalReflectionError,
)
from .medium import (
    BoundaryCurve,
    Constant,
    Ellipse,
    Linear,
    Medium,
    Point2,
    SampledC1,
    ValidationReport,
    boundary_eval,
    boundary_slope,
    validate_medium,
)
from .goatsolve import (
    GoatSolution,
    SolverOptions,
    hmfa_tof,
    solve,
    solve_newton,
    solve_shooting,
    tof_of_path,
)
from .focusing import (
    DelayTable,
    ElementArray,
    build_delay_table,
    linear_array,
    receive_delays,
    transmit_delays,
)
from .analysis import fermat_oracle, tof_level_set

__all__ = [
    "BoundaryCurve", "Constant", "Linear", "Ellipse", "SampledC1",
    "Medium", "Point2", "ValidationReport",
    "boundary_eval", "boundary_slope", "validate_medium",
    "GoatSolution", "SolverOptions", "solve", "solve_newton",
    "solve_shooting", "tof_of_path", "hmfa_tof",
    "DelayTable", "ElementArray", "build_delay_table", "linear_array",
    "transmit_delays", "receive_delays",
    "fermat_oracle", "tof_level_set",
    "GoatFocusError", "DomainError", "SingularSlopeError",
    "DegenerateSegmentError", "TotalReflectionError", "NoIntersectionError",
    "NonConvergenceError", "NoBracketError", "DegenerateDenominatorError",
    "RoiError", "ScenarioError",
    "__version__",
]
