"""Optimal swarm tracking in 2-Wasserstein space.

Exact discrete optimal transport, displacement interpolation, the
geodesic-following LQ controller, a direct-transcription oracle and a
receding-horizon loop for piecewise demand.
"""

from .controller import (
    analytic_cost_swarm,
    closed_loop_simulate,
    evaluate_cost,
    feedback_velocity,
    plan_optimal_trajectory,
)
from .errors import DegenerateMatchingError, NumericalInvariantError, SwarmError, ValidationError
from .geodesic import GeodesicPath, build_geodesic, curve_speed, eval_geodesic
from .lq import (
    COST_CONSTANT,
    ControlSchedule,
    LqSolution,
    analytic_cost_scalar,
    lq_qp_oracle,
    riccati_gain,
    solve_static_lq,
    solve_tracking_lq,
)
from .mpc import DemandSchedule, run_mpc
from .ot import (
    ParticleCloud,
    TransportMap,
    TransportPlan,
    extract_monge_map,
    pushforward,
    solve_kantorovich,
    w2_distance,
    w2_distance_1d,
)
from .trajectory import TrajectoryRecord
from .transcription import TranscriptionProblem, oracle_cost, oracle_gradient, solve_direct

__version__ = "0.1.0"
