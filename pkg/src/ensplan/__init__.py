"""Heavy-tailed ensemble smoothing for sampling-based vehicle motion planning.

The planner treats references and constraint satisfaction as virtual
measurements of an auxiliary system and infers input trajectories with a
single-pass Student's-t ensemble smoother; large dof values recover the
Gaussian ensemble Kalman smoother.
"""

from .dynamics import BicycleParams, MlpModel, bicycle_step, fit_bicycle_mlp, load_weights, mlp_forward, save_weights
from .environment import (BarrierParams, ConstraintParams, Environment,
                          ObstacleScript, RoadGeometry, VehicleFootprint,
                          barrier, boundary_margin, collision_distance,
                          constraint_vector, ov_states_at)
from .harness import (Scenario, compare_runs, generate_references, load_run,
                      load_scenario, plan_once, run_scenario, write_run)
from .nmpc import CandidateTrajectory, TrackingParams, argmax_equivalence_check, log_posterior, nmpc_cost
from .smoother import (SmootherConfig, TrajectoryEnsemble, ensemble_stats,
                       measurement_ensemble, predict, smooth_horizon, update)
from .streams import StreamSplitter
from .studentt import (JointPartition, StudentT, conditional_update,
                       covariance_from_scale, log_pdf, mahalanobis_sq,
                       sample_mvt, scale_from_covariance)
from .virtual import (AugmentedState, VirtualMeasurement, VirtualSystem,
                      assemble_process_noise, augmented_step, virtual_observe)

__version__ = "0.1.0"
