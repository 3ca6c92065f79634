"""Joint camera-rig calibration and metric reconstruction.

Estimates camera-to-robot transforms, per-camera metric scales, and a
metric 3D scene from dense pointmaps plus robot poses through one
gradient-based objective, with closed-form initialization and planar-
motion handling.
"""

from .errors import (NumericalError, RigcalError, ValidationError)
from .geometry import (Intrinsics, RigidTransform, Rotation, Tangent6,
                       exp_map, log_map)
from .pointmap import MatchSet, Pointmap, ViewRecord, canonical_pointmap
from .graph import SceneGraph, build_graph
from .handeye import (MotionPairSet, solve_rotation_translation,
                      solve_with_scale, unobservable_axis)
from .losses import (LossReport, LossWeights, ParameterBlock,
                     RobotTrajectory, RobustConfig, gradient, loss_2d,
                     loss_3d, loss_cal, loss_cross, total_loss)
from .groundplane import PlaneModel, fit_plane, recover_height
from .optimizer import (CalibrationResult, ObservabilityReport,
                        OptimizerConfig, analyze_observability, initialize,
                        minimize, solve)
from .evaluation import (CheckerboardSpec, calib_errors, lift_corners,
                         scale_accuracy)
from .archive import (SceneInputs, read_archive, read_result,
                      read_trajectory, write_archive, write_result,
                      write_trajectory)
from .synthetic import GroundTruth, ScenarioConfig, generate, preset

__version__ = "0.1.0"
