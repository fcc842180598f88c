"""Gaze measurement from corneal images.

Fits the limbus ellipse in an eye crop, recovers the 3D eye pose, tracks it
with a particle filter and locates the gaze reflection point (the point of
gaze in the corneal image), with kappa calibration and rig design helpers.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, CropNotFound, DataError, DomainError, GazeError, GeometryError,
                     NoEllipseFound, NumericError, ParseError, TrackingLost)
from .geometry import (DEFAULT_EYE, AnatomicalEye, CameraIntrinsics, Ellipse, EyePose,
                       GazeEstimate, ImagePoint, grp_pixel, grp_raytrace_oracle, project_limbus)
from .detector import HoughConfig, ScoredEllipse, fit_limbus, score_candidate
from .pose import AmbiguityPolicy, PoseHypothesisPair, ellipse_to_pose, resolve_ambiguity
from .tracker import MotionNoise, TrackerConfig, TrackerState, init_tracker, track_frame
from .gaze import (FixationSample, Kappa, apply_kappa, calibrate_kappa, compute_grp,
                   kappa_convergence_curve, pog_pipeline)
from .optics import (MotorMap, RigSpec, ThinLens, achieved_resolution, back_focal_distance,
                     calibrate_motor_map, camera_count, corneal_resolution_requirement,
                     motor_command)
