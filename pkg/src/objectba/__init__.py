"""Object-centric bundle adjustment for per-frame 3D object poses in video.

The package refines detector poses by jointly optimizing camera-from-object
transforms and object-frame keypoints over a tracklet, with a simulator,
tracker, feature matcher, metrics, and an end-to-end pipeline around it.
"""

from .errors import (
    ConfigError,
    DegenerateBox,
    DegenerateGeometry,
    EmptyProblem,
    IndexOutOfRange,
    MissingMap,
    NonPositiveDepth,
    NumericalFailure,
    ObjectBAError,
    RecordParseError,
    ShapeMismatch,
)
from .geometry import (
    CameraFrame,
    CameraIntrinsics,
    Point2,
    Point3,
    RigidTransform,
    inverse_project,
    project,
    projection_jacobian,
    projection_jacobian_yaw,
    wrap_angle,
)
from .lm import SolverConfig, SolveReport, Termination, solve
from .oba import (
    CorrespondenceMap,
    FeatureGrid,
    KeypointObservation,
    KeypointTrack,
    ObjectTracklet,
    Skipped,
    SkipReason,
    build_object_ba,
    build_static_ba,
    correspondence_map,
    featuremetric_oba_loss,
    refine_static,
    refine_tracklet,
)
from .feature_tracks import (
    MatchGraph,
    MatchPair,
    RansacConfig,
    build_tracks,
    extract_matches,
    ransac_filter,
    schedule_pairs,
)
from .tracking import Box3D, Detection3D, TrackerConfig, run_tracker
from .simulator import (
    GroundTruthScene,
    NoiseSpec,
    ObjectSpec,
    ScenarioConfig,
    generate,
    perturb_detections,
)
from .metrics import EvalSummary, evaluate_scene, iou3d, let_iou, pose_error
from .io import (
    PipelineConfig,
    TrackletRecord,
    load_pipeline_config,
    load_scene,
    read_records,
    save_scene,
    write_records,
)
from .pipeline import (
    PipelineResult,
    compare_static_ba,
    interpolate_boxes,
    rescore_tracklet,
    run_pipeline,
)

__version__ = "0.1.0"
