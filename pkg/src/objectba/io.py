"""File formats: scene documents, record streams, and the pipeline config.

Detections, tracklet records, and metrics are line-delimited JSON (one
self-describing record per line). Scenes are a single JSON document with
feature-grid arrays packed as base64 float32 so files stay diff-able yet
compact. The YAML pipeline config is versioned and strict: unknown keys
are rejected.
"""

from __future__ import annotations

import base64
import dataclasses
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import lm
from .errors import ConfigError, RecordParseError
from .feature_tracks import RansacConfig
from .geometry import CameraFrame, CameraIntrinsics, Point2, RigidTransform
from .oba import FeatureGrid, ObjectTracklet
from .simulator import (
    GroundTruthObject,
    GroundTruthScene,
    NoiseSpec,
    ObjectSpec,
    Observation,
    ScenarioConfig,
)
from .tracking import Box3D, Detection3D, TrackerConfig

SCENE_FORMAT_VERSION = 1
CONFIG_VERSION = 1


# ---------------------------------------------------------------------------
# Pipeline configuration


@dataclass
class MatcherConfig:
    window: int = 5  # sliding window tau
    top_k: int = 50  # correspondence balance per frame pair
    # Matches below this symmetrized softmax similarity are discarded
    # before RANSAC; low-confidence pairs are epipolar-consistent often
    # enough that geometry alone cannot reject them reliably.
    min_similarity: float = 0.25
    ransac: RansacConfig = field(default_factory=RansacConfig)


@dataclass
class EligibilityConfig:
    min_frames: int = 10
    min_avg_keypoints: float = 5.0

    def __post_init__(self):
        if self.min_frames <= 0 or self.min_avg_keypoints <= 0:
            raise ConfigError("eligibility thresholds must be positive")


@dataclass
class PostprocessConfig:
    rescore: bool = True
    interpolate: bool = True


@dataclass
class PipelineConfig:
    solver: lm.SolverConfig = field(default_factory=lm.SolverConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    eligibility: EligibilityConfig = field(default_factory=EligibilityConfig)
    postprocess: PostprocessConfig = field(default_factory=PostprocessConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    pose_mode: str = "se3"  # "se3" | "yaw"
    gauge_anchor: str = "first"  # "first" | "best_score"
    # "detections" fits the leftover monocular scale gauge to the detected
    # translations; "centroid" recenters the keypoint cloud on the origin.
    gauge_scale: str = "detections"
    parallelism: int = 1
    seed: int = 0


def _build_dataclass(cls, data: dict, path: str):
    import typing

    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {path}{key}")
        hint = hints.get(key)
        if dataclasses.is_dataclass(hint) and isinstance(value, dict):
            kwargs[key] = _build_dataclass(hint, value, f"{path}{key}.")
        elif isinstance(value, list):
            kwargs[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


_SECTION_TYPES = {
    "solver": lm.SolverConfig,
    "tracker": TrackerConfig,
    "matcher": MatcherConfig,
    "eligibility": EligibilityConfig,
    "postprocess": PostprocessConfig,
    "scenario": ScenarioConfig,
}


def load_pipeline_config(path: str) -> PipelineConfig:
    """Parse a versioned YAML config; unknown keys are an error."""
    with open(path) as handle:
        data = yaml.safe_load(handle)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    version = data.pop("version", None)
    if version != CONFIG_VERSION:
        raise ConfigError(f"{path}: expected version {CONFIG_VERSION}, got {version!r}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: section {key} must be a mapping")
            kwargs[key] = _build_dataclass(_SECTION_TYPES[key], value, f"{key}.")
        elif key in ("pose_mode", "gauge_anchor", "gauge_scale", "parallelism", "seed"):
            kwargs[key] = value
        else:
            raise ConfigError(f"{path}: unknown config key {key}")
    config = PipelineConfig(**kwargs)
    if config.pose_mode not in ("se3", "yaw"):
        raise ConfigError(f"{path}: pose_mode must be 'se3' or 'yaw'")
    if config.gauge_anchor not in ("first", "best_score"):
        raise ConfigError(f"{path}: gauge_anchor must be 'first' or 'best_score'")
    if config.gauge_scale not in ("centroid", "detections"):
        raise ConfigError(f"{path}: gauge_scale must be 'centroid' or 'detections'")
    if config.parallelism < 1:
        raise ConfigError(f"{path}: parallelism must be >= 1")
    return config


# ---------------------------------------------------------------------------
# Tracklet records


@dataclass(frozen=True)
class TrackletRecord:
    """One object in one frame, in the global reference frame."""

    object_id: int
    frame_index: int
    x: float
    y: float
    z: float
    yaw: float
    w: float
    h: float
    l: float
    score: float
    source: str  # "detected" | "interpolated" | "refined"


def format_float(x: float) -> float:
    return float(np.float64(x))


def write_records(path: str, records: Sequence[TrackletRecord]) -> None:
    with open(path, "w") as handle:
        for rec in records:
            handle.write(json.dumps(dataclasses.asdict(rec), sort_keys=True))
            handle.write("\n")


def read_records(path: str) -> List[TrackletRecord]:
    records = []
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                records.append(TrackletRecord(**data))
            except (json.JSONDecodeError, TypeError) as exc:
                raise RecordParseError(path, lineno, str(exc)) from exc
    return records


def write_detections(path: str, frames: Sequence[Tuple[int, Sequence[Detection3D]]]) -> None:
    with open(path, "w") as handle:
        for frame_index, dets in frames:
            for det in dets:
                data = {
                    "frame_index": frame_index,
                    "x": det.box.center()[0],
                    "y": det.box.center()[1],
                    "z": det.box.center()[2],
                    "rotation": det.box.pose.rotation.reshape(-1).tolist(),
                    "w": det.box.size[0],
                    "h": det.box.size[1],
                    "l": det.box.size[2],
                    "score": det.score,
                    "bbox2d": list(det.bbox2d),
                    "grid_key": det.grid_key,
                }
                handle.write(json.dumps(data, sort_keys=True))
                handle.write("\n")


def read_detections(path: str) -> List[Tuple[int, List[Detection3D]]]:
    by_frame: Dict[int, List[Detection3D]] = {}
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                rotation = np.array(data["rotation"], float).reshape(3, 3)
                pose = RigidTransform(rotation, [data["x"], data["y"], data["z"]])
                det = Detection3D(
                    frame_index=int(data["frame_index"]),
                    box=Box3D([data["w"], data["h"], data["l"]], pose, frame="camera"),
                    score=float(data["score"]),
                    bbox2d=tuple(data["bbox2d"]),
                    grid_key=data.get("grid_key"),
                )
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise RecordParseError(path, lineno, str(exc)) from exc
            by_frame.setdefault(det.frame_index, []).append(det)
    return [(frame, by_frame[frame]) for frame in sorted(by_frame)]


def write_metrics(path: str, summary) -> None:
    """One JSON record per depth bin plus an overall record."""
    with open(path, "w") as handle:
        rows = [("overall", summary.overall)] + sorted(summary.bins.items())
        for name, stats in rows:
            data = {
                "bin": name,
                "count": stats.count,
                "mean_translation_error": stats.mean_translation_error,
                "mean_yaw_error": stats.mean_yaw_error,
                "mean_abs_depth_error": stats.mean_abs_depth_error,
                "mean_iou3d": stats.mean_iou3d,
            }
            for thr, ap in sorted(stats.ap.items()):
                data[f"ap@{thr:g}"] = ap
            handle.write(json.dumps(data, sort_keys=True))
            handle.write("\n")


# ---------------------------------------------------------------------------
# Scene documents


def _encode_array(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype=np.float32)
    return {
        "shape": list(data.shape),
        "data": base64.b64encode(data.tobytes()).decode("ascii"),
    }


def _decode_array(blob: dict) -> np.ndarray:
    raw = base64.b64decode(blob["data"])
    return np.frombuffer(raw, dtype=np.float32).reshape(blob["shape"]).astype(float)


def _transform_to_json(t: RigidTransform) -> dict:
    return {
        "rotation": t.rotation.reshape(-1).tolist(),
        "translation": t.translation.tolist(),
    }


def _transform_from_json(data: dict) -> RigidTransform:
    return RigidTransform(
        np.array(data["rotation"], float).reshape(3, 3),
        np.array(data["translation"], float),
    )


def save_scene(path: str, scene: GroundTruthScene) -> None:
    config = dataclasses.asdict(scene.config)
    doc = {
        "format_version": SCENE_FORMAT_VERSION,
        "config": config,
        "camera_frames": [
            {
                "timestamp_index": f.timestamp_index,
                "fx": f.intrinsics.fx,
                "fy": f.intrinsics.fy,
                "cx": f.intrinsics.cx,
                "cy": f.intrinsics.cy,
                "extrinsic": _transform_to_json(f.extrinsic),
            }
            for _, f in sorted(scene.camera_frames.items())
        ],
        "objects": [
            {
                "object_id": obj.object_id,
                "spec": dataclasses.asdict(obj.spec),
                "keypoints": obj.keypoints.tolist(),
                "poses_global": {
                    str(f): _transform_to_json(p) for f, p in sorted(obj.poses_global.items())
                },
                "observations": {
                    str(f): {
                        str(kp): {
                            "noiseless": [o.noiseless.u, o.noiseless.v],
                            "observed": [o.observed.u, o.observed.v],
                            "depth": o.depth,
                            "outlier": o.outlier,
                        }
                        for kp, o in sorted(frame_obs.items())
                    }
                    for f, frame_obs in sorted(obj.observations.items())
                },
            }
            for obj in scene.objects
        ],
        "feature_grids": [
            {
                "object_id": oid,
                "frame": frame,
                "roi": list(grid.roi),
                "values": _encode_array(grid.values),
                "pixel_coords": _encode_array(grid.pixel_coords),
            }
            for (oid, frame), grid in sorted(scene.feature_grids.items())
        ],
    }
    with open(path, "w") as handle:
        json.dump(doc, handle)


def load_scene(path: str) -> GroundTruthScene:
    try:
        with open(path) as handle:
            doc = json.load(handle)
    except json.JSONDecodeError as exc:
        raise RecordParseError(path, exc.lineno, exc.msg) from exc
    if doc.get("format_version") != SCENE_FORMAT_VERSION:
        raise RecordParseError(path, 1, "unsupported scene format version")

    cfg = dict(doc["config"])
    cfg["pose_noise"] = NoiseSpec(**cfg["pose_noise"])
    if cfg.get("objects") is not None:
        cfg["objects"] = [
            ObjectSpec(**{**o, "initial_position": tuple(o["initial_position"]), "size": tuple(o["size"])})
            for o in cfg["objects"]
        ]
    for key in ("trajectory_kinds", "grid_shape"):
        cfg[key] = tuple(cfg[key])
    config = ScenarioConfig(**cfg)

    camera_frames = {}
    for f in doc["camera_frames"]:
        camera_frames[f["timestamp_index"]] = CameraFrame(
            f["timestamp_index"],
            CameraIntrinsics(f["fx"], f["fy"], f["cx"], f["cy"]),
            _transform_from_json(f["extrinsic"]),
        )

    objects = []
    for entry in doc["objects"]:
        spec_data = dict(entry["spec"])
        spec_data["initial_position"] = tuple(spec_data["initial_position"])
        spec_data["size"] = tuple(spec_data["size"])
        spec = ObjectSpec(**spec_data)
        poses_global = {
            int(f): _transform_from_json(p) for f, p in entry["poses_global"].items()
        }
        poses_camera = {
            f: camera_frames[f].extrinsic.compose(p) for f, p in poses_global.items()
        }
        observations = {
            int(f): {
                int(kp): Observation(
                    noiseless=Point2(*o["noiseless"]),
                    observed=Point2(*o["observed"]),
                    depth=o["depth"],
                    outlier=o["outlier"],
                )
                for kp, o in frame_obs.items()
            }
            for f, frame_obs in entry["observations"].items()
        }
        objects.append(
            GroundTruthObject(
                object_id=entry["object_id"],
                spec=spec,
                keypoints=np.array(entry["keypoints"], float),
                poses_global=poses_global,
                poses_camera=poses_camera,
                observations=observations,
            )
        )

    feature_grids = {}
    for entry in doc["feature_grids"]:
        feature_grids[(entry["object_id"], entry["frame"])] = FeatureGrid(
            _decode_array(entry["values"]),
            _decode_array(entry["pixel_coords"]),
            tuple(entry["roi"]),
        )
    return GroundTruthScene(
        config=config,
        camera_frames=camera_frames,
        objects=objects,
        feature_grids=feature_grids,
    )
