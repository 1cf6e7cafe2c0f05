"""Frame-by-frame association of 3D detections with a constant-velocity
Kalman filter.

Tracking runs in the global frame (ego motion compensated through the
camera extrinsics) so the constant-velocity model is meaningful. Tracks
are immortal: an unmatched track keeps predicting and is never
terminated, which lets a tracklet survive detection gaps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateBox
from .geometry import CameraFrame, RigidTransform, wrap_angle
from .oba import ObjectTracklet

STATE_DIM = 10  # (x, y, z, yaw, w, h, l, vx, vy, vz)
MEAS_DIM = 7  # (x, y, z, yaw, w, h, l)


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box: size [w, h, l] plus a pose, tagged with its frame."""

    size: np.ndarray
    pose: RigidTransform
    frame: str = "camera"  # "camera" (pose = camera-from-object) or "global"

    def __post_init__(self):
        size = np.asarray(self.size, dtype=float)
        if np.any(size <= 0):
            raise DegenerateBox(f"non-positive box size {size}")
        object.__setattr__(self, "size", size)

    def center(self) -> np.ndarray:
        return self.pose.translation

    def yaw(self) -> float:
        return self.pose.yaw()


@dataclass(frozen=True)
class Detection3D:
    frame_index: int
    box: Box3D
    score: float
    bbox2d: Tuple[float, float, float, float]
    grid_key: Optional[int] = None  # handle to the detection's RoI feature grid

    def __post_init__(self):
        u0, v0, u1, v1 = self.bbox2d
        if not (u0 < u1 and v0 < v1):
            raise ValueError("bbox2d must satisfy u_min < u_max and v_min < v_max")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError("score must lie in [0, 1]")


@dataclass
class TrackerConfig:
    iou_threshold: float = 0.1
    frame_rate: float = 10.0
    # Measurement noise std devs: position (m), yaw (rad), size (m).
    meas_pos_std: float = 0.5
    meas_yaw_std: float = 0.1
    meas_size_std: float = 0.2
    # Constant-velocity process noise (m/s^2 equivalent).
    process_accel_std: float = 0.5
    initial_velocity_std: float = 10.0


@dataclass
class KalmanTrack:
    track_id: int
    state: np.ndarray  # (10,)
    covariance: np.ndarray  # (10, 10)
    hits: int = 1
    misses: int = 0
    detections: Dict[int, Detection3D] = field(default_factory=dict)
    camera_detections: Dict[int, Detection3D] = field(default_factory=dict)

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        self.covariance = np.asarray(self.covariance, dtype=float)

    def predicted_box(self) -> Box3D:
        x, y, z, yaw, w, h, length = self.state[:7]
        return Box3D(
            size=[w, h, length],
            pose=RigidTransform.from_yaw(yaw, [x, y, z]),
            frame="global",
        )


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def new_track(track_id: int, measurement: np.ndarray, config: TrackerConfig) -> KalmanTrack:
    state = np.zeros(STATE_DIM)
    state[:MEAS_DIM] = measurement
    cov = np.diag(
        [config.meas_pos_std**2] * 3
        + [config.meas_yaw_std**2]
        + [config.meas_size_std**2] * 3
        + [config.initial_velocity_std**2] * 3
    )
    return KalmanTrack(track_id=track_id, state=state, covariance=cov)


def predict(track: KalmanTrack, dt: float, config: Optional[TrackerConfig] = None) -> KalmanTrack:
    """Advance the constant-velocity model by dt seconds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if config is None:
        config = TrackerConfig()
    transition = np.eye(STATE_DIM)
    transition[0, 7] = transition[1, 8] = transition[2, 9] = dt
    q = config.process_accel_std
    pos_q = (0.5 * q * dt * dt) ** 2
    vel_q = (q * dt) ** 2
    process = np.diag(
        [pos_q] * 3 + [1e-4 * dt] + [1e-6 * dt] * 3 + [vel_q] * 3
    )
    state = transition @ track.state
    state[3] = wrap_angle(state[3])
    cov = _symmetrize(transition @ track.covariance @ transition.T + process)
    return replace(track, state=state, covariance=cov)


def update(track: KalmanTrack, det: Detection3D, config: Optional[TrackerConfig] = None) -> KalmanTrack:
    """Standard Kalman update with a (x, y, z, yaw, w, h, l) measurement.

    The detection box must be in the global frame. The yaw innovation is
    wrapped so measurements across the +-pi seam stay small.
    """
    if config is None:
        config = TrackerConfig()
    if det.box.frame != "global":
        raise ValueError("update expects a global-frame detection box")
    measurement = np.concatenate([det.box.center(), [det.box.yaw()], det.box.size])
    obs = np.zeros((MEAS_DIM, STATE_DIM))
    obs[:MEAS_DIM, :MEAS_DIM] = np.eye(MEAS_DIM)
    noise = np.diag(
        [config.meas_pos_std**2] * 3
        + [config.meas_yaw_std**2]
        + [config.meas_size_std**2] * 3
    )
    innovation = measurement - obs @ track.state
    innovation[3] = wrap_angle(innovation[3])
    innovation_cov = obs @ track.covariance @ obs.T + noise
    gain = track.covariance @ obs.T @ np.linalg.inv(innovation_cov)
    state = track.state + gain @ innovation
    state[3] = wrap_angle(state[3])
    identity = np.eye(STATE_DIM)
    # Joseph form keeps the covariance positive-definite.
    cov = (identity - gain @ obs) @ track.covariance @ (identity - gain @ obs).T
    cov = _symmetrize(cov + gain @ noise @ gain.T)
    new = replace(track, state=state, covariance=cov, hits=track.hits + 1)
    new.detections = dict(track.detections)
    new.detections[det.frame_index] = det
    return new


def associate(
    tracks: Sequence[KalmanTrack],
    dets: Sequence[Detection3D],
    iou_threshold: float = 0.1,
):
    """Greedy matching on descending 3D IoU between predicted and detected boxes.

    Returns (matches, unmatched_track_indices, unmatched_det_indices) with
    matches as (track_index, det_index) pairs.
    """
    from .metrics import iou3d  # local import avoids a module cycle

    if not tracks or not dets:
        return [], list(range(len(tracks))), list(range(len(dets)))
    ious = np.zeros((len(tracks), len(dets)))
    for i, track in enumerate(tracks):
        pred_box = track.predicted_box()
        for j, det in enumerate(dets):
            ious[i, j] = iou3d(pred_box, det.box)
    order = np.argsort(ious, axis=None)[::-1]
    matched_tracks, matched_dets, matches = set(), set(), []
    for flat in order:
        i, j = divmod(int(flat), len(dets))
        if ious[i, j] < iou_threshold:
            break
        if i in matched_tracks or j in matched_dets:
            continue
        matches.append((i, j))
        matched_tracks.add(i)
        matched_dets.add(j)
    unmatched_tracks = [i for i in range(len(tracks)) if i not in matched_tracks]
    unmatched_dets = [j for j in range(len(dets)) if j not in matched_dets]
    return matches, unmatched_tracks, unmatched_dets


@dataclass
class TrackerOutput:
    tracklets: List[ObjectTracklet]
    detections_by_track: Dict[int, Dict[int, Detection3D]]


def run_tracker(
    detection_frames: Sequence[Tuple[int, Sequence[Detection3D]]],
    camera_frames: Dict[int, CameraFrame],
    config: Optional[TrackerConfig] = None,
) -> TrackerOutput:
    """Associate per-frame detections into tracklets.

    `detection_frames` is an ordered list of (frame_index, detections) with
    detections in the camera frame. Tracklet poses are the raw detected
    camera-from-object poses of matched frames; unmatched frames stay
    missing and are later filled by interpolation. The tracklet box size
    is the score-weighted mean of the per-frame detected sizes.
    """
    if config is None:
        config = TrackerConfig()
    tracks: List[KalmanTrack] = []
    next_id = 0
    prev_frame: Optional[int] = None

    for frame_index, dets in detection_frames:
        if prev_frame is not None and frame_index <= prev_frame:
            raise ValueError("detection frames must be strictly increasing")
        cam = camera_frames[frame_index]
        cam_from_global = cam.extrinsic
        global_dets = []
        for det in dets:
            pose_global = cam_from_global.inverse().compose(det.box.pose)
            global_dets.append(
                replace(det, box=Box3D(det.box.size, pose_global, frame="global"))
            )
        if prev_frame is not None:
            dt = (frame_index - prev_frame) / config.frame_rate
            tracks = [predict(t, dt, config) for t in tracks]
        matches, unmatched_tracks, unmatched_dets = associate(
            tracks, global_dets, config.iou_threshold
        )
        for i, j in sorted(matches):
            tracks[i] = update(tracks[i], global_dets[j], config)
            tracks[i].detections[frame_index] = global_dets[j]
            # keep the original camera-frame detection alongside
            tracks[i].camera_detections[frame_index] = dets[j]
        for i in unmatched_tracks:
            tracks[i] = replace(tracks[i], misses=tracks[i].misses + 1)
        for j in unmatched_dets:
            track = new_track(
                next_id,
                np.concatenate(
                    [
                        global_dets[j].box.center(),
                        [global_dets[j].box.yaw()],
                        global_dets[j].box.size,
                    ]
                ),
                config,
            )
            track.detections[frame_index] = global_dets[j]
            track.camera_detections = {frame_index: dets[j]}
            tracks.append(track)
            next_id += 1
        prev_frame = frame_index

    tracklets: List[ObjectTracklet] = []
    detections_by_track: Dict[int, Dict[int, Detection3D]] = {}
    for track in sorted(tracks, key=lambda t: t.track_id):
        cam_dets: Dict[int, Detection3D] = getattr(track, "camera_detections", {})
        if not cam_dets:
            continue
        poses = {f: d.box.pose for f, d in cam_dets.items()}
        scores = {f: d.score for f, d in cam_dets.items()}
        weights = np.array([d.score for d in cam_dets.values()])
        sizes = np.array([d.box.size for d in cam_dets.values()])
        if weights.sum() > 0:
            box_size = (weights[:, None] * sizes).sum(axis=0) / weights.sum()
        else:
            box_size = sizes.mean(axis=0)
        tracklets.append(
            ObjectTracklet(
                object_id=track.track_id,
                poses=poses,
                box_size=box_size,
                per_frame_scores=scores,
            )
        )
        detections_by_track[track.track_id] = cam_dets
    return TrackerOutput(tracklets=tracklets, detections_by_track=detections_by_track)
