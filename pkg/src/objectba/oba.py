"""Object-centric and scene-level bundle adjustment, plus the
correspondence-map machinery and its log-likelihood loss.

The object-centric problem optimizes per-frame camera-from-object poses
jointly with object-frame keypoints from their 2D observations. The
scene-level ("static") variant keeps camera poses fixed and optimizes one
global point per keypoint track, treating every object as static; it is
the baseline the object-centric solver is compared against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.special

from . import lm
from .errors import (
    EmptyProblem,
    IndexOutOfRange,
    MissingMap,
    NonPositiveDepth,
    NumericalFailure,
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
)

MIN_FRAMES_FOR_REFINEMENT = 10
MIN_MEAN_KEYPOINTS = 5.0


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class KeypointObservation:
    frame_index: int
    pixel: Point2
    depth_hint: Optional[float] = None  # ground-truth depth, training-time only

    def __post_init__(self):
        if self.depth_hint is not None and self.depth_hint <= 0:
            raise ValueError("depth_hint must be positive when present")


@dataclass
class KeypointTrack:
    """One object point with its pixel observations across frames."""

    track_id: int
    point_object_frame: Point3
    observations: List[KeypointObservation] = field(default_factory=list)

    def __post_init__(self):
        frames = [o.frame_index for o in self.observations]
        if len(frames) != len(set(frames)):
            raise ValueError("at most one observation per frame")

    def observation_at(self, frame_index: int) -> Optional[KeypointObservation]:
        for obs in self.observations:
            if obs.frame_index == frame_index:
                return obs
        return None


@dataclass
class ObjectTracklet:
    """Per-frame poses, size, scores and keypoint tracks of one object."""

    object_id: int
    poses: Dict[int, RigidTransform]  # frame -> camera-from-object
    box_size: np.ndarray  # [w, h, l] meters
    per_frame_scores: Dict[int, float] = field(default_factory=dict)
    tracks: List[KeypointTrack] = field(default_factory=list)

    def __post_init__(self):
        self.box_size = np.asarray(self.box_size, dtype=float)
        if np.any(self.box_size <= 0):
            raise ValueError("box_size must be strictly positive")

    def frames(self) -> List[int]:
        return sorted(self.poses)


@dataclass(frozen=True)
class FeatureGrid:
    """A dense H x W x C feature grid over an image region.

    `pixel_coords` gives the image location each cell stands for; by
    default it holds the cell centers of the region `roi`
    (u_min, v_min, u_max, v_max), but producers may refine individual
    entries. Cells are flattened row-major.
    """

    values: np.ndarray  # (H, W, C)
    pixel_coords: np.ndarray  # (H, W, 2)
    roi: Tuple[float, float, float, float]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3 or values.size < 1:
            raise ValueError("values must be H x W x C with H*W >= 1")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(
            self, "pixel_coords", np.asarray(self.pixel_coords, dtype=float)
        )

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @classmethod
    def from_values(cls, values: np.ndarray, roi) -> "FeatureGrid":
        values = np.asarray(values, float)
        h, w = values.shape[0], values.shape[1]
        return cls(values, cell_center_coords(roi, h, w), tuple(float(x) for x in roi))

    def flat_values(self) -> np.ndarray:
        return self.values.reshape(-1, self.channels)

    def cell_pixel(self, cell: int) -> Point2:
        r, c = divmod(int(cell), self.width)
        u, v = self.pixel_coords[r, c]
        return Point2(float(u), float(v))

    def nearest_cell(self, pixel: Point2) -> Optional[int]:
        """Snap a pixel to the nearest grid cell; None if it leaves the grid.

        Ties round half away from zero in cell coordinates.
        """
        u_min, v_min, u_max, v_max = self.roi
        du = (u_max - u_min) / self.width
        dv = (v_max - v_min) / self.height
        col = _round_half_away((pixel.u - u_min) / du - 0.5)
        row = _round_half_away((pixel.v - v_min) / dv - 0.5)
        if 0 <= row < self.height and 0 <= col < self.width:
            return int(row * self.width + col)
        return None


def cell_center_coords(roi, height: int, width: int) -> np.ndarray:
    u_min, v_min, u_max, v_max = roi
    us = u_min + (np.arange(width) + 0.5) * (u_max - u_min) / width
    vs = v_min + (np.arange(height) + 0.5) * (v_max - v_min) / height
    return np.stack(np.meshgrid(us, vs), axis=-1)


def _round_half_away(x: float) -> int:
    return int(np.sign(x) * np.floor(abs(x) + 0.5))


@dataclass(frozen=True)
class CorrespondenceMap:
    """Raw inner-product similarities and their row-softmax normalization."""

    raw: np.ndarray  # (HW, HW)
    normalized: np.ndarray  # row-stochastic (HW, HW)


# ---------------------------------------------------------------------------
# Correspondence map and losses


def correspondence_map(a: FeatureGrid, b: FeatureGrid) -> CorrespondenceMap:
    """Inner products of all cell pairs, row-normalized with a softmax."""
    if a.values.shape != b.values.shape:
        raise ShapeMismatch(
            f"grids differ in shape: {a.values.shape} vs {b.values.shape}"
        )
    raw = a.flat_values() @ b.flat_values().T
    normalized = scipy.special.softmax(raw, axis=1)
    return CorrespondenceMap(raw=raw, normalized=normalized)


def featuremetric_oba_loss(
    maps: Dict[Tuple[int, int], CorrespondenceMap],
    gt_pairs: Sequence[Tuple[int, int, int, int]],
) -> float:
    """Negative log-likelihood of the ground-truth cell pairs under the maps."""
    total = 0.0
    for t, cell_i, t_prime, cell_j in gt_pairs:
        key = (t, t_prime)
        if key not in maps:
            raise MissingMap(f"no correspondence map for frame pair {key}")
        normalized = maps[key].normalized
        n = normalized.shape[0]
        if not (0 <= cell_i < n and 0 <= cell_j < normalized.shape[1]):
            raise IndexOutOfRange(
                f"cells ({cell_i}, {cell_j}) outside {normalized.shape} map"
            )
        total -= float(np.log(normalized[cell_i, cell_j]))
    return total


def featuremetric_reprojection_error(
    grids: Dict[int, FeatureGrid],
    gt_pairs: Sequence[Tuple[int, int, int, int]],
) -> float:
    """Diagnostic: summed squared feature differences over ground-truth pairs."""
    total = 0.0
    for t, cell_i, t_prime, cell_j in gt_pairs:
        fa = grids[t].flat_values()[cell_i]
        fb = grids[t_prime].flat_values()[cell_j]
        diff = fa - fb
        total += float(diff @ diff)
    return total


def gt_pair_generation(
    tracklet: ObjectTracklet,
    k: CameraIntrinsics,
    grids: Dict[int, FeatureGrid],
    frame_pairs: Sequence[Tuple[int, int]],
) -> List[Tuple[int, int, int, int]]:
    """Ground-truth cell pairs by lifting observations and reprojecting.

    For each observation (t, p, z) and scheduled pair (t, t'): lift p at
    depth z through the frame-t pose into the object frame, reproject into
    frame t', and snap both endpoints to their grids. Pairs that leave
    either grid are dropped.
    """
    pairs: List[Tuple[int, int, int, int]] = []
    for track in tracklet.tracks:
        for t, t_prime in frame_pairs:
            obs = track.observation_at(t)
            if obs is None or obs.depth_hint is None:
                continue
            if t not in tracklet.poses or t_prime not in tracklet.poses:
                continue
            if t not in grids or t_prime not in grids:
                continue
            point = inverse_project(tracklet.poses[t], obs.pixel, k, obs.depth_hint)
            pixel_prime, _ = project(tracklet.poses[t_prime], point, k)
            cell_a = grids[t].nearest_cell(obs.pixel)
            cell_b = grids[t_prime].nearest_cell(pixel_prime)
            if cell_a is None or cell_b is None:
                continue
            pairs.append((t, cell_a, t_prime, cell_b))
    return pairs


# ---------------------------------------------------------------------------
# Object-centric bundle adjustment


@dataclass
class ObjectBAProblem:
    blocks: List[lm.ResidualBlock]
    variables: List[lm.VariableBlock]
    pose_index: Dict[int, int]  # frame -> variable index
    point_index: Dict[int, int]  # track_id -> variable index


def _pose_block(pose: RigidTransform, mode: str, fixed: bool) -> lm.VariableBlock:
    if mode == "se3":
        return lm.VariableBlock(
            value=pose, local_dim=6, retract=lambda p, d: p.retract(d), fixed=fixed
        )
    if mode == "yaw":
        return lm.VariableBlock(
            value=pose, local_dim=4, retract=lambda p, d: p.retract_yaw(d), fixed=fixed
        )
    raise ValueError(f"unknown pose mode {mode!r}")


def _reprojection_evaluator(pixel: Point2, k: CameraIntrinsics, mode: str):
    observed = pixel.array()

    def evaluate(values):
        pose, point = values
        projected, _ = project(pose, point, k)
        residual = observed - projected.array()
        if mode == "se3":
            jac = projection_jacobian(pose, point, k)
            return residual, [-jac[:, 0:6], -jac[:, 6:9]]
        jac = projection_jacobian_yaw(pose, point, k)
        return residual, [-jac[:, 0:4], -jac[:, 4:7]]

    return evaluate


def _frame_reprojection_evaluator(pixels: np.ndarray, k: CameraIntrinsics, mode: str):
    """Batched reprojection of one frame's observations.

    Receives [pose, point_1, ..., point_m] and returns the stacked 2m
    residual with the pose Jacobian and one sparse per-point Jacobian,
    matching the scalar evaluator row for row.
    """
    observed = np.asarray(pixels, float)
    m = len(observed)

    def evaluate(values):
        pose = values[0]
        points = np.asarray(values[1:], float)  # (m, 3)
        pc = points @ pose.rotation.T + pose.translation
        z = pc[:, 2]
        if np.any(z <= 1e-9):
            raise NonPositiveDepth(f"min depth {z.min()} <= 1e-9")
        proj = np.stack(
            [k.fx * pc[:, 0] / z + k.cx, k.fy * pc[:, 1] / z + k.cy], axis=1
        )
        residual = (observed - proj).ravel()

        duv = np.zeros((m, 2, 3))
        duv[:, 0, 0] = k.fx / z
        duv[:, 0, 2] = -k.fx * pc[:, 0] / (z * z)
        duv[:, 1, 1] = k.fy / z
        duv[:, 1, 2] = -k.fy * pc[:, 1] / (z * z)

        if mode == "se3":
            rp = points @ pose.rotation.T  # R p per observation
            sk = np.zeros((m, 3, 3))
            sk[:, 0, 1] = -rp[:, 2]
            sk[:, 0, 2] = rp[:, 1]
            sk[:, 1, 0] = rp[:, 2]
            sk[:, 1, 2] = -rp[:, 0]
            sk[:, 2, 0] = -rp[:, 1]
            sk[:, 2, 1] = rp[:, 0]
            jac_rot = duv @ (-sk)  # (m, 2, 3)
            jac_pose = -np.concatenate([duv, jac_rot], axis=2).reshape(2 * m, 6)
        else:
            dpc_dyaw = np.stack(
                [-points[:, 1], points[:, 0], np.zeros(m)], axis=1
            ) @ pose.rotation.T
            jac_yaw = np.einsum("mij,mj->mi", duv, dpc_dyaw)[:, :, None]
            jac_pose = -np.concatenate([duv, jac_yaw], axis=2).reshape(2 * m, 4)

        jac_point = duv @ pose.rotation  # (m, 2, 3)
        jacs = [jac_pose]
        for i in range(m):
            jp = np.zeros((2 * m, 3))
            jp[2 * i : 2 * i + 2] = -jac_point[i]
            jacs.append(jp)
        return residual, jacs

    return evaluate


def build_object_ba(
    tracklet: ObjectTracklet,
    k: CameraIntrinsics,
    pose_mode: str = "se3",
    anchor_frame: Optional[int] = None,
) -> ObjectBAProblem:
    """Assemble the per-observation reprojection problem for one tracklet.

    One pose block per frame, one point block per track with >= 2
    observations; keypoints are initialized at the object-frame origin.
    The anchor frame's pose is held fixed to pin the similarity gauge
    (defaults to the first observed frame).
    """
    frames = tracklet.frames()
    if not frames:
        raise EmptyProblem("tracklet has no posed frames")
    if anchor_frame is None:
        anchor_frame = frames[0]

    variables: List[lm.VariableBlock] = []
    pose_index: Dict[int, int] = {}
    for frame in frames:
        pose_index[frame] = len(variables)
        variables.append(
            _pose_block(tracklet.poses[frame], pose_mode, fixed=frame == anchor_frame)
        )

    blocks: List[lm.ResidualBlock] = []
    point_index: Dict[int, int] = {}
    frame_obs: Dict[int, List[Tuple[int, KeypointObservation]]] = {f: [] for f in frames}
    for track in tracklet.tracks:
        usable = [o for o in track.observations if o.frame_index in tracklet.poses]
        if len(usable) < 2:
            continue  # a single view leaves the point unconstrained
        point_index[track.track_id] = len(variables)
        variables.append(lm.VariableBlock.vector(np.zeros(3)))
        variables[-1].retract = _point_retract
        for obs in usable:
            frame_obs[obs.frame_index].append((point_index[track.track_id], obs))
    # One residual block per frame so projections and Jacobians batch.
    for frame in frames:
        entries = frame_obs[frame]
        if not entries:
            continue
        pixels = np.array([[obs.pixel.u, obs.pixel.v] for _, obs in entries])
        blocks.append(
            lm.ResidualBlock(
                variable_indices=[pose_index[frame]] + [vi for vi, _ in entries],
                residual_dim=2 * len(entries),
                evaluator=_frame_reprojection_evaluator(pixels, k, pose_mode),
            )
        )
    if not blocks:
        raise EmptyProblem("no eligible residuals")
    return ObjectBAProblem(blocks, variables, pose_index, point_index)


def _point_retract(value, delta):
    return np.asarray(value, float) + delta


def _anchor_center(problem: ObjectBAProblem, anchor_frame: int) -> np.ndarray:
    anchor = problem.variables[problem.pose_index[anchor_frame]].value
    return -anchor.rotation.T @ anchor.translation


def _apply_scale_gauge(problem: ObjectBAProblem, anchor_frame: int, s: float) -> None:
    """Move a solved problem along its exact scale-gauge family in place.

    Rescales the point cloud radially about the anchor camera center c
    and compensates every non-anchor translation with
    t_f -> s t_f + (s - 1) R_f c, which leaves all reprojections (and
    hence the cost) unchanged.
    """
    center = _anchor_center(problem, anchor_frame)
    for frame, idx in problem.pose_index.items():
        if frame == anchor_frame:
            continue
        var = problem.variables[idx]
        pose = var.value
        var.value = RigidTransform(
            pose.rotation,
            s * pose.translation + (s - 1.0) * (pose.rotation @ center),
        )
    for idx in problem.point_index.values():
        var = problem.variables[idx]
        var.value = s * np.asarray(var.value, float) + (1.0 - s) * center


def snap_scale_gauge(problem: ObjectBAProblem, anchor_frame: int) -> float:
    """Fix the monocular scale gauge of a solved problem in place.

    The reprojection cost is exactly invariant to rescaling the point
    cloud radially about the anchor camera center c (with compensating
    translations), so anchoring one pose leaves a one-parameter family of
    equal-cost solutions. This picks the member whose keypoint centroid
    is closest to the object-frame origin — the box center, where
    keypoints live and are initialized — and returns the applied scale.
    """
    if not problem.point_index:
        return 1.0
    center = _anchor_center(problem, anchor_frame)
    points = np.array(
        [problem.variables[i].value for i in problem.point_index.values()]
    )
    d = points.mean(axis=0) - center
    denom = float(d @ d)
    if denom < 1e-12:
        return 1.0
    s = -float(center @ d) / denom
    if s <= 0.0:
        return 1.0  # a mirrored structure is never the intended gauge
    _apply_scale_gauge(problem, anchor_frame, s)
    return s


def align_scale_to_poses(
    problem: ObjectBAProblem,
    anchor_frame: int,
    target_poses: Dict[int, RigidTransform],
) -> float:
    """Fix the scale gauge against reference translations, in place.

    Least-squares fit of the gauge scale so refined translations land as
    close as possible to `target_poses` (typically the detections): with
    u_f = t_f + R_f c the family is t_f(s) = t_f + (s - 1) u_f, linear in
    s. Averaging over all frames suppresses the per-frame noise of the
    references. Returns the applied scale; the cost is unchanged.
    """
    center = _anchor_center(problem, anchor_frame)
    num = 0.0
    denom = 0.0
    for frame, idx in problem.pose_index.items():
        if frame == anchor_frame or frame not in target_poses:
            continue
        pose = problem.variables[idx].value
        u = pose.translation + pose.rotation @ center
        num += float(u @ (target_poses[frame].translation - pose.translation))
        denom += float(u @ u)
    if denom < 1e-12:
        return 1.0
    s = 1.0 + num / denom
    if s <= 0.0:
        return 1.0
    _apply_scale_gauge(problem, anchor_frame, s)
    return s


class SkipReason(enum.Enum):
    TOO_FEW_FRAMES = "TooFewFrames"
    TOO_FEW_KEYPOINTS = "TooFewKeypoints"
    EMPTY_PROBLEM = "EmptyProblem"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class Skipped:
    reason: SkipReason


def mean_keypoints_per_frame(tracklet: ObjectTracklet) -> float:
    n_frames = len(tracklet.poses)
    if n_frames == 0:
        return 0.0
    n_obs = sum(
        1
        for track in tracklet.tracks
        for obs in track.observations
        if obs.frame_index in tracklet.poses
    )
    return n_obs / n_frames


def refine_tracklet(
    tracklet: ObjectTracklet,
    k: CameraIntrinsics,
    config: Optional[lm.SolverConfig] = None,
    pose_mode: str = "se3",
    anchor: str = "first",
    min_frames: int = MIN_FRAMES_FOR_REFINEMENT,
    min_mean_keypoints: float = MIN_MEAN_KEYPOINTS,
    gauge_scale: str = "centroid",
):
    """Refine one tracklet's poses and keypoints, or pass it through.

    Tracklets seen in fewer than `min_frames` frames or averaging fewer
    than `min_mean_keypoints` keypoints per frame are returned unchanged
    with a skip reason, as is any tracklet whose solve fails numerically.

    `anchor` picks the gauge-fixing frame: "first" (first observed frame)
    or "best_score" (highest per-frame score, first frame on ties).

    `gauge_scale` picks how the leftover monocular scale gauge is pinned:
    "centroid" recenters the keypoint cloud on the object-frame origin
    (exact when tracked keypoints cover the object symmetrically);
    "detections" fits the scale to the tracklet's initial translations,
    which is more robust when visibility skews keypoint coverage toward
    the camera-facing side.
    """
    if len(tracklet.poses) < min_frames:
        return tracklet, Skipped(SkipReason.TOO_FEW_FRAMES)
    if mean_keypoints_per_frame(tracklet) < min_mean_keypoints:
        return tracklet, Skipped(SkipReason.TOO_FEW_KEYPOINTS)

    frames = tracklet.frames()
    anchor_frame = frames[0]
    if anchor == "best_score" and tracklet.per_frame_scores:
        anchor_frame = max(
            frames,
            key=lambda f: (tracklet.per_frame_scores.get(f, 0.0), -f),
        )
    try:
        problem = build_object_ba(tracklet, k, pose_mode, anchor_frame)
    except EmptyProblem:
        return tracklet, Skipped(SkipReason.EMPTY_PROBLEM)
    try:
        report = lm.solve(problem.blocks, problem.variables, config)
    except NumericalFailure:
        return tracklet, Skipped(SkipReason.NUMERICAL_FAILURE)
    if gauge_scale == "detections":
        snap_scale_gauge(problem, anchor_frame)
        align_scale_to_poses(problem, anchor_frame, tracklet.poses)
    elif gauge_scale == "centroid":
        snap_scale_gauge(problem, anchor_frame)
    else:
        raise ValueError(f"unknown gauge_scale {gauge_scale!r}")

    refined_poses = {
        frame: problem.variables[idx].value for frame, idx in problem.pose_index.items()
    }
    refined_tracks = []
    for track in tracklet.tracks:
        if track.track_id in problem.point_index:
            p = problem.variables[problem.point_index[track.track_id]].value
            refined_tracks.append(
                KeypointTrack(track.track_id, Point3(*p), list(track.observations))
            )
        else:
            refined_tracks.append(track)
    refined = ObjectTracklet(
        object_id=tracklet.object_id,
        poses=refined_poses,
        box_size=tracklet.box_size.copy(),
        per_frame_scores=dict(tracklet.per_frame_scores),
        tracks=refined_tracks,
    )
    return refined, report


# ---------------------------------------------------------------------------
# Scene-level (static) bundle adjustment baseline


@dataclass
class StaticBAProblem:
    blocks: List[lm.ResidualBlock]
    variables: List[lm.VariableBlock]
    point_index: Dict[Tuple[int, int], int]  # (object_id, track_id) -> var idx


def _static_evaluator(pixel: Point2, extrinsic: RigidTransform, k: CameraIntrinsics):
    observed = pixel.array()

    def evaluate(values):
        (point,) = values
        projected, _ = project(extrinsic, point, k)
        residual = observed - projected.array()
        jac = projection_jacobian(extrinsic, point, k)
        return residual, [-jac[:, 6:9]]

    return evaluate


def build_static_ba(
    tracklets: Sequence[ObjectTracklet],
    camera_frames: Dict[int, CameraFrame],
) -> StaticBAProblem:
    """Scene-level problem: one global point per track, cameras held fixed.

    Every object is treated as static; each track's point is expressed in
    the global frame and initialized at the object's initial box center at
    the track's first observed frame.
    """
    variables: List[lm.VariableBlock] = []
    blocks: List[lm.ResidualBlock] = []
    point_index: Dict[Tuple[int, int], int] = {}
    for tracklet in tracklets:
        for track in tracklet.tracks:
            usable = [
                o
                for o in track.observations
                if o.frame_index in camera_frames and o.frame_index in tracklet.poses
            ]
            if len(usable) < 2:
                continue
            first = min(usable, key=lambda o: o.frame_index)
            center_cam = tracklet.poses[first.frame_index].translation
            frame = camera_frames[first.frame_index]
            init = frame.extrinsic.inverse().apply(center_cam)
            # For moving objects the first-frame center can fall behind the
            # camera in later frames; keep only observations where the
            # initial point is in front so the first evaluation is feasible.
            usable = [
                o
                for o in usable
                if camera_frames[o.frame_index].extrinsic.apply(init)[2] > 1e-6
            ]
            if len(usable) < 2:
                continue
            idx = len(variables)
            point_index[(tracklet.object_id, track.track_id)] = idx
            variables.append(lm.VariableBlock.vector(init))
            for obs in usable:
                cam = camera_frames[obs.frame_index]
                blocks.append(
                    lm.ResidualBlock(
                        variable_indices=[idx],
                        residual_dim=2,
                        evaluator=_static_evaluator(
                            obs.pixel, cam.extrinsic, cam.intrinsics
                        ),
                    )
                )
    if not blocks:
        raise EmptyProblem("no multi-view constraints in scene")
    return StaticBAProblem(blocks, variables, point_index)


def refine_static(
    tracklets: Sequence[ObjectTracklet],
    camera_frames: Dict[int, CameraFrame],
    config: Optional[lm.SolverConfig] = None,
) -> List[ObjectTracklet]:
    """Run the static-BA baseline and read object poses back out.

    After optimizing the global points, each object gets one fixed global
    box center: the refined point centroid, shifted by the mean offset
    between the detected centers and that centroid. Every frame's pose is
    the initial pose translated to that center — the static assumption in
    a nutshell, and exactly what breaks on moving objects.
    """
    problem = build_static_ba(tracklets, camera_frames)
    try:
        lm.solve(problem.blocks, problem.variables, config)
    except NumericalFailure:
        return list(tracklets)

    refined: List[ObjectTracklet] = []
    for tracklet in tracklets:
        points = [
            problem.variables[idx].value
            for (oid, _), idx in problem.point_index.items()
            if oid == tracklet.object_id
        ]
        if not points:
            refined.append(tracklet)
            continue
        centroid_global = np.mean(points, axis=0)
        # Tracked keypoints cover the camera-facing side, so their centroid
        # sits off the box center by a systematic offset. Estimate that
        # offset against the detected centers (averaged over all frames,
        # which suppresses per-frame detection noise) and carry it along.
        detected_centers = [
            camera_frames[f].extrinsic.inverse().apply(pose.translation)
            for f, pose in tracklet.poses.items()
            if f in camera_frames
        ]
        center_global = centroid_global + (
            np.mean(detected_centers, axis=0) - centroid_global
        )
        new_poses = {}
        for frame, pose in tracklet.poses.items():
            if frame in camera_frames:
                center_cam = camera_frames[frame].extrinsic.apply(center_global)
                new_poses[frame] = RigidTransform(pose.rotation, center_cam)
            else:
                new_poses[frame] = pose
        refined.append(
            ObjectTracklet(
                object_id=tracklet.object_id,
                poses=new_poses,
                box_size=tracklet.box_size.copy(),
                per_frame_scores=dict(tracklet.per_frame_scores),
                tracks=list(tracklet.tracks),
            )
        )
    return refined
