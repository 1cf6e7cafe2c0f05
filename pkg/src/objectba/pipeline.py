"""End-to-end orchestration: tracking, matching, track building,
object-centric refinement, post-processing, and evaluation.

Stage order is fixed: first-stage detections are associated into
tracklets, dense features are matched pairwise over a sliding window,
matches become long-term keypoint tracks, each eligible tracklet is
refined by object-centric bundle adjustment, then tracklets are rescored
and missing boxes interpolated. Tracklet refinement fans out over a
thread pool; results are gathered in object-id order so output is
reproducible at any parallelism degree.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import feature_tracks, metrics, oba
from .geometry import CameraFrame, RigidTransform, wrap_angle
from .io import PipelineConfig, TrackletRecord
from .oba import ObjectTracklet, Skipped
from .simulator import GroundTruthScene, perturb_detections
from .tracking import Detection3D, run_tracker


@dataclass
class PipelineResult:
    records: List[TrackletRecord]
    summary: metrics.EvalSummary
    initial_tracklets: List[ObjectTracklet]
    refined_tracklets: List[ObjectTracklet]
    reports: Dict[int, object]  # object_id -> SolveReport or Skipped
    timings: Dict[str, float]
    mean_track_length: float


def attach_keypoint_tracks(
    tracklet: ObjectTracklet,
    grids: Dict[int, oba.FeatureGrid],
    config: PipelineConfig,
) -> ObjectTracklet:
    """Match features over the window schedule and build keypoint tracks."""
    frames = sorted(f for f in tracklet.frames() if f in grids)
    if len(frames) < 2:
        return tracklet
    pairs = feature_tracks.schedule_pairs(frames, config.matcher.window)
    graph = feature_tracks.MatchGraph()
    for t, t_prime in pairs:
        grid_a, grid_b = grids[t], grids[t_prime]
        if grid_a.values.shape != grid_b.values.shape:
            continue
        corr = oba.correspondence_map(grid_a, grid_b)
        matches = feature_tracks.extract_matches(
            corr, (grid_a, grid_b), config.matcher.top_k, frames=(t, t_prime)
        )
        matches = [m for m in matches if m.similarity >= config.matcher.min_similarity]
        ransac_cfg = replace(
            config.matcher.ransac,
            seed=config.seed * 1_000_003 + tracklet.object_id * 8191 + t * 131 + t_prime,
        )
        try:
            result = feature_tracks.ransac_filter(
                matches, None, ransac_cfg
            )
            matches = result.pairs
        except feature_tracks.DegenerateGeometry:
            pass  # keep the unfiltered matches
        for match in matches:
            graph.add_pair(match)
    tracks = feature_tracks.build_tracks(graph)
    return ObjectTracklet(
        object_id=tracklet.object_id,
        poses=dict(tracklet.poses),
        box_size=tracklet.box_size.copy(),
        per_frame_scores=dict(tracklet.per_frame_scores),
        tracks=tracks,
    )


def rescore_tracklet(tracklet: ObjectTracklet) -> ObjectTracklet:
    """Replace every frame's score with the tracklet maximum."""
    if not tracklet.per_frame_scores:
        return tracklet
    best = max(tracklet.per_frame_scores.values())
    return ObjectTracklet(
        object_id=tracklet.object_id,
        poses=dict(tracklet.poses),
        box_size=tracklet.box_size.copy(),
        per_frame_scores={f: best for f in tracklet.per_frame_scores},
        tracks=list(tracklet.tracks),
    )


def interpolate_boxes(
    tracklet: ObjectTracklet,
    camera_frames: Dict[int, CameraFrame],
) -> Tuple[ObjectTracklet, List[int]]:
    """Fill detection gaps by interpolating in the global frame.

    Each missing frame strictly between two observed frames gets a
    linearly interpolated center (and score) between its nearest earlier
    and later observations, with shortest-arc yaw interpolation. Observed
    frames are never touched and nothing is extrapolated beyond the span.
    Returns the new tracklet and the list of frames that were added.
    """
    observed = tracklet.frames()
    if len(observed) < 2:
        return tracklet, []
    poses = dict(tracklet.poses)
    scores = dict(tracklet.per_frame_scores)
    added: List[int] = []
    for frame in range(observed[0] + 1, observed[-1]):
        if frame in poses or frame not in camera_frames:
            continue
        earlier = max(f for f in observed if f < frame)
        later = min(f for f in observed if f > frame)
        alpha = (frame - earlier) / (later - earlier)

        def to_global(f):
            pose_global = camera_frames[f].extrinsic.inverse().compose(tracklet.poses[f])
            return pose_global.translation, pose_global.yaw()

        center_a, yaw_a = to_global(earlier)
        center_b, yaw_b = to_global(later)
        center = (1 - alpha) * center_a + alpha * center_b
        yaw = wrap_angle(yaw_a + alpha * wrap_angle(yaw_b - yaw_a))
        pose_global = RigidTransform.from_yaw(yaw, center)
        poses[frame] = camera_frames[frame].extrinsic.compose(pose_global)
        score_a = tracklet.per_frame_scores.get(earlier, 0.0)
        score_b = tracklet.per_frame_scores.get(later, 0.0)
        scores[frame] = (1 - alpha) * score_a + alpha * score_b
        added.append(frame)
    return (
        ObjectTracklet(
            object_id=tracklet.object_id,
            poses=poses,
            box_size=tracklet.box_size.copy(),
            per_frame_scores=scores,
            tracks=list(tracklet.tracks),
        ),
        added,
    )


def tracklets_to_records(
    tracklets: Sequence[ObjectTracklet],
    camera_frames: Dict[int, CameraFrame],
    sources: Dict[Tuple[int, int], str],
) -> List[TrackletRecord]:
    records = []
    for tracklet in sorted(tracklets, key=lambda t: t.object_id):
        for frame in tracklet.frames():
            pose_global = camera_frames[frame].extrinsic.inverse().compose(
                tracklet.poses[frame]
            )
            records.append(
                TrackletRecord(
                    object_id=tracklet.object_id,
                    frame_index=frame,
                    x=float(pose_global.translation[0]),
                    y=float(pose_global.translation[1]),
                    z=float(pose_global.translation[2]),
                    yaw=pose_global.yaw(),
                    w=float(tracklet.box_size[0]),
                    h=float(tracklet.box_size[1]),
                    l=float(tracklet.box_size[2]),
                    score=float(tracklet.per_frame_scores.get(frame, 0.0)),
                    source=sources.get((tracklet.object_id, frame), "detected"),
                )
            )
    return records


def run_pipeline(
    scene: GroundTruthScene,
    config: Optional[PipelineConfig] = None,
    detections: Optional[Sequence[Tuple[int, Sequence[Detection3D]]]] = None,
    refine: bool = True,
    postprocess: Optional[bool] = None,
) -> PipelineResult:
    """Execute tracking, matching, refinement, post-processing, and eval.

    Deterministic given the scene, config, and seed; per-object solver
    failures degrade that tracklet to its unrefined poses.
    """
    if config is None:
        config = PipelineConfig()
    if postprocess is None:
        postprocess = config.postprocess.rescore or config.postprocess.interpolate
    timings: Dict[str, float] = {}

    t0 = time.perf_counter()
    if detections is None:
        detections = perturb_detections(scene, seed=config.seed + 1)
    tracker_out = run_tracker(detections, scene.camera_frames, config.tracker)
    initial_tracklets = tracker_out.tracklets
    timings["tracking"] = time.perf_counter() - t0

    # Dense matching + feature tracking, per tracklet.
    t0 = time.perf_counter()
    with_tracks: List[ObjectTracklet] = []
    for tracklet in initial_tracklets:
        dets = tracker_out.detections_by_track.get(tracklet.object_id, {})
        grids = {
            f: scene.feature_grids[(d.grid_key, f)]
            for f, d in dets.items()
            if d.grid_key is not None and (d.grid_key, f) in scene.feature_grids
        }
        with_tracks.append(attach_keypoint_tracks(tracklet, grids, config))
    timings["matching"] = time.perf_counter() - t0

    track_lengths = [
        len(track.observations) for t in with_tracks for track in t.tracks
    ]
    mean_track_length = float(np.mean(track_lengths)) if track_lengths else 0.0

    # Object-centric bundle adjustment, fanned out per tracklet.
    t0 = time.perf_counter()
    reports: Dict[int, object] = {}
    refined: List[ObjectTracklet] = list(with_tracks)
    if refine:
        k = scene.intrinsics()

        def refine_one(tracklet):
            return oba.refine_tracklet(
                tracklet,
                k,
                config.solver,
                pose_mode=config.pose_mode,
                anchor=config.gauge_anchor,
                min_frames=config.eligibility.min_frames,
                min_mean_keypoints=config.eligibility.min_avg_keypoints,
                gauge_scale=config.gauge_scale,
            )

        if config.parallelism > 1:
            with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
                results = list(pool.map(refine_one, with_tracks))
        else:
            results = [refine_one(t) for t in with_tracks]
        refined = []
        for tracklet, (new_tracklet, report) in zip(with_tracks, results):
            refined.append(new_tracklet)
            reports[tracklet.object_id] = report
    timings["refinement"] = time.perf_counter() - t0

    # Post-processing.
    t0 = time.perf_counter()
    sources: Dict[Tuple[int, int], str] = {}
    for tracklet in refined:
        report = reports.get(tracklet.object_id)
        label = "refined" if refine and not isinstance(report, Skipped) and report is not None else "detected"
        for frame in tracklet.frames():
            sources[(tracklet.object_id, frame)] = label
    final = refined
    if postprocess:
        processed = []
        for tracklet in final:
            if config.postprocess.rescore:
                tracklet = rescore_tracklet(tracklet)
            if config.postprocess.interpolate:
                tracklet, added = interpolate_boxes(tracklet, scene.camera_frames)
                for frame in added:
                    sources[(tracklet.object_id, frame)] = "interpolated"
            processed.append(tracklet)
        final = processed
    timings["postprocess"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    records = tracklets_to_records(final, scene.camera_frames, sources)
    summary = metrics.evaluate_scene(final, scene)
    timings["evaluation"] = time.perf_counter() - t0

    return PipelineResult(
        records=records,
        summary=summary,
        initial_tracklets=initial_tracklets,
        refined_tracklets=final,
        reports=reports,
        timings=timings,
        mean_track_length=mean_track_length,
    )


@dataclass
class StaticCompareResult:
    initial: metrics.EvalSummary
    object_ba: metrics.EvalSummary
    static_ba: metrics.EvalSummary
    moving_errors: Dict[str, float]  # method -> mean translation error
    static_errors: Dict[str, float]


def _mean_error_by_motion(
    tracklets: Sequence[ObjectTracklet], scene: GroundTruthScene
) -> Tuple[float, float]:
    """Mean per-frame translation error split into (moving, static) objects."""
    assignment = metrics.assign_tracklets(tracklets, scene)
    moving, static = [], []
    for tracklet in tracklets:
        gt_id = assignment.get(tracklet.object_id)
        if gt_id is None:
            continue
        obj = scene.objects[gt_id]
        bucket = static if obj.spec.kind == "static" else moving
        for frame, pose in tracklet.poses.items():
            if frame not in obj.poses_camera:
                continue
            bucket.append(
                float(
                    np.linalg.norm(
                        pose.translation - obj.poses_camera[frame].translation
                    )
                )
            )
    mean = lambda xs: float(np.mean(xs)) if xs else float("nan")
    return mean(moving), mean(static)


def compare_static_ba(
    scene: GroundTruthScene,
    config: Optional[PipelineConfig] = None,
) -> StaticCompareResult:
    """Side-by-side object-centric vs scene-level (static) refinement."""
    if config is None:
        config = PipelineConfig()
    result = run_pipeline(scene, config, postprocess=False)

    # Static baseline reuses the same tracklets and keypoint tracks.
    initial = []
    for tracklet in result.initial_tracklets:
        matched = next(
            t for t in result.refined_tracklets if t.object_id == tracklet.object_id
        )
        initial.append(
            ObjectTracklet(
                object_id=tracklet.object_id,
                poses=dict(tracklet.poses),
                box_size=tracklet.box_size.copy(),
                per_frame_scores=dict(tracklet.per_frame_scores),
                tracks=list(matched.tracks),
            )
        )
    static_refined = oba.refine_static(initial, scene.camera_frames, config.solver)

    initial_summary = metrics.evaluate_scene(initial, scene)
    object_summary = metrics.evaluate_scene(result.refined_tracklets, scene)
    static_summary = metrics.evaluate_scene(static_refined, scene)

    moving_i, static_i = _mean_error_by_motion(initial, scene)
    moving_o, static_o = _mean_error_by_motion(result.refined_tracklets, scene)
    moving_s, static_s = _mean_error_by_motion(static_refined, scene)
    return StaticCompareResult(
        initial=initial_summary,
        object_ba=object_summary,
        static_ba=static_summary,
        moving_errors={"initial": moving_i, "object_ba": moving_o, "static_ba": moving_s},
        static_errors={"initial": static_i, "object_ba": static_o, "static_ba": static_s},
    )
