"""Refinement quality metrics: pose errors, 3D IoU, LET-IoU, and AP.

All box overlap math assumes gravity-aligned (yaw-only) boxes in a z-up
frame: BEV overlap is an exact rotated-rectangle intersection in the x-y
plane, vertical overlap an interval intersection along z.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from shapely.geometry import Polygon

from .errors import DegenerateBox
from .geometry import CameraFrame, RigidTransform, wrap_angle
from .oba import ObjectTracklet
from .tracking import Box3D

DEPTH_BINS: Tuple[Tuple[float, float], ...] = ((0.0, 30.0), (30.0, 50.0), (50.0, np.inf))
AP_THRESHOLDS: Tuple[float, ...] = (0.7, 0.5)


@dataclass(frozen=True)
class PoseError:
    translation_error: float  # meters, >= 0
    yaw_error: float  # radians in [0, pi]
    depth_error: float  # signed meters along the camera line of sight


def _bev_polygon(box: Box3D) -> Polygon:
    w, _, length = box.size
    yaw = box.yaw()
    cx, cy = box.center()[0], box.center()[1]
    c, s = np.cos(yaw), np.sin(yaw)
    corners = []
    for dx, dy in ((length / 2, w / 2), (length / 2, -w / 2), (-length / 2, -w / 2), (-length / 2, w / 2)):
        corners.append((cx + c * dx - s * dy, cy + s * dx + c * dy))
    return Polygon(corners)


def iou3d(a: Box3D, b: Box3D) -> float:
    """Exact 3D IoU for gravity-aligned boxes (BEV polygon x interval)."""
    if np.any(np.asarray(a.size) <= 0) or np.any(np.asarray(b.size) <= 0):
        raise DegenerateBox("boxes must have positive size")
    # cheap exact rejection: BEV circumscribed circles that do not touch
    delta = a.center()[:2] - b.center()[:2]
    reach = 0.5 * (np.hypot(a.size[0], a.size[2]) + np.hypot(b.size[0], b.size[2]))
    if delta @ delta > reach * reach:
        return 0.0
    bev = _bev_polygon(a).intersection(_bev_polygon(b)).area
    if bev <= 0.0:
        return 0.0
    za0, za1 = a.center()[2] - a.size[1] / 2, a.center()[2] + a.size[1] / 2
    zb0, zb1 = b.center()[2] - b.size[1] / 2, b.center()[2] + b.size[1] / 2
    dz = min(za1, zb1) - max(za0, zb0)
    if dz <= 0.0:
        return 0.0
    inter = bev * dz
    vol_a = float(np.prod(a.size))
    vol_b = float(np.prod(b.size))
    return float(inter / (vol_a + vol_b - inter))


def _to_global_box(box: Box3D, camera: CameraFrame) -> Box3D:
    if box.frame == "global":
        return box
    pose_global = camera.extrinsic.inverse().compose(box.pose)
    return Box3D(size=box.size, pose=pose_global, frame="global")


def let_iou(pred: Box3D, gt: Box3D, camera: CameraFrame) -> float:
    """Longitudinal-error-tolerant IoU.

    The prediction center slides along its camera line of sight to the
    point nearest the ground-truth center (the 1-D minimizer of the depth
    error), then plain 3D IoU is computed against the ground truth.
    """
    pred_cam = (
        pred.center()
        if pred.frame == "camera"
        else camera.extrinsic.apply(pred.center())
    )
    gt_cam = (
        gt.center() if gt.frame == "camera" else camera.extrinsic.apply(gt.center())
    )
    if gt_cam[2] <= 0:
        raise DegenerateBox("ground-truth center must have positive depth")
    norm = np.linalg.norm(pred_cam)
    if norm <= 0:
        raise DegenerateBox("prediction center coincides with the camera")
    direction = pred_cam / norm
    aligned_cam = direction * float(direction @ gt_cam)

    pred_global = _to_global_box(pred, camera)
    gt_global = _to_global_box(gt, camera)
    aligned_center = camera.extrinsic.inverse().apply(aligned_cam)
    aligned = Box3D(
        size=pred_global.size,
        pose=RigidTransform.from_yaw(pred_global.yaw(), aligned_center),
        frame="global",
    )
    return iou3d(aligned, gt_global)


def pose_error(pred: Box3D, gt: Box3D, camera: CameraFrame) -> PoseError:
    """Translation, wrapped yaw, and signed line-of-sight depth error."""
    pred_global = _to_global_box(pred, camera)
    gt_global = _to_global_box(gt, camera)
    translation = float(np.linalg.norm(pred_global.center() - gt_global.center()))
    yaw = abs(wrap_angle(pred_global.yaw() - gt_global.yaw()))
    pred_cam = camera.extrinsic.apply(pred_global.center())
    gt_cam = camera.extrinsic.apply(gt_global.center())
    return PoseError(translation, yaw, float(pred_cam[2] - gt_cam[2]))


def match_and_ap(
    preds: Sequence[Tuple[Box3D, float]],
    gts: Sequence[Box3D],
    iou_fn: Callable[[Box3D, Box3D], float],
    threshold: float,
    pred_frames: Optional[Sequence[int]] = None,
    gt_frames: Optional[Sequence[int]] = None,
) -> float:
    """Average precision with greedy score-ordered matching.

    Each ground truth matches at most one prediction at IoU >= threshold;
    AP is the area under the precision-recall curve with all-points
    interpolation. When frame indices are supplied, a prediction may only
    match a ground truth from the same frame.
    """
    if not gts:
        return 0.0
    if not preds:
        return 0.0
    order = sorted(range(len(preds)), key=lambda i: (-preds[i][1], i))
    matched = [False] * len(gts)
    tp = np.zeros(len(preds))
    fp = np.zeros(len(preds))
    for rank, idx in enumerate(order):
        box, _ = preds[idx]
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if matched[j]:
                continue
            if (
                pred_frames is not None
                and gt_frames is not None
                and pred_frames[idx] != gt_frames[j]
            ):
                continue
            iou = iou_fn(box, gt)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou >= threshold:
            matched[best_j] = True
            tp[rank] = 1
        else:
            fp[rank] = 1
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(fp)
    recall = cum_tp / len(gts)
    precision = cum_tp / np.maximum(cum_tp + cum_fp, 1e-12)
    # all-points interpolation: integrate the precision envelope
    recall = np.concatenate([[0.0], recall, [recall[-1]]])
    precision = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    ap = 0.0
    for i in range(1, len(recall)):
        ap += (recall[i] - recall[i - 1]) * precision[i]
    return float(ap)


@dataclass
class BinStats:
    count: int = 0
    mean_translation_error: float = float("nan")
    mean_yaw_error: float = float("nan")
    mean_abs_depth_error: float = float("nan")
    mean_iou3d: float = float("nan")
    ap: Dict[float, float] = field(default_factory=dict)


@dataclass
class EvalSummary:
    bins: Dict[str, BinStats]
    overall: BinStats

    @staticmethod
    def bin_name(lo: float, hi: float) -> str:
        hi_txt = "inf" if np.isinf(hi) else f"{hi:g}"
        return f"[{lo:g},{hi_txt})"


def depth_bin(depth: float) -> str:
    """Half-open binning; a depth of exactly 30 falls in [30,50)."""
    for lo, hi in DEPTH_BINS:
        if lo <= depth < hi:
            return EvalSummary.bin_name(lo, hi)
    return EvalSummary.bin_name(*DEPTH_BINS[-1])


def assign_tracklets(tracklets: Sequence[ObjectTracklet], scene) -> Dict[int, int]:
    """Majority-vote assignment of tracklets to ground-truth objects.

    Per frame the nearest ground-truth center (in the camera frame) votes;
    the winning object over all frames is the assignment. Tracklets whose
    winner averages > 5 m away stay unassigned.
    """
    assignment: Dict[int, int] = {}
    for tracklet in tracklets:
        votes: Dict[int, List[float]] = {}
        for frame, pose in tracklet.poses.items():
            best, best_d = None, np.inf
            for obj in scene.objects:
                if frame not in obj.poses_camera:
                    continue
                d = float(np.linalg.norm(pose.translation - obj.poses_camera[frame].translation))
                if d < best_d:
                    best, best_d = obj.object_id, d
            if best is not None:
                votes.setdefault(best, []).append(best_d)
        if not votes:
            continue
        winner = max(votes, key=lambda o: (len(votes[o]), -np.mean(votes[o])))
        if np.mean(votes[winner]) <= 5.0:
            assignment[tracklet.object_id] = winner
    return assignment


def evaluate_scene(tracklets: Sequence[ObjectTracklet], scene) -> EvalSummary:
    """Aggregate per-depth-bin pose errors, IoU, and AP over a scene."""
    assignment = assign_tracklets(tracklets, scene)
    per_bin: Dict[str, Dict[str, list]] = {
        EvalSummary.bin_name(lo, hi): {"terr": [], "yerr": [], "derr": [], "iou": []}
        for lo, hi in DEPTH_BINS
    }
    overall = {"terr": [], "yerr": [], "derr": [], "iou": []}
    bin_preds: Dict[str, List[Tuple[Box3D, float]]] = {b: [] for b in per_bin}
    bin_gts: Dict[str, List[Box3D]] = {b: [] for b in per_bin}
    bin_pred_frames: Dict[str, List[int]] = {b: [] for b in per_bin}
    bin_gt_frames: Dict[str, List[int]] = {b: [] for b in per_bin}

    for obj in scene.objects:
        for frame in obj.poses_camera:
            depth = obj.poses_camera[frame].translation[2]
            name = depth_bin(depth)
            bin_gts[name].append(scene.gt_box(obj.object_id, frame, "global"))
            bin_gt_frames[name].append(frame)

    for tracklet in tracklets:
        gt_id = assignment.get(tracklet.object_id)
        for frame, pose in tracklet.poses.items():
            camera = scene.camera_frames[frame]
            pred = Box3D(size=tracklet.box_size, pose=pose, frame="camera")
            pred_global = _to_global_box(pred, camera)
            score = tracklet.per_frame_scores.get(frame, 0.5)
            if gt_id is None or frame not in scene.objects[gt_id].poses_camera:
                name = depth_bin(pose.translation[2])
                bin_preds[name].append((pred_global, score))
                bin_pred_frames[name].append(frame)
                continue
            gt_depth = scene.objects[gt_id].poses_camera[frame].translation[2]
            name = depth_bin(gt_depth)
            bin_preds[name].append((pred_global, score))
            bin_pred_frames[name].append(frame)
            gt_box = scene.gt_box(gt_id, frame, "global")
            err = pose_error(pred_global, gt_box, camera)
            iou = iou3d(pred_global, gt_box)
            for store in (per_bin[name], overall):
                store["terr"].append(err.translation_error)
                store["yerr"].append(err.yaw_error)
                store["derr"].append(abs(err.depth_error))
                store["iou"].append(iou)

    def stats(store, preds, gts, pred_frames, gt_frames) -> BinStats:
        out = BinStats(count=len(store["terr"]))
        if store["terr"]:
            out.mean_translation_error = float(np.mean(store["terr"]))
            out.mean_yaw_error = float(np.mean(store["yerr"]))
            out.mean_abs_depth_error = float(np.mean(store["derr"]))
            out.mean_iou3d = float(np.mean(store["iou"]))
        if gts is not None:
            out.ap = {
                thr: match_and_ap(preds, gts, iou3d, thr, pred_frames, gt_frames)
                for thr in AP_THRESHOLDS
            }
        return out

    bins = {
        name: stats(
            per_bin[name],
            bin_preds[name],
            bin_gts[name],
            bin_pred_frames[name],
            bin_gt_frames[name],
        )
        for name in per_bin
    }
    all_preds = [p for name in bin_preds for p in bin_preds[name]]
    all_gts = [g for name in bin_gts for g in bin_gts[name]]
    all_pred_frames = [f for name in bin_pred_frames for f in bin_pred_frames[name]]
    all_gt_frames = [f for name in bin_gt_frames for f in bin_gt_frames[name]]
    return EvalSummary(
        bins=bins,
        overall=stats(overall, all_preds, all_gts, all_pred_frames, all_gt_frames),
    )
