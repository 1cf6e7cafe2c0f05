"""3D IoU, LET-IoU, AP, depth binning, and scene evaluation."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objectba.errors import DegenerateBox
from objectba.geometry import CameraFrame, CameraIntrinsics, RigidTransform
from objectba.metrics import (
    EvalSummary,
    depth_bin,
    evaluate_scene,
    iou3d,
    let_iou,
    match_and_ap,
    pose_error,
)
from objectba.oba import ObjectTracklet
from objectba.simulator import ObjectSpec, ScenarioConfig, generate
from objectba.tracking import Box3D

K = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=640.0, cy=480.0)


def box(x=0.0, y=0.0, z=0.0, yaw=0.0, size=(2.0, 2.0, 2.0), frame="global"):
    return Box3D(size=np.asarray(size), pose=RigidTransform.from_yaw(yaw, [x, y, z]), frame=frame)


def random_box(rng):
    return box(
        x=rng.uniform(-5, 5),
        y=rng.uniform(-5, 5),
        z=rng.uniform(-2, 2),
        yaw=rng.uniform(-np.pi, np.pi),
        size=rng.uniform(0.5, 4.0, size=3),
    )


class TestIou3d:
    def test_identical_boxes(self):
        b = box()
        assert iou3d(b, b) == pytest.approx(1.0)

    def test_disjoint_boxes(self):
        assert iou3d(box(), box(x=10.0)) == 0.0

    def test_unit_offset_cubes(self):
        # 2x2x2 cubes offset 1 m along x: intersection 4, union 12
        assert iou3d(box(), box(x=1.0)) == pytest.approx(1.0 / 3.0)

    def test_vertical_disjoint(self):
        assert iou3d(box(), box(z=5.0)) == 0.0

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_symmetry_and_translation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a, b = random_box(rng), random_box(rng)
        iou = iou3d(a, b)
        assert iou == pytest.approx(iou3d(b, a), abs=1e-12)
        assert 0.0 <= iou <= 1.0
        shift = rng.uniform(-10, 10, size=3)
        a2 = Box3D(a.size, RigidTransform(a.pose.rotation, a.pose.translation + shift), "global")
        b2 = Box3D(b.size, RigidTransform(b.pose.rotation, b.pose.translation + shift), "global")
        assert iou3d(a2, b2) == pytest.approx(iou, abs=1e-9)

    def test_rotated_overlap_against_monte_carlo(self):
        a = box(size=(2.0, 2.0, 4.0))
        b = box(x=0.5, yaw=np.pi / 4, size=(2.0, 2.0, 4.0))
        exact = iou3d(a, b)
        rng = np.random.default_rng(12)
        pts = rng.uniform(-4, 4, size=(200_000, 3))

        def inside(bx, p):
            local = (p - bx.center()) @ np.array(
                [
                    [np.cos(bx.yaw()), np.sin(bx.yaw()), 0],
                    [-np.sin(bx.yaw()), np.cos(bx.yaw()), 0],
                    [0, 0, 1],
                ]
            ).T
            half = np.array([bx.size[2] / 2, bx.size[0] / 2, bx.size[1] / 2])
            return np.all(np.abs(local) <= half, axis=1)

        in_a, in_b = inside(a, pts), inside(b, pts)
        inter = np.sum(in_a & in_b)
        union = np.sum(in_a | in_b)
        assert exact == pytest.approx(inter / union, abs=1e-2)


def camera_at_origin():
    # camera looking along global +x (the simulator's convention)
    r = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    return CameraFrame(0, K, RigidTransform(r, np.zeros(3)))


class TestLetIou:
    def test_prediction_equal_to_gt(self):
        cam = camera_at_origin()
        gt = box(x=20.0, y=1.0, z=0.5)
        assert let_iou(gt, gt, cam) == pytest.approx(1.0)

    def test_pure_depth_error_fully_recovered(self):
        cam = camera_at_origin()
        gt = box(x=20.0, y=0.0, z=0.0)
        pred = box(x=28.0, y=0.0, z=0.0)  # displaced along the line of sight
        assert iou3d(pred, gt) == 0.0
        assert let_iou(pred, gt, cam) == pytest.approx(1.0)

    def test_lateral_error_not_recovered(self):
        cam = camera_at_origin()
        gt = box(x=20.0, y=0.0, z=0.0)
        pred = box(x=20.0, y=5.0, z=0.0)  # offset far beyond the box width
        assert let_iou(pred, gt, cam) == pytest.approx(0.0, abs=1e-9)

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_invariant_to_longitudinal_displacement(self, seed):
        # sliding the prediction along its own line of sight (the error the
        # metric forgives) must not change the score
        rng = np.random.default_rng(seed)
        cam = camera_at_origin()
        gt = box(x=rng.uniform(10, 40), y=rng.uniform(-4, 4), z=rng.uniform(-1, 1))
        center = np.array(
            [
                gt.center()[0] + rng.uniform(-2, 2),
                gt.center()[1] + rng.uniform(-2, 2),
                gt.center()[2] + rng.uniform(-0.5, 0.5),
            ]
        )
        yaw = rng.uniform(-0.5, 0.5)
        scale = rng.uniform(0.5, 2.0)
        pred = box(x=center[0], y=center[1], z=center[2], yaw=yaw)
        slid = box(
            x=scale * center[0], y=scale * center[1], z=scale * center[2], yaw=yaw
        )
        assert let_iou(slid, gt, cam) == pytest.approx(
            let_iou(pred, gt, cam), abs=1e-9
        )

    def test_recovered_overlap_bounded_by_one(self):
        cam = camera_at_origin()
        gt = box(x=20.0, y=1.0)
        pred = box(x=26.0, y=1.3, yaw=0.1)
        val = let_iou(pred, gt, cam)
        assert 0.0 < val <= 1.0


def brute_force_ap(scored_ious, n_gts, threshold):
    """Independent PR enumeration for tiny matching problems.

    scored_ious: list of (score, {gt_index: iou}) per prediction.
    """
    order = sorted(range(len(scored_ious)), key=lambda i: (-scored_ious[i][0], i))
    matched = set()
    tp = []
    for idx in order:
        _, ious = scored_ious[idx]
        cands = {j: v for j, v in ious.items() if j not in matched}
        best = max(cands, key=cands.get, default=None)
        if best is not None and cands[best] >= threshold:
            matched.add(best)
            tp.append(1)
        else:
            tp.append(0)
    cum_tp = np.cumsum(tp)
    recall = cum_tp / n_gts
    precision = cum_tp / np.arange(1, len(tp) + 1)
    recall = np.concatenate([[0.0], recall, [recall[-1]]])
    precision = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    return float(np.sum(np.diff(recall) * precision[1:]))


class TestMatchAndAp:
    def test_perfect_predictions(self):
        gts = [box(x=0.0), box(x=10.0)]
        preds = [(gts[0], 0.9), (gts[1], 0.8)]
        assert match_and_ap(preds, gts, iou3d, 0.7) == pytest.approx(1.0)

    def test_no_predictions(self):
        assert match_and_ap([], [box()], iou3d, 0.5) == 0.0

    def test_no_ground_truth(self):
        assert match_and_ap([(box(), 0.9)], [], iou3d, 0.5) == 0.0

    def test_matches_brute_force_oracle(self):
        gts = [box(x=0.0), box(x=10.0)]
        preds = [
            (box(x=0.2), 0.9),    # good match to gt 0
            (box(x=30.0), 0.8),   # false positive
            (box(x=10.3), 0.7),   # good match to gt 1
        ]
        threshold = 0.5
        ap = match_and_ap(preds, gts, iou3d, threshold)
        scored = [
            (score, {j: iou3d(b, g) for j, g in enumerate(gts)})
            for b, score in preds
        ]
        assert ap == pytest.approx(brute_force_ap(scored, len(gts), threshold))

    def test_removing_false_positive_never_lowers_ap(self):
        gts = [box(x=0.0), box(x=10.0)]
        preds = [
            (box(x=0.2), 0.9),
            (box(x=30.0), 0.95),  # high-scoring false positive
            (box(x=10.3), 0.7),
        ]
        with_fp = match_and_ap(preds, gts, iou3d, 0.5)
        without_fp = match_and_ap([preds[0], preds[2]], gts, iou3d, 0.5)
        assert without_fp >= with_fp


class TestDepthBins:
    @pytest.mark.parametrize(
        "depth,name",
        [
            (0.0, "[0,30)"),
            (29.999, "[0,30)"),
            (30.0, "[30,50)"),
            (49.999, "[30,50)"),
            (50.0, "[50,inf)"),
            (500.0, "[50,inf)"),
        ],
    )
    def test_half_open_convention(self, depth, name):
        assert depth_bin(depth) == name


class TestPoseError:
    def test_zero_for_identical(self):
        cam = camera_at_origin()
        gt = box(x=20.0, y=1.0, yaw=0.3)
        err = pose_error(gt, gt, cam)
        assert err.translation_error == 0.0
        assert err.yaw_error == 0.0
        assert err.depth_error == 0.0

    def test_depth_error_signed(self):
        cam = camera_at_origin()
        gt = box(x=20.0)
        ahead = box(x=23.0)
        assert pose_error(ahead, gt, cam).depth_error == pytest.approx(3.0)
        assert pose_error(box(x=18.0), gt, cam).depth_error == pytest.approx(-2.0)

    def test_yaw_error_wrapped(self):
        cam = camera_at_origin()
        err = pose_error(box(x=20.0, yaw=np.pi - 0.05), box(x=20.0, yaw=-np.pi + 0.05), cam)
        assert err.yaw_error == pytest.approx(0.1, abs=1e-9)


class TestEvaluateScene:
    def make_scene(self):
        cfg = ScenarioConfig(
            num_frames=15,
            num_objects=2,
            objects=[
                ObjectSpec(kind="static", initial_position=(18.0, 3.0, 0.8)),
                ObjectSpec(
                    kind="constant-velocity",
                    initial_position=(40.0, -3.0, 0.8),
                    speed=2.0,
                ),
            ],
            keypoints_per_object=8,
            ego_speed=2.0,
            seed=13,
        )
        return generate(cfg)

    def gt_tracklets(self, scene):
        return [
            ObjectTracklet(
                obj.object_id,
                dict(obj.poses_camera),
                np.asarray(obj.spec.size),
                {f: 0.9 for f in obj.poses_camera},
                [],
            )
            for obj in scene.objects
        ]

    def test_ground_truth_scores_perfectly(self):
        scene = self.make_scene()
        summary = evaluate_scene(self.gt_tracklets(scene), scene)
        assert summary.overall.mean_translation_error == pytest.approx(0.0, abs=1e-9)
        assert summary.overall.mean_yaw_error == pytest.approx(0.0, abs=1e-9)
        assert summary.overall.mean_iou3d == pytest.approx(1.0, abs=1e-9)
        for stats in summary.bins.values():
            for ap in stats.ap.values():
                assert ap in (0.0, 1.0)  # empty bins score 0, populated 1
        assert summary.overall.ap[0.7] == pytest.approx(1.0)

    def test_counts_cover_all_posed_frames(self):
        scene = self.make_scene()
        summary = evaluate_scene(self.gt_tracklets(scene), scene)
        total = sum(len(o.poses_camera) for o in scene.objects)
        assert summary.overall.count == total
        assert sum(s.count for s in summary.bins.values()) == total

    def test_bin_names(self):
        assert EvalSummary.bin_name(0, 30) == "[0,30)"
        assert EvalSummary.bin_name(50, np.inf) == "[50,inf)"


def test_degenerate_box_rejected():
    with pytest.raises(DegenerateBox):
        Box3D([1.0, -1.0, 1.0], RigidTransform.identity())
