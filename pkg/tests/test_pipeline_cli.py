"""Post-processing, record/scene serialization, config loading, and CLI."""

import json
from pathlib import Path

import numpy as np
import pytest

from objectba import cli, io, metrics, oba, pipeline
from objectba.errors import ConfigError, RecordParseError
from objectba.geometry import CameraFrame, CameraIntrinsics, RigidTransform
from objectba.io import (
    PipelineConfig,
    TrackletRecord,
    load_pipeline_config,
    read_records,
    write_records,
)
from objectba.oba import ObjectTracklet, Skipped
from objectba.pipeline import (
    interpolate_boxes,
    rescore_tracklet,
    run_pipeline,
    tracklets_to_records,
)
from objectba.simulator import ObjectSpec, ScenarioConfig, generate

GOLDEN = Path(__file__).parent / "golden"

K = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=640.0, cy=480.0)


def identity_cameras(n):
    return {f: CameraFrame(f, K, RigidTransform.identity()) for f in range(n)}


def make_tracklet(frames_scores, yaw_by_frame=None, object_id=1):
    poses = {}
    for f in frames_scores:
        yaw = (yaw_by_frame or {}).get(f, 0.05 * f)
        poses[f] = RigidTransform.from_yaw(yaw, [2.0 + 0.5 * f, 0.3 * f, 0.8])
    return ObjectTracklet(
        object_id=object_id,
        poses=poses,
        box_size=np.array([2.0, 1.6, 4.5]),
        per_frame_scores=dict(frames_scores),
        tracks=[],
    )


class TestRescore:
    def test_all_frames_get_tracklet_maximum(self):
        tracklet = make_tracklet({0: 0.3, 1: 0.9, 2: 0.5})
        out = rescore_tracklet(tracklet)
        assert out.per_frame_scores == {0: 0.9, 1: 0.9, 2: 0.9}

    def test_single_frame_unchanged(self):
        out = rescore_tracklet(make_tracklet({4: 0.7}))
        assert out.per_frame_scores == {4: 0.7}

    def test_never_lowers_any_score(self):
        rng = np.random.default_rng(3)
        scores = {f: float(rng.uniform(0, 1)) for f in range(12)}
        out = rescore_tracklet(make_tracklet(scores))
        assert all(out.per_frame_scores[f] >= s for f, s in scores.items())

    def test_poses_untouched(self):
        tracklet = make_tracklet({0: 0.3, 1: 0.9})
        out = rescore_tracklet(tracklet)
        for f in tracklet.poses:
            assert np.array_equal(out.poses[f].translation, tracklet.poses[f].translation)


class TestInterpolate:
    def test_midpoint_center_and_score(self):
        cams = identity_cameras(3)
        tracklet = make_tracklet({0: 0.4, 2: 0.8})
        out, added = interpolate_boxes(tracklet, cams)
        assert added == [1]
        expected = 0.5 * (tracklet.poses[0].translation + tracklet.poses[2].translation)
        assert np.allclose(out.poses[1].translation, expected)
        assert out.per_frame_scores[1] == pytest.approx(0.6)

    def test_nearest_neighbors_not_global_fit(self):
        # frame 3 must interpolate between frames 2 and 4, ignoring frame 0
        cams = identity_cameras(5)
        tracklet = make_tracklet({0: 0.5, 2: 0.5, 4: 0.5})
        tracklet.poses[0] = RigidTransform.from_yaw(0.0, [100.0, 0.0, 0.0])
        out, added = interpolate_boxes(tracklet, cams)
        assert added == [1, 3]
        expected = 0.5 * (tracklet.poses[2].translation + tracklet.poses[4].translation)
        assert np.allclose(out.poses[3].translation, expected)

    def test_yaw_shortest_arc_through_zero(self):
        cams = identity_cameras(3)
        tracklet = make_tracklet({0: 0.5, 2: 0.5}, yaw_by_frame={0: 0.1, 2: -0.1})
        out, _ = interpolate_boxes(tracklet, cams)
        assert out.poses[1].yaw() == pytest.approx(0.0, abs=1e-12)

    def test_yaw_shortest_arc_through_pi(self):
        cams = identity_cameras(3)
        tracklet = make_tracklet({0: 0.5, 2: 0.5}, yaw_by_frame={0: 3.1, 2: -3.1})
        out, _ = interpolate_boxes(tracklet, cams)
        assert abs(out.poses[1].yaw()) == pytest.approx(np.pi, abs=0.05)
        assert abs(out.poses[1].yaw()) > 3.1

    def test_observed_frames_never_touched(self):
        cams = identity_cameras(8)
        tracklet = make_tracklet({0: 0.3, 1: 0.9, 2: 0.5, 4: 0.4, 7: 0.6})
        out, added = interpolate_boxes(tracklet, cams)
        assert added == [3, 5, 6]
        for f, pose in tracklet.poses.items():
            assert np.array_equal(out.poses[f].rotation, pose.rotation)
            assert np.array_equal(out.poses[f].translation, pose.translation)
            assert out.per_frame_scores[f] == tracklet.per_frame_scores[f]

    def test_no_extrapolation(self):
        cams = identity_cameras(10)
        out, added = interpolate_boxes(make_tracklet({3: 0.5, 5: 0.5}), cams)
        assert added == [4]
        assert sorted(out.poses) == [3, 4, 5]

    def test_single_frame_noop(self):
        out, added = interpolate_boxes(make_tracklet({3: 0.5}), identity_cameras(5))
        assert added == []

    def test_frames_without_camera_are_skipped(self):
        cams = identity_cameras(2)  # frame 2 exists, frame 1 camera missing...
        cams = {0: cams[0], 2: CameraFrame(2, K, RigidTransform.identity())}
        out, added = interpolate_boxes(make_tracklet({0: 0.5, 2: 0.5}), cams)
        assert added == []


class TestRecordsIO:
    def records(self):
        tracklet = make_tracklet({0: 0.3, 1: 0.9})
        return tracklets_to_records([tracklet], identity_cameras(2), {(1, 0): "refined"})

    def test_round_trip(self, tmp_path):
        path = tmp_path / "records.jsonl"
        records = self.records()
        write_records(path, records)
        assert read_records(path) == records

    def test_source_defaults_to_detected(self):
        records = self.records()
        assert records[0].source == "refined"
        assert records[1].source == "detected"

    def test_byte_stability(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_records(a, self.records())
        write_records(b, self.records())
        assert a.read_bytes() == b.read_bytes()

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        records = self.records()
        write_records(path, records)
        lines = path.read_text().splitlines()
        lines.insert(1, "{not json")
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(RecordParseError) as err:
            read_records(path)
        assert err.value.line == 2
        assert f"{path}:2:" in str(err.value)

    def test_unknown_field_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"object_id": 1, "bogus": 2}) + "\n")
        with pytest.raises(RecordParseError) as err:
            read_records(path)
        assert err.value.line == 1


class TestSceneIO:
    def test_scene_round_trip(self, tmp_path):
        cfg = ScenarioConfig(
            num_frames=6,
            num_objects=1,
            objects=[ObjectSpec(kind="static", initial_position=(15.0, 2.0, 0.8))],
            keypoints_per_object=8,
            ego_speed=2.0,
            seed=7,
        )
        scene = generate(cfg)
        path = tmp_path / "scene.json"
        io.save_scene(path, scene)
        loaded = io.load_scene(path)
        assert loaded.config == scene.config
        assert sorted(loaded.camera_frames) == sorted(scene.camera_frames)
        obj, lobj = scene.objects[0], loaded.objects[0]
        assert np.allclose(lobj.keypoints, obj.keypoints)
        for f in obj.poses_global:
            assert np.allclose(
                lobj.poses_global[f].translation, obj.poses_global[f].translation
            )
        for f, frame_obs in obj.observations.items():
            for kp, obs in frame_obs.items():
                assert lobj.observations[f][kp].observed == obs.observed
        for key, grid in scene.feature_grids.items():
            # grids are stored as float32
            assert np.allclose(loaded.feature_grids[key].values, grid.values, atol=1e-6)

    def test_detections_round_trip(self, tmp_path):
        from objectba.simulator import perturb_detections

        scene = generate(
            ScenarioConfig(
                num_frames=5,
                num_objects=1,
                objects=[ObjectSpec(kind="static", initial_position=(15.0, 2.0, 0.8))],
                keypoints_per_object=8,
                ego_speed=2.0,
                seed=7,
            )
        )
        frames = perturb_detections(scene, seed=1)
        path = tmp_path / "dets.jsonl"
        io.write_detections(path, frames)
        loaded = io.read_detections(path)
        assert [f for f, _ in loaded] == [f for f, _ in frames]
        for (_, a), (_, b) in zip(frames, loaded):
            assert len(a) == len(b)
            for da, db in zip(a, b):
                assert np.allclose(da.box.pose.translation, db.box.pose.translation)
                assert da.score == pytest.approx(db.score)
                assert da.grid_key == db.grid_key


CONFIG_YAML = """\
version: 1
pose_mode: yaw
gauge_anchor: best_score
parallelism: 2
seed: 7
matcher:
  window: 3
  top_k: 25
eligibility:
  min_frames: 8
scenario:
  num_frames: 30
  ego_speed: 4.0
  pose_noise:
    trans_std: 0.2
    yaw_std: 0.05
"""


class TestConfigLoading:
    def write(self, tmp_path, text):
        path = tmp_path / "config.yaml"
        path.write_text(text)
        return str(path)

    def test_valid_config(self, tmp_path):
        config = load_pipeline_config(self.write(tmp_path, CONFIG_YAML))
        assert config.pose_mode == "yaw"
        assert config.gauge_anchor == "best_score"
        assert config.parallelism == 2
        assert config.seed == 7
        assert config.matcher.window == 3
        assert config.matcher.top_k == 25
        assert config.eligibility.min_frames == 8
        assert config.scenario.num_frames == 30
        assert config.scenario.pose_noise.trans_std == 0.2
        # untouched sections keep defaults
        assert config.matcher.min_similarity == 0.25
        assert config.solver.max_iterations == 200

    def test_unknown_top_level_key(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown"):
            load_pipeline_config(self.write(tmp_path, "version: 1\nbogus: 3\n"))

    def test_unknown_nested_key(self, tmp_path):
        with pytest.raises(ConfigError, match="matcher.bogus"):
            load_pipeline_config(
                self.write(tmp_path, "version: 1\nmatcher:\n  bogus: 3\n")
            )

    def test_missing_version(self, tmp_path):
        with pytest.raises(ConfigError, match="version"):
            load_pipeline_config(self.write(tmp_path, "seed: 3\n"))

    def test_wrong_version(self, tmp_path):
        with pytest.raises(ConfigError, match="version"):
            load_pipeline_config(self.write(tmp_path, "version: 99\n"))

    def test_invalid_pose_mode(self, tmp_path):
        with pytest.raises(ConfigError, match="pose_mode"):
            load_pipeline_config(self.write(tmp_path, "version: 1\npose_mode: quat\n"))

    def test_invalid_parallelism(self, tmp_path):
        with pytest.raises(ConfigError, match="parallelism"):
            load_pipeline_config(self.write(tmp_path, "version: 1\nparallelism: 0\n"))

    def test_non_mapping(self, tmp_path):
        with pytest.raises(ConfigError):
            load_pipeline_config(self.write(tmp_path, "- a\n- b\n"))


def small_pipeline_scene(num_frames=20, seed=3):
    cfg = ScenarioConfig(
        num_frames=num_frames,
        num_objects=2,
        objects=[
            ObjectSpec(kind="static", initial_position=(18.0, 3.0, 0.8)),
            ObjectSpec(
                kind="constant-velocity", initial_position=(22.0, -3.0, 0.8), speed=2.0
            ),
        ],
        keypoints_per_object=16,
        pixel_noise_std=0.3,
        ego_speed=2.0,
        seed=seed,
    )
    return generate(cfg)


class TestRunPipeline:
    def test_refinement_reduces_error(self):
        scene = small_pipeline_scene()
        result = run_pipeline(scene, PipelineConfig(), postprocess=False)
        initial = metrics.evaluate_scene(result.initial_tracklets, scene)
        assert any(
            not isinstance(r, Skipped) for r in result.reports.values()
        ), "no tracklet was refined"
        assert (
            result.summary.overall.mean_translation_error
            < initial.overall.mean_translation_error
        )

    def test_sources_partition_records(self):
        scene = small_pipeline_scene()
        result = run_pipeline(scene, PipelineConfig())
        sources = {rec.source for rec in result.records}
        assert sources <= {"detected", "refined", "interpolated"}
        counts = {s: sum(1 for r in result.records if r.source == s) for s in sources}
        assert sum(counts.values()) == len(result.records)
        refined_ids = {
            oid for oid, rep in result.reports.items() if not isinstance(rep, Skipped)
        }
        for rec in result.records:
            if rec.source == "refined":
                assert rec.object_id in refined_ids

    def test_ineligible_tracklets_pass_through(self):
        scene = small_pipeline_scene(num_frames=8)
        result = run_pipeline(scene, PipelineConfig(), postprocess=False)
        assert all(isinstance(r, Skipped) for r in result.reports.values())
        assert all(rec.source == "detected" for rec in result.records)
        by_id = {t.object_id: t for t in result.initial_tracklets}
        for tracklet in result.refined_tracklets:
            init = by_id[tracklet.object_id]
            for f, pose in tracklet.poses.items():
                assert np.array_equal(pose.translation, init.poses[f].translation)
                assert np.array_equal(pose.rotation, init.poses[f].rotation)

    def test_deterministic_records(self):
        scene = small_pipeline_scene()
        a = run_pipeline(scene, PipelineConfig())
        b = run_pipeline(scene, PipelineConfig())
        assert a.records == b.records

    def test_timings_cover_stages(self):
        scene = small_pipeline_scene(num_frames=12)
        result = run_pipeline(scene, PipelineConfig())
        assert set(result.timings) == {
            "tracking", "matching", "refinement", "postprocess", "evaluation",
        }
        assert all(t >= 0 for t in result.timings.values())


def build_postprocessed_records():
    """Deterministic post-processing example used for the golden file."""
    cams = identity_cameras(8)
    tracklet = make_tracklet({0: 0.3, 1: 0.9, 2: 0.5, 4: 0.4, 7: 0.6})
    sources = {(tracklet.object_id, f): "refined" for f in tracklet.frames()}
    tracklet = rescore_tracklet(tracklet)
    tracklet, added = interpolate_boxes(tracklet, cams)
    for f in added:
        sources[(tracklet.object_id, f)] = "interpolated"
    return tracklets_to_records([tracklet], cams, sources)


class TestGolden:
    def test_postprocess_records_match_golden(self, tmp_path):
        path = tmp_path / "records.jsonl"
        write_records(path, build_postprocessed_records())
        golden = GOLDEN / "postprocess_records.jsonl"
        assert path.read_bytes() == golden.read_bytes()

    def test_golden_observed_frames_keep_detected_poses(self):
        golden = read_records(GOLDEN / "postprocess_records.jsonl")
        original = make_tracklet({0: 0.3, 1: 0.9, 2: 0.5, 4: 0.4, 7: 0.6})
        by_frame = {rec.frame_index: rec for rec in golden}
        for f, pose in original.poses.items():
            rec = by_frame[f]
            assert rec.source == "refined"
            assert [rec.x, rec.y, rec.z] == pytest.approx(
                list(pose.translation), abs=1e-12
            )
            assert rec.score == pytest.approx(0.9)
        for f in (3, 5, 6):
            assert by_frame[f].source == "interpolated"


class TestCli:
    def make_scene_file(self, tmp_path, num_frames=6):
        scene = generate(
            ScenarioConfig(
                num_frames=num_frames,
                num_objects=1,
                objects=[ObjectSpec(kind="static", initial_position=(15.0, 2.0, 0.8))],
                keypoints_per_object=8,
                ego_speed=2.0,
                seed=7,
            )
        )
        path = tmp_path / "scene.json"
        io.save_scene(path, scene)
        return str(path)

    def test_eval_empty_records_succeeds_with_zero_ap(self, tmp_path, capsys):
        scene_path = self.make_scene_file(tmp_path)
        records_path = tmp_path / "empty.jsonl"
        records_path.write_text("")
        code = cli.main(
            ["eval", "--scene", scene_path, "--records", str(records_path)]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "ap@0.5=0.0000" in out and "ap@0.7=0.0000" in out

    def test_eval_malformed_record_fails_with_line_number(self, tmp_path, capsys):
        scene_path = self.make_scene_file(tmp_path)
        records_path = tmp_path / "bad.jsonl"
        records_path.write_text('{"object_id": 1}\nnot json\n')
        code = cli.main(
            ["eval", "--scene", scene_path, "--records", str(records_path)]
        )
        err = capsys.readouterr().err
        assert code == 1
        assert f"{records_path}:1:" in err

    def test_track_writes_records(self, tmp_path):
        scene_path = self.make_scene_file(tmp_path)
        out_path = tmp_path / "tracks.jsonl"
        code = cli.main(
            ["track", "--scene", scene_path, "--output", str(out_path)]
        )
        assert code == 0
        assert len(read_records(out_path)) > 0

    def test_unknown_command_fails(self, capsys):
        assert cli.main(["frobnicate"]) == 1
        assert "Usage" in capsys.readouterr().err

    def test_missing_scene_path_fails(self, tmp_path, capsys):
        code = cli.main(
            ["eval", "--scene", str(tmp_path / "nope.json"), "--records", "x"]
        )
        assert code == 1

    def test_bad_config_fails_cleanly(self, tmp_path, capsys):
        config = tmp_path / "config.yaml"
        config.write_text("version: 1\nbogus: 1\n")
        code = cli.main(
            ["run", "--config", str(config), "--output", str(tmp_path / "o.jsonl")]
        )
        assert code == 1
        assert "bogus" in capsys.readouterr().err
