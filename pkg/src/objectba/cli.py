"""Command-line interface for the refinement pipeline.

Subcommands cover each stage (simulate, track, refine, eval), the full
pipeline (run), and the static-baseline comparison (compare-static-ba).
Exit codes: 0 success, 1 bad input (malformed files, invalid config,
missing paths), 2 internal error.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from typing import Optional

import click
import numpy as np

from . import io, metrics, oba, pipeline
from .errors import ConfigError, ObjectBAError, RecordParseError
from .io import PipelineConfig, load_pipeline_config
from .simulator import ScenarioConfig, generate, perturb_detections
from .tracking import run_tracker


def _load_config(path: Optional[str], seed: Optional[int]) -> PipelineConfig:
    config = load_pipeline_config(path) if path else PipelineConfig()
    if seed is not None:
        config.seed = seed
        config.scenario = dataclasses.replace(config.scenario, seed=seed)
    return config


def _print_timings(timings) -> None:
    for stage, seconds in timings.items():
        click.echo(f"timing {stage}: {seconds:.3f}s")


def _print_summary(summary: metrics.EvalSummary) -> None:
    rows = [("overall", summary.overall)] + sorted(summary.bins.items())
    for name, stats in rows:
        parts = [
            f"bin={name}",
            f"count={stats.count}",
            f"terr={stats.mean_translation_error:.4f}",
            f"yerr={stats.mean_yaw_error:.4f}",
            f"derr={stats.mean_abs_depth_error:.4f}",
            f"iou={stats.mean_iou3d:.4f}",
        ]
        for thr, ap in sorted(stats.ap.items()):
            parts.append(f"ap@{thr:g}={ap:.4f}")
        click.echo("  ".join(parts))


@click.group()
def cli() -> None:
    """Object-centric bundle adjustment pipeline."""


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--output", type=click.Path(), required=True, help="Scene JSON path.")
def simulate(config_path, seed, output) -> None:
    """Generate a synthetic scene and write it to a scene document."""
    config = _load_config(config_path, seed)
    scene = generate(config.scenario)
    io.save_scene(output, scene)
    click.echo(f"wrote scene with {len(scene.objects)} objects to {output}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--scene", "scene_path", type=click.Path(exists=True), required=True)
@click.option("--detections", "detections_path", type=click.Path(exists=True), default=None,
              help="Detections JSONL; simulated from the scene when omitted.")
@click.option("--output", type=click.Path(), required=True, help="Tracklet records JSONL path.")
def track(config_path, seed, scene_path, detections_path, output) -> None:
    """Associate detections into tracklets (no refinement)."""
    config = _load_config(config_path, seed)
    scene = io.load_scene(scene_path)
    if detections_path:
        detections = io.read_detections(detections_path)
    else:
        detections = perturb_detections(scene, seed=config.seed + 1)
    out = run_tracker(detections, scene.camera_frames, config.tracker)
    records = pipeline.tracklets_to_records(out.tracklets, scene.camera_frames, {})
    io.write_records(output, records)
    click.echo(f"wrote {len(records)} records for {len(out.tracklets)} tracklets to {output}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--scene", "scene_path", type=click.Path(exists=True), required=True)
@click.option("--output", type=click.Path(), required=True, help="Tracklet records JSONL path.")
@click.option("--pose-mode", type=click.Choice(["se3", "yaw"]), default=None)
@click.option("--parallelism", type=int, default=None, help="Tracklet refinement workers.")
@click.option("--disable-postprocess", is_flag=True, default=False)
@click.option("--timings", is_flag=True, default=False)
def refine(config_path, seed, scene_path, output, pose_mode, parallelism,
           disable_postprocess, timings) -> None:
    """Track and refine, writing final tracklet records."""
    config = _load_config(config_path, seed)
    if pose_mode:
        config.pose_mode = pose_mode
    if parallelism is not None:
        config.parallelism = parallelism
    if disable_postprocess:
        config.postprocess.rescore = False
        config.postprocess.interpolate = False
    scene = io.load_scene(scene_path)
    result = pipeline.run_pipeline(scene, config)
    io.write_records(output, result.records)
    refined = sum(1 for r in result.reports.values() if not isinstance(r, oba.Skipped))
    click.echo(
        f"refined {refined}/{len(result.reports)} tracklets, "
        f"wrote {len(result.records)} records to {output}"
    )
    if timings:
        _print_timings(result.timings)


@cli.command(name="eval")
@click.option("--scene", "scene_path", type=click.Path(exists=True), required=True)
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--output", type=click.Path(), default=None, help="Metrics JSONL path.")
def eval_cmd(scene_path, records_path, output) -> None:
    """Evaluate tracklet records against a scene's ground truth."""
    scene = io.load_scene(scene_path)
    records = io.read_records(records_path)
    tracklets = _records_to_tracklets(records, scene)
    summary = metrics.evaluate_scene(tracklets, scene)
    _print_summary(summary)
    if output:
        io.write_metrics(output, summary)
        click.echo(f"wrote metrics to {output}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--output", type=click.Path(), required=True, help="Tracklet records JSONL path.")
@click.option("--metrics", "metrics_path", type=click.Path(), default=None)
@click.option("--pose-mode", type=click.Choice(["se3", "yaw"]), default=None)
@click.option("--parallelism", type=int, default=None, help="Tracklet refinement workers.")
@click.option("--disable-postprocess", is_flag=True, default=False)
@click.option("--timings", is_flag=True, default=False)
def run(config_path, seed, output, metrics_path, pose_mode, parallelism,
        disable_postprocess, timings) -> None:
    """Simulate, track, refine, post-process, and evaluate in one shot."""
    config = _load_config(config_path, seed)
    if pose_mode:
        config.pose_mode = pose_mode
    if parallelism is not None:
        config.parallelism = parallelism
    if disable_postprocess:
        config.postprocess.rescore = False
        config.postprocess.interpolate = False
    scene = generate(config.scenario)
    result = pipeline.run_pipeline(scene, config)
    io.write_records(output, result.records)
    _print_summary(result.summary)
    if metrics_path:
        io.write_metrics(metrics_path, result.summary)
    if timings:
        _print_timings(result.timings)


@cli.command(name="compare-static-ba")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--output", type=click.Path(), default=None, help="Comparison report JSON path.")
def compare_static_ba(config_path, seed, output) -> None:
    """Object-centric refinement vs a static (scene-level) BA baseline."""
    config = _load_config(config_path, seed)
    scene = generate(config.scenario)
    result = pipeline.compare_static_ba(scene, config)
    for method, summary in (
        ("initial", result.initial),
        ("object_ba", result.object_ba),
        ("static_ba", result.static_ba),
    ):
        click.echo(f"== {method} ==")
        _print_summary(summary)
    click.echo(
        "mean translation error on moving objects: "
        + ", ".join(f"{m}={v:.4f}" for m, v in result.moving_errors.items())
    )
    click.echo(
        "mean translation error on static objects: "
        + ", ".join(f"{m}={v:.4f}" for m, v in result.static_errors.items())
    )
    if output:
        report = {
            "moving_errors": result.moving_errors,
            "static_errors": result.static_errors,
            "overall_terr": {
                "initial": result.initial.overall.mean_translation_error,
                "object_ba": result.object_ba.overall.mean_translation_error,
                "static_ba": result.static_ba.overall.mean_translation_error,
            },
        }
        with open(output, "w") as handle:
            json.dump(report, handle, indent=2, sort_keys=True)
        click.echo(f"wrote comparison report to {output}")


def _records_to_tracklets(records, scene):
    from .geometry import RigidTransform
    from .oba import ObjectTracklet

    grouped = {}
    for rec in records:
        grouped.setdefault(rec.object_id, []).append(rec)
    tracklets = []
    for object_id, recs in sorted(grouped.items()):
        poses, scores = {}, {}
        size = None
        for rec in recs:
            pose_global = RigidTransform.from_yaw(rec.yaw, [rec.x, rec.y, rec.z])
            if rec.frame_index not in scene.camera_frames:
                continue
            poses[rec.frame_index] = scene.camera_frames[rec.frame_index].extrinsic.compose(
                pose_global
            )
            scores[rec.frame_index] = rec.score
            size = np.array([rec.w, rec.h, rec.l])
        if poses:
            tracklets.append(
                ObjectTracklet(
                    object_id=object_id,
                    poses=poses,
                    box_size=size,
                    per_frame_scores=scores,
                )
            )
    return tracklets


def main(argv=None) -> int:
    """Entry point mapping exceptions to exit codes 1 (input) or 2 (internal)."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.exceptions.ClickException as exc:
        exc.show(file=sys.stderr)
        click.echo(cli.get_help(click.Context(cli)), err=True)
        return 1
    except RecordParseError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except (OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except ObjectBAError as exc:
        click.echo(f"internal error: {exc}", err=True)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort internal failure
        click.echo(f"internal error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
