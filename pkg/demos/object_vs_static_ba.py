"""Why object-centric BA: compare against a scene-level (static) baseline.

A static bundle adjustment treats every keypoint as a fixed point in the
world, which is correct for parked objects but wrong for moving ones.
This demo runs both refinements on a scene that is half moving, half
static, and prints the mean translation error per method split by object
motion. Expected outcome: on static objects the two methods agree; on
moving objects the static baseline cannot help while the object-centric
formulation keeps improving.

Run:  python3 demos/object_vs_static_ba.py
"""

from objectba import benchmarks, pipeline
from objectba.simulator import generate


def main():
    scenario = benchmarks.compare_scene_config()
    config = benchmarks.benchmark_pipeline_config(scenario, parallelism=4)
    moving = sum(1 for o in scenario.objects if o.kind != "static")
    print(
        f"scene: {scenario.num_frames} frames, {len(scenario.objects)} objects "
        f"({moving} moving, {len(scenario.objects) - moving} static)"
    )
    scene = generate(scenario)
    result = pipeline.compare_static_ba(scene, config)

    print(f"\n{'method':>12}  {'moving err (m)':>15}  {'static err (m)':>15}")
    for method in ("initial", "object_ba", "static_ba"):
        print(
            f"{method:>12}  {result.moving_errors[method]:>15.4f}  "
            f"{result.static_errors[method]:>15.4f}"
        )
    print(
        "\nobject-centric BA improves moving objects "
        f"{result.moving_errors['initial'] / result.moving_errors['object_ba']:.1f}x; "
        "the static baseline leaves them "
        f"at {result.moving_errors['static_ba']:.3f} m."
    )


if __name__ == "__main__":
    main()
