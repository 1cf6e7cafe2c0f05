"""Shared builders for synthetic tracklets and small scenes."""

import numpy as np

from objectba.geometry import Point3
from objectba.oba import KeypointObservation, KeypointTrack, ObjectTracklet
from objectba.simulator import ObjectSpec, ScenarioConfig, generate


def synthetic_tracklet(
    seed,
    pixel_noise_std=0.0,
    perturb_seed=3,
    pose_mode="se3",
    trans_std=0.3,
    yaw_std_deg=5.0,
    use_observed=True,
):
    """A 20-frame, 20-keypoint tracklet with ground-truth keypoint tracks.

    The first frame keeps its ground-truth pose (the gauge anchor); every
    later pose is perturbed with Gaussian translation and yaw noise drawn
    from a generator seeded by `perturb_seed`. Returns
    (scene, gt_object, tracklet).
    """
    cfg = ScenarioConfig(
        num_frames=20,
        frame_rate=10.0,
        num_objects=1,
        objects=[
            ObjectSpec(
                kind="constant-velocity",
                initial_position=(18.0, 4.0, 0.8),
                speed=2.0,
            )
        ],
        keypoints_per_object=20,
        pixel_noise_std=pixel_noise_std,
        dropout_prob=0.0,
        corruption_prob=0.0,
        ego_speed=2.0,
        seed=seed,
    )
    scene = generate(cfg)
    obj = scene.objects[0]
    frames = sorted(obj.poses_camera)
    rng = np.random.default_rng(perturb_seed)

    tracks = []
    for kp in range(len(obj.keypoints)):
        obs = []
        for f in frames:
            o = obj.observations.get(f, {}).get(kp)
            if o is not None:
                obs.append(
                    KeypointObservation(f, o.observed if use_observed else o.noiseless)
                )
        if len(obs) >= 2:
            tracks.append(KeypointTrack(kp, Point3(0.0, 0.0, 0.0), obs))

    poses = {}
    for i, f in enumerate(frames):
        gt = obj.poses_camera[f]
        if i == 0:
            poses[f] = gt
        elif pose_mode == "yaw":
            delta = np.concatenate(
                [rng.normal(0, trans_std, 3), [rng.normal(0, np.deg2rad(yaw_std_deg))]]
            )
            poses[f] = gt.retract_yaw(delta)
        else:
            poses[f] = gt.retract(
                np.concatenate([rng.normal(0, trans_std, 3), [0, 0, 0]])
            ).retract_yaw(np.array([0, 0, 0, rng.normal(0, np.deg2rad(yaw_std_deg))]))

    tracklet = ObjectTracklet(0, poses, np.asarray(obj.spec.size), {}, tracks)
    return scene, obj, tracklet


def mean_translation_error(poses, gt_poses, frames):
    return float(
        np.mean(
            [
                np.linalg.norm(poses[f].translation - gt_poses[f].translation)
                for f in frames
            ]
        )
    )


def max_rotation_error(poses, gt_poses, frames):
    errs = []
    for f in frames:
        cos = (np.trace(poses[f].rotation.T @ gt_poses[f].rotation) - 1.0) / 2.0
        errs.append(abs(np.arccos(np.clip(cos, -1.0, 1.0))))
    return float(max(errs))
