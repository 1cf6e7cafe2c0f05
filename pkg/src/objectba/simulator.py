"""Synthetic ground-truth scenes for every oracle in the test suite.

Generates rigid boxes on parameterized trajectories in front of a
forward-moving ego camera, samples keypoints on their surfaces, projects
noiseless and noisy observations with labeled outliers, builds feature
grids with an embedded identity-correspondence signal, and produces
detector-style perturbed detections.

Frames: global is x-forward / y-left / z-up; the camera looks along
global +x with the usual x-right / y-down / z-forward image axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NonPositiveDepth
from .geometry import (
    CameraFrame,
    CameraIntrinsics,
    Point2,
    Point3,
    RigidTransform,
    project,
    wrap_angle,
)
from .oba import FeatureGrid, cell_center_coords
from .tracking import Box3D, Detection3D

# camera axes expressed in global coordinates (rows of R_cg)
R_CAMERA_FROM_GLOBAL = np.array(
    [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]
)


@dataclass(frozen=True)
class ObjectSpec:
    kind: str  # "static" | "constant-velocity" | "turning"
    initial_position: Tuple[float, float, float]
    initial_yaw: float = 0.0
    speed: float = 0.0  # m/s along the heading
    yaw_rate: float = 0.0  # rad/s, used by "turning"
    size: Tuple[float, float, float] = (2.0, 1.6, 4.5)  # [w, h, l]


@dataclass
class NoiseSpec:
    """Detector-style initial pose noise.

    With depth_exponent 0 the translation noise is isotropic Gaussian
    with std trans_std. A positive exponent switches to a monocular-style
    model: lateral_std isotropic noise plus a component along the camera
    line of sight with std trans_std * (depth / depth_ref) **
    depth_exponent, clamped at trans_std * max_scale — image evidence
    pins the lateral position while depth degrades with range.
    """

    trans_std: float = 0.3
    yaw_std: float = 0.087  # ~5 degrees
    size_std: float = 0.0
    depth_exponent: float = 0.0
    depth_ref: float = 50.0
    lateral_std: float = 0.1
    max_scale: float = 4.0


@dataclass
class ScenarioConfig:
    num_frames: int = 20
    frame_rate: float = 10.0
    num_objects: int = 1
    trajectory_kinds: Tuple[str, ...] = ("static", "constant-velocity")
    objects: Optional[List[ObjectSpec]] = None  # overrides auto placement
    keypoints_per_object: int = 20
    pixel_noise_std: float = 0.0
    outlier_fraction: float = 0.0
    dropout_prob: float = 0.0
    pose_noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    ego_speed: float = 8.0
    grid_shape: Tuple[int, int, int] = (12, 16, 16)  # (H, W, C)
    feature_noise_std: float = 0.05
    corruption_prob: float = 0.0
    descriptor_scale: float = 4.0
    background_scale: float = 0.05  # feature magnitude of non-keypoint cells
    image_width: int = 1280
    image_height: int = 960
    focal: float = 1000.0

    def __post_init__(self):
        if self.num_frames < 1 or self.num_objects < 1 or self.keypoints_per_object < 1:
            raise ConfigError("counts must be >= 1")
        for p in (self.outlier_fraction, self.dropout_prob, self.corruption_prob):
            if not (0.0 <= p <= 1.0):
                raise ConfigError("probabilities must lie in [0, 1]")

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=self.focal,
            fy=self.focal,
            cx=self.image_width / 2.0,
            cy=self.image_height / 2.0,
        )


@dataclass(frozen=True)
class Observation:
    """One keypoint seen in one frame."""

    noiseless: Point2
    observed: Point2
    depth: float
    outlier: bool


@dataclass
class GroundTruthObject:
    object_id: int
    spec: ObjectSpec
    keypoints: np.ndarray  # (m, 3) object-frame, centroid at the origin
    poses_global: Dict[int, RigidTransform]  # frame -> object-from... (global T_go)
    poses_camera: Dict[int, RigidTransform]  # frame -> camera-from-object T_co
    observations: Dict[int, Dict[int, Observation]]  # frame -> kp id -> obs

    def visible_frames(self) -> List[int]:
        return sorted(self.observations)


@dataclass
class GroundTruthScene:
    config: ScenarioConfig
    camera_frames: Dict[int, CameraFrame]
    objects: List[GroundTruthObject]
    feature_grids: Dict[Tuple[int, int], FeatureGrid]  # (object_id, frame)

    def intrinsics(self) -> CameraIntrinsics:
        return self.config.intrinsics()

    def gt_box(self, object_id: int, frame: int, frame_tag: str = "global") -> Box3D:
        obj = self.objects[object_id]
        pose = (
            obj.poses_global[frame] if frame_tag == "global" else obj.poses_camera[frame]
        )
        return Box3D(size=np.asarray(obj.spec.size), pose=pose, frame=frame_tag)


def _default_object_specs(config: ScenarioConfig) -> List[ObjectSpec]:
    specs = []
    for i in range(config.num_objects):
        kind = config.trajectory_kinds[i % len(config.trajectory_kinds)]
        x0 = 12.0 + 7.0 * i
        y0 = (3.0 + 2.0 * (i % 3)) * (1 if i % 2 == 0 else -1)
        speed = 0.0
        yaw_rate = 0.0
        yaw0 = 0.0
        if kind == "constant-velocity":
            speed = 6.0 + 1.5 * (i % 3)
        elif kind == "turning":
            speed = 5.0
            yaw_rate = 0.08
        elif kind != "static":
            raise ConfigError(f"unknown trajectory kind {kind!r}")
        specs.append(
            ObjectSpec(
                kind=kind,
                initial_position=(x0, y0, 0.8),
                initial_yaw=yaw0,
                speed=speed,
                yaw_rate=yaw_rate,
            )
        )
    return specs


def _object_pose_at(spec: ObjectSpec, t: float) -> RigidTransform:
    x0, y0, z0 = spec.initial_position
    if spec.kind == "static" or spec.speed == 0.0:
        return RigidTransform.from_yaw(spec.initial_yaw, [x0, y0, z0])
    if spec.yaw_rate == 0.0:
        yaw = spec.initial_yaw
        dx = spec.speed * t * np.cos(yaw)
        dy = spec.speed * t * np.sin(yaw)
        return RigidTransform.from_yaw(yaw, [x0 + dx, y0 + dy, z0])
    # constant turn rate: integrate the unicycle model in closed form
    yaw = spec.initial_yaw + spec.yaw_rate * t
    radius = spec.speed / spec.yaw_rate
    dx = radius * (np.sin(yaw) - np.sin(spec.initial_yaw))
    dy = radius * (np.cos(spec.initial_yaw) - np.cos(yaw))
    return RigidTransform.from_yaw(wrap_angle(yaw), [x0 + dx, y0 + dy, z0])


def _surface_keypoints(size: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Point-symmetric surface samples so the keypoint centroid is exactly 0.

    Symmetry makes the keypoint centroid coincide with the box center,
    which the static-BA centroid read-out relies on. Odd counts get one
    extra point at the origin.
    """
    w, h, length = size
    half = np.array([length / 2.0, w / 2.0, h / 2.0])  # object x=length, y=width, z=height
    points = []
    for _ in range(m // 2):
        axis = rng.integers(0, 3)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        p = rng.uniform(-1.0, 1.0, size=3) * half
        p[axis] = sign * half[axis]
        points.append(p)
        points.append(-p)
    if m % 2 == 1:
        points.append(np.zeros(3))
    return np.array(points)


def generate(config: ScenarioConfig) -> GroundTruthScene:
    """Build a deterministic scene from the config and its seed."""
    rng = np.random.default_rng(config.seed)
    k = config.intrinsics()
    dt = 1.0 / config.frame_rate

    camera_frames: Dict[int, CameraFrame] = {}
    for frame in range(config.num_frames):
        ego = np.array([config.ego_speed * frame * dt, 0.0, 1.2])
        extrinsic = RigidTransform(R_CAMERA_FROM_GLOBAL, -R_CAMERA_FROM_GLOBAL @ ego)
        camera_frames[frame] = CameraFrame(frame, k, extrinsic)

    specs = config.objects if config.objects is not None else _default_object_specs(config)
    if len(specs) != config.num_objects:
        raise ConfigError("objects list must match num_objects")

    height, width, channels = config.grid_shape
    objects: List[GroundTruthObject] = []
    feature_grids: Dict[Tuple[int, int], FeatureGrid] = {}

    for object_id, spec in enumerate(specs):
        size = np.asarray(spec.size, float)
        keypoints = _surface_keypoints(size, config.keypoints_per_object, rng)
        descriptors = rng.normal(size=(len(keypoints), channels))
        if len(keypoints) <= channels:
            # Mutually orthogonal descriptors: a keypoint whose counterpart
            # is invisible then has no confident match anywhere, mimicking
            # well-separated learned features.
            descriptors, _ = np.linalg.qr(descriptors.T)
            descriptors = descriptors.T
        descriptors *= config.descriptor_scale / np.linalg.norm(
            descriptors, axis=1, keepdims=True
        )

        poses_global: Dict[int, RigidTransform] = {}
        poses_camera: Dict[int, RigidTransform] = {}
        observations: Dict[int, Dict[int, Observation]] = {}

        for frame in range(config.num_frames):
            pose_global = _object_pose_at(spec, frame * dt)
            pose_camera = camera_frames[frame].extrinsic.compose(pose_global)
            poses_global[frame] = pose_global
            poses_camera[frame] = pose_camera

            frame_obs: Dict[int, Observation] = {}
            for kp_id, kp in enumerate(keypoints):
                try:
                    pixel, depth = project(pose_camera, kp, k)
                except NonPositiveDepth:
                    continue
                if not (0 <= pixel.u < config.image_width and 0 <= pixel.v < config.image_height):
                    continue
                observed = pixel
                outlier = False
                if config.pixel_noise_std > 0:
                    noise = rng.normal(0.0, config.pixel_noise_std, size=2)
                    observed = Point2(pixel.u + noise[0], pixel.v + noise[1])
                if config.outlier_fraction > 0 and rng.random() < config.outlier_fraction:
                    observed = Point2(
                        rng.uniform(0, config.image_width),
                        rng.uniform(0, config.image_height),
                    )
                    outlier = True
                frame_obs[kp_id] = Observation(
                    noiseless=pixel, observed=observed, depth=depth, outlier=outlier
                )
            if len(frame_obs) >= 4:
                observations[frame] = frame_obs
            else:
                poses_global.pop(frame)
                poses_camera.pop(frame)

        if not observations:
            raise ConfigError(
                f"object {object_id} is never visible; adjust its trajectory"
            )

        for frame, frame_obs in observations.items():
            pixels = np.array([[o.noiseless.u, o.noiseless.v] for o in frame_obs.values()])
            span = np.maximum(pixels.max(axis=0) - pixels.min(axis=0), 8.0)
            lo = pixels.min(axis=0) - 0.1 * span
            hi = pixels.max(axis=0) + 0.1 * span
            roi = (lo[0], lo[1], hi[0], hi[1])
            # Low-norm background features keep non-keypoint cells from
            # producing confident matches, as with learned RoI features.
            values = rng.normal(0.0, config.background_scale, size=(height, width, channels))
            pixel_coords = cell_center_coords(roi, height, width)
            corrupted = config.corruption_prob > 0 and rng.random() < config.corruption_prob
            grid = FeatureGrid(values, pixel_coords, tuple(float(x) for x in roi))
            if not corrupted:
                coords = pixel_coords.copy()
                for kp_id, obs in frame_obs.items():
                    cell = grid.nearest_cell(obs.observed)
                    if cell is None:
                        continue
                    r, c = divmod(cell, width)
                    noise = rng.normal(0.0, config.feature_noise_std, size=channels)
                    values[r, c] = descriptors[kp_id] + noise
                    coords[r, c] = [obs.observed.u, obs.observed.v]
                grid = FeatureGrid(values, coords, tuple(float(x) for x in roi))
            feature_grids[(object_id, frame)] = grid

        objects.append(
            GroundTruthObject(
                object_id=object_id,
                spec=spec,
                keypoints=keypoints,
                poses_global=poses_global,
                poses_camera=poses_camera,
                observations=observations,
            )
        )

    return GroundTruthScene(
        config=config,
        camera_frames=camera_frames,
        objects=objects,
        feature_grids=feature_grids,
    )


def perturb_detections(
    scene: GroundTruthScene,
    noise: Optional[NoiseSpec] = None,
    seed: Optional[int] = None,
) -> List[Tuple[int, List[Detection3D]]]:
    """Detector-style outputs: noisy boxes with dropout and noise-ranked scores.

    Pose noise is applied to the global-frame box (per-axis Gaussian
    translation, Gaussian yaw), optionally scaled with depth. Scores
    decrease monotonically in the drawn noise magnitude. Detections carry
    grid_key = source object id, standing in for RoI feature extraction.
    """
    if noise is None:
        noise = scene.config.pose_noise
    rng = np.random.default_rng(scene.config.seed + 1 if seed is None else seed)
    frames: List[Tuple[int, List[Detection3D]]] = []
    for frame in sorted(scene.camera_frames):
        dets: List[Detection3D] = []
        for obj in scene.objects:
            if frame not in obj.poses_camera:
                continue
            if scene.config.dropout_prob > 0 and rng.random() < scene.config.dropout_prob:
                continue
            depth = obj.poses_camera[frame].translation[2]
            if noise.depth_exponent != 0.0:
                scale = min((depth / noise.depth_ref) ** noise.depth_exponent, noise.max_scale)
                ego = scene.camera_frames[frame].extrinsic.inverse().translation
                ray = obj.poses_global[frame].translation - ego
                ray = ray / max(np.linalg.norm(ray), 1e-12)
                dtrans = rng.normal(0.0, max(noise.lateral_std, 1e-12), size=3)
                dtrans += ray * rng.normal(0.0, max(noise.trans_std * scale, 1e-12))
                dyaw = rng.normal(0.0, max(noise.yaw_std * scale, 1e-12))
            else:
                dtrans = rng.normal(0.0, max(noise.trans_std, 1e-12), size=3)
                dyaw = rng.normal(0.0, max(noise.yaw_std, 1e-12))
            dsize = rng.normal(0.0, noise.size_std, size=3) if noise.size_std > 0 else np.zeros(3)

            gt_global = obj.poses_global[frame]
            noisy_global = RigidTransform.from_yaw(
                wrap_angle(gt_global.yaw() + dyaw), gt_global.translation + dtrans
            )
            noisy_camera = scene.camera_frames[frame].extrinsic.compose(noisy_global)
            size = np.maximum(np.asarray(obj.spec.size) + dsize, 0.2)
            score = float(np.exp(-(np.linalg.norm(dtrans) + abs(dyaw)) / 0.5))

            grid = scene.feature_grids[(obj.object_id, frame)]
            u_min, v_min, u_max, v_max = grid.roi
            dets.append(
                Detection3D(
                    frame_index=frame,
                    box=Box3D(size=size, pose=noisy_camera, frame="camera"),
                    score=score,
                    bbox2d=(u_min, v_min, u_max, v_max),
                    grid_key=obj.object_id,
                )
            )
        frames.append((frame, dets))
    return frames
