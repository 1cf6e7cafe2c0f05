"""From pairwise dense correspondences to long-term keypoint tracks.

Pipeline per object: schedule frame pairs over a sliding window, extract
mutual-best matches from each correspondence map (top-k balanced per
pair), reject outliers with a fundamental-matrix RANSAC, then partition
the match graph so every connected component holds at most one vertex per
frame. Components spanning two or more frames become keypoint tracks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import DegenerateGeometry
from .geometry import CameraIntrinsics, Point2, Point3
from .oba import CorrespondenceMap, FeatureGrid, KeypointObservation, KeypointTrack


@dataclass(frozen=True)
class MatchPair:
    frame_a: int
    frame_b: int
    cell_a: int
    cell_b: int
    pixel_a: Point2
    pixel_b: Point2
    similarity: float

    def __post_init__(self):
        if self.frame_a == self.frame_b:
            raise ValueError("a match must span two distinct frames")


def schedule_pairs(frame_indices: Sequence[int], window: int) -> List[Tuple[int, int]]:
    """Adjacent pairs plus the long-range pair bridging each sliding window.

    For ordered frames and window tau, emits (t, t+1) for every adjacent
    pair and (t_i, t_{i+tau}) for every window that fits, without
    duplicates. Pairing is positional so irregular frame indices still
    bridge `window` steps.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    frames = list(frame_indices)
    pairs: List[Tuple[int, int]] = []
    seen = set()
    for i in range(len(frames) - 1):
        pair = (frames[i], frames[i + 1])
        if pair not in seen:
            pairs.append(pair)
            seen.add(pair)
    for i in range(len(frames) - window):
        pair = (frames[i], frames[i + window])
        if pair not in seen:
            pairs.append(pair)
            seen.add(pair)
    return pairs


def extract_matches(
    corr: CorrespondenceMap,
    grids: Tuple[FeatureGrid, FeatureGrid],
    top_k: int,
    frames: Tuple[int, int] = (0, 1),
) -> List[MatchPair]:
    """Mutual-best matches ranked by normalized similarity, truncated to top_k.

    A pair (i, i') is kept when i' is cell i's best match and i is cell
    i''s best match under the raw similarities. The stored similarity is
    the mean of the two softmax directions, which symmetrizes the row
    normalization.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    grid_a, grid_b = grids
    raw = corr.raw
    forward = corr.normalized
    # softmax over rows of the reverse direction (columns of raw)
    backward = np.exp(raw - raw.max(axis=0, keepdims=True))
    backward = backward / backward.sum(axis=0, keepdims=True)

    best_forward = np.argmax(raw, axis=1)
    best_backward = np.argmax(raw, axis=0)
    candidates = []
    for i, j in enumerate(best_forward):
        if best_backward[j] != i:
            continue
        similarity = 0.5 * (forward[i, j] + backward[i, j])
        candidates.append((similarity, i, int(j)))
    candidates.sort(key=lambda c: (-c[0], c[1]))
    matches = []
    for similarity, i, j in candidates[:top_k]:
        matches.append(
            MatchPair(
                frame_a=frames[0],
                frame_b=frames[1],
                cell_a=i,
                cell_b=j,
                pixel_a=grid_a.cell_pixel(i),
                pixel_b=grid_b.cell_pixel(j),
                similarity=float(similarity),
            )
        )
    return matches


@dataclass
class RansacConfig:
    iterations: int = 1000
    inlier_threshold_px: float = 2.0
    min_samples: int = 8
    min_inliers: int = 8
    confidence: float = 0.999
    seed: int = 0


@dataclass
class RansacResult:
    pairs: List[MatchPair]
    filtered: bool  # False when the input was too small to filter


def _eight_point(a: np.ndarray, b: np.ndarray) -> Optional[np.ndarray]:
    """Normalized 8-point fundamental matrix; None for degenerate samples."""

    def normalize(pts):
        mean = pts.mean(axis=0)
        scale = np.sqrt(2.0) / max(np.mean(np.linalg.norm(pts - mean, axis=1)), 1e-12)
        t = np.array(
            [[scale, 0, -scale * mean[0]], [0, scale, -scale * mean[1]], [0, 0, 1]]
        )
        homo = np.column_stack([pts, np.ones(len(pts))])
        return (t @ homo.T).T, t

    na, ta = normalize(a)
    nb, tb = normalize(b)
    design = np.column_stack(
        [
            nb[:, 0] * na[:, 0],
            nb[:, 0] * na[:, 1],
            nb[:, 0],
            nb[:, 1] * na[:, 0],
            nb[:, 1] * na[:, 1],
            nb[:, 1],
            na[:, 0],
            na[:, 1],
            np.ones(len(a)),
        ]
    )
    try:
        _, s, vt = np.linalg.svd(design)
    except np.linalg.LinAlgError:
        return None
    if s[-2] < 1e-10:  # rank-deficient sample
        return None
    f = vt[-1].reshape(3, 3)
    # enforce rank 2
    u, s, vt = np.linalg.svd(f)
    f = u @ np.diag([s[0], s[1], 0.0]) @ vt
    return tb.T @ f @ ta


def _eight_point_batch(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Stacked 8-point fits: (B, 8, 2) samples -> ((B, 3, 3) models, validity).

    Same algorithm as `_eight_point`, batched so RANSAC amortizes the SVD
    cost over all sampled minimal sets at once.
    """

    def normalize(pts):
        mean = pts.mean(axis=1, keepdims=True)  # (B, 1, 2)
        spread = np.maximum(
            np.linalg.norm(pts - mean, axis=2).mean(axis=1), 1e-12
        )  # (B,)
        scale = np.sqrt(2.0) / spread
        batch = len(pts)
        t = np.zeros((batch, 3, 3))
        t[:, 0, 0] = t[:, 1, 1] = scale
        t[:, 0, 2] = -scale * mean[:, 0, 0]
        t[:, 1, 2] = -scale * mean[:, 0, 1]
        t[:, 2, 2] = 1.0
        homo = np.concatenate([pts, np.ones(pts.shape[:2] + (1,))], axis=2)
        return homo @ t.transpose(0, 2, 1), t

    na, ta = normalize(a)
    nb, tb = normalize(b)
    design = np.stack(
        [
            nb[..., 0] * na[..., 0],
            nb[..., 0] * na[..., 1],
            nb[..., 0],
            nb[..., 1] * na[..., 0],
            nb[..., 1] * na[..., 1],
            nb[..., 1],
            na[..., 0],
            na[..., 1],
            np.ones(na.shape[:2]),
        ],
        axis=2,
    )
    _, s, vt = np.linalg.svd(design)
    valid = s[:, -2] >= 1e-10
    f = vt[:, -1].reshape(-1, 3, 3)
    u, s, vt = np.linalg.svd(f)
    s = s.copy()
    s[:, 2] = 0.0
    f = u @ (s[:, :, None] * vt)
    return tb.transpose(0, 2, 1) @ f @ ta, valid


def _symmetric_epipolar_distance(f: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    homo_a = np.column_stack([a, np.ones(len(a))])
    homo_b = np.column_stack([b, np.ones(len(b))])
    lines_b = homo_a @ f.T  # epipolar lines in image b
    lines_a = homo_b @ f  # epipolar lines in image a
    num = np.abs(np.sum(homo_b * lines_b, axis=1))
    da = num / np.maximum(np.hypot(lines_b[:, 0], lines_b[:, 1]), 1e-12)
    db = num / np.maximum(np.hypot(lines_a[:, 0], lines_a[:, 1]), 1e-12)
    return 0.5 * (da + db)


def ransac_filter(
    pairs: Sequence[MatchPair],
    k: CameraIntrinsics,
    config: Optional[RansacConfig] = None,
) -> RansacResult:
    """Reject epipolar outliers among one object's cross-frame matches.

    A rigid object moving relative to the camera admits a single
    fundamental matrix per frame pair, so its true correspondences are
    consistent with one epipolar geometry. Inputs with fewer than 8 pairs
    are returned unchanged and flagged unfiltered. Raises
    DegenerateGeometry when every sampled minimal set is rank-deficient.
    """
    if config is None:
        config = RansacConfig()
    pairs = list(pairs)
    if len(pairs) < config.min_samples:
        return RansacResult(pairs=pairs, filtered=False)
    a = np.array([[p.pixel_a.u, p.pixel_a.v] for p in pairs])
    b = np.array([[p.pixel_b.u, p.pixel_b.v] for p in pairs])
    rng = np.random.default_rng(config.seed)
    homo_a = np.column_stack([a, np.ones(len(a))])
    homo_b = np.column_stack([b, np.ones(len(b))])
    best_inliers: Optional[np.ndarray] = None
    best_count = -1
    any_model = False
    max_iterations = config.iterations
    iteration = 0
    chunk_size = 64
    while iteration < max_iterations:
        batch = min(chunk_size, max_iterations - iteration)
        iteration += batch
        samples = np.array(
            [
                rng.choice(len(pairs), size=config.min_samples, replace=False)
                for _ in range(batch)
            ]
        )
        models, valid = _eight_point_batch(a[samples], b[samples])
        if not np.any(valid):
            continue
        any_model = True
        models = models[valid]
        # symmetric epipolar distances, batched over models
        lines_b = homo_a @ models.transpose(0, 2, 1)  # (B, N, 3)
        lines_a = homo_b @ models
        num = np.abs(np.sum(homo_b[None] * lines_b, axis=2))
        da = num / np.maximum(np.hypot(lines_b[..., 0], lines_b[..., 1]), 1e-12)
        db = num / np.maximum(np.hypot(lines_a[..., 0], lines_a[..., 1]), 1e-12)
        inlier_mask = 0.5 * (da + db) < config.inlier_threshold_px
        counts = inlier_mask.sum(axis=1)
        top = int(np.argmax(counts))
        if counts[top] > best_count:
            best_count = int(counts[top])
            best_inliers = inlier_mask[top]
            ratio = best_count / len(pairs)
            if ratio > 0:
                # adaptive termination on the inlier ratio
                denom = np.log(max(1.0 - ratio**config.min_samples, 1e-12))
                needed = int(np.ceil(np.log(1.0 - config.confidence) / denom))
                max_iterations = min(config.iterations, max(needed, iteration))
    if not any_model:
        raise DegenerateGeometry("all RANSAC samples were rank-deficient")
    if best_inliers is None or best_count < config.min_inliers:
        return RansacResult(pairs=pairs, filtered=False)
    # refit on the provisional inliers for a stabler consensus set
    f = _eight_point(a[best_inliers], b[best_inliers])
    if f is not None:
        distances = _symmetric_epipolar_distance(f, a, b)
        refined = distances < config.inlier_threshold_px
        if refined.sum() >= best_count:
            best_inliers = refined
    kept = [p for p, keep in zip(pairs, best_inliers) if keep]
    return RansacResult(pairs=kept, filtered=True)


@dataclass
class MatchGraph:
    """Undirected graph with (frame, cell) vertices and match edges."""

    graph: nx.Graph = field(default_factory=nx.Graph)

    def add_pair(self, pair: MatchPair) -> None:
        va = (pair.frame_a, pair.cell_a)
        vb = (pair.frame_b, pair.cell_b)
        self.graph.add_node(va, pixel=pair.pixel_a)
        self.graph.add_node(vb, pixel=pair.pixel_b)
        if self.graph.has_edge(va, vb):
            # keep the stronger similarity for duplicate edges
            if pair.similarity > self.graph.edges[va, vb]["similarity"]:
                self.graph.edges[va, vb]["similarity"] = pair.similarity
        else:
            self.graph.add_edge(va, vb, similarity=pair.similarity)

    @classmethod
    def from_pairs(cls, pairs: Sequence[MatchPair]) -> "MatchGraph":
        graph = cls()
        for pair in pairs:
            graph.add_pair(pair)
        return graph


def _frame_conflict(component: List[Tuple[int, int]]) -> Optional[Tuple[Tuple[int, int], Tuple[int, int]]]:
    by_frame: Dict[int, Tuple[int, int]] = {}
    for vertex in sorted(component):
        if vertex[0] in by_frame:
            return by_frame[vertex[0]], vertex
        by_frame[vertex[0]] = vertex
    return None


def build_tracks(graph: MatchGraph, next_track_id: int = 0) -> List[KeypointTrack]:
    """Partition the match graph into per-frame-unique keypoint tracks.

    While any connected component contains two vertices from the same
    frame, the minimum-similarity edge on a path between the conflicting
    vertices is cut and components are recomputed. Final components
    spanning >= 2 frames become tracks whose observation pixel per frame
    is the vertex pixel. Track points are initialized at the object-frame
    origin, to be estimated by bundle adjustment.
    """
    work = graph.graph.copy()
    while True:
        conflict = None
        for component in nx.connected_components(work):
            conflict = _frame_conflict(list(component))
            if conflict is not None:
                break
        if conflict is None:
            break
        path = nx.shortest_path(work, conflict[0], conflict[1])
        weakest = min(
            zip(path[:-1], path[1:]),
            key=lambda e: work.edges[e]["similarity"],
        )
        work.remove_edge(*weakest)

    tracks: List[KeypointTrack] = []
    track_id = next_track_id
    for component in sorted(nx.connected_components(work), key=lambda c: sorted(c)[0]):
        vertices = sorted(component)
        if len(vertices) < 2:
            continue
        observations = [
            KeypointObservation(frame_index=frame, pixel=work.nodes[(frame, cell)]["pixel"])
            for frame, cell in vertices
        ]
        tracks.append(
            KeypointTrack(
                track_id=track_id,
                point_object_frame=Point3(0.0, 0.0, 0.0),
                observations=observations,
            )
        )
        track_id += 1
    return tracks
