"""3D objectness priors from consecutive 2D frames.

Masks of the same object are grouped across frames first (greedy
adjacent-frame matching on mask features, then transitive propagation), and
only then projected to 3D, where each group's points form one axis-aligned
prior box. Grouping before projection sidesteps the impossible task of
picking a single 3D overlap criterion for objects of all sizes.
"""

from dataclasses import dataclass, field

import numpy as np

from .spatial import PriorBox

PRIORS_SCHEMA = "p2o.priors/1"


@dataclass
class MatchParams:
    tau: float = 0.3
    depth_tol: float = 0.05
    min_track_frames: int = 2
    min_track_points: int = 30

    def __post_init__(self):
        if not (-1.0 < self.tau < 1.0):
            raise ValueError("tau must be in (-1, 1)")
        if self.depth_tol <= 0:
            raise ValueError("depth_tol must be positive")
        if self.min_track_frames < 1 or self.min_track_points < 1:
            raise ValueError("track thresholds must be >= 1")


@dataclass
class ObjectTrack:
    """Masks judged to show one object, plus their pooled 3D points."""

    members: list
    point_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def match_adjacent(frame_a, frame_b, tau, mutual=False):
    """Greedy links (i in a, j in b) by highest mask-feature similarity.

    Each mask in frame_a links to its most similar mask in frame_b when that
    similarity exceeds tau; argmax ties go to the lowest j. Matching is
    one-directional, so several masks of frame_a may link to one mask of
    frame_b. With mutual=True a link also requires i to be j's best match.
    """
    if not frame_a.masks or not frame_b.masks:
        return []
    fa = np.stack([m.feature for m in frame_a.masks]).astype(np.float64)
    fb = np.stack([m.feature for m in frame_b.masks]).astype(np.float64)
    fa /= np.linalg.norm(fa, axis=1, keepdims=True)
    fb /= np.linalg.norm(fb, axis=1, keepdims=True)
    sims = fa @ fb.T
    best_j = sims.argmax(axis=1)
    links = []
    if mutual:
        best_i = sims.argmax(axis=0)
    for i, j in enumerate(best_j):
        if sims[i, j] <= tau:
            continue
        if mutual and best_i[j] != i:
            continue
        links.append((i, int(j)))
    return links


def propagate_sameness(nodes, edges):
    """Connected components of the (frame, mask) link graph as tracks.

    Every node ends up in exactly one track, linked or not. Components are
    ordered by their smallest member and members are sorted, so the result is
    deterministic.
    """
    nodes = sorted(nodes)
    index = {node: k for k, node in enumerate(nodes)}
    parent = list(range(len(nodes)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in edges:
        ra, rb = find(index[a]), find(index[b])
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            parent[rb] = ra

    groups = {}
    for k in range(len(nodes)):
        groups.setdefault(find(k), []).append(k)
    return [
        ObjectTrack(members=[nodes[k] for k in groups[root]])
        for root in sorted(groups)
    ]


def camera_project(positions, intrinsics, extrinsics, image_shape):
    """Project world points to pixels under nearest-pixel rounding.

    Returns (row, col, depth, in_image); row/col are only meaningful where
    in_image is set, which requires positive camera-space depth and a pixel
    inside the image. Extrinsics are camera-to-world.
    """
    pos = np.asarray(positions, dtype=np.float64)
    ext = np.asarray(extrinsics, dtype=np.float64)
    cam = (pos - ext[:3, 3]) @ ext[:3, :3]
    z = cam[:, 2]
    ok = z > 0.0

    fx, fy = intrinsics[0, 0], intrinsics[1, 1]
    cx, cy = intrinsics[0, 2], intrinsics[1, 2]
    h, w = image_shape
    col = np.full(pos.shape[0], -1, dtype=np.int64)
    row = np.full(pos.shape[0], -1, dtype=np.int64)
    with np.errstate(invalid="ignore"):
        col[ok] = np.floor(fx * cam[ok, 0] / z[ok] + cx + 0.5).astype(np.int64)
        row[ok] = np.floor(fy * cam[ok, 1] / z[ok] + cy + 0.5).astype(np.int64)
    ok &= (col >= 0) & (col < w) & (row >= 0) & (row < h)
    return row, col, z, ok


def project_mask_points(cloud, frame, mask_index, depth_tol=0.05):
    """3D point ids whose projection lands inside the given 2D mask.

    A point qualifies when it is in front of the camera, projects inside the
    image, agrees with the rendered depth at its pixel within depth_tol (a
    zero depth pixel never matches), and the pixel is set in the mask.
    """
    row, col, z, ok = camera_project(
        cloud.positions, frame.intrinsics, frame.extrinsics, frame.depth.shape
    )
    idx = np.flatnonzero(ok)
    d = frame.depth[row[idx], col[idx]].astype(np.float64)
    good = (d > 0.0) & (np.abs(z[idx] - d) <= depth_tol)
    idx = idx[good]
    bitmap = frame.masks[mask_index].bitmap
    idx = idx[bitmap[row[idx], col[idx]]]
    return idx


def build_tracks(cloud, frames, params=None, mutual=False):
    """Group masks across frames, project each group, pool the points.

    Tracks seen in fewer than min_track_frames distinct frames or with fewer
    than min_track_points pooled points are dropped.
    """
    params = params or MatchParams()
    frames = sorted(frames, key=lambda f: f.frame_id)
    by_id = {f.frame_id: f for f in frames}

    nodes = [(f.frame_id, m) for f in frames for m in range(len(f.masks))]
    edges = []
    for a, b in zip(frames, frames[1:]):
        for i, j in match_adjacent(a, b, params.tau, mutual=mutual):
            edges.append(((a.frame_id, i), (b.frame_id, j)))

    tracks = propagate_sameness(nodes, edges)
    kept = []
    for track in tracks:
        if len({fid for fid, _ in track.members}) < params.min_track_frames:
            continue
        pooled = [
            project_mask_points(cloud, by_id[fid], mi, params.depth_tol)
            for fid, mi in track.members
        ]
        ids = np.unique(np.concatenate(pooled)) if pooled else np.empty(0, dtype=np.int64)
        if ids.size < params.min_track_points:
            continue
        track.point_ids = ids
        kept.append(track)
    return kept


def build_priors(cloud, frames, params=None, mutual=False):
    """Tight axis-aligned boxes of the surviving tracks' pooled points."""
    tracks = build_tracks(cloud, frames, params, mutual=mutual)
    pos = cloud.positions.astype(np.float64)
    return [
        PriorBox(pos[t.point_ids].min(axis=0), pos[t.point_ids].max(axis=0))
        for t in tracks
    ]
