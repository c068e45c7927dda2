"""Layer-0 super-points: seeded region growing over a voxel grid.

Points are voxelized, seeds are planted on a coarser grid (one per occupied
seed cell, at the voxel nearest the cell center), and seeds grow outward in
breadth-first waves over the 26-connected voxel graph. Each point reached in
a wave joins the seed with the smallest mixed distance

    D = w_spatial * d_xyz / (3 * seed_resolution)
      + w_color   * d_rgb
      + w_normal  * (1 - |n . n_seed|)

with ties going to the lowest seed index. A seed keeps growing through a
voxel only if it actually won points there, which keeps every super-point
connected in the voxel graph. Voxels no seed can reach fall back to the
nearest seed centroid.
"""

from dataclasses import dataclass

import numpy as np

from . import scene_io
from .errors import EmptyCloud

_OFFSETS_26 = np.array(
    [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0)
    ],
    dtype=np.int64,
)


@dataclass
class SuperpointParams:
    voxel_size: float = 0.02
    seed_resolution: float = 0.25
    w_spatial: float = 0.4
    w_color: float = 0.2
    w_normal: float = 1.0

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if self.seed_resolution < self.voxel_size:
            raise ValueError("seed_resolution must be >= voxel_size")
        weights = (self.w_spatial, self.w_color, self.w_normal)
        if any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
        if not any(w > 0 for w in weights):
            raise ValueError("at least one weight must be positive")


def _group_starts(labels, n_groups):
    counts = np.bincount(labels, minlength=n_groups)
    starts = np.zeros(n_groups + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    return starts, counts


def build_superpoints(cloud, params=None):
    """Partition all point ids into super-points.

    Returns a list of sorted int64 index arrays; their union is [0, N) and
    they are pairwise disjoint. Deterministic for identical inputs.
    """
    params = params or SuperpointParams()
    pos = cloud.positions.astype(np.float64)
    n = pos.shape[0]
    if n == 0:
        raise EmptyCloud("cannot build super-points from an empty cloud")

    if cloud.normals is None:
        if n < 3:
            normals = np.tile((0.0, 0.0, 1.0), (n, 1))
        else:
            normals = scene_io.estimate_normals(cloud, k=min(16, n)).astype(np.float64)
    else:
        normals = cloud.normals.astype(np.float64)
    colors = cloud.colors.astype(np.float64) if cloud.colors is not None else None

    # Voxelize; voxel index = rank of its (sorted unique) scalar key.
    cells = np.floor(pos / params.voxel_size).astype(np.int64)
    lo = cells.min(axis=0)
    span = cells.max(axis=0) - lo + 1
    shifted = cells - lo
    keys = (shifted[:, 0] * span[1] + shifted[:, 1]) * span[2] + shifted[:, 2]
    vox_keys, first_point, point_vox = np.unique(keys, return_index=True, return_inverse=True)
    n_vox = vox_keys.size
    vox_coord = shifted[first_point]

    point_order = np.argsort(point_vox, kind="stable")
    vox_starts, vox_counts = _group_starts(point_vox, n_vox)

    def points_of(vox_ids):
        counts = vox_counts[vox_ids]
        total = int(counts.sum())
        base = np.repeat(vox_starts[vox_ids], counts)
        local = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        return point_order[base + local], counts

    # Voxel centers drive seed selection; per-voxel means drive seed features.
    vox_center = (vox_coord + lo + 0.5) * params.voxel_size

    # One seed per occupied seed-resolution cell: the voxel nearest the cell
    # center, ties broken by lowest voxel key.
    seed_cell = np.floor(vox_center / params.seed_resolution).astype(np.int64)
    s_lo = seed_cell.min(axis=0)
    s_span = seed_cell.max(axis=0) - s_lo + 1
    sc = seed_cell - s_lo
    cell_keys = (sc[:, 0] * s_span[1] + sc[:, 1]) * s_span[2] + sc[:, 2]
    cell_center = (seed_cell + 0.5) * params.seed_resolution
    dist_to_center = np.linalg.norm(vox_center - cell_center, axis=1)
    pick = np.lexsort((vox_keys, dist_to_center, cell_keys))
    _, first_in_cell = np.unique(cell_keys[pick], return_index=True)
    # Seed index follows the seed-cell grid order (unique returns keys sorted).
    seed_vox = pick[first_in_cell]
    n_seeds = seed_vox.size

    seed_centroid = np.empty((n_seeds, 3))
    seed_color = np.zeros((n_seeds, 3))
    seed_normal = np.empty((n_seeds, 3))
    for s, v in enumerate(seed_vox):
        ids = point_order[vox_starts[v] : vox_starts[v] + vox_counts[v]]
        seed_centroid[s] = pos[ids].mean(axis=0)
        if colors is not None:
            seed_color[s] = colors[ids].mean(axis=0)
        mean_n = normals[ids].mean(axis=0)
        length = np.linalg.norm(mean_n)
        seed_normal[s] = mean_n / length if length > 0 else (0.0, 0.0, 1.0)

    def mixed_distance(pts, seeds):
        d = np.linalg.norm(pos[pts] - seed_centroid[seeds], axis=1)
        score = params.w_spatial * d / (3.0 * params.seed_resolution)
        if colors is not None and params.w_color > 0:
            score = score + params.w_color * np.linalg.norm(
                colors[pts] - seed_color[seeds], axis=1
            )
        if params.w_normal > 0:
            dots = np.abs((normals[pts] * seed_normal[seeds]).sum(axis=1))
            score = score + params.w_normal * (1.0 - dots)
        return score

    point_seed = np.full(n, -1, dtype=np.int64)
    vox_claimed = np.zeros(n_vox, dtype=bool)

    # Wave 0: each seed claims its own voxel outright.
    vox_claimed[seed_vox] = True
    for s, v in enumerate(seed_vox):
        ids = point_order[vox_starts[v] : vox_starts[v] + vox_counts[v]]
        point_seed[ids] = s
    frontier_vox = seed_vox.copy()
    frontier_seed = np.arange(n_seeds, dtype=np.int64)

    while frontier_vox.size:
        # Candidate (voxel, seed) claims: unclaimed neighbors of the frontier.
        fc = vox_coord[frontier_vox]
        cand_vox = []
        cand_seed = []
        for off in _OFFSETS_26:
            nc = fc + off
            ok = ((nc >= 0) & (nc < span)).all(axis=1)
            if not ok.any():
                continue
            nk = (nc[ok, 0] * span[1] + nc[ok, 1]) * span[2] + nc[ok, 2]
            vi = np.searchsorted(vox_keys, nk)
            hit = (vi < n_vox) & (vox_keys[np.minimum(vi, n_vox - 1)] == nk)
            vi = vi[hit]
            unclaimed = ~vox_claimed[vi]
            cand_vox.append(vi[unclaimed])
            cand_seed.append(frontier_seed[ok][hit][unclaimed])
        if not cand_vox:
            break
        cv = np.concatenate(cand_vox)
        cs = np.concatenate(cand_seed)
        if cv.size == 0:
            break
        pair_key = cv * n_seeds + cs
        uniq_pairs = np.unique(pair_key)
        cv = uniq_pairs // n_seeds
        cs = uniq_pairs % n_seeds

        pts, counts = points_of(cv)
        seeds_rep = np.repeat(cs, counts)
        scores = mixed_distance(pts, seeds_rep)
        # Per point: smallest score wins, ties to the lowest seed index.
        order = np.lexsort((seeds_rep, scores, pts))
        pts_sorted = pts[order]
        first = np.concatenate(([True], pts_sorted[1:] != pts_sorted[:-1]))
        win_pts = pts_sorted[first]
        win_seeds = seeds_rep[order][first]
        point_seed[win_pts] = win_seeds
        vox_claimed[np.unique(cv)] = True

        # A seed only keeps growing through voxels where it won points.
        win_key = np.unique(point_vox[win_pts] * n_seeds + win_seeds)
        frontier_vox = win_key // n_seeds
        frontier_seed = win_key % n_seeds

    # Voxels unreachable from every seed: nearest seed centroid per point.
    missing = np.flatnonzero(point_seed < 0)
    if missing.size:
        for start in range(0, missing.size, 4096):
            blk = missing[start : start + 4096]
            d = np.linalg.norm(pos[blk, None, :] - seed_centroid[None, :, :], axis=2)
            point_seed[blk] = d.argmin(axis=1)

    order = np.argsort(point_seed, kind="stable")
    starts, counts = _group_starts(point_seed, n_seeds)
    return [order[starts[s] : starts[s] + counts[s]] for s in range(n_seeds)]
