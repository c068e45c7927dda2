"""Uniform-grid spatial index: closest-pair distances and box containment.

The grid buckets points into cubic cells. Two points closer than one cell
width always land in the same or adjacent cells, so adjacency queries only
scan a 3x3x3 neighborhood, and closest-pair queries widen the scanned shell
until the best candidate provably cannot be beaten.
"""

import math
from dataclasses import dataclass

import numpy as np

# Pairs farther apart than this can never satisfy the merge adjacency
# threshold, so the grid search gives up and reports "far".
DEFAULT_MAX_DISTANCE = 1.0

FAR = math.inf

_shell_cache = {}


def _shell_offsets(r):
    """Integer offsets at Chebyshev radius exactly r (cached)."""
    if r not in _shell_cache:
        if r == 0:
            offs = np.zeros((1, 3), dtype=np.int64)
        else:
            rng = np.arange(-r, r + 1)
            grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
            offs = grid[np.abs(grid).max(axis=1) == r]
        _shell_cache[r] = offs
    return _shell_cache[r]


class SpatialGrid:
    """Hash grid over a fixed point set; read-only after construction."""

    def __init__(self, positions, cell_size):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        self.positions = np.asarray(positions, dtype=np.float64)
        self.cell_size = float(cell_size)
        cells = np.floor(self.positions / self.cell_size).astype(np.int64)
        self._cells = cells
        self._buckets = {}
        for idx, c in enumerate(map(tuple, cells)):
            self._buckets.setdefault(c, []).append(idx)
        self._buckets = {c: np.asarray(ids, dtype=np.int64) for c, ids in self._buckets.items()}

    def cell_of(self, i):
        return tuple(self._cells[i])

    def points_in_shell(self, center, r):
        """Point ids stored in cells at Chebyshev radius exactly r of center."""
        out = []
        for off in _shell_offsets(r):
            ids = self._buckets.get((center[0] + off[0], center[1] + off[1], center[2] + off[2]))
            if ids is not None:
                out.append(ids)
        if not out:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(out)


def closest_pair_distance(a_ids, b_ids, grid, d_max=DEFAULT_MAX_DISTANCE):
    """Exact min distance between two disjoint point-id sets, or FAR.

    Scans grid shells of growing radius around each point of the smaller set.
    A point in an unscanned shell at radius r is at least (r-1)*cell away, so
    once the best candidate is closer than that bound the scan stops. Pairs
    farther than d_max are reported as FAR (math.inf).
    """
    a_ids = np.asarray(a_ids, dtype=np.int64)
    b_ids = np.asarray(b_ids, dtype=np.int64)
    if a_ids.size == 0 or b_ids.size == 0:
        return FAR
    if a_ids.size > b_ids.size:
        a_ids, b_ids = b_ids, a_ids

    in_b = np.zeros(grid.positions.shape[0], dtype=bool)
    in_b[b_ids] = True

    cell = grid.cell_size
    max_r = int(math.ceil(d_max / cell)) + 1
    best = FAR
    pos = grid.positions
    for i in a_ids:
        p = pos[i]
        center = grid.cell_of(i)
        r = 0
        while r <= max_r:
            # Unscanned shells can only hold points at >= (r-1)*cell.
            if (r - 1) * cell > min(best, d_max):
                break
            cand = grid.points_in_shell(center, r)
            if cand.size:
                cand = cand[in_b[cand]]
                if cand.size:
                    d = np.linalg.norm(pos[cand] - p, axis=1).min()
                    if d < best:
                        best = d
            r += 1
    return best if best <= d_max else FAR


def _encode_cells(cells):
    """Map integer cell coords to scalar keys (collision-free)."""
    lo = cells.min(axis=0)
    span = cells.max(axis=0) - lo + 1
    c = cells - lo
    return (c[:, 0] * span[1] + c[:, 1]) * span[2] + c[:, 2], lo, span


def labeled_close_pairs(positions, labels, cutoff):
    """All unordered label pairs with some point pair within cutoff.

    Returns a dict {(la, lb): min distance} with la < lb. Exact for every
    returned pair: any two points within cutoff sit in the same or adjacent
    cells of a cutoff-sized grid, so the 27-neighborhood scan sees all of
    them. Label pairs whose closest points are farther than cutoff never
    appear (and are never evaluated pointwise).
    """
    positions = np.asarray(positions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = positions.shape[0]
    if n == 0:
        return {}

    cells = np.floor(positions / cutoff).astype(np.int64)
    keys, lo, span = _encode_cells(cells)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    uniq_keys, starts = np.unique(sorted_keys, return_index=True)
    ends = np.append(starts[1:], n)

    cutoff2 = cutoff * cutoff
    shifted = cells - lo
    base_lab = int(labels.max()) + 1
    pair_keys_acc = []
    dists_acc = []

    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                nc = shifted + (dx, dy, dz)
                valid = ((nc >= 0) & (nc < span)).all(axis=1)
                if not valid.any():
                    continue
                src = np.flatnonzero(valid)
                nk = (nc[src, 0] * span[1] + nc[src, 1]) * span[2] + nc[src, 2]
                ui = np.searchsorted(uniq_keys, nk)
                ok = (ui < uniq_keys.size) & (uniq_keys[np.minimum(ui, uniq_keys.size - 1)] == nk)
                src, ui = src[ok], ui[ok]
                if src.size == 0:
                    continue
                s, e = starts[ui], ends[ui]
                counts = e - s
                total = int(counts.sum())
                if total == 0:
                    continue
                i_rep = np.repeat(src, counts)
                base = np.repeat(s, counts)
                local = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
                j_idx = order[base + local]

                keep = i_rep < j_idx
                i_rep, j_idx = i_rep[keep], j_idx[keep]
                if i_rep.size == 0:
                    continue
                la, lb = labels[i_rep], labels[j_idx]
                keep = la != lb
                i_rep, j_idx, la, lb = i_rep[keep], j_idx[keep], la[keep], lb[keep]
                if i_rep.size == 0:
                    continue
                d2 = ((positions[i_rep] - positions[j_idx]) ** 2).sum(axis=1)
                keep = d2 <= cutoff2
                if not keep.any():
                    continue
                la, lb, d2 = la[keep], lb[keep], d2[keep]
                lo_lab = np.minimum(la, lb)
                hi_lab = np.maximum(la, lb)
                pair_keys_acc.append(lo_lab * base_lab + hi_lab)
                dists_acc.append(d2)

    if not pair_keys_acc:
        return {}
    pair_keys = np.concatenate(pair_keys_acc)
    d2 = np.concatenate(dists_acc)
    uniq, inv = np.unique(pair_keys, return_inverse=True)
    mins = np.full(uniq.size, np.inf)
    np.minimum.at(mins, inv, d2)
    return {
        (int(k // base_lab), int(k % base_lab)): float(math.sqrt(m))
        for k, m in zip(uniq, mins)
    }


@dataclass(frozen=True)
class PriorBox:
    """Axis-aligned world-frame bounding box (closed on all faces)."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        mn = np.asarray(self.min_corner, dtype=np.float64)
        mx = np.asarray(self.max_corner, dtype=np.float64)
        if mn.shape != (3,) or mx.shape != (3,):
            raise ValueError("box corners must be 3-vectors")
        if (mn > mx).any():
            raise ValueError("box min corner exceeds max corner")
        object.__setattr__(self, "min_corner", mn)
        object.__setattr__(self, "max_corner", mx)

    def contains(self, points):
        """Boolean mask of points inside the closed box."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return ((p >= self.min_corner) & (p <= self.max_corner)).all(axis=1)

    def fraction_inside(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if p.shape[0] == 0:
            return 0.0
        return float(self.contains(p).mean())
