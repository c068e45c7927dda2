"""Scene inputs and outputs: point clouds, RGB-D frames, instance manifests.

All binary formats are little-endian, magic-tagged, and flat so golden-file
tests stay trivial:

  points.p2o      "P2O1" | u32 N | u8 flags (bit0 colors, bit1 normals)
                  | Nx3 f32 positions [| Nx3 f32 colors] [| Nx3 f32 normals]
  features.f32    "P2OF" | u32 N | u32 C | NxC f32 row-major
  frame_<id>.cam  JSON {fx, fy, cx, cy, width, height, extrinsics[16]}
  frame_<id>.depth raw f32, height*width values, row-major, 0 = invalid
  frame_<id>.masks "P2OM" | u32 mask_count | u32 C2
                  | per mask: u32 rle_len | rle u32s | C2 f32 feature

Mask bitmaps are run-length encoded row-major with alternating run counts,
always starting with a zero-run (possibly empty).

Instance manifests are one line per instance, ``<mask file> <kind> <conf>``,
where the mask file is relative to the manifest and holds one point index per
line. Loading inverts writing exactly, order preserved.
"""

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    CorruptHeader,
    CorruptRLE,
    DimensionMismatch,
    FormatError,
    InconsistentMaskFeatureDim,
    IndexOutOfRange,
    NonFinite,
    NonOrthonormalPose,
)

POINTS_MAGIC = b"P2O1"
FEATURES_MAGIC = b"P2OF"
MASKS_MAGIC = b"P2OM"

FORMAT_VERSIONS = {
    "points.p2o": "P2O1",
    "features.f32": "P2OF",
    "frame masks": "P2OM",
    "instance manifest": "p2o.manifest/1",
    "hierarchy json": "p2o.hierarchy/1",
    "priors json": "p2o.priors/1",
    "report json": "p2o.report/1",
    "superpoints json": "p2o.superpoints/1",
}

_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")

KINDS = ("object", "part")


# ---------------------------------------------------------------------------
# domain types


@dataclass
class SceneCloud:
    """Surface points with optional colors, normals and per-point features."""

    positions: np.ndarray
    colors: np.ndarray | None = None
    normals: np.ndarray | None = None
    semantic_features: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float32)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3 or self.positions.shape[0] < 1:
            raise DimensionMismatch("positions must be Nx3 with N >= 1")
        if not np.isfinite(self.positions).all():
            raise NonFinite("positions contain non-finite values")
        n = self.positions.shape[0]
        if self.colors is not None:
            self.colors = np.ascontiguousarray(self.colors, dtype=np.float32)
            if self.colors.shape != (n, 3):
                raise DimensionMismatch("colors must match positions")
        if self.normals is not None:
            self.normals = np.ascontiguousarray(self.normals, dtype=np.float32)
            if self.normals.shape != (n, 3):
                raise DimensionMismatch("normals must match positions")
            norms = np.linalg.norm(self.normals.astype(np.float64), axis=1)
            if (np.abs(norms - 1.0) > 1e-4).any():
                raise FormatError("normals must be unit length within 1e-4")
        if self.semantic_features is not None:
            self.semantic_features = np.ascontiguousarray(self.semantic_features, dtype=np.float32)
            if self.semantic_features.ndim != 2 or self.semantic_features.shape[0] != n:
                raise DimensionMismatch(
                    f"feature rows ({self.semantic_features.shape[0]}) != point count ({n})"
                )
            if not np.isfinite(self.semantic_features).all():
                raise NonFinite("semantic features contain non-finite values")

    @property
    def n_points(self):
        return self.positions.shape[0]


@dataclass
class MaskEntry:
    """One binary 2D mask plus its pooled feature vector."""

    bitmap: np.ndarray
    feature: np.ndarray

    def __post_init__(self):
        self.bitmap = np.ascontiguousarray(self.bitmap, dtype=bool)
        if self.bitmap.ndim != 2:
            raise DimensionMismatch("mask bitmap must be 2D")
        if not self.bitmap.any():
            raise FormatError("mask bitmap has no set pixels")
        self.feature = np.ascontiguousarray(self.feature, dtype=np.float32)
        if self.feature.ndim != 1:
            raise DimensionMismatch("mask feature must be a vector")
        if not np.isfinite(self.feature).all():
            raise NonFinite("mask feature contains non-finite values")
        if not self.feature.any():
            raise FormatError("mask feature is all zeros")


@dataclass
class FrameObservation:
    """One posed RGB-D frame: camera, depth map and 2D instance masks."""

    frame_id: int
    intrinsics: np.ndarray
    extrinsics: np.ndarray
    depth: np.ndarray
    masks: list = field(default_factory=list)

    def __post_init__(self):
        if self.frame_id < 0:
            raise FormatError("frame_id must be non-negative")
        self.intrinsics = np.asarray(self.intrinsics, dtype=np.float64)
        self.extrinsics = np.asarray(self.extrinsics, dtype=np.float64)
        if self.intrinsics.shape != (3, 3):
            raise DimensionMismatch("intrinsics must be 3x3")
        if self.extrinsics.shape != (4, 4):
            raise DimensionMismatch("extrinsics must be 4x4")
        if not np.allclose(self.extrinsics[3], (0.0, 0.0, 0.0, 1.0), atol=1e-6):
            raise NonOrthonormalPose("extrinsics bottom row must be (0,0,0,1)")
        r = self.extrinsics[:3, :3]
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-4:
            raise NonOrthonormalPose("extrinsics rotation block not orthonormal")
        self.depth = np.ascontiguousarray(self.depth, dtype=np.float32)
        if self.depth.ndim != 2:
            raise DimensionMismatch("depth must be HxW")
        if not np.isfinite(self.depth).all():
            raise NonFinite("depth contains non-finite values")
        for m in self.masks:
            if m.bitmap.shape != self.depth.shape:
                raise DimensionMismatch("mask bitmap shape differs from depth")

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]


@dataclass
class Instance:
    """A predicted or ground-truth instance as a set of point ids."""

    point_ids: np.ndarray
    confidence: float = 1.0
    kind: str = "object"

    def __post_init__(self):
        ids = np.asarray(self.point_ids, dtype=np.int64).ravel()
        if ids.size and ids.min() < 0:
            raise IndexOutOfRange("negative point index")
        if ids.size > 1 and not (np.diff(ids) > 0).all():
            raise FormatError("point_ids must be sorted strictly ascending")
        self.point_ids = ids
        if not (0.0 <= self.confidence <= 1.0):
            raise FormatError("confidence must be in [0, 1]")
        if self.kind not in KINDS:
            raise FormatError(f"kind must be one of {KINDS}")


@dataclass
class InstanceSet:
    """An ordered collection of instances over one scene's points."""

    instances: list = field(default_factory=list)

    def validate_against(self, n_points):
        for k, inst in enumerate(self.instances):
            if inst.point_ids.size and inst.point_ids.max() >= n_points:
                raise IndexOutOfRange(
                    f"instance {k} references point {int(inst.point_ids.max())} "
                    f"but scene has {n_points} points"
                )

    def __len__(self):
        return len(self.instances)


# ---------------------------------------------------------------------------
# run-length encoding


def rle_encode(bitmap):
    """Encode a boolean bitmap as alternating run counts, zero-run first."""
    flat = np.ascontiguousarray(bitmap, dtype=bool).ravel()
    if flat.size == 0:
        return np.zeros(0, dtype=_U32)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds)
    if flat[0]:
        runs = np.concatenate(([0], runs))
    return runs.astype(_U32)


def rle_decode(runs, shape):
    """Decode alternating run counts back into a boolean bitmap."""
    runs = np.asarray(runs, dtype=np.int64)
    total = int(runs.sum())
    expected = int(shape[0]) * int(shape[1])
    if total != expected:
        raise CorruptRLE(f"RLE decodes to {total} pixels, expected {expected}")
    values = np.arange(runs.size) % 2 == 1
    flat = np.repeat(values, runs)
    return flat.reshape(shape)


# ---------------------------------------------------------------------------
# normals


def estimate_normals(cloud, k=16):
    """Surface normals from the PCA of each point's k nearest neighbors.

    The normal is the eigenvector of the neighborhood covariance with the
    smallest eigenvalue, flipped into the +z hemisphere when its z component
    is negative (dotZ == 0 keeps the eigensolver's sign). Neighborhoods where
    all k points coincide get the fallback normal (0, 0, 1).
    """
    pos = cloud.positions.astype(np.float64)
    n = pos.shape[0]
    if k < 3:
        raise ValueError("k must be at least 3")
    if k > n:
        raise ValueError(f"k={k} exceeds point count {n}")

    tree = cKDTree(pos)
    normals = np.empty((n, 3), dtype=np.float64)
    chunk = 65536
    for start in range(0, n, chunk):
        block = pos[start : start + chunk]
        _, idx = tree.query(block, k=k)
        nb = pos[idx]
        centered = nb - nb.mean(axis=1, keepdims=True)
        cov = np.einsum("nki,nkj->nij", centered, centered)
        _, vecs = np.linalg.eigh(cov)
        nrm = vecs[:, :, 0]
        degenerate = np.abs(centered).max(axis=(1, 2)) == 0.0
        nrm[degenerate] = (0.0, 0.0, 1.0)
        flip = nrm[:, 2] < 0.0
        nrm[flip] *= -1.0
        lengths = np.linalg.norm(nrm, axis=1, keepdims=True)
        normals[start : start + chunk] = nrm / lengths
    return normals.astype(np.float32)


def _default_normals(positions):
    n = positions.shape[0]
    if n < 3:
        return np.tile(np.float32((0.0, 0.0, 1.0)), (n, 1))
    return None


# ---------------------------------------------------------------------------
# point cloud files


def _read_exact(fh, count, what):
    data = fh.read(count)
    if len(data) != count:
        raise CorruptHeader(f"truncated file while reading {what}")
    return data


def write_scene(dir_path, cloud):
    """Write a SceneCloud into dir_path as points.p2o (+ features.f32)."""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    n = cloud.n_points
    flags = (1 if cloud.colors is not None else 0) | (2 if cloud.normals is not None else 0)
    with open(dir_path / "points.p2o", "wb") as fh:
        fh.write(POINTS_MAGIC)
        fh.write(np.uint32(n).astype(_U32).tobytes())
        fh.write(bytes([flags]))
        fh.write(cloud.positions.astype(_F32).tobytes())
        if cloud.colors is not None:
            fh.write(cloud.colors.astype(_F32).tobytes())
        if cloud.normals is not None:
            fh.write(cloud.normals.astype(_F32).tobytes())
    if cloud.semantic_features is not None:
        feats = cloud.semantic_features
        with open(dir_path / "features.f32", "wb") as fh:
            fh.write(FEATURES_MAGIC)
            fh.write(np.asarray([n, feats.shape[1]], dtype=_U32).tobytes())
            fh.write(feats.astype(_F32).tobytes())


def load_scene(dir_path, normals_k=16):
    """Load points.p2o (+ optional features.f32); estimate normals if absent."""
    dir_path = Path(dir_path)
    points_path = dir_path / "points.p2o"
    if not points_path.exists():
        raise FileNotFoundError(str(points_path))

    with open(points_path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != POINTS_MAGIC:
            raise CorruptHeader(f"bad magic {magic!r} in {points_path.name}")
        n = int(np.frombuffer(_read_exact(fh, 4, "count"), dtype=_U32)[0])
        if n < 1:
            raise CorruptHeader("point count must be >= 1")
        flags = _read_exact(fh, 1, "flags")[0]
        if flags & ~0b11:
            raise CorruptHeader(f"unknown flag bits {flags:#x}")
        positions = np.frombuffer(_read_exact(fh, n * 12, "positions"), dtype=_F32).reshape(n, 3)
        colors = None
        normals = None
        if flags & 1:
            colors = np.frombuffer(_read_exact(fh, n * 12, "colors"), dtype=_F32).reshape(n, 3)
        if flags & 2:
            normals = np.frombuffer(_read_exact(fh, n * 12, "normals"), dtype=_F32).reshape(n, 3)
        if fh.read(1):
            raise CorruptHeader(f"trailing bytes in {points_path.name}")

    features = None
    features_path = dir_path / "features.f32"
    if features_path.exists():
        with open(features_path, "rb") as fh:
            magic = _read_exact(fh, 4, "magic")
            if magic != FEATURES_MAGIC:
                raise CorruptHeader(f"bad magic {magic!r} in {features_path.name}")
            rows, cols = (int(v) for v in np.frombuffer(_read_exact(fh, 8, "dims"), dtype=_U32))
            if rows != n:
                raise DimensionMismatch(f"feature rows ({rows}) != point count ({n})")
            features = np.frombuffer(
                _read_exact(fh, rows * cols * 4, "features"), dtype=_F32
            ).reshape(rows, cols)
            if fh.read(1):
                raise CorruptHeader(f"trailing bytes in {features_path.name}")

    cloud = SceneCloud(positions=positions, colors=colors, normals=normals,
                       semantic_features=features)
    if cloud.normals is None:
        fallback = _default_normals(cloud.positions)
        if fallback is not None:
            cloud.normals = fallback
        else:
            cloud.normals = estimate_normals(cloud, k=min(normals_k, cloud.n_points))
    return cloud


# ---------------------------------------------------------------------------
# frame files


def write_frames(dir_path, frames):
    """Write frames as frame_<id>.cam / .depth / .masks triplets."""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    for frame in frames:
        stem = f"frame_{frame.frame_id}"
        cam = {
            "fx": float(frame.intrinsics[0, 0]),
            "fy": float(frame.intrinsics[1, 1]),
            "cx": float(frame.intrinsics[0, 2]),
            "cy": float(frame.intrinsics[1, 2]),
            "width": frame.width,
            "height": frame.height,
            "extrinsics": [float(v) for v in frame.extrinsics.ravel()],
        }
        with open(dir_path / f"{stem}.cam", "w") as fh:
            json.dump(cam, fh, indent=2)
            fh.write("\n")
        with open(dir_path / f"{stem}.depth", "wb") as fh:
            fh.write(frame.depth.astype(_F32).tobytes())
        feat_dim = frame.masks[0].feature.size if frame.masks else 0
        with open(dir_path / f"{stem}.masks", "wb") as fh:
            fh.write(MASKS_MAGIC)
            fh.write(np.asarray([len(frame.masks), feat_dim], dtype=_U32).tobytes())
            for mask in frame.masks:
                runs = rle_encode(mask.bitmap)
                fh.write(np.uint32(runs.size).astype(_U32).tobytes())
                fh.write(runs.tobytes())
                fh.write(mask.feature.astype(_F32).tobytes())


def _load_one_frame(dir_path, frame_id):
    stem = f"frame_{frame_id}"
    cam_path = dir_path / f"{stem}.cam"
    with open(cam_path) as fh:
        try:
            cam = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorruptHeader(f"{cam_path.name}: {exc}") from exc
    try:
        width, height = int(cam["width"]), int(cam["height"])
        intrinsics = np.array(
            [[cam["fx"], 0.0, cam["cx"]], [0.0, cam["fy"], cam["cy"]], [0.0, 0.0, 1.0]]
        )
        extrinsics = np.asarray(cam["extrinsics"], dtype=np.float64).reshape(4, 4)
    except (KeyError, ValueError) as exc:
        raise CorruptHeader(f"{cam_path.name}: missing or malformed field ({exc})") from exc

    depth_path = dir_path / f"{stem}.depth"
    if not depth_path.exists():
        raise FileNotFoundError(str(depth_path))
    raw = depth_path.read_bytes()
    if len(raw) != height * width * 4:
        raise DimensionMismatch(
            f"{depth_path.name}: {len(raw)} bytes, expected {height * width * 4}"
        )
    depth = np.frombuffer(raw, dtype=_F32).reshape(height, width)

    masks_path = dir_path / f"{stem}.masks"
    if not masks_path.exists():
        raise FileNotFoundError(str(masks_path))
    masks = []
    with open(masks_path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MASKS_MAGIC:
            raise CorruptHeader(f"bad magic {magic!r} in {masks_path.name}")
        count, feat_dim = (int(v) for v in np.frombuffer(_read_exact(fh, 8, "dims"), dtype=_U32))
        for _ in range(count):
            rle_len = int(np.frombuffer(_read_exact(fh, 4, "rle length"), dtype=_U32)[0])
            runs = np.frombuffer(_read_exact(fh, rle_len * 4, "rle runs"), dtype=_U32)
            bitmap = rle_decode(runs, (height, width))
            feature = np.frombuffer(_read_exact(fh, feat_dim * 4, "mask feature"), dtype=_F32)
            masks.append(MaskEntry(bitmap=bitmap, feature=feature))
        if fh.read(1):
            raise CorruptHeader(f"trailing bytes in {masks_path.name}")

    return FrameObservation(
        frame_id=frame_id, intrinsics=intrinsics, extrinsics=extrinsics,
        depth=depth, masks=masks,
    )


def load_frames(dir_path):
    """Load all frame_<id>.* triplets, sorted ascending by frame id."""
    dir_path = Path(dir_path)
    ids = []
    for path in dir_path.glob("frame_*.cam"):
        m = re.fullmatch(r"frame_(\d+)\.cam", path.name)
        if m:
            ids.append(int(m.group(1)))
    frames = [_load_one_frame(dir_path, fid) for fid in sorted(ids)]

    feat_dim = None
    for frame in frames:
        for mask in frame.masks:
            if feat_dim is None:
                feat_dim = mask.feature.size
            elif mask.feature.size != feat_dim:
                raise InconsistentMaskFeatureDim(
                    f"frame {frame.frame_id}: mask feature dim {mask.feature.size} != {feat_dim}"
                )
    return frames


# ---------------------------------------------------------------------------
# instance manifests


def write_instances(path, instance_set):
    """Write an instance manifest plus one mask file per instance.

    Mask files go into ``<stem>_masks/`` next to the manifest and are
    referenced by relative path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mask_dir_name = path.stem + "_masks"
    mask_dir = path.parent / mask_dir_name
    if instance_set.instances:
        mask_dir.mkdir(exist_ok=True)
    lines = []
    for k, inst in enumerate(instance_set.instances):
        rel = f"{mask_dir_name}/{k:04d}.txt"
        with open(path.parent / rel, "w") as fh:
            fh.write("\n".join(str(int(i)) for i in inst.point_ids))
            if inst.point_ids.size:
                fh.write("\n")
        lines.append(f"{rel} {inst.kind} {inst.confidence!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
        if lines:
            fh.write("\n")


def load_instances(path, n_points=None):
    """Load an instance manifest written by write_instances."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    instances = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(f"{path.name}:{lineno}: expected 3 fields, got {len(parts)}")
            rel, kind, conf_text = parts
            try:
                confidence = float(conf_text)
            except ValueError as exc:
                raise FormatError(f"{path.name}:{lineno}: bad confidence {conf_text!r}") from exc
            if not math.isfinite(confidence):
                raise FormatError(f"{path.name}:{lineno}: non-finite confidence")
            mask_path = path.parent / rel
            if not mask_path.exists():
                raise FileNotFoundError(str(mask_path))
            text = mask_path.read_text().split()
            try:
                ids = np.asarray([int(t) for t in text], dtype=np.int64)
            except ValueError as exc:
                raise FormatError(f"{rel}: non-integer point index") from exc
            instances.append(Instance(point_ids=ids, confidence=confidence, kind=kind))
    result = InstanceSet(instances=instances)
    if n_points is not None:
        result.validate_against(n_points)
    return result
