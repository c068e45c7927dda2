"""Deterministic synthetic scenes with ground truth, frames and masks.

Surfaces of simple solids (plus an optional floor-and-walls room) are point
sampled, every point carries its object's feature vector plus Gaussian noise,
and cameras render depth maps by splat z-buffering the sampled points. Each
visible object contributes one ground-truth mask per frame, so the generator
doubles as the oracle for the projection, prior and end-to-end tests.

Everything is a pure function of the spec, including its seed.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .objectness import camera_project
from .scene_io import FrameObservation, Instance, InstanceSet, MaskEntry, SceneCloud

log = logging.getLogger(__name__)


@dataclass
class CameraModel:
    width: int = 160
    height: int = 120
    fx: float = 140.0
    fy: float = 140.0
    cx: float = 79.5
    cy: float = 59.5

    @property
    def intrinsics(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass
class SynthObject:
    shape: str = "cuboid"
    center: tuple = (0.0, 0.0, 0.0)
    size: tuple = (0.5, 0.5, 0.5)
    yaw: float = 0.0
    color: tuple = (0.5, 0.5, 0.5)
    feature: np.ndarray | None = None

    def __post_init__(self):
        if self.shape not in ("cuboid", "cylinder"):
            raise ValueError(f"unknown shape {self.shape!r}")


@dataclass
class SynthSpec:
    seed: int = 0
    objects: list = field(default_factory=list)
    room: tuple | None = None  # (len_x, len_y, wall_height); None = no background
    points_per_m2: float = 2000.0
    cameras: list = field(default_factory=list)  # 4x4 camera-to-world poses
    camera_model: CameraModel = field(default_factory=CameraModel)
    feature_dim: int = 16
    feature_noise: float = 0.02
    position_jitter: float = 0.002
    splat_px: int = 3
    allow_similar_features: bool = False

    def to_dict(self):
        return {
            "seed": self.seed,
            "objects": [
                {
                    "shape": o.shape,
                    "center": list(o.center),
                    "size": list(o.size),
                    "yaw": o.yaw,
                    "color": list(o.color),
                    "feature": None if o.feature is None else [float(v) for v in o.feature],
                }
                for o in self.objects
            ],
            "room": None if self.room is None else list(self.room),
            "points_per_m2": self.points_per_m2,
            "cameras": [[float(v) for v in np.asarray(c).ravel()] for c in self.cameras],
            "camera_model": {
                "width": self.camera_model.width,
                "height": self.camera_model.height,
                "fx": self.camera_model.fx,
                "fy": self.camera_model.fy,
                "cx": self.camera_model.cx,
                "cy": self.camera_model.cy,
            },
            "feature_dim": self.feature_dim,
            "feature_noise": self.feature_noise,
            "position_jitter": self.position_jitter,
            "splat_px": self.splat_px,
            "allow_similar_features": self.allow_similar_features,
        }

    @classmethod
    def from_dict(cls, data):
        objects = [
            SynthObject(
                shape=o.get("shape", "cuboid"),
                center=tuple(o.get("center", (0, 0, 0))),
                size=tuple(o.get("size", (0.5, 0.5, 0.5))),
                yaw=float(o.get("yaw", 0.0)),
                color=tuple(o.get("color", (0.5, 0.5, 0.5))),
                feature=None if o.get("feature") is None else np.asarray(o["feature"]),
            )
            for o in data.get("objects", [])
        ]
        cam = data.get("camera_model", {})
        cameras = [np.asarray(c, dtype=np.float64).reshape(4, 4) for c in data.get("cameras", [])]
        return cls(
            seed=int(data.get("seed", 0)),
            objects=objects,
            room=None if data.get("room") is None else tuple(data["room"]),
            points_per_m2=float(data.get("points_per_m2", 2000.0)),
            cameras=cameras,
            camera_model=CameraModel(**cam) if cam else CameraModel(),
            feature_dim=int(data.get("feature_dim", 16)),
            feature_noise=float(data.get("feature_noise", 0.02)),
            position_jitter=float(data.get("position_jitter", 0.002)),
            splat_px=int(data.get("splat_px", 3)),
            allow_similar_features=bool(data.get("allow_similar_features", False)),
        )


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """Camera-to-world pose for a camera at eye looking toward target (+z)."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(fwd)
    if norm == 0:
        raise ValueError("eye and target coincide")
    fwd /= norm
    up = np.asarray(up, dtype=np.float64)
    if np.abs(np.dot(fwd, up)) > 1.0 - 1e-9:
        up = np.array((0.0, 1.0, 0.0))
    x = np.cross(up, fwd)
    x /= np.linalg.norm(x)
    y = np.cross(fwd, x)
    pose = np.eye(4)
    pose[:3, 0] = x
    pose[:3, 1] = y
    pose[:3, 2] = fwd
    pose[:3, 3] = eye
    return pose


def _yaw_matrix(yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _sample_rect(rng, density, origin, edge_u, edge_v, normal):
    """Uniform samples on a parallelogram patch; returns (points, normals)."""
    area = np.linalg.norm(np.cross(edge_u, edge_v))
    count = max(1, int(round(area * density)))
    uv = rng.random((count, 2))
    pts = origin + uv[:, :1] * edge_u + uv[:, 1:] * edge_v
    nrm = np.tile(normal / np.linalg.norm(normal), (count, 1))
    return pts, nrm


def _sample_cuboid(rng, density, size):
    sx, sy, sz = size
    hx, hy, hz = sx / 2.0, sy / 2.0, sz / 2.0
    faces = [
        ((-hx, -hy, -hz), (sx, 0, 0), (0, sy, 0), (0, 0, -1)),  # bottom
        ((-hx, -hy, hz), (sx, 0, 0), (0, sy, 0), (0, 0, 1)),    # top
        ((-hx, -hy, -hz), (0, sy, 0), (0, 0, sz), (-1, 0, 0)),  # -x
        ((hx, -hy, -hz), (0, sy, 0), (0, 0, sz), (1, 0, 0)),    # +x
        ((-hx, -hy, -hz), (sx, 0, 0), (0, 0, sz), (0, -1, 0)),  # -y
        ((-hx, hy, -hz), (sx, 0, 0), (0, 0, sz), (0, 1, 0)),    # +y
    ]
    pts, nrm = [], []
    for origin, eu, ev, n in faces:
        p, v = _sample_rect(
            rng, density, np.asarray(origin, float), np.asarray(eu, float),
            np.asarray(ev, float), np.asarray(n, float),
        )
        pts.append(p)
        nrm.append(v)
    return np.vstack(pts), np.vstack(nrm)


def _sample_cylinder(rng, density, size):
    radius = size[0] / 2.0
    height = size[2]
    side_area = 2.0 * math.pi * radius * height
    cap_area = math.pi * radius * radius

    n_side = max(1, int(round(side_area * density)))
    ang = rng.random(n_side) * 2.0 * math.pi
    z = (rng.random(n_side) - 0.5) * height
    side = np.column_stack((radius * np.cos(ang), radius * np.sin(ang), z))
    side_n = np.column_stack((np.cos(ang), np.sin(ang), np.zeros(n_side)))

    pts, nrm = [side], [side_n]
    for sign in (-1.0, 1.0):
        n_cap = max(1, int(round(cap_area * density)))
        ang = rng.random(n_cap) * 2.0 * math.pi
        rad = radius * np.sqrt(rng.random(n_cap))
        cap = np.column_stack(
            (rad * np.cos(ang), rad * np.sin(ang), np.full(n_cap, sign * height / 2.0))
        )
        pts.append(cap)
        nrm.append(np.tile((0.0, 0.0, sign), (n_cap, 1)))
    return np.vstack(pts), np.vstack(nrm)


def _sample_room(rng, density, room):
    lx, ly, wall_h = room
    hx, hy = lx / 2.0, ly / 2.0
    patches = [
        ((-hx, -hy, 0.0), (lx, 0, 0), (0, ly, 0), (0, 0, 1)),  # floor
    ]
    if wall_h > 0:
        patches += [
            ((-hx, -hy, 0.0), (lx, 0, 0), (0, 0, wall_h), (0, 1, 0)),
            ((-hx, hy, 0.0), (lx, 0, 0), (0, 0, wall_h), (0, -1, 0)),
            ((-hx, -hy, 0.0), (0, ly, 0), (0, 0, wall_h), (1, 0, 0)),
            ((hx, -hy, 0.0), (0, ly, 0), (0, 0, wall_h), (-1, 0, 0)),
        ]
    pts, nrm = [], []
    for origin, eu, ev, n in patches:
        p, v = _sample_rect(
            rng, density, np.asarray(origin, float), np.asarray(eu, float),
            np.asarray(ev, float), np.asarray(n, float),
        )
        pts.append(p)
        nrm.append(v)
    return np.vstack(pts), np.vstack(nrm)


def _assign_features(spec, rng):
    """Per-object features plus one background feature, mutually dissimilar."""
    n = len(spec.objects) + 1
    if n > spec.feature_dim and any(o.feature is None for o in spec.objects):
        raise ValueError(
            f"{len(spec.objects)} objects need auto features but feature_dim is "
            f"{spec.feature_dim}; raise feature_dim or supply explicit features"
        )
    raw = rng.standard_normal((spec.feature_dim, n))
    q, _ = np.linalg.qr(raw)
    basis = q.T  # orthonormal rows
    feats = []
    for k, obj in enumerate(spec.objects):
        if obj.feature is not None:
            feat = np.asarray(obj.feature, dtype=np.float64)
            if feat.shape != (spec.feature_dim,):
                raise ValueError(
                    f"object {k}: feature has dim {feat.shape}, "
                    f"spec.feature_dim is {spec.feature_dim}"
                )
            feats.append(feat)
        else:
            feats.append(basis[k])
    background = basis[-1]
    if not spec.allow_similar_features:
        for a in range(len(feats)):
            for b in range(a + 1, len(feats)):
                na, nb = np.linalg.norm(feats[a]), np.linalg.norm(feats[b])
                if np.dot(feats[a], feats[b]) / (na * nb) > 0.5:
                    raise ValueError(
                        f"objects {a} and {b} have feature similarity > 0.5; "
                        "set allow_similar_features to override"
                    )
    return feats, background


def _render_frame(spec, frame_id, pose, positions, owner, object_feats, rng):
    """Depth map + per-visible-object masks by splat z-buffering."""
    model = spec.camera_model
    h, w = model.height, model.width
    row, col, z, ok = camera_project(positions, model.intrinsics, pose, (h, w))

    idx = np.flatnonzero(ok)
    reach = spec.splat_px // 2
    entries_pix = []
    entries_z = []
    entries_idx = []
    for dr in range(-reach, reach + 1):
        for dc in range(-reach, reach + 1):
            r = row[idx] + dr
            c = col[idx] + dc
            good = (r >= 0) & (r < h) & (c >= 0) & (c < w)
            entries_pix.append(r[good] * w + c[good])
            entries_z.append(z[idx][good])
            entries_idx.append(idx[good])
    pix = np.concatenate(entries_pix)
    zs = np.concatenate(entries_z)
    ids = np.concatenate(entries_idx)

    depth = np.zeros(h * w, dtype=np.float32)
    winner = np.full(h * w, -1, dtype=np.int64)
    if pix.size:
        order = np.lexsort((ids, zs, pix))
        pix_s = pix[order]
        first = np.concatenate(([True], pix_s[1:] != pix_s[:-1]))
        depth[pix_s[first]] = zs[order][first]
        winner[pix_s[first]] = ids[order][first]
    depth = depth.reshape(h, w)
    winner = winner.reshape(h, w)

    masks = []
    visible = set()
    won = winner.ravel()
    won_owner = np.where(won >= 0, owner[np.maximum(won, 0)], -1)
    # One feature-noise draw per object regardless of visibility keeps the
    # random stream independent of camera placement.
    noises = rng.standard_normal((len(object_feats), spec.feature_dim)) * spec.feature_noise
    for k, feat in enumerate(object_feats):
        bitmap = (won_owner == k).reshape(h, w)
        if not bitmap.any():
            continue
        visible.add(k)
        masks.append(
            MaskEntry(bitmap=bitmap, feature=(feat + noises[k]).astype(np.float32))
        )
    frame = FrameObservation(
        frame_id=frame_id,
        intrinsics=model.intrinsics,
        extrinsics=pose,
        depth=depth,
        masks=masks,
    )
    return frame, visible


def generate(spec):
    """Build (SceneCloud, ground truth InstanceSet, frames) from a spec."""
    rng = np.random.default_rng(spec.seed)
    feats, bg_feat = _assign_features(spec, rng)

    all_pts, all_nrm, all_col, owner = [], [], [], []
    gt_ranges = []
    cursor = 0
    for k, obj in enumerate(spec.objects):
        if obj.shape == "cuboid":
            pts, nrm = _sample_cuboid(rng, spec.points_per_m2, obj.size)
        else:
            pts, nrm = _sample_cylinder(rng, spec.points_per_m2, obj.size)
        rot = _yaw_matrix(obj.yaw)
        pts = pts @ rot.T + np.asarray(obj.center, dtype=np.float64)
        nrm = nrm @ rot.T
        all_pts.append(pts)
        all_nrm.append(nrm)
        all_col.append(np.tile(obj.color, (pts.shape[0], 1)))
        owner.append(np.full(pts.shape[0], k, dtype=np.int64))
        gt_ranges.append((cursor, cursor + pts.shape[0]))
        cursor += pts.shape[0]

    if spec.room is not None:
        pts, nrm = _sample_room(rng, spec.points_per_m2, spec.room)
        all_pts.append(pts)
        all_nrm.append(nrm)
        all_col.append(np.tile((0.7, 0.7, 0.7), (pts.shape[0], 1)))
        owner.append(np.full(pts.shape[0], -1, dtype=np.int64))
        cursor += pts.shape[0]

    positions = np.vstack(all_pts)
    normals = np.vstack(all_nrm)
    colors = np.clip(np.vstack(all_col), 0.0, 1.0)
    owner = np.concatenate(owner)
    n = positions.shape[0]

    if spec.position_jitter > 0:
        positions = positions + rng.standard_normal((n, 3)) * spec.position_jitter

    features = np.empty((n, spec.feature_dim))
    noise = rng.standard_normal((n, spec.feature_dim)) * spec.feature_noise
    for k, feat in enumerate(feats):
        sel = owner == k
        features[sel] = feat + noise[sel]
    sel = owner == -1
    features[sel] = bg_feat + noise[sel]

    cloud = SceneCloud(
        positions=positions.astype(np.float32),
        colors=colors.astype(np.float32),
        normals=normals.astype(np.float32),
        semantic_features=features.astype(np.float32),
    )

    gt = InstanceSet(
        instances=[
            Instance(point_ids=np.arange(a, b, dtype=np.int64), confidence=1.0, kind="object")
            for a, b in gt_ranges
        ]
    )

    frames = []
    ever_visible = set()
    for cam_idx, pose in enumerate(spec.cameras):
        frame, visible = _render_frame(
            spec, cam_idx, np.asarray(pose, dtype=np.float64),
            cloud.positions.astype(np.float64), owner, feats, rng,
        )
        frames.append(frame)
        ever_visible |= visible
    if spec.cameras:
        hidden = set(range(len(spec.objects))) - ever_visible
        for k in sorted(hidden):
            log.warning("object %d is behind every camera; no masks emitted", k)

    return cloud, gt, frames
