import numpy as np
import pytest

from part2object import scene_io
from part2object.errors import (
    CorruptHeader,
    CorruptRLE,
    DimensionMismatch,
    FormatError,
    InconsistentMaskFeatureDim,
    IndexOutOfRange,
    NonOrthonormalPose,
)
from part2object.scene_io import (
    FrameObservation,
    Instance,
    InstanceSet,
    MaskEntry,
    SceneCloud,
    estimate_normals,
    load_frames,
    load_instances,
    load_scene,
    rle_decode,
    rle_encode,
    write_frames,
    write_instances,
    write_scene,
)


def make_cloud(rng, n=100, with_features=True, feature_dim=8):
    cloud = SceneCloud(
        positions=rng.random((n, 3)).astype(np.float32),
        colors=rng.random((n, 3)).astype(np.float32),
        semantic_features=(
            rng.standard_normal((n, feature_dim)).astype(np.float32)
            if with_features else None
        ),
    )
    return cloud


def identity_frame(h=8, w=10, masks=()):
    return FrameObservation(
        frame_id=0,
        intrinsics=np.array([[5.0, 0, 4.5], [0, 5.0, 3.5], [0, 0, 1]]),
        extrinsics=np.eye(4),
        depth=np.ones((h, w), dtype=np.float32),
        masks=list(masks),
    )


# ---------------------------------------------------------------------------
# RLE


def test_rle_golden():
    bitmap = np.array([[0, 1, 1], [0, 0, 1]], dtype=bool)
    assert rle_encode(bitmap).tolist() == [1, 2, 2, 1]
    assert (rle_decode([1, 2, 2, 1], (2, 3)) == bitmap).all()


def test_rle_all_zeros_and_all_ones():
    zeros = np.zeros((3, 4), dtype=bool)
    assert rle_encode(zeros).tolist() == [12]
    ones = np.ones((3, 4), dtype=bool)
    assert rle_encode(ones).tolist() == [0, 12]


def test_rle_round_trip_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        h, w = int(rng.integers(1, 20)), int(rng.integers(1, 20))
        bitmap = rng.random((h, w)) < rng.random()
        assert (rle_decode(rle_encode(bitmap), (h, w)) == bitmap).all()


def test_rle_length_mismatch_raises():
    with pytest.raises(CorruptRLE):
        rle_decode([3, 2], (2, 3))


# ---------------------------------------------------------------------------
# scene round trips and validation


def test_scene_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    cloud = make_cloud(rng)
    cloud.normals = estimate_normals(cloud, k=8)
    write_scene(tmp_path, cloud)
    loaded = load_scene(tmp_path)
    assert loaded.positions.tobytes() == cloud.positions.tobytes()
    assert loaded.colors.tobytes() == cloud.colors.tobytes()
    assert loaded.normals.tobytes() == cloud.normals.tobytes()
    assert loaded.semantic_features.tobytes() == cloud.semantic_features.tobytes()


def test_load_scene_without_features(tmp_path):
    rng = np.random.default_rng(2)
    write_scene(tmp_path, make_cloud(rng, with_features=False))
    loaded = load_scene(tmp_path)
    assert loaded.n_points == 100
    assert loaded.semantic_features is None
    assert loaded.normals is not None  # estimated on load


def test_missing_points_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scene(tmp_path)


def test_bad_magic(tmp_path):
    (tmp_path / "points.p2o").write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(CorruptHeader):
        load_scene(tmp_path)


def test_truncated_positions(tmp_path):
    rng = np.random.default_rng(3)
    write_scene(tmp_path, make_cloud(rng, with_features=False))
    raw = (tmp_path / "points.p2o").read_bytes()
    (tmp_path / "points.p2o").write_bytes(raw[:-8])
    with pytest.raises(CorruptHeader):
        load_scene(tmp_path)


def test_feature_row_mismatch(tmp_path):
    rng = np.random.default_rng(4)
    write_scene(tmp_path, make_cloud(rng, n=100, with_features=True))
    # Rewrite the feature file claiming (and holding) 99 rows.
    feats = rng.standard_normal((99, 8)).astype("<f4")
    with open(tmp_path / "features.f32", "wb") as fh:
        fh.write(b"P2OF")
        fh.write(np.asarray([99, 8], dtype="<u4").tobytes())
        fh.write(feats.tobytes())
    with pytest.raises(DimensionMismatch):
        load_scene(tmp_path)


def test_non_finite_positions_rejected():
    pos = np.ones((4, 3), dtype=np.float32)
    pos[2, 1] = np.nan
    with pytest.raises(FormatError):
        SceneCloud(positions=pos)


def test_non_unit_normals_rejected():
    with pytest.raises(FormatError):
        SceneCloud(positions=np.ones((2, 3)), normals=np.full((2, 3), 0.9))


# ---------------------------------------------------------------------------
# normals


def test_normals_on_z_plane():
    rng = np.random.default_rng(5)
    pos = np.column_stack([rng.random(60), rng.random(60), np.zeros(60)])
    cloud = SceneCloud(positions=pos)
    normals = estimate_normals(cloud, k=8)
    assert np.allclose(normals, (0.0, 0.0, 1.0), atol=1e-5)


def test_normals_on_x_plane():
    rng = np.random.default_rng(6)
    pos = np.column_stack([np.ones(60), rng.random(60), rng.random(60)])
    cloud = SceneCloud(positions=pos)
    normals = estimate_normals(cloud, k=8)
    assert np.allclose(np.abs(normals), np.tile((1.0, 0.0, 0.0), (60, 1)), atol=1e-5)
    # dot with +z is zero: sign comes from the eigensolver, deterministically
    again = estimate_normals(cloud, k=8)
    assert np.array_equal(normals, again)


def test_normals_on_sphere_point_radially():
    rng = np.random.default_rng(7)
    raw = rng.standard_normal((50, 3))
    pos = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    cloud = SceneCloud(positions=pos)
    normals = estimate_normals(cloud, k=6).astype(np.float64)
    radial = pos / np.linalg.norm(pos, axis=1, keepdims=True)
    dots = np.abs((normals * radial).sum(axis=1))
    assert dots.mean() >= 0.9


def test_normals_degenerate_neighborhood():
    pos = np.tile((1.0, 2.0, 3.0), (10, 1))
    cloud = SceneCloud(positions=pos)
    normals = estimate_normals(cloud, k=5)
    assert np.allclose(normals, (0.0, 0.0, 1.0))


def test_normals_k_bounds():
    cloud = SceneCloud(positions=np.random.default_rng(0).random((10, 3)))
    with pytest.raises(ValueError):
        estimate_normals(cloud, k=2)
    with pytest.raises(ValueError):
        estimate_normals(cloud, k=11)


# ---------------------------------------------------------------------------
# frames


def test_frames_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    frames = []
    for fid in range(3):
        masks = []
        for _ in range(fid):  # 0, 1, 2 masks
            bitmap = np.zeros((8, 10), dtype=bool)
            bitmap[rng.integers(0, 8), rng.integers(0, 10)] = True
            masks.append(MaskEntry(bitmap=bitmap, feature=rng.random(6).astype(np.float32)))
        frame = identity_frame(masks=masks)
        frame.frame_id = fid
        frame.depth = (rng.random((8, 10)) + 0.5).astype(np.float32)
        frames.append(frame)
    write_frames(tmp_path, frames)
    loaded = load_frames(tmp_path)
    assert [f.frame_id for f in loaded] == [0, 1, 2]
    for orig, back in zip(frames, loaded):
        assert back.depth.tobytes() == orig.depth.tobytes()
        assert len(back.masks) == len(orig.masks)
        for ma, mb in zip(orig.masks, back.masks):
            assert (ma.bitmap == mb.bitmap).all()
            assert ma.feature.tobytes() == mb.feature.tobytes()


def test_frames_with_no_masks(tmp_path):
    frames = [identity_frame(), identity_frame()]
    frames[1].frame_id = 4
    write_frames(tmp_path, frames)
    loaded = load_frames(tmp_path)
    assert len(loaded) == 2
    assert all(not f.masks for f in loaded)


def test_corrupt_rle_in_mask_file(tmp_path):
    bitmap = np.zeros((8, 10), dtype=bool)
    bitmap[0, 0] = True
    frame = identity_frame(masks=[MaskEntry(bitmap, np.ones(4, dtype=np.float32))])
    write_frames(tmp_path, [frame])
    raw = bytearray((tmp_path / "frame_0.masks").read_bytes())
    # First run count lives right after magic, mask_count, C2 and rle_len.
    raw[16:20] = np.uint32(999).tobytes()
    (tmp_path / "frame_0.masks").write_bytes(bytes(raw))
    with pytest.raises(CorruptRLE):
        load_frames(tmp_path)


def test_non_orthonormal_pose_rejected():
    ext = np.eye(4)
    ext[0, 0] = 2.0
    with pytest.raises(NonOrthonormalPose):
        FrameObservation(
            frame_id=0, intrinsics=np.eye(3), extrinsics=ext,
            depth=np.ones((4, 4), dtype=np.float32),
        )


def test_inconsistent_mask_feature_dims(tmp_path):
    bitmap = np.zeros((8, 10), dtype=bool)
    bitmap[0, 0] = True
    f0 = identity_frame(masks=[MaskEntry(bitmap, np.ones(4, dtype=np.float32))])
    f1 = identity_frame(masks=[MaskEntry(bitmap, np.ones(5, dtype=np.float32))])
    f1.frame_id = 1
    write_frames(tmp_path, [f0, f1])
    with pytest.raises(InconsistentMaskFeatureDim):
        load_frames(tmp_path)


# ---------------------------------------------------------------------------
# instance manifests


def test_empty_manifest(tmp_path):
    path = tmp_path / "preds.txt"
    write_instances(path, InstanceSet())
    assert path.read_text() == ""
    assert len(load_instances(path)) == 0


def test_manifest_round_trip(tmp_path):
    path = tmp_path / "preds.txt"
    original = InstanceSet(
        instances=[
            Instance(np.array([0, 3, 7]), confidence=0.75, kind="object"),
            Instance(np.array([1, 2]), confidence=1.0, kind="part"),
        ]
    )
    write_instances(path, original)
    assert len(path.read_text().strip().splitlines()) == 2
    loaded = load_instances(path)
    assert len(loaded) == 2
    for a, b in zip(original.instances, loaded.instances):
        assert np.array_equal(a.point_ids, b.point_ids)
        assert a.confidence == b.confidence
        assert a.kind == b.kind


def test_manifest_missing_mask_file(tmp_path):
    path = tmp_path / "preds.txt"
    path.write_text("nowhere.txt object 1.0\n")
    with pytest.raises(FileNotFoundError):
        load_instances(path)


def test_manifest_index_out_of_range(tmp_path):
    path = tmp_path / "preds.txt"
    write_instances(path, InstanceSet([Instance(np.array([5, 900]))]))
    with pytest.raises(IndexOutOfRange):
        load_instances(path, n_points=100)


def test_instance_requires_sorted_unique_ids():
    with pytest.raises(FormatError):
        Instance(np.array([3, 3, 5]))
    with pytest.raises(FormatError):
        Instance(np.array([5, 3]))
    with pytest.raises(IndexOutOfRange):
        Instance(np.array([-1, 3]))
