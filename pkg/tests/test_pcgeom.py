import numpy as np
import pytest

from flowmimic import pcgeom
from flowmimic.errors import FlowmimicError
from flowmimic.pcgeom import CropBox, PointCloud


def random_cloud(rng, n, scale=1.0):
    return PointCloud(
        positions=rng.uniform(-scale, scale, size=(n, 3)),
        colors=rng.uniform(0, 1, size=(n, 3)),
        flags=(rng.uniform(size=n) < 0.3).astype(float),
    )


# --- brute-force oracles (independent re-implementations) -------------------

def brute_voxel_count(positions, voxel):
    cells = set()
    for p in positions:
        cells.add(tuple(int(np.floor(c / voxel)) for c in p))
    return len(cells)


def brute_fps(positions, count, seed_index):
    chosen = [seed_index]
    for _ in range(count - 1):
        best, best_d = None, -1.0
        for i in range(len(positions)):
            d = min(np.linalg.norm(positions[i] - positions[j]) for j in chosen)
            if d > best_d + 1e-15:
                best, best_d = i, d
        chosen.append(best)
    return chosen


def brute_knn(positions, center, k):
    d = np.linalg.norm(positions - positions[center], axis=1)
    order = sorted(range(len(positions)), key=lambda i: (d[i], i))
    return order[:k]


# --- voxel downsample --------------------------------------------------------

def test_voxel_single_cell_centroid():
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                       dtype=float)
    cloud = PointCloud(corners, np.full((8, 3), 0.5), np.zeros(8))
    out = pcgeom.voxel_downsample(cloud, 2.0)
    assert len(out) == 1
    np.testing.assert_allclose(out.positions[0], [0.5, 0.5, 0.5])


def test_voxel_distinct_cells_unchanged():
    cloud = PointCloud([[0, 0, 0], [10, 0, 0]], np.zeros((2, 3)), np.zeros(2))
    out = pcgeom.voxel_downsample(cloud, 0.1)
    assert len(out) == 2


def test_voxel_flag_rebinarized():
    cloud = PointCloud([[0, 0, 0], [0.01, 0, 0], [0.02, 0, 0]],
                       np.zeros((3, 3)), np.array([1.0, 1.0, 0.0]))
    out = pcgeom.voxel_downsample(cloud, 1.0)
    assert out.flags[0] == 1.0  # 2/3 >= 0.5


def test_voxel_count_matches_hash_grid_oracle():
    rng = np.random.default_rng(0)
    cloud = random_cloud(rng, 1000, scale=0.5)
    out = pcgeom.voxel_downsample(cloud, 0.25)
    assert len(out) == brute_voxel_count(cloud.positions, 0.25)


def test_voxel_idempotent_count():
    rng = np.random.default_rng(1)
    cloud = random_cloud(rng, 500)
    once = pcgeom.voxel_downsample(cloud, 0.2)
    twice = pcgeom.voxel_downsample(once, 0.2)
    assert len(once) <= len(cloud)
    assert len(twice) == len(once)


def test_voxel_empty_cloud_ok():
    out = pcgeom.voxel_downsample(PointCloud.empty(), 0.1)
    assert len(out) == 0


# --- farthest point sampling -------------------------------------------------

def test_fps_collinear():
    cloud = PointCloud([[0, 0, 0], [1, 0, 0], [10, 0, 0]],
                       np.zeros((3, 3)), np.zeros(3))
    idx = pcgeom.farthest_point_sample(cloud, 2, seed_index=0)
    assert set(idx) == {0, 2}


def test_fps_full_count_returns_all():
    rng = np.random.default_rng(2)
    cloud = random_cloud(rng, 16)
    idx = pcgeom.farthest_point_sample(cloud, 16)
    assert sorted(idx) == list(range(16))


def test_fps_too_many_errors():
    cloud = PointCloud([[0, 0, 0]], np.zeros((1, 3)), np.zeros(1))
    with pytest.raises(FlowmimicError):
        pcgeom.farthest_point_sample(cloud, 2)


def test_fps_matches_brute_force():
    rng = np.random.default_rng(3)
    cloud = random_cloud(rng, 64)
    got = list(pcgeom.farthest_point_sample(cloud, 8, seed_index=5))
    want = brute_fps(cloud.positions, 8, 5)
    assert got == want


def test_fps_spread_beats_random_subsets():
    # min pairwise distance of the FPS subset should beat random subsets
    rng = np.random.default_rng(4)
    cloud = random_cloud(rng, 80)

    def min_pairwise(idx):
        pts = cloud.positions[list(idx)]
        d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        return d[np.triu_indices(len(pts), 1)].min()

    fps_spread = min_pairwise(pcgeom.farthest_point_sample(cloud, 8))
    for _ in range(100):
        assert fps_spread >= min_pairwise(rng.choice(80, size=8, replace=False))


# --- grouping ------------------------------------------------------------------

def test_group_k1_center_only():
    rng = np.random.default_rng(5)
    cloud = random_cloud(rng, 20)
    groups = pcgeom.group_points(cloud, [3, 7], k=1)
    np.testing.assert_array_equal(groups.member_indices[:, 0], [3, 7])
    np.testing.assert_allclose(groups.group_features_input[:, 0, :3], 0.0)


def test_group_small_cloud_offsets():
    cloud = PointCloud([[0, 0, 0], [1, 0, 0], [0, 2, 0]],
                       np.zeros((3, 3)), np.zeros(3))
    groups = pcgeom.group_points(cloud, [0], k=3)
    assert set(groups.member_indices[0]) == {0, 1, 2}
    np.testing.assert_allclose(
        groups.group_features_input[0, :, :3],
        cloud.positions[groups.member_indices[0]] - cloud.positions[0])


def test_group_pads_by_repeating_nearest():
    cloud = PointCloud([[0, 0, 0], [1, 0, 0]], np.zeros((2, 3)), np.zeros(2))
    groups = pcgeom.group_points(cloud, [0], k=4)
    assert groups.member_indices.shape == (1, 4)
    assert list(groups.member_indices[0]) == [0, 1, 0, 0]


def test_group_matches_brute_knn():
    rng = np.random.default_rng(6)
    cloud = random_cloud(rng, 50)
    centers = [0, 10, 49]
    groups = pcgeom.group_points(cloud, centers, k=7)
    for row, c in zip(groups.member_indices, centers):
        assert list(row) == brute_knn(cloud.positions, c, 7)


# --- crop / recenter -----------------------------------------------------------

def test_crop_center_point_retained_at_origin():
    box = CropBox(center=[1.0, 2.0, 3.0], half_extents=[0.1, 0.1, 0.1])
    cloud = PointCloud([[1.0, 2.0, 3.0]], np.zeros((1, 3)), np.zeros(1))
    out = pcgeom.crop(cloud, box)
    assert len(out) == 1
    np.testing.assert_array_equal(out.positions[0], [0, 0, 0])


def test_crop_removes_outside_axis():
    box = CropBox(center=[0, 0, 0], half_extents=[1, 1, 1])
    cloud = PointCloud([[0, 0, 1.5], [0.5, 0, 0]], np.zeros((2, 3)), np.zeros(2))
    out = pcgeom.crop(cloud, box)
    assert len(out) == 1


def test_crop_membership_matches_bound_oracle():
    rng = np.random.default_rng(7)
    cloud = random_cloud(rng, 200)
    box = CropBox(center=rng.uniform(-0.5, 0.5, 3),
                  half_extents=rng.uniform(0.2, 0.8, 3))
    out = pcgeom.crop(cloud, box)
    want = [i for i, p in enumerate(cloud.positions)
            if all(abs(p[a] - box.center[a]) <= box.half_extents[a] for a in range(3))]
    assert len(out) == len(want)
    np.testing.assert_allclose(out.positions, cloud.positions[want] - box.center)


def dyadic(rng, shape, scale=1.0, grid=2.0 ** -20):
    """Random values on a coarse dyadic grid, so translations are exact."""
    return np.round(rng.uniform(-scale, scale, size=shape) / grid) * grid


def test_crop_recenter_commutes_with_translation():
    rng = np.random.default_rng(8)
    cloud = PointCloud(dyadic(rng, (100, 3)), np.full((100, 3), 0.5), np.zeros(100))
    box = CropBox(center=[0.25, -0.5, 0.125], half_extents=[0.4, 0.4, 0.4])
    shift = np.array([1.5, -2.0, 0.75])
    moved = PointCloud(cloud.positions + shift, cloud.colors, cloud.flags)
    moved_box = CropBox(center=box.center + shift, half_extents=box.half_extents)
    np.testing.assert_array_equal(
        pcgeom.crop(cloud, box).positions,
        pcgeom.crop(moved, moved_box).positions)


def test_recenter_roundtrip():
    rng = np.random.default_rng(9)
    pts = dyadic(rng, (10, 3))
    origin = np.array([0.5, -1.25, 2.0])
    np.testing.assert_array_equal(
        pcgeom.recenter(pcgeom.recenter(pts, origin), -origin), pts)
    np.testing.assert_array_equal(pcgeom.recenter(pts, np.zeros(3)), pts)
    np.testing.assert_array_equal(pcgeom.recenter(origin[None], origin), [[0, 0, 0]])


def test_cloud_validation():
    with pytest.raises(FlowmimicError):
        PointCloud(np.zeros((2, 3)), np.zeros((3, 3)), np.zeros(2))
    with pytest.raises(FlowmimicError):
        PointCloud(np.zeros((1, 3)), np.full((1, 3), 2.0), np.zeros(1))
    with pytest.raises(FlowmimicError):
        PointCloud(np.zeros((1, 3)), np.zeros((1, 3)), np.array([0.5]))
