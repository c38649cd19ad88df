"""Point-cloud primitives and geometric kernels.

Clouds carry positions (meters), RGB colors in [0, 1], and a binary
effector-indicator channel appended after the color channels. All kernels
are pure functions over immutable inputs and deterministic: ties in nearest
neighbor and farthest-point selection break toward the lowest index, and
voxel output order follows the lexicographic voxel index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FlowmimicError

VOXEL_SIZE = 0.02                      # meters; scene noise floor
CROP_HALF_EXTENTS = (0.15, 0.15, 0.15)  # default gripper-centered box
GROUP_COUNT = 32
GROUP_SIZE = 16


@dataclass(frozen=True)
class PointCloud:
    """N points with xyz, rgb, and an effector flag channel."""

    positions: np.ndarray   # (N, 3) float64
    colors: np.ndarray      # (N, 3) float64 in [0, 1]
    flags: np.ndarray       # (N,) float64 in {0, 1}

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        c = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.flags, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "colors", c)
        object.__setattr__(self, "flags", f)
        if not (len(p) == len(c) == len(f)):
            raise FlowmimicError(
                f"point cloud channels disagree: {len(p)}/{len(c)}/{len(f)} points")
        if len(c) and (c.min() < 0.0 or c.max() > 1.0):
            raise FlowmimicError("colors must lie in [0, 1]")
        if len(f) and not np.all((f == 0.0) | (f == 1.0)):
            raise FlowmimicError("effector flags must be binary")

    def __len__(self):
        return len(self.positions)

    def features(self):
        """(N, 7) rows of xyz | rgb | flag."""
        return np.concatenate(
            [self.positions, self.colors, self.flags[:, None]], axis=1)

    @classmethod
    def from_features(cls, rows):
        rows = np.asarray(rows, dtype=np.float64).reshape(-1, 7)
        return cls(rows[:, :3], rows[:, 3:6], rows[:, 6])

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0,)))


@dataclass(frozen=True)
class CropBox:
    """Axis-aligned box around a center (typically the gripper position)."""

    center: np.ndarray
    half_extents: np.ndarray = field(
        default_factory=lambda: np.array(CROP_HALF_EXTENTS))

    def __post_init__(self):
        object.__setattr__(self, "center",
                           np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "half_extents",
                           np.asarray(self.half_extents, dtype=np.float64).reshape(3))
        if np.any(self.half_extents <= 0):
            raise FlowmimicError("crop box half extents must be positive")


@dataclass(frozen=True)
class GroupSet:
    """FPS centers with their k nearest members and centered input features."""

    centers: np.ndarray               # (G, 3)
    member_indices: np.ndarray        # (G, k) int
    group_features_input: np.ndarray  # (G, k, 7): centered xyz | rgb | flag


def voxel_downsample(cloud, voxel):
    """One output point per occupied voxel at the voxel's centroid.

    Colors and flags are averaged; the flag is re-binarized at 0.5. Output
    rows are ordered by lexicographic voxel index.
    """
    if voxel <= 0:
        raise FlowmimicError("voxel size must be positive")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.positions / voxel).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    n = len(uniq)
    counts = np.bincount(inverse, minlength=n).astype(np.float64)

    def avg(values):
        out = np.zeros((n, values.shape[1]))
        np.add.at(out, inverse, values)
        return out / counts[:, None]

    positions = avg(cloud.positions)
    colors = np.clip(avg(cloud.colors), 0.0, 1.0)
    flags = (avg(cloud.flags[:, None])[:, 0] >= 0.5).astype(np.float64)
    return PointCloud(positions, colors, flags)


def farthest_point_sample(cloud, count, seed_index=0):
    """Greedy max-min selection of ``count`` point indices.

    Starts at ``seed_index`` and repeatedly adds the point with the largest
    distance to the chosen set; ties pick the lowest index.
    """
    n = len(cloud)
    if not 1 <= count <= n:
        raise FlowmimicError(f"cannot sample {count} centers from {n} points")
    positions = cloud.positions
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = seed_index
    d2 = ((positions - positions[seed_index]) ** 2).sum(axis=1)
    for i in range(1, count):
        nxt = int(np.argmax(d2))
        chosen[i] = nxt
        d2 = np.minimum(d2, ((positions - positions[nxt]) ** 2).sum(axis=1))
    return chosen


def group_points(cloud, center_indices, k):
    """k nearest neighbors (including the center itself) for each center.

    Member positions are stored relative to their group center. Distance
    ties pick the lowest index; clouds smaller than k pad by repeating the
    nearest point.
    """
    if k < 1:
        raise FlowmimicError("group size must be >= 1")
    center_indices = np.asarray(center_indices, dtype=np.int64)
    positions = cloud.positions
    centers = positions[center_indices]
    # (G, N) distances; stable argsort keeps index order on ties
    d2 = ((centers[:, None, :] - positions[None, :, :]) ** 2).sum(axis=2)
    order = np.argsort(d2, axis=1, kind="stable")
    if order.shape[1] >= k:
        members = order[:, :k]
    else:
        pad = np.repeat(order[:, :1], k - order.shape[1], axis=1)
        members = np.concatenate([order, pad], axis=1)
    feats = np.empty((len(centers), k, 7))
    feats[:, :, :3] = positions[members] - centers[:, None, :]
    feats[:, :, 3:6] = cloud.colors[members]
    feats[:, :, 6] = cloud.flags[members]
    return GroupSet(centers=centers, member_indices=members,
                    group_features_input=feats)


def crop(cloud, box):
    """Points within the box, re-expressed relative to the box center."""
    if len(cloud) == 0:
        return cloud
    rel = cloud.positions - box.center
    keep = np.all(np.abs(rel) <= box.half_extents, axis=1)
    return PointCloud(rel[keep], cloud.colors[keep], cloud.flags[keep])


def recenter(points, origin):
    """Subtract ``origin`` from each row of an (M, 3) array."""
    points = np.asarray(points, dtype=np.float64)
    return points - np.asarray(origin, dtype=np.float64)
