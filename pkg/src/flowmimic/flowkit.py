"""Trajectory and flow containers plus the sampling, coding, and metric
machinery around them.

A trajectory is a T-step 3D path whose first point is its query; a flow is
an ordered set of trajectories sharing the horizon, anchored at the time
index the flow was produced. Prediction targets are per-step offsets from
the query point; the encode/decode pair below is an exact bijection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FlowmimicError
from .pcgeom import VOXEL_SIZE

HORIZON = 16          # trajectory steps T
N_QUERY = 64          # query points per training batch
STATIC_EPS = VOXEL_SIZE
GRID_SPACING = 0.05   # execution-time query lattice


@dataclass(frozen=True)
class Trajectory:
    """T x 3 path; points[0] is the query point."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if len(pts) < 1:
            raise FlowmimicError("trajectory needs at least one point")

    @property
    def query(self):
        return self.points[0]

    @property
    def horizon(self):
        return len(self.points)


@dataclass(frozen=True)
class Flow:
    """Trajectories sharing one horizon, anchored at a source state index."""

    trajectories: tuple
    source_state_index: int = 0

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        object.__setattr__(self, "trajectories", trajs)
        if not trajs:
            raise FlowmimicError("flow must contain at least one trajectory")
        horizons = {t.horizon for t in trajs}
        if len(horizons) != 1:
            raise FlowmimicError(f"mixed trajectory horizons {sorted(horizons)}")

    def __len__(self):
        return len(self.trajectories)

    @property
    def horizon(self):
        return self.trajectories[0].horizon

    def as_array(self):
        """(n, T, 3) stacked trajectory points."""
        return np.stack([t.points for t in self.trajectories])

    @classmethod
    def from_array(cls, arr, source_state_index=0):
        arr = np.asarray(arr, dtype=np.float64)
        return cls(tuple(Trajectory(a) for a in arr), source_state_index)


@dataclass(frozen=True)
class QueryBatch:
    """Sampled training queries with offset targets and class labels."""

    queries: np.ndarray       # (N_q, 3)
    targets: np.ndarray       # (N_q, T-1, 3) offsets from the query
    moving_mask: np.ndarray   # (N_q,) bool
    indices: np.ndarray = field(default=None)  # source trajectory indices


def trajectory_width(traj):
    """Largest pairwise Euclidean distance among the trajectory's points."""
    pts = traj.points
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=2)).max())


def widths_of_paths(paths):
    """Vectorized trajectory width for an (n, T, 3) array."""
    diff = paths[:, :, None, :] - paths[:, None, :, :]
    return np.sqrt((diff * diff).sum(axis=3)).max(axis=(1, 2))


def is_static(traj, eps=STATIC_EPS):
    """Width strictly below eps counts as static."""
    if eps <= 0:
        raise FlowmimicError("static threshold must be positive")
    return trajectory_width(traj) < eps


def encode_targets(traj):
    """Per-step offsets from the query: points[i] - points[0] for i >= 1."""
    return traj.points[1:] - traj.points[0]


def decode_targets(query, offsets):
    """Inverse of encode_targets; exact roundtrip."""
    query = np.asarray(query, dtype=np.float64).reshape(3)
    offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, 3)
    return Trajectory(np.concatenate([query[None], query[None] + offsets]))


def sample_query_batch(trajectories, n_query=N_QUERY, rng=None, eps=STATIC_EPS):
    """Draw a moving-ratio balanced query subset.

    A moving ratio is drawn uniformly from [0, 1); round-half-up of
    ratio * n_query trajectories come from the moving class and the rest
    from the static class, each uniformly without replacement. If one class
    is too small the deficit is filled from the other; if both classes are
    exhausted the remainder is drawn with replacement from everything.
    """
    if not trajectories:
        raise FlowmimicError("cannot sample queries from an empty trajectory list")
    rng = rng or np.random.default_rng()
    paths = np.stack([t.points for t in trajectories])
    widths = widths_of_paths(paths)
    moving = np.flatnonzero(widths >= eps)
    static = np.flatnonzero(widths < eps)

    p_m = rng.uniform()
    n_move = int(np.floor(p_m * n_query + 0.5))
    take_move = min(n_move, len(moving))
    take_static = min(n_query - take_move, len(static))
    take_move = min(n_query - take_static, len(moving))

    picks = []
    if take_move:
        picks.append(rng.choice(moving, size=take_move, replace=False))
    if take_static:
        picks.append(rng.choice(static, size=take_static, replace=False))
    chosen = np.concatenate(picks) if picks else np.empty(0, dtype=np.int64)
    short = n_query - len(chosen)
    if short > 0:
        chosen = np.concatenate(
            [chosen, rng.choice(len(trajectories), size=short, replace=True)])
    rng.shuffle(chosen)

    sel = paths[chosen]
    return QueryBatch(
        queries=sel[:, 0].copy(),
        targets=sel[:, 1:] - sel[:, :1],
        moving_mask=widths[chosen] >= eps,
        indices=chosen,
    )


def grid_queries_in_box(cloud, box, spacing=GRID_SPACING):
    """Execution-time query selection: one cloud point per occupied grid cell.

    The box is covered by a ``spacing``-cube lattice; for each cell holding
    at least one in-box point, the point nearest the cell center is emitted
    (in world coordinates, lowest index on ties). Cells are visited in
    lexicographic order. An empty crop yields an empty list.
    """
    if spacing <= 0:
        raise FlowmimicError("grid spacing must be positive")
    if len(cloud) == 0:
        return np.zeros((0, 3))
    rel = cloud.positions - box.center
    keep = np.flatnonzero(np.all(np.abs(rel) <= box.half_extents, axis=1))
    if len(keep) == 0:
        return np.zeros((0, 3))
    lo = box.center - box.half_extents
    pts = cloud.positions[keep]
    n_cells = np.maximum(np.ceil(2 * box.half_extents / spacing).astype(int), 1)
    cells = np.minimum(np.floor((pts - lo) / spacing).astype(np.int64), n_cells - 1)

    out = []
    uniq, inverse = np.unique(cells, axis=0, return_inverse=True)
    for ci in range(len(uniq)):
        members = np.flatnonzero(inverse == ci)
        center = lo + (uniq[ci] + 0.5) * spacing
        d2 = ((pts[members] - center) ** 2).sum(axis=1)
        out.append(pts[members[np.argmin(d2)]])
    return np.asarray(out)


def _matched_arrays(fpred, ftrue):
    a, b = fpred.as_array(), ftrue.as_array()
    if a.shape != b.shape:
        raise FlowmimicError(f"flow shapes differ: {a.shape} vs {b.shape}")
    return a, b


def ade(fpred, ftrue):
    """Mean displacement over all (trajectory, step) pairs, absolute coords."""
    a, b = _matched_arrays(fpred, ftrue)
    return float(np.linalg.norm(a - b, axis=2).mean())


def fde(fpred, ftrue):
    """Mean final-step displacement over trajectories, absolute coords."""
    a, b = _matched_arrays(fpred, ftrue)
    return float(np.linalg.norm(a[:, -1] - b[:, -1], axis=1).mean())


# --- flow file IO (JSON Lines) ----------------------------------------------

def write_flows(path, flows):
    with open(path, "w") as fh:
        for flow in flows:
            arr = flow.as_array()
            rec = {
                "state_index": flow.source_state_index,
                "T": flow.horizon,
                "queries": arr[:, 0].tolist(),
                "offsets": (arr[:, 1:] - arr[:, :1]).tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def read_flows(path):
    flows = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            trajs = tuple(
                decode_targets(q, off)
                for q, off in zip(rec["queries"], rec["offsets"]))
            flows.append(Flow(trajs, rec["state_index"]))
    return flows
