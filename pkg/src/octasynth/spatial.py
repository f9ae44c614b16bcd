"""Exact proximity queries over dynamic 3D point sets.

PointIndex keeps an id -> position map and answers nearest/range queries that
are exactly equal to a brute-force scan (no approximation). Internally a
scipy kd-tree is rebuilt lazily after mutations; the amortized cost matches
the growth loop's pattern of batched inserts followed by batched queries.

Not safe for concurrent mutation; concurrent read-only queries over a frozen
index are fine.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class PointIndex:
    def __init__(self, points=()):
        """Build an index from an iterable of (id, position) pairs."""
        self._ids = np.empty(16, dtype=np.int64)
        self._pos = np.empty((16, 3), dtype=np.float64)
        self._alive = np.zeros(16, dtype=bool)
        self._slot: dict[int, int] = {}
        self._n = 0          # rows in use (including dead ones)
        self._n_dead = 0
        self._tree: cKDTree | None = None
        self._tree_rows: np.ndarray | None = None
        for pid, pos in points:
            self.insert(pid, pos)

    def __len__(self) -> int:
        return len(self._slot)

    def __contains__(self, pid: int) -> bool:
        return pid in self._slot

    def ids(self) -> list[int]:
        return list(self._slot.keys())

    def position(self, pid: int) -> np.ndarray:
        return self._pos[self._slot[pid]].copy()

    def items_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """All entries as (ids, positions) arrays, in insertion order."""
        if not self._slot:
            return np.empty(0, np.int64), np.empty((0, 3))
        rows = np.fromiter(self._slot.values(), dtype=np.int64, count=len(self._slot))
        return self._ids[rows].copy(), self._pos[rows].copy()

    def _grow(self) -> None:
        cap = max(32, 2 * self._ids.shape[0])
        for name in ("_ids", "_pos", "_alive"):
            old = getattr(self, name)
            shape = (cap,) + old.shape[1:]
            new = np.zeros(shape, dtype=old.dtype)
            new[: self._n] = old[: self._n]
            setattr(self, name, new)

    def insert(self, pid: int, position) -> None:
        if pid in self._slot:
            raise KeyError(f"duplicate insert of id {pid}")
        position = np.asarray(position, dtype=np.float64)
        if position.shape != (3,) or not np.all(np.isfinite(position)):
            raise ValueError(f"position must be a finite 3-vector, got {position!r}")
        if self._n == self._ids.shape[0]:
            self._grow()
        row = self._n
        self._ids[row] = pid
        self._pos[row] = position
        self._alive[row] = True
        self._slot[pid] = row
        self._n += 1
        self._tree = None

    def remove(self, pid: int) -> None:
        row = self._slot.pop(pid, None)
        if row is None:
            raise KeyError(f"remove of missing id {pid}")
        self._alive[row] = False
        self._n_dead += 1
        self._tree = None

    def _ensure_tree(self) -> bool:
        """Rebuild the kd-tree if stale; False when the index is empty."""
        if not self._slot:
            return False
        if self._tree is None:
            if self._n_dead:
                rows = np.nonzero(self._alive[: self._n])[0]
            else:
                rows = np.arange(self._n)
            self._tree_rows = rows
            self._tree = cKDTree(self._pos[rows], balanced_tree=False, compact_nodes=False)
        return True

    def nearest_within(self, query, radius: float):
        """Closest entry within `radius`, or None; ties broken by smallest id."""
        if radius <= 0:
            raise ValueError("radius must be > 0")
        if not self._ensure_tree():
            return None
        query = np.asarray(query, dtype=np.float64)
        hits = self._tree.query_ball_point(query, radius)
        if not hits:
            return None
        rows = self._tree_rows[hits]
        dists = np.linalg.norm(self._pos[rows] - query, axis=1)
        order = np.lexsort((self._ids[rows], dists))
        best = order[0]
        return int(self._ids[rows[best]]), float(dists[best])

    def range_query(self, query, radius: float):
        """All (id, distance) with distance <= radius, sorted by (distance, id)."""
        if radius <= 0:
            raise ValueError("radius must be > 0")
        if not self._ensure_tree():
            return []
        query = np.asarray(query, dtype=np.float64)
        hits = self._tree.query_ball_point(query, radius)
        if not hits:
            return []
        rows = self._tree_rows[hits]
        dists = np.linalg.norm(self._pos[rows] - query, axis=1)
        order = np.lexsort((self._ids[rows], dists))
        return [(int(self._ids[rows[i]]), float(dists[i])) for i in order]

    # Batched variants used by the growth loop. Semantics match the scalar
    # queries; exact distance ties may resolve to either entry.

    def nearest_batch(self, queries: np.ndarray, radius: float):
        """ids and distances of the closest entry per query row; id -1 if none."""
        queries = np.asarray(queries, dtype=np.float64)
        out_ids = np.full(len(queries), -1, dtype=np.int64)
        out_d = np.full(len(queries), np.inf)
        if len(queries) == 0 or not self._ensure_tree():
            return out_ids, out_d
        dists, idx = self._tree.query(queries, k=1, distance_upper_bound=radius)
        found = np.isfinite(dists)
        out_ids[found] = self._ids[self._tree_rows[idx[found]]]
        out_d[found] = dists[found]
        return out_ids, out_d

    def knn_batch(self, queries: np.ndarray, k: int, radius: float):
        """k nearest entries within `radius` per query row, distance-sorted.

        Returns (ids, distances) of shape (m, k), padded with -1 / inf where
        fewer than k entries lie in range.
        """
        queries = np.asarray(queries, dtype=np.float64)
        m = len(queries)
        out_ids = np.full((m, k), -1, dtype=np.int64)
        out_d = np.full((m, k), np.inf)
        if m == 0 or not self._ensure_tree():
            return out_ids, out_d
        kk = min(k, len(self._tree_rows))
        dists, idx = self._tree.query(queries, k=kk, distance_upper_bound=radius)
        dists = dists.reshape(m, kk)
        idx = idx.reshape(m, kk)
        found = np.isfinite(dists)
        rows = self._tree_rows[idx[found]]
        out_ids[:, :kk][found] = self._ids[rows]
        out_d[:, :kk][found] = dists[found]
        return out_ids, out_d

    def min_dist_batch(self, queries: np.ndarray, cap: float) -> np.ndarray:
        """Distance to the nearest entry per query, inf where farther than cap."""
        queries = np.asarray(queries, dtype=np.float64)
        if len(queries) == 0 or not self._ensure_tree():
            return np.full(len(queries), np.inf)
        dists, _ = self._tree.query(queries, k=1, distance_upper_bound=cap)
        return dists

    def neighbors_batch(self, queries: np.ndarray, radius: float):
        """Per query row: arrays of (ids, distances) of entries within radius."""
        queries = np.asarray(queries, dtype=np.float64)
        if len(queries) == 0 or not self._ensure_tree():
            return [(np.empty(0, np.int64), np.empty(0))] * len(queries)
        groups = self._tree.query_ball_point(queries, radius)
        out = []
        for q, hits in zip(queries, groups):
            if hits:
                rows = self._tree_rows[hits]
                out.append((self._ids[rows], np.linalg.norm(self._pos[rows] - q, axis=1)))
            else:
                out.append((np.empty(0, np.int64), np.empty(0)))
        return out
