"""Rooted binary vessel trees: node taxonomy, radii and serialization.

Nodes live in flat, capacity-doubled numpy arrays for speed; ids are array
rows and are assigned in creation order, so a parent's id is always smaller
than its children's. The radius stored on a node is the radius of the segment
from its parent (root radii are nominal stubs kept equal to the subtree's
entry radius).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ARTERIAL = "arterial"
VENOUS = "venous"

NO_PARENT = -1


class GeometryError(ValueError):
    """Degenerate branching geometry (Murray arccos argument out of range)."""


def murray_parent_radius(r_c1: float, r_c2: float, kappa: float) -> float:
    """Parent radius satisfying r_p^kappa = r_c1^kappa + r_c2^kappa."""
    return (r_c1 ** kappa + r_c2 ** kappa) ** (1.0 / kappa)


def bifurcation_angles(r_parent: float, r_child: float) -> tuple[float, float]:
    """Minimum-work branch angles (alpha, beta=-alpha) in degrees.

    alpha = arccos(r_parent^4 / (2 r_parent^2 r_child^2)); raises
    GeometryError when the argument leaves [-1, 1] (callers skip the
    bifurcation rather than clamping).
    """
    if r_parent <= 0 or r_child <= 0:
        raise GeometryError("radii must be positive")
    arg = r_parent ** 4 / (2.0 * r_parent ** 2 * r_child ** 2)
    if not -1.0 <= arg <= 1.0:
        raise GeometryError(f"arccos argument {arg:.6g} outside [-1, 1]")
    alpha = math.degrees(math.acos(arg))
    return alpha, -alpha


@dataclass(frozen=True)
class NodeView:
    """Read-only snapshot of one node."""

    id: int
    position: np.ndarray
    radius_mm: float
    parent: int | None
    children: tuple[int, ...]
    tree_id: int
    kind: str


class VesselForest:
    def __init__(self):
        cap = 64
        self.pos = np.zeros((cap, 3), dtype=np.float64)
        self.radius = np.zeros(cap, dtype=np.float64)
        self.parent = np.full(cap, NO_PARENT, dtype=np.int64)
        self.children = np.full((cap, 2), NO_PARENT, dtype=np.int64)
        self.n_children = np.zeros(cap, dtype=np.int8)
        self.tree_id = np.zeros(cap, dtype=np.int32)
        # kappa in effect when a node's radius was last written; bounded nodes
        # satisfy the Murray identity under exactly this exponent.
        self.last_kappa = np.zeros(cap, dtype=np.float64)
        self.n = 0
        self.roots: list[int] = []
        self.tree_kind: list[str] = []

    # -- construction ------------------------------------------------------

    def _grow(self, need: int) -> None:
        cap = self.pos.shape[0]
        if self.n + need <= cap:
            return
        new_cap = max(2 * cap, self.n + need)
        for name in ("pos", "radius", "parent", "children", "n_children",
                     "tree_id", "last_kappa"):
            old = getattr(self, name)
            new = np.zeros((new_cap,) + old.shape[1:], dtype=old.dtype)
            if name in ("parent", "children"):
                new.fill(NO_PARENT)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    def add_root(self, position, radius_mm: float, kind: str) -> int:
        if kind not in (ARTERIAL, VENOUS):
            raise ValueError(f"unknown tree kind {kind!r}")
        self._grow(1)
        nid = self.n
        self.pos[nid] = position
        self.radius[nid] = radius_mm
        self.parent[nid] = NO_PARENT
        self.tree_id[nid] = len(self.roots)
        self.n += 1
        self.roots.append(nid)
        self.tree_kind.append(kind)
        return nid

    def add_child(self, parent_id: int, position, radius_mm: float, kappa: float = 0.0) -> int:
        if not 0 <= parent_id < self.n:
            raise KeyError(f"unknown node id {parent_id}")
        k = self.n_children[parent_id]
        if k >= 2:
            raise ValueError(f"node {parent_id} is bounded (already has 2 children)")
        self._grow(1)
        nid = self.n
        self.pos[nid] = position
        self.radius[nid] = radius_mm
        self.parent[nid] = parent_id
        self.tree_id[nid] = self.tree_id[parent_id]
        self.last_kappa[nid] = kappa
        self.children[parent_id, k] = nid
        self.n_children[parent_id] = k + 1
        self.n += 1
        return nid

    # -- taxonomy and views --------------------------------------------------

    def classify(self, node_id: int) -> str:
        """'leaf' (0 children), 'inter' (1) or 'bounded' (2)."""
        if not 0 <= node_id < self.n:
            raise KeyError(f"unknown node id {node_id}")
        return ("leaf", "inter", "bounded")[self.n_children[node_id]]

    def node(self, node_id: int) -> NodeView:
        if not 0 <= node_id < self.n:
            raise KeyError(f"unknown node id {node_id}")
        par = int(self.parent[node_id])
        kids = tuple(int(c) for c in self.children[node_id] if c != NO_PARENT)
        tid = int(self.tree_id[node_id])
        return NodeView(
            id=node_id,
            position=self.pos[node_id].copy(),
            radius_mm=float(self.radius[node_id]),
            parent=None if par == NO_PARENT else par,
            children=kids,
            tree_id=tid,
            kind=self.tree_kind[tid],
        )

    def kind_of(self, node_id: int) -> str:
        return self.tree_kind[self.tree_id[node_id]]

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(parent_ids, child_ids) for every edge in the forest."""
        child = np.nonzero(self.parent[: self.n] != NO_PARENT)[0]
        return self.parent[child], child

    @property
    def n_nodes(self) -> int:
        return self.n

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(self.parent[: self.n] != NO_PARENT))

    # -- radii -------------------------------------------------------------

    def update_radii_upstream(self, node_id: int, kappa: float) -> None:
        """Propagate a radius change from `node_id`'s parent up to the root.

        Two-child ancestors take the Murray combination of their children;
        single-child ancestors copy their child's radius. The walk stops
        early once a recomputed value is unchanged.
        """
        cur = int(self.parent[node_id])
        while cur != NO_PARENT:
            k = self.n_children[cur]
            if k == 2:
                c1, c2 = self.children[cur]
                new_r = murray_parent_radius(self.radius[c1], self.radius[c2], kappa)
            else:
                new_r = float(self.radius[self.children[cur, 0]])
            if new_r == self.radius[cur]:
                break
            self.radius[cur] = new_r
            self.last_kappa[cur] = kappa
            cur = int(self.parent[cur])

    # -- integrity ------------------------------------------------------------

    def check_integrity(self) -> None:
        """Assert acyclicity, parent/child reciprocity and child counts."""
        n = self.n
        for nid in range(n):
            par = self.parent[nid]
            if par != NO_PARENT:
                if not 0 <= par < nid:
                    raise AssertionError(f"node {nid}: parent {par} not older than child")
                if nid not in self.children[par]:
                    raise AssertionError(f"node {nid} missing from parent {par}'s children")
            kids = self.children[nid]
            k = int(self.n_children[nid])
            if np.any(kids[:k] == NO_PARENT) or np.any(kids[k:] != NO_PARENT):
                raise AssertionError(f"node {nid}: children slots inconsistent")
            for c in kids[:k]:
                if self.parent[c] != nid:
                    raise AssertionError(f"child {c} does not point back to {nid}")
        # parent < child everywhere implies acyclicity

    # -- serialization ----------------------------------------------------

    CSV_HEADER = ["node_id", "parent_id", "x", "y", "z", "radius_mm", "tree_id", "kind"]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(self.CSV_HEADER)
            for nid in range(self.n):
                par = self.parent[nid]
                w.writerow([
                    nid,
                    "" if par == NO_PARENT else int(par),
                    f"{self.pos[nid, 0]:.17g}",
                    f"{self.pos[nid, 1]:.17g}",
                    f"{self.pos[nid, 2]:.17g}",
                    f"{self.radius[nid]:.17g}",
                    int(self.tree_id[nid]),
                    self.tree_kind[self.tree_id[nid]],
                ])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(self.CSV_HEADER)
        for nid in range(self.n):
            par = self.parent[nid]
            w.writerow([
                nid,
                "" if par == NO_PARENT else int(par),
                f"{self.pos[nid, 0]:.17g}",
                f"{self.pos[nid, 1]:.17g}",
                f"{self.pos[nid, 2]:.17g}",
                f"{self.radius[nid]:.17g}",
                int(self.tree_id[nid]),
                self.tree_kind[self.tree_id[nid]],
            ])
        return buf.getvalue()


class GraphParseError(ValueError):
    """Malformed graph CSV; message carries the offending line number."""


def forest_from_csv_text(text: str) -> VesselForest:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != VesselForest.CSV_HEADER:
        raise GraphParseError("line 1: missing or wrong header row")
    forest = VesselForest()
    expected = 0
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 8:
            raise GraphParseError(f"line {lineno}: expected 8 fields, got {len(row)}")
        try:
            nid = int(row[0])
            par = None if row[1] == "" else int(row[1])
            pos = (float(row[2]), float(row[3]), float(row[4]))
            radius = float(row[5])
            kind = row[7]
        except ValueError as exc:
            raise GraphParseError(f"line {lineno}: {exc}") from exc
        if nid != expected:
            raise GraphParseError(f"line {lineno}: node ids must be dense, expected {expected}")
        if par is None:
            forest.add_root(pos, radius, kind)
        else:
            if not 0 <= par < forest.n:
                raise GraphParseError(f"line {lineno}: parent {par} not yet defined")
            forest.add_child(par, pos, radius)
        expected += 1
    return forest


def read_csv(path: str | Path) -> VesselForest:
    path = Path(path)
    return forest_from_csv_text(path.read_text())


# -- non-perfusion augmentation ---------------------------------------------


@dataclass(frozen=True)
class RemovalStats:
    p: float                  # per-edge drop probability drawn for this image
    n_edges: int              # edges before removal
    n_flagged: int            # edges flagged directly (pre-cascade)
    n_removed_nodes: int      # nodes deleted after cascading

    @property
    def flagged_fraction(self) -> float:
        return self.n_flagged / self.n_edges if self.n_edges else 0.0


def remove_random_subtrees(
    forest: VesselForest, probability_upper: float, rng: np.random.Generator
) -> tuple[VesselForest, RemovalStats]:
    """Drop random edges and their whole descendant subtrees.

    A single drop probability p ~ U(0, probability_upper) is drawn per call,
    then each edge is flagged independently with probability p; removing an
    edge removes everything below it. Returns the compacted forest.
    """
    if not 0.0 <= probability_upper <= 1.0:
        raise ValueError("probability_upper must lie in [0, 1]")
    n = forest.n
    p = float(rng.uniform(0.0, probability_upper))
    has_parent = forest.parent[:n] != NO_PARENT
    flagged = np.zeros(n, dtype=bool)
    flagged[has_parent] = rng.random(int(has_parent.sum())) < p

    # Cascade: a node dies if any ancestor's edge is flagged. Pointer doubling
    # over parent links resolves the whole forest in O(n log depth): after k
    # rounds removed[i] covers flags within 2^k ancestors and jump[i] points
    # 2^k levels up.
    removed = flagged.copy()
    jump = forest.parent[:n].copy()
    while np.any(jump != NO_PARENT):
        valid = jump != NO_PARENT
        safe = np.where(valid, jump, 0)
        removed = removed | (valid & removed[safe])
        jump = np.where(valid, jump[safe], NO_PARENT)

    keep = ~removed
    out = VesselForest()
    remap = np.full(n, NO_PARENT, dtype=np.int64)
    for nid in range(n):
        if not keep[nid]:
            continue
        par = forest.parent[nid]
        if par == NO_PARENT:
            remap[nid] = out.add_root(
                forest.pos[nid], forest.radius[nid], forest.tree_kind[forest.tree_id[nid]]
            )
        else:
            remap[nid] = out.add_child(
                int(remap[par]), forest.pos[nid], forest.radius[nid],
                kappa=float(forest.last_kappa[nid]),
            )
    stats = RemovalStats(
        p=p,
        n_edges=int(has_parent.sum()),
        n_flagged=int(flagged.sum()),
        n_removed_nodes=int(removed.sum()),
    )
    return out, stats
