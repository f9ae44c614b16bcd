"""Iterative space-colonization growth of retinal vessel forests.

One simulation runs two phases (superficial, then deep complex) over a slab
of 1 x 1 x 1/76 simulation units; the unit slab edge represents `fov_mm`
millimetres. Every iteration the space "expands": the scale factor
sigma = 1 + t * delta_sigma divides all distance parameters, t running on
across the phase boundary. Oxygen sinks attract the closest arterial node
within the perception distance; satisfied sinks turn into CO2 sources, which
drive venous growth the same way and vanish once reached.

Determinism: all randomness comes from named streams derived from the master
seed; nodes are processed in ascending id order and proliferation decisions
are computed read-only against the state at iteration start, then committed
serially. Positions are in simulation units, radii in millimetres.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .config import PhaseConfig, SimulationSettings
from .rng import stream
from .spatial import PointIndex
from .vesselgraph import ARTERIAL, NO_PARENT, VENOUS, VesselForest, murray_parent_radius

# Oxygen-supply heuristic constants: reference capillary radius and the
# dimensionless peak of x * exp(1 - x) times the 0.02 * 203.9 prefactor.
_EPS_N_REF_MM = 0.0035
_EPS_N_PREFACTOR = 0.02 * 203.9
EPS_N_RAW_MAX = _EPS_N_PREFACTOR  # attained at r = 3.5 um

_TINY = 1e-12


def scaled(param_initial: float, t: int, delta_sigma: float) -> float:
    """Distance parameter after t expansion steps: p0 / (1 + t * delta_sigma)."""
    return param_initial / (1.0 + t * delta_sigma)


def epsilon_n(r_node_mm: float) -> float:
    """Raw node/sink clearance heuristic 0.02*203.9*x*exp(1-x), x = r/3.5um.

    The returned value is dimensionless here; the engine multiplies it by the
    configurable `eps_n_scale` to obtain simulation units (the heuristic's
    absolute scale is not determined by its formula).
    """
    x = r_node_mm / _EPS_N_REF_MM
    return _EPS_N_PREFACTOR * x * math.exp(1.0 - x)


def _epsilon_n_array(r_mm: np.ndarray) -> np.ndarray:
    x = r_mm / _EPS_N_REF_MM
    return _EPS_N_PREFACTOR * x * np.exp(1.0 - x)


def _normalize(v: np.ndarray) -> np.ndarray | None:
    n = float(np.linalg.norm(v))
    if n < _TINY:
        return None
    return v / n


def _perp_reference(axis: np.ndarray) -> np.ndarray:
    """Deterministic unit vector orthogonal to `axis` (projected e_z, else e_x)."""
    ref = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    out = ref - np.dot(ref, axis) * axis
    return out / np.linalg.norm(out)


# -- pure geometric filters (single code path shared by engine and tests) ----


def filter_cone_leaf(
    p_node: np.ndarray,
    p_parent: np.ndarray,
    sink_positions: np.ndarray,
    delta: float,
    gamma_deg: float,
) -> np.ndarray:
    """Mask of sinks inside a leaf's perception cone.

    Keeps sinks within `delta` of the node whose direction deviates from the
    parent->node axis by at most gamma/2.
    """
    v = _normalize(np.asarray(p_node, float) - np.asarray(p_parent, float))
    if v is None:
        raise ValueError("degenerate parent->node axis")
    u = np.asarray(sink_positions, float) - p_node
    dist = np.linalg.norm(u, axis=1)
    ok = (dist <= delta) & (dist > _TINY)
    cos_half = math.cos(math.radians(gamma_deg) / 2.0)
    with np.errstate(invalid="ignore"):
        ok &= (u @ v) >= cos_half * dist
    return ok


def frustum_angles(r_child_mm: float, r_new_mm: float, kappa: float) -> tuple[float, float] | None:
    """Minimum-work angles (phi1, phi2) in radians for sprouting a new branch.

    phi1 belongs to the prospective terminal-radius branch and phi2 to the
    existing child, both against the hypothetical post-update parent axis
    using the general minimum-work branch-angle relations
    cos(phi_i) = (r_p^4 + r_i^4 - r_j^4) / (2 r_p^2 r_i^2); for equal children
    these reduce to the symmetric bifurcation angle. The thin-branch limit
    approaches 90 degrees, so every chain stays sproutable regardless of how
    thick its downstream child has grown. Returns None only for numerically
    degenerate inputs.
    """
    r_p = murray_parent_radius(r_child_mm, r_new_mm, kappa)
    rp2 = r_p * r_p
    rp4 = rp2 * rp2
    rn4 = r_new_mm ** 4
    rc4 = r_child_mm ** 4
    arg1 = (rp4 + rn4 - rc4) / (2.0 * rp2 * r_new_mm * r_new_mm)
    arg2 = (rp4 + rc4 - rn4) / (2.0 * rp2 * r_child_mm * r_child_mm)
    if not (-1.0 <= arg1 <= 1.0 and -1.0 <= arg2 <= 1.0):
        return None
    return math.acos(arg1), math.acos(arg2)


def filter_frustum_internode(
    p_node: np.ndarray,
    p_parent: np.ndarray,
    p_child: np.ndarray,
    r_child_mm: float,
    r_new_mm: float,
    kappa: float,
    sink_positions: np.ndarray,
    delta: float,
    gamma_deg: float,
) -> np.ndarray:
    """Mask of sinks inside an inter-node's sprouting frustum.

    The angular band is centred on the optimal branching angle phi1 + phi2
    away from the existing child axis, with half-width gamma/2; a second
    condition keeps the sink within gamma/2 + phi2 of the parent->node axis.
    """
    sink_positions = np.asarray(sink_positions, float)
    angles = frustum_angles(r_child_mm, r_new_mm, kappa)
    if angles is None:
        return np.zeros(len(sink_positions), dtype=bool)
    phi1, phi2 = angles
    v = _normalize(np.asarray(p_node, float) - np.asarray(p_parent, float))
    c = _normalize(np.asarray(p_child, float) - np.asarray(p_node, float))
    if v is None or c is None:
        raise ValueError("degenerate node axes")
    u = sink_positions - p_node
    dist = np.linalg.norm(u, axis=1)
    ok = (dist <= delta) & (dist > _TINY)
    half = math.radians(gamma_deg) / 2.0
    theta_opt = phi1 + phi2
    with np.errstate(invalid="ignore", divide="ignore"):
        uhat = np.where(dist[:, None] > _TINY, u / np.maximum(dist, _TINY)[:, None], 0.0)
    ang_child = np.arccos(np.clip(uhat @ c, -1.0, 1.0))
    ang_parent = np.arccos(np.clip(uhat @ v, -1.0, 1.0))
    ok &= np.abs(ang_child - theta_opt) <= half
    ok &= ang_parent <= half + phi2
    return ok


def optimal_sprout_direction(
    c_hat: np.ndarray, a_hat: np.ndarray, theta_opt: float
) -> np.ndarray:
    """Member of the optimal cone around the child axis closest to `a_hat`.

    The cone has half-angle theta_opt; the closest member lies in the plane
    spanned by the child axis and the mean attraction direction. A mean
    direction parallel to the child axis falls back to a fixed reference.
    """
    a_perp = a_hat - np.dot(a_hat, c_hat) * c_hat
    n = float(np.linalg.norm(a_perp))
    e = a_perp / n if n > 1e-9 else _perp_reference(c_hat)
    return math.cos(theta_opt) * c_hat + math.sin(theta_opt) * e


# -- state -------------------------------------------------------------------


@dataclass
class SinkEvent:
    """Lifetime record of one oxygen sink (for verification runs)."""

    position: np.ndarray
    t_inserted: int
    eps_s_su: float           # spacing threshold in force at insertion
    t_removed: int | None = None


@dataclass
class GrowthState:
    forest: VesselForest
    sinks: PointIndex
    co2: PointIndex
    arterial_nodes: PointIndex
    venous_nodes: PointIndex
    settings: SimulationSettings
    rng_sinks: np.random.Generator
    rng_faz: np.random.Generator
    r_faz_mm: float
    faz_center: np.ndarray                 # lateral, simulation units
    t: int = 0
    sigma: float = 1.0
    sigma_history: list[float] = field(default_factory=list)
    next_sink_id: int = 0
    sink_events: dict[int, SinkEvent] | None = None

    @property
    def r_faz_su(self) -> float:
        return self.r_faz_mm / self.settings.fov_mm

    def node_index_for(self, kind: str) -> PointIndex:
        return self.arterial_nodes if kind == ARTERIAL else self.venous_nodes


def make_initial_state(
    svc: PhaseConfig,
    settings: SimulationSettings,
    seed: int,
    log_events: bool = False,
) -> GrowthState:
    """Slab with root stumps on the lateral faces and a sampled FAZ radius.

    Stumps enter as arteriole/venule pairs alternating around the four
    lateral faces (pair anchors uniform per face, partners a small lateral
    gap apart so venous trees can pick up the CO2 wake of their arterial
    partner). Each stump is a root plus one child pointing down the inward
    face normal, at the configured stump radius/length (default: terminal
    radius r, length d).
    """
    forest = VesselForest()
    rng_roots = stream(seed, "roots")
    r_faz_mm = float(stream(seed, "r_faz").normal(svc.r_faz[0], svc.r_faz[1]))
    r_faz_mm = max(r_faz_mm, 1e-6)
    root_r = settings.root_radius_mm if settings.root_radius_mm else svc.r
    root_len_su = (settings.root_length_mm if settings.root_length_mm else svc.d) / settings.fov_mm
    gap_su = settings.root_pair_gap_mm / settings.fov_mm

    normals = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]], dtype=float)
    state = GrowthState(
        forest=forest,
        sinks=PointIndex(),
        co2=PointIndex(),
        arterial_nodes=PointIndex(),
        venous_nodes=PointIndex(),
        settings=settings,
        rng_sinks=stream(seed, "sinks"),
        rng_faz=stream(seed, "faz_suppression"),
        r_faz_mm=r_faz_mm,
        faz_center=np.array([0.5, 0.5]),
        sink_events={} if log_events else None,
    )
    n_pairs = settings.n_roots // 2
    for i in range(n_pairs):
        face = (i * 4) // n_pairs
        anchor = rng_roots.uniform()
        z = rng_roots.uniform() * settings.slab_depth
        for kind, offset in ((ARTERIAL, -gap_su / 2), (VENOUS, gap_su / 2)):
            u = min(max(anchor + offset, 0.0), 1.0)
            if face == 0:
                pos = np.array([0.0, u, z])
            elif face == 1:
                pos = np.array([1.0, u, z])
            elif face == 2:
                pos = np.array([u, 0.0, z])
            else:
                pos = np.array([u, 1.0, z])
            rid = forest.add_root(pos, root_r, kind)
            cid = forest.add_child(rid, pos + root_len_su * normals[face], root_r, kappa=svc.kappa)
            idx = state.node_index_for(kind)
            idx.insert(rid, forest.pos[rid])
            idx.insert(cid, forest.pos[cid])
    return state


# -- per-iteration steps ------------------------------------------------------


def segment_length_su(phase: PhaseConfig, state: GrowthState) -> float:
    """Scaled segment length in simulation units, floored at d_floor_mm."""
    d_mm = max(scaled(phase.d, state.t, phase.delta_sigma), state.settings.d_floor_mm)
    return d_mm / state.settings.fov_mm


def place_oxygen_sinks(state: GrowthState, phase: PhaseConfig) -> int:
    """Sample up to N sink candidates and keep the valid ones.

    A candidate survives if it lies outside the FAZ cylinder, keeps the
    radius-dependent clearance from every arterial node and the scaled
    minimum spacing from all coexisting sinks (including candidates accepted
    earlier in the same batch). Rejected candidates are discarded.
    """
    s = state.settings
    cand = state.rng_sinks.uniform(size=(phase.N, 3))
    cand[:, 2] *= s.slab_depth
    eps_s_su = scaled(phase.eps_s, state.t, phase.delta_sigma) / s.fov_mm

    lat = cand[:, :2] - state.faz_center
    ok = (lat * lat).sum(axis=1) >= state.r_faz_su ** 2

    if s.eps_n_scale > 0 and len(state.arterial_nodes):
        bound = s.eps_n_scale * EPS_N_RAW_MAX / state.sigma
        rows = np.flatnonzero(ok)
        if len(rows):
            groups = state.arterial_nodes.neighbors_batch(cand[rows], bound)
            for row, (ids, dists) in zip(rows, groups):
                if len(ids) == 0:
                    continue
                clear = s.eps_n_scale * _epsilon_n_array(state.forest.radius[ids]) / state.sigma
                if np.any(dists < clear):
                    ok[row] = False

    if len(state.sinks):
        dmin = state.sinks.min_dist_batch(cand, eps_s_su)
        ok &= ~(dmin < eps_s_su)

    rows = np.flatnonzero(ok)
    if len(rows) > 1:
        pairs = cKDTree(cand[rows]).query_pairs(eps_s_su, output_type="ndarray")
        if len(pairs):
            accepted = np.ones(len(rows), dtype=bool)
            order = np.argsort(pairs[:, 1], kind="stable")
            for i, j in pairs[order]:
                if accepted[j] and accepted[i]:
                    accepted[j] = False
            rows = rows[accepted]

    for row in rows:
        sid = state.next_sink_id
        state.next_sink_id += 1
        state.sinks.insert(sid, cand[row])
        if state.sink_events is not None:
            state.sink_events[sid] = SinkEvent(cand[row].copy(), state.t, eps_s_su)
    return len(rows)


def _pair_acceptance(
    forest: VesselForest,
    node_ids: np.ndarray,
    sink_pos: np.ndarray,
    dist: np.ndarray,
    r_new_mm: float,
    kappa: float,
    cos_half_gamma: float,
    half_gamma_rad: float,
) -> np.ndarray:
    """Vectorized perception test for flat (node, sink) candidate pairs.

    Leaves apply the cone condition, inter-nodes the minimum-work frustum;
    roots and bounded nodes accept nothing. Must stay equivalent to
    filter_cone_leaf / filter_frustum_internode (tested for agreement).
    """
    accept = np.zeros(len(node_ids), dtype=bool)
    if not len(node_ids):
        return accept
    parent = forest.parent[node_ids]
    has_parent = parent != NO_PARENT
    n_children = forest.n_children[node_ids]
    good_dist = dist > _TINY

    p = forest.pos[node_ids]
    u = sink_pos - p
    pdir = np.zeros_like(p)
    pv = p[has_parent] - forest.pos[parent[has_parent]]
    pn = np.linalg.norm(pv, axis=1)
    pdir[has_parent] = pv / np.maximum(pn, _TINY)[:, None]

    dot_parent = np.einsum("ij,ij->i", u, pdir)

    leaf = has_parent & (n_children == 0) & good_dist
    accept[leaf] = dot_parent[leaf] >= cos_half_gamma * dist[leaf]

    inter = has_parent & (n_children == 1) & good_dist
    if inter.any():
        idx = np.flatnonzero(inter)
        child = forest.children[node_ids[idx], 0]
        cv = forest.pos[child] - p[idx]
        cn = np.linalg.norm(cv, axis=1)
        cdir = cv / np.maximum(cn, _TINY)[:, None]
        r_c = forest.radius[child]
        r_p = (r_c ** kappa + r_new_mm ** kappa) ** (1.0 / kappa)
        rp2 = r_p * r_p
        rp4 = rp2 * rp2
        rc4 = r_c ** 4
        rn4 = r_new_mm ** 4
        with np.errstate(invalid="ignore"):
            phi1 = np.arccos(np.clip((rp4 + rn4 - rc4) / (2.0 * rp2 * r_new_mm ** 2), -1.0, 1.0))
            phi2 = np.arccos(np.clip((rp4 + rc4 - rn4) / (2.0 * rp2 * r_c ** 2), -1.0, 1.0))
        theta_opt = phi1 + phi2
        uhat = u[idx] / dist[idx, None]
        ang_child = np.arccos(np.clip(np.einsum("ij,ij->i", uhat, cdir), -1.0, 1.0))
        ang_parent = np.arccos(
            np.clip(dot_parent[idx] / np.maximum(dist[idx], _TINY), -1.0, 1.0)
        )
        accept[idx] = (np.abs(ang_child - theta_opt) <= half_gamma_rad) & (
            ang_parent <= half_gamma_rad + phi2
        )
    return accept


def assign_attractions(state: GrowthState, phase: PhaseConfig):
    """Each attraction point maps to its single closest perceiving node.

    Oxygen sinks attract arterial nodes, CO2 sources venous nodes, both only
    within the scaled perception distance delta. A node perceives a point
    when its cone (leaves) or frustum (inter-nodes) contains it; candidates
    are scanned outward from the closest, so each point drives at most one
    node and demand is never parked on a node that cannot act on it.
    Returns per-circuit groupings as (node ids, point positions, point ids)
    sorted by node id.
    """
    delta_su = scaled(phase.delta, state.t, phase.delta_sigma) / state.settings.fov_mm
    cos_half_gamma = math.cos(math.radians(phase.gamma) / 2.0)
    half_gamma_rad = math.radians(phase.gamma) / 2.0
    forest = state.forest

    def grouping(points: PointIndex, nodes: PointIndex):
        empty = np.empty(0, np.int64), np.empty((0, 3)), np.empty(0, np.int64)
        if not len(points) or not len(nodes):
            return empty
        pids, ppos = points.items_arrays()
        m = len(pids)
        chosen = np.full(m, -1, dtype=np.int64)
        open_rows = np.arange(m)
        k = 8
        k_prev = 0
        while len(open_rows) and k_prev < len(nodes):
            ids_mat, dist_mat = nodes.knn_batch(ppos[open_rows], k, delta_su)
            cols = ids_mat.shape[1]
            flat_ids = ids_mat[:, k_prev:].ravel()
            flat_dist = dist_mat[:, k_prev:].ravel()
            valid = flat_ids >= 0
            acc = np.zeros(len(flat_ids), dtype=bool)
            if valid.any():
                sink_rows = np.repeat(open_rows, cols - k_prev)
                acc[valid] = _pair_acceptance(
                    forest,
                    flat_ids[valid],
                    ppos[sink_rows[valid]],
                    flat_dist[valid],
                    phase.r,
                    phase.kappa,
                    cos_half_gamma,
                    half_gamma_rad,
                )
            acc = acc.reshape(len(open_rows), cols - k_prev)
            any_acc = acc.any(axis=1)
            first = np.argmax(acc, axis=1)
            rows_done = open_rows[any_acc]
            chosen[rows_done] = ids_mat[any_acc, k_prev + first[any_acc]]
            # Rows whose k-th candidate was already beyond delta (or missing)
            # have exhausted every node in range; the rest escalate.
            exhausted = ids_mat[:, -1] < 0
            open_rows = open_rows[~any_acc & ~exhausted]
            k_prev = k
            k = min(2 * k, len(nodes))
            if k == k_prev:
                break
        sel = chosen >= 0
        tgt, pos, ids = chosen[sel], ppos[sel], pids[sel]
        order = np.argsort(tgt, kind="stable")
        return tgt[order], pos[order], ids[order]

    art = grouping(state.sinks, state.arterial_nodes)
    ven = grouping(state.co2, state.venous_nodes)
    return art, ven


def faz_adjust(
    p_node: np.ndarray,
    g: np.ndarray,
    a: np.ndarray,
    state: GrowthState,
    phase: PhaseConfig,
) -> np.ndarray:
    """Bend an elongation direction into a tangential/outward mix near the FAZ.

    Inside the (scaled) rotation-effect radius the lateral part of g is
    blended with a 90-degree rotation of the center vector (turned toward the
    mean attraction side) and an outward push, weighted by
    w = sqrt(r_rot - |c|) in millimetres; the z component passes through.
    Outside the region g is returned unchanged.
    """
    s = state.settings
    c_lat = state.faz_center - p_node[:2]
    dist_su = float(np.linalg.norm(c_lat))
    r_rot_mm = scaled(phase.r_rot, state.t, phase.delta_sigma)
    if dist_su * s.fov_mm >= r_rot_mm or dist_su < _TINY:
        return g
    w = math.sqrt(max(r_rot_mm - dist_su * s.fov_mm, 0.0))
    c_hat = c_lat / dist_su
    v_rot = np.array([-c_hat[1], c_hat[0]])
    if float(v_rot @ a[:2]) < 0.0:
        v_rot = -v_rot
    out = np.empty(3)
    out[:2] = (1.0 - w) * g[:2] + (2.0 * w / 3.0) * v_rot + (w / 3.0) * (-c_hat)
    out[2] = g[2]
    n = float(np.linalg.norm(out))
    if n < _TINY:
        return g
    return out / n


def _faz_suppression_factor(state: GrowthState, phase: PhaseConfig, p_node: np.ndarray):
    """(inside_region, probability factor |c|^2 / r_rot^2) for branching."""
    dist_su = float(np.linalg.norm(state.faz_center - p_node[:2]))
    r_rot_su = scaled(phase.r_rot, state.t, phase.delta_sigma) / state.settings.fov_mm
    if dist_su >= r_rot_su:
        return False, 1.0
    return True, (dist_su / r_rot_su) ** 2


def _bifurcation_plane_normal(
    sink_positions: np.ndarray, p_node: np.ndarray, a: np.ndarray, v_parent: np.ndarray
) -> np.ndarray:
    """Unit normal of the plane holding both bifurcation children.

    The plane contains the node and the total-least-squares line through the
    attraction points (principal scatter axis through their mean); collinear
    or otherwise rank-deficient scatter falls back to the plane spanned by
    the mean attraction direction and the parent axis, then to a fixed
    reference plane.
    """
    m = sink_positions.mean(axis=0)
    if len(sink_positions) >= 2:
        x = sink_positions - m
        cov = x.T @ x
        w, v = np.linalg.eigh(cov)
        if w[-1] > 1e-18:
            n = np.cross(v[:, -1], m - p_node)
            nn = float(np.linalg.norm(n))
            if nn > 1e-9:
                return n / nn
    n = np.cross(a, v_parent)
    nn = float(np.linalg.norm(n))
    if nn > 1e-9:
        return n / nn
    return np.cross(a, _perp_reference(a))


@dataclass
class _Decision:
    node_id: int
    children: list[np.ndarray]   # positions; all children start at terminal r


def _decide_leaf(
    state: GrowthState, phase: PhaseConfig, node_id: int, sink_pos: np.ndarray,
    d_su: float, alpha_rad: float,
) -> _Decision | None:
    """Elongation or symmetric bifurcation from cone-accepted attractors."""
    forest = state.forest
    p = forest.pos[node_id]
    pp = forest.pos[forest.parent[node_id]]
    v_parent = _normalize(p - pp)
    if v_parent is None:
        return None

    u = sink_pos - p
    dist = np.linalg.norm(u, axis=1)
    unit = u / np.maximum(dist, _TINY)[:, None]
    ssum = unit.sum(axis=0)
    a = _normalize(ssum)
    if a is None:
        return None

    theta = np.degrees(np.arccos(np.clip(unit @ a, -1.0, 1.0)))
    spread = math.sqrt(float(np.mean(theta * theta)))
    want_bif = spread > phase.phi
    if want_bif:
        inside, factor = _faz_suppression_factor(state, phase, p)
        if inside and state.rng_faz.random() >= factor:
            want_bif = False

    if want_bif:
        normal = _bifurcation_plane_normal(sink_pos, p, a, v_parent)
        a_in = a - np.dot(a, normal) * normal
        base = _normalize(a_in)
        if base is None:
            base = _normalize(sink_pos.mean(axis=0) - p)
            if base is None:
                return None
        swing = np.cross(normal, base)
        d1 = math.cos(alpha_rad) * base + math.sin(alpha_rad) * swing
        d2 = math.cos(alpha_rad) * base - math.sin(alpha_rad) * swing
        return _Decision(node_id, [p + d_su * d1, p + d_su * d2])

    g = _normalize(phase.omega * v_parent + (1.0 - phase.omega) * ssum)
    if g is None:
        return None
    inside, _ = _faz_suppression_factor(state, phase, p)
    if inside:
        g = faz_adjust(p, g, a, state, phase)
    return _Decision(node_id, [p + d_su * g])


def _decide_inter(
    state: GrowthState, phase: PhaseConfig, node_id: int, sink_pos: np.ndarray,
    d_su: float,
) -> _Decision | None:
    """Lateral sprout toward frustum-accepted attractors."""
    forest = state.forest
    p = forest.pos[node_id]
    child = int(forest.children[node_id, 0])
    c_hat = _normalize(forest.pos[child] - p)
    if c_hat is None:
        return None
    angles = frustum_angles(float(forest.radius[child]), phase.r, phase.kappa)
    if angles is None:
        return None
    theta_opt = angles[0] + angles[1]

    u = sink_pos - p
    dist = np.linalg.norm(u, axis=1)
    unit = u / np.maximum(dist, _TINY)[:, None]
    ssum = unit.sum(axis=0)
    a = _normalize(ssum)
    if a is None:
        return None

    inside, factor = _faz_suppression_factor(state, phase, p)
    if inside and state.rng_faz.random() >= factor:
        return None

    v_opt = optimal_sprout_direction(c_hat, a, theta_opt)
    g = _normalize(phase.omega * v_opt + (1.0 - phase.omega) * ssum)
    if g is None:
        return None
    return _Decision(node_id, [p + d_su * g])


def _proliferate(
    state: GrowthState, phase: PhaseConfig, grouping, kind: str
) -> list[int]:
    """Grow every eligible node of one circuit; returns new node ids.

    Decisions are taken against the unmodified iteration-start state (the
    grouping was computed before any mutation); commits then run in ascending
    node id order so results are independent of any internal parallelism.
    """
    tgt, pos, _ = grouping
    if not len(tgt):
        return []
    forest = state.forest
    d_su = segment_length_su(phase, state)
    # Fresh bifurcations always pair two terminal-radius children, so the
    # minimum-work angle is a per-phase constant.
    alpha_rad = math.acos(2.0 ** (2.0 / phase.kappa - 1.0))

    decisions: list[_Decision] = []
    bounds = np.flatnonzero(np.r_[True, tgt[1:] != tgt[:-1], True])
    for k in range(len(bounds) - 1):
        node_id = int(tgt[bounds[k]])
        if forest.parent[node_id] == NO_PARENT:
            continue
        n_children = forest.n_children[node_id]
        if n_children >= 2:
            continue
        block = pos[bounds[k]: bounds[k + 1]]
        if n_children == 0:
            dec = _decide_leaf(state, phase, node_id, block, d_su, alpha_rad)
        else:
            dec = _decide_inter(state, phase, node_id, block, d_su)
        if dec is not None:
            decisions.append(dec)

    new_ids: list[int] = []
    index = state.node_index_for(kind)
    for dec in decisions:
        last = None
        for child_pos in dec.children:
            last = forest.add_child(dec.node_id, child_pos, phase.r, kappa=phase.kappa)
            index.insert(last, forest.pos[last])
            new_ids.append(last)
        forest.update_radii_upstream(last, phase.kappa)
    return new_ids


def satisfy_sinks(
    state: GrowthState, phase: PhaseConfig, new_arterial: list[int], new_venous: list[int]
) -> tuple[int, int]:
    """Convert sinks reached by new arterial nodes; drop reached CO2 sources.

    Reached means within the scaled satisfaction range eps_k of a node created
    this iteration. Returns (converted, removed) counts.
    """
    eps_k_su = scaled(phase.eps_k, state.t, phase.delta_sigma) / state.settings.fov_mm
    converted = removed = 0
    if new_arterial and len(state.sinks):
        hit: set[int] = set()
        groups = state.sinks.neighbors_batch(state.forest.pos[new_arterial], eps_k_su)
        for ids, _ in groups:
            hit.update(int(i) for i in ids)
        for sid in sorted(hit):
            pos = state.sinks.position(sid)
            state.sinks.remove(sid)
            state.co2.insert(sid, pos)
            if state.sink_events is not None:
                state.sink_events[sid].t_removed = state.t
            converted += 1
    if new_venous and len(state.co2):
        hit = set()
        groups = state.co2.neighbors_batch(state.forest.pos[new_venous], eps_k_su)
        for ids, _ in groups:
            hit.update(int(i) for i in ids)
        for sid in sorted(hit):
            state.co2.remove(sid)
            removed += 1
    return converted, removed


def expire_sinks(state: GrowthState) -> int:
    """Drop all oxygen sinks that stayed unsatisfied this iteration.

    Sink placements are a per-iteration statistical snapshot of tissue oxygen
    demand: each iteration draws a fresh well-spaced pattern of N candidates,
    and whatever was not reached expires. (Persisting unsatisfied sinks would
    saturate the spacing constraint within a few iterations — the slab holds
    only ~(1/eps_s)^2 of them — starving all later placement and stalling
    growth.) CO2 sources are different: they persist until venous growth
    reaches them.
    """
    dropped = len(state.sinks)
    if dropped and state.sink_events is not None:
        for sid in state.sinks.ids():
            state.sink_events[sid].t_removed = state.t
    if dropped:
        state.sinks = PointIndex()
    return dropped


def run_phase(state: GrowthState, phase: PhaseConfig) -> GrowthState:
    """Run one growth phase: I iterations of expand/place/attract/grow/satisfy."""
    phase.validate()
    for _ in range(phase.I):
        state.t += 1
        state.sigma = 1.0 + state.t * phase.delta_sigma
        state.sigma_history.append(state.sigma)
        place_oxygen_sinks(state, phase)
        art, ven = assign_attractions(state, phase)
        new_art = _proliferate(state, phase, art, ARTERIAL)
        new_ven = _proliferate(state, phase, ven, VENOUS)
        satisfy_sinks(state, phase, new_art, new_ven)
        expire_sinks(state)
    return state


@dataclass
class RunInfo:
    seed: int
    r_faz_mm: float
    faz_center: tuple[float, float]
    sigma_history: list[float]
    n_nodes: int
    n_arterial: int
    n_venous: int
    wall_ms: float


def simulate(
    svc: PhaseConfig,
    dvc: PhaseConfig,
    settings: SimulationSettings | None = None,
    seed: int = 0,
    log_events: bool = False,
) -> tuple[VesselForest, GrowthState, RunInfo]:
    """Grow one full forest: superficial phase followed by the deep phase."""
    settings = settings or SimulationSettings()
    settings.validate()
    t0 = time.perf_counter()
    state = make_initial_state(svc, settings, seed, log_events=log_events)
    run_phase(state, svc)
    run_phase(state, dvc)
    wall_ms = (time.perf_counter() - t0) * 1e3
    forest = state.forest
    kinds = np.array([forest.tree_kind[t] for t in forest.tree_id[: forest.n]])
    info = RunInfo(
        seed=seed,
        r_faz_mm=state.r_faz_mm,
        faz_center=(float(state.faz_center[0]), float(state.faz_center[1])),
        sigma_history=list(state.sigma_history),
        n_nodes=forest.n_nodes,
        n_arterial=int(np.count_nonzero(kinds == ARTERIAL)),
        n_venous=int(np.count_nonzero(kinds == VENOUS)),
        wall_ms=wall_ms,
    )
    return forest, state, info
