"""Frontier clustering, viewpoint sampling, and dynamic-cluster merging.

Frontier cells are grouped into spatial clusters; each cluster gets
candidate viewpoints sampled in the hemisphere on its free side, a
visibility ratio per candidate, and a visible region (candidates above the
ratio threshold).  Clusters whose visible regions overlap are merged
greedily into dynamic clusters that can be observed jointly, each with one
representative viewpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from scanplan.grid import FREE, OccupancyGrid

# Spatial extent above which a frontier component is split in two along its
# principal axis, and the largest component size for which the exact
# pairwise diameter is computed (bounding-box diagonal above that).
DEFAULT_MAX_EXTENT = 5.0
_EXACT_DIAMETER_LIMIT = 2000

DEFAULT_VISIBILITY_THRESHOLD = 0.3
DEFAULT_MERGE_ALPHA = 1.0
DEFAULT_MERGE_BETA = 0.2
DEFAULT_SAFETY_CLEARANCE = 0.6
DEFAULT_SHELL_RADII = (1.5, 3.0)
DEFAULT_N_AZIMUTH = 12
DEFAULT_N_ELEVATION = 3

INFEASIBLE = np.inf

_FACE_OFFSETS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
    dtype=np.int64,
)


@dataclass
class FrontierCluster:
    """Connected group of frontier cells.

    Attributes:
        cluster_id: Deterministic id within one clustering pass.
        cells: Flat cell ids of the members, ascending.
        center: Mean of member cell centers (m).
        normal: Unit normal oriented toward the adjacent free side.
        intensity: Cluster weight; the member cell count.
    """

    cluster_id: int
    cells: np.ndarray
    center: np.ndarray
    normal: np.ndarray
    intensity: float


@dataclass
class Viewpoint:
    position: np.ndarray
    visibility: float


@dataclass
class DynamicCluster:
    """Group of frontier clusters sharing viewpoint candidates."""

    members: list = field(default_factory=list)
    shared_region: set = field(default_factory=set)
    extent: float = 0.0
    representative: Viewpoint | None = None

    @property
    def member_ids(self):
        return [fc.cluster_id for fc in self.members]

    @property
    def center(self):
        return np.mean([fc.center for fc in self.members], axis=0)

    @property
    def intensity(self):
        return float(sum(fc.intensity for fc in self.members))


# ----------------------------------------------------------------------
# clustering
# ----------------------------------------------------------------------


def cluster_frontiers(cells, grid: OccupancyGrid, link_radius=None, max_extent=DEFAULT_MAX_EXTENT):
    """Group frontier cells into clusters with center, normal, intensity.

    Cells are linked into connected components under Euclidean distance
    <= ``link_radius`` (default 3 * resolution); components wider than
    ``max_extent`` are split recursively along their principal axis.

    Args:
        cells: Flat frontier cell ids of ``grid``.
        grid: The belief grid the cells belong to.
        link_radius: Linkage distance (m).
        max_extent: Maximum allowed component diameter (m).

    Returns:
        List of FrontierCluster, ordered by smallest member cell id.
    """
    cells = np.asarray(cells, dtype=np.int64)
    if cells.size == 0:
        return []
    if link_radius is None:
        link_radius = 3.0 * grid.resolution
    order = np.argsort(cells)
    cells = cells[order]
    positions = grid.index_to_center(grid.flat_to_index(cells))

    tree = cKDTree(positions)
    pairs = tree.query_pairs(link_radius, output_type="ndarray")
    n = len(cells)
    if pairs.size:
        adj = sparse.coo_matrix(
            (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
        )
        _, labels = connected_components(adj, directed=False)
    else:
        labels = np.arange(n)

    groups = []
    for lbl in np.unique(labels):
        member = np.flatnonzero(labels == lbl)
        groups.extend(_split_to_extent(positions, member, max_extent))

    groups.sort(key=lambda m: cells[m].min())
    clusters = []
    for cid, member in enumerate(groups):
        member_cells = np.sort(cells[member])
        pts = positions[member]
        center = pts.mean(axis=0)
        normal = _cluster_normal(grid, member_cells, pts, center)
        clusters.append(
            FrontierCluster(
                cluster_id=cid,
                cells=member_cells,
                center=center,
                normal=normal,
                intensity=float(len(member_cells)),
            )
        )
    return clusters


def _component_diameter(points):
    if len(points) <= 1:
        return 0.0
    if len(points) > _EXACT_DIAMETER_LIMIT:
        span = points.max(axis=0) - points.min(axis=0)
        return float(np.linalg.norm(span))
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def _split_to_extent(positions, member, max_extent):
    """Recursively bisect an index set until its diameter fits."""
    pts = positions[member]
    if _component_diameter(pts) <= max_extent:
        return [member]
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered
    w, v = np.linalg.eigh(cov)
    axis = v[:, np.argmax(w)]
    # Fix the eigenvector sign so the split is reproducible.
    lead = np.argmax(np.abs(axis))
    if axis[lead] < 0:
        axis = -axis
    side = centered @ axis >= 0.0
    if side.all() or not side.any():
        half = len(member) // 2
        return [member[:half], member[half:]]
    return _split_to_extent(positions, member[side], max_extent) + _split_to_extent(
        positions, member[~side], max_extent
    )


def _cluster_normal(grid, member_cells, points, center):
    """Smallest-covariance direction, oriented toward the free side."""
    centered = points - center
    cov = centered.T @ centered
    w, v = np.linalg.eigh(cov)
    normal = v[:, 0]

    free_centroid = _adjacent_free_centroid(grid, member_cells)
    offset = np.zeros(3) if free_centroid is None else free_centroid - center
    if np.linalg.norm(offset) > 1e-12 and abs(float(normal @ offset)) > 1e-12:
        if float(normal @ offset) < 0.0:
            normal = -normal
    else:
        # No free-side evidence: orient up (then lexicographic for flat z).
        if normal[2] < 0 or (
            normal[2] == 0 and (normal[1] < 0 or (normal[1] == 0 and normal[0] < 0))
        ):
            normal = -normal
    return normal / np.linalg.norm(normal)


def _adjacent_free_centroid(grid, member_cells):
    """Centroid of Free face-neighbors that are not frontier members."""
    idx = grid.flat_to_index(member_cells)
    neigh = (idx[:, None, :] + _FACE_OFFSETS[None, :, :]).reshape(-1, 3)
    ok = grid.in_bounds_index(neigh)
    neigh = neigh[ok]
    flat = grid.index_to_flat(neigh)
    flat = np.unique(flat)
    flat = flat[~np.isin(flat, member_cells)]
    if flat.size == 0:
        return None
    sub = grid.flat_to_index(flat)
    free = grid.cells[sub[:, 0], sub[:, 1], sub[:, 2]] == FREE
    if not free.any():
        return None
    return grid.index_to_center(sub[free]).mean(axis=0)


# ----------------------------------------------------------------------
# viewpoint sampling and visibility
# ----------------------------------------------------------------------


def sample_viewpoints(
    cluster: FrontierCluster,
    grid: OccupancyGrid,
    r_min=DEFAULT_SHELL_RADII[0],
    r_max=DEFAULT_SHELL_RADII[-1],
    n_az=DEFAULT_N_AZIMUTH,
    n_el=DEFAULT_N_ELEVATION,
    n_shells=len(DEFAULT_SHELL_RADII),
    safety_clearance=DEFAULT_SAFETY_CLEARANCE,
    topo=None,
):
    """Sample candidate viewpoint positions around a cluster.

    Candidates lie on ``n_shells`` spherical shells between ``r_min`` and
    ``r_max``, restricted to the hemisphere on the cluster's normal side,
    and are snapped to voxel centers so regions from different clusters
    share an exact position universe.  Retained candidates are in bounds,
    in Free cells, at least ``safety_clearance`` from Occupied space, and
    (when ``topo`` is given) supported by the topology graph.

    Returns:
        (N, 3) array of candidate positions, deduplicated, in ascending
        voxel order.  May be empty when the hemisphere is blocked.
    """
    if not r_min < r_max:
        raise ValueError("r_min must be < r_max")
    center = cluster.center
    normal = cluster.normal
    e1 = np.cross(normal, [1.0, 0.0, 0.0])
    if np.linalg.norm(e1) < 1e-6:
        e1 = np.cross(normal, [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)

    radii = np.linspace(r_min, r_max, n_shells)
    az = 2.0 * np.pi * np.arange(n_az) / n_az
    el = (np.arange(n_el) + 0.5) * (np.pi / 2.0) / n_el
    ca, sa = np.cos(az), np.sin(az)
    ce, se = np.cos(el), np.sin(el)
    dirs = (
        ce[None, :, None] * ca[:, None, None] * e1
        + ce[None, :, None] * sa[:, None, None] * e2
        + se[None, :, None] * normal
    ).reshape(-1, 3)
    raw = (center + radii[:, None, None] * dirs[None, :, :]).reshape(-1, 3)

    ok = grid.in_bounds_point(raw)
    raw = raw[ok]
    if raw.shape[0] == 0:
        return np.zeros((0, 3))
    idx = grid.world_to_index(raw)
    flat = np.unique(grid.index_to_flat(idx))
    idx = grid.flat_to_index(flat)
    pos = grid.index_to_center(idx)

    keep = grid.cells[idx[:, 0], idx[:, 1], idx[:, 2]] == FREE
    keep &= (pos - center) @ normal >= 0.0
    cmap = grid.clearance_map()
    keep &= cmap[idx[:, 0], idx[:, 1], idx[:, 2]] >= safety_clearance
    pos = pos[keep]
    if topo is not None and pos.shape[0]:
        supported = np.array([topo.supports(p, grid) for p in pos], dtype=bool)
        pos = pos[supported]
    return pos


def visibility_ratio(position, cluster: FrontierCluster, grid: OccupancyGrid, max_range=20.0):
    """Fraction of the cluster's cells with clear line of sight from here."""
    targets = grid.flat_to_index(cluster.cells)
    visible = grid.visible_from(position, targets, max_range)
    return float(visible.mean())


def visible_region(cluster, candidates, grid, r0=DEFAULT_VISIBILITY_THRESHOLD, max_range=20.0):
    """Candidates whose visibility ratio reaches the threshold ``r0``.

    Returns a set of position tuples, so regions from different clusters
    intersect exactly (candidates are snapped voxel centers).
    """
    if not 0.0 < r0 <= 1.0:
        raise ValueError("r0 must lie in (0, 1]")
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if candidates.shape[0] == 0:
        return set()
    ratios = _visibility_ratios(candidates, cluster, grid, max_range)
    return {tuple(candidates[i]) for i in np.flatnonzero(ratios >= r0)}


def _visibility_ratios(candidates, cluster, grid, max_range):
    """Visibility ratio of every candidate in one batched traversal."""
    targets = grid.flat_to_index(cluster.cells)
    n_cells = targets.shape[0]
    n_cand = candidates.shape[0]
    origins = np.repeat(candidates, n_cells, axis=0)
    goals = np.tile(targets, (n_cand, 1))
    vis = grid.visible_pairs(origins, goals, max_range)
    return vis.reshape(n_cand, n_cells).mean(axis=1)


# ----------------------------------------------------------------------
# dynamic clusters
# ----------------------------------------------------------------------


def merge_cost(dyn: DynamicCluster, fc: FrontierCluster, region, alpha_m=DEFAULT_MERGE_ALPHA, beta_m=DEFAULT_MERGE_BETA):
    """Cost of merging a frontier cluster into a dynamic cluster.

    Infeasible (returns inf) when the candidate's visible region does not
    intersect the dynamic cluster's shared region; otherwise
    ``alpha_m * extent_growth - beta_m * overlap_count``.
    """
    overlap = region & dyn.shared_region
    if not overlap:
        return INFEASIBLE
    centers = [m.center for m in dyn.members] + [fc.center]
    extent_after = _pairwise_extent(centers)
    delta_d = extent_after - dyn.extent
    return alpha_m * delta_d - beta_m * len(overlap)


def _pairwise_extent(centers):
    if len(centers) <= 1:
        return 0.0
    pts = np.asarray(centers)
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def update_dynamic_clusters(
    state,
    new,
    grid: OccupancyGrid,
    alpha_m=DEFAULT_MERGE_ALPHA,
    beta_m=DEFAULT_MERGE_BETA,
    max_range=20.0,
):
    """Greedily merge new frontier clusters into dynamic clusters.

    Each ``(cluster, region)`` pair joins the dynamic cluster with the
    minimum feasible merge cost (nonempty region overlap), else spawns a
    new dynamic cluster.  After every merge the shared region becomes the
    intersection and extent is recomputed; representatives are reselected
    once at the end.  Clusters with empty visible regions are dropped: they
    cannot be observed from any sampled viewpoint.

    Args:
        state: Existing list of DynamicCluster (mutated and returned).
        new: Sequence of ``(FrontierCluster, region set)`` pairs.
        grid: Belief grid used for visibility when selecting
            representatives.

    Returns:
        The updated list.
    """
    touched = set()
    for fc, region in new:
        region = set(region)
        if not region:
            continue
        best = None
        best_cost = INFEASIBLE
        for k, dyn in enumerate(state):
            cost = merge_cost(dyn, fc, region, alpha_m, beta_m)
            if cost < best_cost:
                best_cost = cost
                best = k
        if best is None:
            state.append(
                DynamicCluster(members=[fc], shared_region=region, extent=0.0)
            )
            touched.add(len(state) - 1)
        else:
            dyn = state[best]
            dyn.members.append(fc)
            dyn.shared_region = dyn.shared_region & region
            dyn.extent = _pairwise_extent([m.center for m in dyn.members])
            touched.add(best)
    for k in touched:
        state[k].representative = _select_representative(state[k], grid, max_range)
    return state


def _select_representative(dyn: DynamicCluster, grid, max_range):
    """Region member with the highest summed visibility over members.

    Ties resolve to the lexicographically smallest position.
    """
    if not dyn.shared_region:
        return None
    positions = np.array(sorted(dyn.shared_region))
    total = np.zeros(len(positions))
    for fc in dyn.members:
        total += _visibility_ratios(positions, fc, grid, max_range)
    best = int(np.argmax(total))
    return Viewpoint(
        position=positions[best], visibility=float(total[best] / len(dyn.members))
    )


# ----------------------------------------------------------------------
# structured-text export
# ----------------------------------------------------------------------


def _fmt_vec(v):
    return " ".join(f"{x:.9g}" for x in v)


def frontier_records(clusters):
    """Render frontier clusters as deterministic structured text."""
    lines = []
    for fc in clusters:
        cells = " ".join(str(c) for c in fc.cells)
        lines.append(
            f"cluster id={fc.cluster_id} center=({_fmt_vec(fc.center)}) "
            f"normal=({_fmt_vec(fc.normal)}) intensity={fc.intensity:.9g} "
            f"cells=[{cells}]"
        )
    return "\n".join(lines)


def dynamic_records(state):
    """Render dynamic clusters as deterministic structured text."""
    lines = []
    for k, dyn in enumerate(state):
        rep = "none"
        if dyn.representative is not None:
            rep = f"({_fmt_vec(dyn.representative.position)})"
        members = " ".join(str(i) for i in dyn.member_ids)
        lines.append(
            f"dynamic id={k} members=[{members}] extent={dyn.extent:.9g} "
            f"region_size={len(dyn.shared_region)} representative={rep}"
        )
    return "\n".join(lines)
