"""Sparse topology graph over known free space.

Nodes are sampled on a coarse lattice as space becomes Free; edges are
straight collision-free segments between near neighbors.  Transition costs
between nodes follow the travel-time model: path length plus an extra
altitude-change burden, normalized by half the maximum speed.
"""

from __future__ import annotations

import heapq

import numpy as np

from scanplan.grid import FREE, OccupancyGrid

DEFAULT_LATTICE_SPACING = 2.0
DEFAULT_EDGE_NEIGHBORS = 6
DEFAULT_SAFETY_CLEARANCE = 0.6
DEFAULT_MAX_SPEED = 3.0
DEFAULT_HEADING_WEIGHT = 2.0

# Below this speed the trip direction is undefined (hover).
HOVER_SPEED = 0.05

# Altitude changes cost extra travel effort per meter of climb or descent.
ALTITUDE_WEIGHT = 0.5


class TopoGraph:
    """Undirected roadmap with straight-segment edges.

    Node positions live in known Free space; every edge was collision-free
    against the grid when inserted.  ``odom_node`` tracks the node nearest
    the current vehicle pose.
    """

    def __init__(
        self,
        spacing=DEFAULT_LATTICE_SPACING,
        k_neighbors=DEFAULT_EDGE_NEIGHBORS,
        safety_clearance=DEFAULT_SAFETY_CLEARANCE,
    ):
        self.spacing = float(spacing)
        self.k_neighbors = int(k_neighbors)
        self.safety_clearance = float(safety_clearance)
        self.positions = []  # list of (3,) arrays
        self.adjacency = []  # list of dict neighbor -> edge length
        self.odom_node = None
        self._lattice_nodes = set()

    def __len__(self):
        return len(self.positions)

    def copy(self):
        dup = TopoGraph(self.spacing, self.k_neighbors, self.safety_clearance)
        dup.positions = [p.copy() for p in self.positions]
        dup.adjacency = [dict(a) for a in self.adjacency]
        dup.odom_node = self.odom_node
        dup._lattice_nodes = set(self._lattice_nodes)
        return dup

    def position(self, node):
        self._check(node)
        return self.positions[node]

    def _check(self, node):
        if not (isinstance(node, (int, np.integer)) and 0 <= node < len(self.positions)):
            raise ValueError(f"unknown node id {node!r}")

    def add_node(self, position):
        self.positions.append(np.asarray(position, dtype=float).reshape(3))
        self.adjacency.append({})
        return len(self.positions) - 1

    def add_edge(self, i, j, length=None):
        self._check(i)
        self._check(j)
        if i == j:
            return
        if length is None:
            length = float(np.linalg.norm(self.positions[i] - self.positions[j]))
        self.adjacency[i][j] = length
        self.adjacency[j][i] = length

    def edges(self):
        seen = []
        for i, nbrs in enumerate(self.adjacency):
            for j, length in sorted(nbrs.items()):
                if i < j:
                    seen.append((i, j, length))
        return seen

    def connect_to_nearest(self, node, grid, k=None):
        """Try collision-free straight edges to the k nearest other nodes."""
        if k is None:
            k = self.k_neighbors
        pos = self.positions[node]
        others = [i for i in range(len(self.positions)) if i != node]
        if not others:
            return 0
        d = np.array([np.linalg.norm(self.positions[i] - pos) for i in others])
        order = np.argsort(d, kind="stable")
        added = 0
        for rank in order[: max(k, 1)]:
            j = others[rank]
            if j in self.adjacency[node]:
                added += 1
                continue
            if segment_is_free(grid, pos, self.positions[j], self.safety_clearance):
                self.add_edge(node, j)
                added += 1
        return added

    def supports(self, position, grid):
        """Whether a position is reachable from the roadmap by one straight
        collision-free hop of at most the lattice spacing."""
        position = np.asarray(position, dtype=float)
        for i, p in enumerate(self.positions):
            if np.linalg.norm(p - position) <= self.spacing and segment_is_free(
                grid, p, position, self.safety_clearance
            ):
                return True
        return False

    def nearest_node(self, position):
        if not self.positions:
            return None, np.inf
        d = np.linalg.norm(np.asarray(self.positions) - np.asarray(position), axis=1)
        best = int(np.argmin(d))
        return best, float(d[best])

    def shortest_path(self, src, dst):
        """Dijkstra by edge length; ties resolve on node id.

        Returns (node list, length) or (None, inf) when unreachable.
        """
        self._check(src)
        self._check(dst)
        if src == dst:
            return [src], 0.0
        n = len(self.positions)
        dist = np.full(n, np.inf)
        prev = np.full(n, -1, dtype=np.int64)
        dist[src] = 0.0
        heap = [(0.0, src)]
        done = np.zeros(n, dtype=bool)
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if u == dst:
                break
            for v, length in sorted(self.adjacency[u].items()):
                nd = d + length
                if nd < dist[v]:
                    dist[v] = nd
                    prev[v] = u
                    heapq.heappush(heap, (nd, v))
        if not np.isfinite(dist[dst]):
            return None, np.inf
        path = [dst]
        while path[-1] != src:
            path.append(int(prev[path[-1]]))
        path.reverse()
        return path, float(dist[dst])

    def path_polyline(self, path):
        return np.array([self.positions[i] for i in path])


def segment_is_free(grid: OccupancyGrid, a, b, safety_clearance):
    """Straight segment stays inside known Free space with clearance.

    Samples at half-resolution spacing; every sample must be in bounds,
    in a Free cell, and at least ``safety_clearance`` from Occupied space.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    n = max(2, int(np.ceil(length / (grid.resolution * 0.5))) + 1)
    pts = a + np.linspace(0.0, 1.0, n)[:, None] * (b - a)
    if not np.all(grid.in_bounds_point(pts)):
        return False
    idx = grid.world_to_index(pts)
    if not np.all(grid.cells[idx[:, 0], idx[:, 1], idx[:, 2]] == FREE):
        return False
    cmap = grid.clearance_map()
    return bool(np.all(cmap[idx[:, 0], idx[:, 1], idx[:, 2]] >= safety_clearance))


def update_topo_graph(graph: TopoGraph, grid: OccupancyGrid, current_pose):
    """Grow the roadmap into newly Free space and track the odometry node.

    Lattice points (spacing ``graph.spacing``) whose voxel has become Free
    with enough clearance are added and connected to their nearest
    neighbors; the odometry node moves to the node nearest ``current_pose``,
    inserting one when none is within 1 m.

    Returns the (mutated) graph.
    """
    current_pose = np.asarray(current_pose, dtype=float).reshape(3)
    lo = grid.origin
    hi = grid.origin + grid.dims * grid.resolution
    counts = np.maximum(1, np.floor((hi - lo) / graph.spacing).astype(int))
    cmap = grid.clearance_map()

    axes = [lo[a] + graph.spacing * (np.arange(counts[a]) + 0.5) for a in range(3)]
    new_nodes = []
    for ix, x in enumerate(axes[0]):
        for iy, y in enumerate(axes[1]):
            for iz, z in enumerate(axes[2]):
                key = (ix, iy, iz)
                if key in graph._lattice_nodes:
                    continue
                p = np.array([x, y, z])
                if not grid.in_bounds_point(p):
                    continue
                idx = grid.world_to_index(p)
                if grid.cells[tuple(idx)] != FREE:
                    continue
                if cmap[tuple(idx)] < graph.safety_clearance:
                    continue
                node = graph.add_node(p)
                graph._lattice_nodes.add(key)
                new_nodes.append(node)
    for node in new_nodes:
        graph.connect_to_nearest(node, grid)

    nearest, dist = graph.nearest_node(current_pose)
    if nearest is None or dist > 1.0:
        node = graph.add_node(current_pose)
        graph.connect_to_nearest(node, grid)
        graph.odom_node = node
    else:
        graph.odom_node = nearest
    return graph


def polyline_transition_cost(polyline, v_max):
    """Travel-time cost of a polyline: length plus altitude burden.

    Each leg contributes its Euclidean length plus ``ALTITUDE_WEIGHT`` times
    the absolute altitude change, normalized by half the maximum speed.
    """
    polyline = np.asarray(polyline, dtype=float)
    if polyline.shape[0] < 2:
        return 0.0
    deltas = np.diff(polyline, axis=0)
    lengths = np.linalg.norm(deltas, axis=1)
    climbs = np.abs(deltas[:, 2])
    return float((lengths + ALTITUDE_WEIGHT * climbs).sum() / (v_max / 2.0))


def transition_cost(graph: TopoGraph, i, j, v_max=DEFAULT_MAX_SPEED):
    """Topology-aware travel cost between two nodes (seconds).

    Uses the shortest path by edge length, then applies the length-plus-
    altitude model along its polyline.  Returns inf when unreachable.
    """
    path, _ = graph.shortest_path(i, j)
    if path is None:
        return np.inf
    return polyline_transition_cost(graph.path_polyline(path), v_max)


def heading_penalty(current_velocity, target, current_position, w_f=DEFAULT_HEADING_WEIGHT):
    """Penalty for first targets that require turning away from the motion.

    ``w_f`` times the angle between the current velocity and the direction
    to the target; zero when hovering (below 0.05 m/s) or when the target
    coincides with the current position.
    """
    v = np.asarray(current_velocity, dtype=float)
    speed = float(np.linalg.norm(v))
    if speed < HOVER_SPEED:
        return 0.0
    d = np.asarray(target, dtype=float) - np.asarray(current_position, dtype=float)
    dn = float(np.linalg.norm(d))
    if dn < 1e-12:
        return 0.0
    cos_a = float(v @ d) / (speed * dn)
    angle = float(np.arccos(np.clip(cos_a, -1.0, 1.0)))
    return w_f * angle
