"""Global tour planning over representative viewpoints.

Representative viewpoints are temporarily inserted into the topology
graph, pairwise travel costs (plus a heading-consistency term for the
first hop) are assembled into an open-tour cost matrix, and the visiting
order is solved as an open asymmetric TSP.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from scanplan.topo import (
    DEFAULT_HEADING_WEIGHT,
    DEFAULT_MAX_SPEED,
    TopoGraph,
    heading_penalty,
    polyline_transition_cost,
)
from scanplan.tour import BIG_COST, CostMatrix, solve_open_atsp

STATUS_OK = "ok"
STATUS_COMPLETE = "complete"
STATUS_STALL = "stall"


@dataclass
class GlobalPlan:
    """Outcome of one global planning pass.

    ``status`` is "ok" with a next goal, "complete" when no targets remain,
    or "stall" when targets exist but none is reachable.
    """

    status: str
    next_goal: np.ndarray | None = None
    order: list = field(default_factory=list)
    cost_matrix: CostMatrix | None = None
    viewpoints: list = field(default_factory=list)
    goal_path: np.ndarray | None = None


def _dijkstra_all(graph: TopoGraph, src):
    n = len(graph.positions)
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
        for v, length in sorted(graph.adjacency[u].items()):
            nd = d + length
            if nd < dist[v]:
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, prev


def _extract_path(prev, src, dst):
    path = [dst]
    while path[-1] != src:
        p = int(prev[path[-1]])
        if p < 0:
            return None
        path.append(p)
    path.reverse()
    return path


def build_cost_matrix(
    graph: TopoGraph,
    viewpoints,
    grid,
    current_position,
    current_velocity,
    v_max=DEFAULT_MAX_SPEED,
    w_f=DEFAULT_HEADING_WEIGHT,
    big=BIG_COST,
):
    """Assemble the open-tour cost matrix over the viewpoint set.

    Row 0 carries travel cost from the odometry node plus the heading
    penalty toward each viewpoint; inner entries are pairwise travel costs;
    column 0 is zero (the tour does not return); unreachable pairs get the
    ``big`` sentinel.

    Returns:
        ``(CostMatrix, work_graph, node_ids)`` where ``work_graph`` is the
        augmented graph copy and ``node_ids`` maps matrix index to its node
        (index 0 is the odometry node).
    """
    viewpoints = [np.asarray(v, dtype=float).reshape(3) for v in viewpoints]
    m = len(viewpoints)
    work = graph.copy()
    if work.odom_node is None:
        raise ValueError("graph has no odometry node")
    node_ids = [work.odom_node]
    for v in viewpoints:
        node = work.add_node(v)
        work.connect_to_nearest(node, grid)
        node_ids.append(node)

    values = np.zeros((m + 1, m + 1))
    paths = {}
    for a, src in enumerate(node_ids):
        dist, prev = _dijkstra_all(work, src)
        for b, dst in enumerate(node_ids):
            if a == b or b == 0:
                continue  # diagonal and return-to-start stay zero
            if not np.isfinite(dist[dst]):
                values[a, b] = big
                continue
            path = _extract_path(prev, src, dst)
            cost = polyline_transition_cost(work.path_polyline(path), v_max)
            if a == 0:
                cost += heading_penalty(
                    current_velocity, viewpoints[b - 1], current_position, w_f
                )
            values[a, b] = min(cost, big)
            paths[(a, b)] = path
    matrix = CostMatrix(values, big=big)
    matrix.paths = paths
    return matrix, work, node_ids


def plan_global_tour(
    graph: TopoGraph,
    dynamic_clusters,
    grid,
    current_position,
    current_velocity,
    v_max=DEFAULT_MAX_SPEED,
    w_f=DEFAULT_HEADING_WEIGHT,
    big=BIG_COST,
):
    """Sequence representative viewpoints and pick the next goal.

    Extracts one representative per dynamic cluster, builds the cost
    matrix, solves the open tour, and returns the first viewpoint in the
    order that is reachable from the odometry node.  Signals completion
    when no targets exist and stall when none is reachable.
    """
    reps = [
        d.representative.position
        for d in dynamic_clusters
        if d.representative is not None
    ]
    if not reps:
        return GlobalPlan(status=STATUS_COMPLETE)

    matrix, work, node_ids = build_cost_matrix(
        graph, reps, grid, current_position, current_velocity, v_max, w_f, big
    )
    if np.all(matrix.values[0, 1:] >= big):
        return GlobalPlan(
            status=STATUS_STALL, cost_matrix=matrix, viewpoints=reps
        )
    order, _ = solve_open_atsp(matrix)
    next_goal = None
    goal_path = None
    for k in order[1:]:
        if matrix.values[0, k] < big:
            next_goal = reps[k - 1]
            path = matrix.paths.get((0, k))
            if path is not None:
                goal_path = work.path_polyline(path)
            break
    if next_goal is None:
        return GlobalPlan(status=STATUS_STALL, cost_matrix=matrix, viewpoints=reps)
    return GlobalPlan(
        status=STATUS_OK,
        next_goal=next_goal,
        order=order,
        cost_matrix=matrix,
        viewpoints=reps,
        goal_path=goal_path,
    )
