"""Shared test utilities: random rigid transforms and reference oracles."""

import numpy as np

from scanplan.grid import FREE, OCCUPIED, UNKNOWN, OccupancyGrid


def random_rotation(rng):
    """Uniform-ish random proper rotation via QR of a Gaussian matrix."""
    m = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(m)
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_blob_grid(rng, dims=(24, 24, 12), resolution=0.25, n_blobs=6):
    """Free grid with a few solid occupied boxes, for ray-cast tests."""
    grid = OccupancyGrid(np.zeros(3), resolution, dims)
    grid.cells[:] = FREE
    for _ in range(n_blobs):
        lo = rng.integers(0, np.array(dims) - 3)
        size = rng.integers(2, 5, size=3)
        hi = np.minimum(lo + size, dims)
        grid.cells[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = OCCUPIED
    return grid


def marching_ray_oracle(grid, origin, direction, max_range, step_frac=0.05):
    """Fine-step marching reference for first-hit queries.

    Marches at ``step_frac * resolution`` and reports the first sample that
    lands in an Occupied voxel, as (hit_center, entry_distance), or None.
    """
    step = grid.resolution * step_frac
    t = 0.0
    while t <= max_range:
        p = origin + t * direction
        if not grid.in_bounds_point(p):
            return None
        idx = grid.world_to_index(p)
        if grid.cells[tuple(idx)] == OCCUPIED:
            return grid.index_to_center(idx), t
        t += step
    return None


def dda_traversal_oracle(grid, origin, endpoint):
    """Scalar voxel walk from origin to the voxel containing endpoint.

    Returns the list of voxel index triples from the origin voxel up to and
    including the endpoint voxel (independent of grid.cast_ray internals).
    """
    origin = np.asarray(origin, dtype=float)
    endpoint = np.asarray(endpoint, dtype=float)
    delta = endpoint - origin
    dist = np.linalg.norm(delta)
    if dist < 1e-12:
        return [tuple(grid.world_to_index(origin))]
    d = delta / dist
    res = grid.resolution
    local = (origin - grid.origin) / res
    cur = np.floor(local).astype(int)
    end = grid.world_to_index(endpoint)
    cells = [tuple(cur)]
    t_max = np.empty(3)
    t_delta = np.empty(3)
    step = np.zeros(3, dtype=int)
    for a in range(3):
        if d[a] > 0:
            step[a] = 1
            t_max[a] = ((cur[a] + 1) - local[a]) * res / d[a]
            t_delta[a] = res / d[a]
        elif d[a] < 0:
            step[a] = -1
            t_max[a] = (cur[a] - local[a]) * res / d[a]
            t_delta[a] = -res / d[a]
        else:
            t_max[a] = np.inf
            t_delta[a] = np.inf
    guard = int(np.sum(grid.dims)) * 3 + 10
    for _ in range(guard):
        if tuple(cur) == tuple(end):
            return cells
        a = int(np.argmin(t_max))
        if t_max[a] > dist:
            return cells
        cur[a] += step[a]
        if not (0 <= cur[a] < grid.dims[a]):
            return cells
        t_max[a] += t_delta[a]
        cells.append(tuple(cur))
    raise AssertionError("oracle traversal did not terminate")


def known_mask(grid):
    return grid.cells != UNKNOWN
