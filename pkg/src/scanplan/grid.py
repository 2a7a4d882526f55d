"""Tri-state voxel occupancy grid with ray casting and frontier detection.

The grid is the shared world belief: every cell is Unknown, Free, or
Occupied.  Scan integration walks beams through the grid with an integer
3D-DDA traversal, so the set of touched voxels is exact and deterministic.
"""

from __future__ import annotations

import struct

import numpy as np
from scipy import ndimage

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

# Little-endian header: origin (3 doubles), resolution (double), dims (3 int64).
_HEADER_FMT = "<3dd3q"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)

# Face-neighbor offsets used for frontier detection (6-connectivity).
_FACE_OFFSETS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
    dtype=np.int64,
)


class OccupancyGrid:
    """Dense tri-state voxel map over a bounded axis-aligned region.

    Args:
        origin: World coordinates of the minimum corner (m), shape (3,).
        resolution: Voxel edge length (m), > 0.
        dims: Number of voxels per axis, each >= 1.
        cells: Optional initial cell array of shape ``dims`` (uint8).
    """

    def __init__(self, origin, resolution, dims, cells=None):
        self.origin = np.asarray(origin, dtype=float).reshape(3)
        self.resolution = float(resolution)
        self.dims = np.asarray(dims, dtype=np.int64).reshape(3)
        if self.resolution <= 0.0:
            raise ValueError("resolution must be > 0")
        if np.any(self.dims < 1):
            raise ValueError("dims must be >= 1 per axis")
        if cells is None:
            self.cells = np.full(tuple(self.dims), UNKNOWN, dtype=np.uint8)
        else:
            cells = np.asarray(cells, dtype=np.uint8)
            if cells.shape != tuple(self.dims):
                raise ValueError("cells shape does not match dims")
            if cells.max(initial=0) > OCCUPIED:
                raise ValueError("cells contain invalid states")
            self.cells = cells
        # Bumped on every mutation; lets derived products (clearance map) cache.
        self._version = 0
        self._clearance_cache = None

    # ------------------------------------------------------------------
    # coordinate conversion
    # ------------------------------------------------------------------

    @property
    def version(self):
        return self._version

    def mark_dirty(self):
        self._version += 1
        self._clearance_cache = None

    def world_to_index(self, points):
        """Convert world points to integer voxel indices (floor rule)."""
        pts = np.asarray(points, dtype=float)
        return np.floor((pts - self.origin) / self.resolution).astype(np.int64)

    def index_to_center(self, indices):
        """Convert voxel indices to the world coordinates of their centers."""
        idx = np.asarray(indices, dtype=float)
        return self.origin + (idx + 0.5) * self.resolution

    def flat_to_index(self, flat):
        """Convert flat C-order cell ids to (ix, iy, iz) triples."""
        flat = np.asarray(flat, dtype=np.int64)
        return np.stack(np.unravel_index(flat, tuple(self.dims)), axis=-1)

    def index_to_flat(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        return np.ravel_multi_index(
            (idx[..., 0], idx[..., 1], idx[..., 2]), tuple(self.dims)
        )

    def in_bounds_index(self, indices):
        idx = np.asarray(indices)
        return np.all((idx >= 0) & (idx < self.dims), axis=-1)

    def in_bounds_point(self, points):
        pts = np.asarray(points, dtype=float)
        hi = self.origin + self.dims * self.resolution
        return np.all((pts >= self.origin) & (pts < hi), axis=-1)

    def state_at(self, point):
        """Cell state at a world point; raises if out of bounds."""
        idx = self.world_to_index(point)
        if not self.in_bounds_index(idx):
            raise ValueError(f"point {point} outside grid bounds")
        return int(self.cells[tuple(idx)])

    # ------------------------------------------------------------------
    # ray casting
    # ------------------------------------------------------------------

    def cast_ray(self, origin, direction, max_range):
        """Walk one ray and return the first Occupied voxel, if any.

        Args:
            origin: Ray start (m), must lie inside the grid.
            direction: Unit direction vector (|d| = 1 within 1e-9).
            max_range: Maximum traversal distance (m), > 0.

        Returns:
            ``(hit_point, traversed)`` where ``hit_point`` is the center of
            the first Occupied voxel and ``traversed`` the (M, 3) array of
            visited voxel indices ending at the hit voxel, or ``None`` when
            no Occupied voxel lies within range.

        Raises:
            ValueError: origin outside the grid, non-unit direction, or
                non-positive max_range.
        """
        origin = np.asarray(origin, dtype=float).reshape(3)
        direction = np.asarray(direction, dtype=float).reshape(3)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
            raise ValueError("direction must be a unit vector")
        if max_range <= 0.0:
            raise ValueError("max_range must be > 0")
        if not self.in_bounds_point(origin):
            raise ValueError("ray origin outside grid bounds")

        cur, step, t_max, t_delta = _dda_setup(
            origin[None, :], direction[None, :], self.origin, self.resolution
        )
        cur = cur[0]
        step = step[0]
        t_max = t_max[0]
        t_delta = t_delta[0]

        traversed = [cur.copy()]
        if self.cells[tuple(cur)] == OCCUPIED:
            return self.index_to_center(cur), np.array(traversed)
        while True:
            axis = int(np.argmin(t_max))
            t_next = t_max[axis]
            if t_next > max_range:
                return None
            cur[axis] += step[axis]
            if not (0 <= cur[axis] < self.dims[axis]):
                return None
            t_max[axis] += t_delta[axis]
            traversed.append(cur.copy())
            if self.cells[tuple(cur)] == OCCUPIED:
                return self.index_to_center(cur), np.array(traversed)

    def cast_rays(self, origins, directions, max_range):
        """Batched first-hit query against Occupied voxels.

        Args:
            origins: (N, 3) ray starts inside the grid (or a single (3,)
                start shared by all rays).
            directions: (N, 3) unit directions.
            max_range: Scalar maximum traversal distance (m).

        Returns:
            ``(hit, voxel, t_entry, t_exit)``: boolean hit mask (N,), hit
            voxel indices (N, 3), and the parametric distances at which each
            ray enters and leaves its hit voxel (undefined where ``hit`` is
            False).
        """
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        n = directions.shape[0]
        origins = np.broadcast_to(
            np.asarray(origins, dtype=float).reshape(-1, 3), (n, 3)
        ).copy()
        if not np.all(self.in_bounds_point(origins)):
            raise ValueError("ray origin outside grid bounds")

        cur, step, t_max, t_delta = _dda_setup(
            origins, directions, self.origin, self.resolution
        )
        hit = np.zeros(n, dtype=bool)
        hit_voxel = np.zeros((n, 3), dtype=np.int64)
        t_entry = np.zeros(n, dtype=float)
        t_exit = np.zeros(n, dtype=float)
        t_enter = np.zeros(n, dtype=float)
        active = np.ones(n, dtype=bool)

        occ = self.cells == OCCUPIED
        while np.any(active):
            idx = np.flatnonzero(active)
            occ_now = occ[cur[idx, 0], cur[idx, 1], cur[idx, 2]]
            if np.any(occ_now):
                h = idx[occ_now]
                hit[h] = True
                hit_voxel[h] = cur[h]
                t_entry[h] = t_enter[h]
                t_exit[h] = np.minimum(t_max[h].min(axis=1), max_range)
                active[h] = False
                idx = idx[~occ_now]
                if idx.size == 0:
                    break
            axis = np.argmin(t_max[idx], axis=1)
            t_next = t_max[idx, axis]
            out_of_range = t_next > max_range
            stop = idx[out_of_range]
            active[stop] = False
            idx = idx[~out_of_range]
            axis = axis[~out_of_range]
            if idx.size == 0:
                continue
            cur[idx, axis] += step[idx, axis]
            t_enter[idx] = t_max[idx, axis]
            t_max[idx, axis] += t_delta[idx, axis]
            off = (cur[idx, axis] < 0) | (cur[idx, axis] >= self.dims[axis])
            active[idx[off]] = False
        return hit, hit_voxel, t_entry, t_exit

    def visible_pairs(self, origins, targets, max_range):
        """Line-of-sight check for many (origin, target voxel) pairs at once.

        A target voxel is visible from its origin when the ray toward its
        center reaches the voxel before any Occupied voxel, within
        ``max_range``.  Returns a boolean array of length N.
        """
        origins = np.atleast_2d(np.asarray(origins, dtype=float))
        targets = np.atleast_2d(np.asarray(targets, dtype=np.int64))
        n = targets.shape[0]
        if n == 0:
            return np.zeros(0, dtype=bool)
        origins = np.broadcast_to(origins, (n, 3)).copy()
        if not np.all(self.in_bounds_point(origins)):
            raise ValueError("viewpoint outside grid bounds")
        centers = self.index_to_center(targets)
        delta = centers - origins
        dist = np.linalg.norm(delta, axis=1)
        visible = np.zeros(n, dtype=bool)

        zero = dist < 1e-12
        start_idx = self.world_to_index(origins)
        visible[zero] = np.all(targets[zero] == start_idx[zero], axis=1)
        todo = np.flatnonzero(~zero & (dist <= max_range))
        if todo.size == 0:
            return visible
        dirs = delta[todo] / dist[todo, None]
        cur, step, t_max, t_delta = _dda_setup(
            origins[todo], dirs, self.origin, self.resolution
        )
        goal = targets[todo]
        active = np.ones(todo.size, dtype=bool)
        occ = self.cells == OCCUPIED
        while np.any(active):
            idx = np.flatnonzero(active)
            at_goal = np.all(cur[idx] == goal[idx], axis=1)
            if np.any(at_goal):
                visible[todo[idx[at_goal]]] = True
                active[idx[at_goal]] = False
                idx = idx[~at_goal]
                if idx.size == 0:
                    break
            blocked = occ[cur[idx, 0], cur[idx, 1], cur[idx, 2]]
            active[idx[blocked]] = False
            idx = idx[~blocked]
            if idx.size == 0:
                continue
            axis = np.argmin(t_max[idx], axis=1)
            cur[idx, axis] += step[idx, axis]
            t_max[idx, axis] += t_delta[idx, axis]
            off = (cur[idx, axis] < 0) | (cur[idx, axis] >= self.dims[axis])
            active[idx[off]] = False
        return visible

    def visible_from(self, viewpoint, targets, max_range):
        """Line of sight from one viewpoint to many target voxels."""
        targets = np.atleast_2d(np.asarray(targets, dtype=np.int64))
        viewpoint = np.asarray(viewpoint, dtype=float).reshape(1, 3)
        return self.visible_pairs(viewpoint, targets, max_range)

    # ------------------------------------------------------------------
    # scan integration
    # ------------------------------------------------------------------

    def integrate_scan(self, sensor_origin, hits):
        """Fuse one scan into the belief.

        Every voxel traversed strictly before a beam endpoint becomes Free;
        the endpoint voxel becomes Occupied when its beam carries a hit
        flag.  Occupied endpoints win over Free traversals within a single
        call.  Beams leaving the grid are truncated at the boundary.

        Args:
            sensor_origin: Beam start (m), inside the grid.
            hits: Sequence of ``(endpoint, hit_flag)`` pairs, or a pair of
                arrays ``(points (N, 3), flags (N,))``.

        Returns:
            Number of cells that changed away from Unknown.
        """
        sensor_origin = np.asarray(sensor_origin, dtype=float).reshape(3)
        if not self.in_bounds_point(sensor_origin):
            raise ValueError("sensor origin outside grid bounds")
        points, flags = _normalize_hits(hits)
        if points.shape[0] == 0:
            return 0

        delta = points - sensor_origin
        dist = np.linalg.norm(delta, axis=1)
        ok = dist > 1e-12
        points = points[ok]
        flags = flags[ok]
        dist = dist[ok]
        n = points.shape[0]
        if n == 0:
            return 0
        dirs = delta[ok] / dist[:, None]
        end_idx = self.world_to_index(points)
        end_in = self.in_bounds_index(end_idx)

        origins = np.broadcast_to(sensor_origin, (n, 3)).copy()
        cur, step, t_max, t_delta = _dda_setup(
            origins, dirs, self.origin, self.resolution
        )
        free_flat = []
        active = np.ones(n, dtype=bool)
        # A beam whose endpoint voxel equals the start voxel frees nothing.
        done = end_in & np.all(cur == end_idx, axis=1)
        active[done] = False
        while np.any(active):
            idx = np.flatnonzero(active)
            free_flat.append(self.index_to_flat(cur[idx]))
            axis = np.argmin(t_max[idx], axis=1)
            t_next = t_max[idx, axis]
            # Truncate at the endpoint distance (endpoint voxel excluded).
            over = t_next >= dist[idx]
            active[idx[over]] = False
            idx = idx[~over]
            axis = axis[~over]
            if idx.size == 0:
                continue
            cur[idx, axis] += step[idx, axis]
            t_max[idx, axis] += t_delta[idx, axis]
            off = (cur[idx, axis] < 0) | (cur[idx, axis] >= self.dims[axis])
            active[idx[off]] = False
            idx = idx[~off]
            reached = end_in[idx] & np.all(cur[idx] == end_idx[idx], axis=1)
            active[idx[reached]] = False

        occ_flat = self.index_to_flat(end_idx[flags & end_in])
        flat_cells = self.cells.reshape(-1)
        before_known = int(np.count_nonzero(flat_cells != UNKNOWN))
        if free_flat:
            all_free = np.unique(np.concatenate(free_flat))
            # Occupied endpoints win over Free traversals from this scan.
            keep = ~np.isin(all_free, occ_flat)
            flat_cells[all_free[keep]] = FREE
        if occ_flat.size:
            flat_cells[occ_flat] = OCCUPIED
        after_known = int(np.count_nonzero(flat_cells != UNKNOWN))
        if after_known != before_known or occ_flat.size or free_flat:
            self.mark_dirty()
        return after_known - before_known

    # ------------------------------------------------------------------
    # frontier detection
    # ------------------------------------------------------------------

    def detect_frontiers(self):
        """Return flat ids of Free cells with an Unknown face neighbor.

        Output is sorted ascending, so repeated calls on the same belief are
        byte-identical.  Neighbors outside the grid do not count as Unknown.
        """
        free = self.cells == FREE
        unknown = self.cells == UNKNOWN
        frontier = np.zeros_like(free)
        for axis in range(3):
            for sign in (1, -1):
                shifted = np.zeros_like(unknown)
                src = [slice(None)] * 3
                dst = [slice(None)] * 3
                if sign > 0:
                    src[axis] = slice(1, None)
                    dst[axis] = slice(None, -1)
                else:
                    src[axis] = slice(None, -1)
                    dst[axis] = slice(1, None)
                shifted[tuple(dst)] = unknown[tuple(src)]
                frontier |= shifted
        frontier &= free
        return np.flatnonzero(frontier.reshape(-1))

    # ------------------------------------------------------------------
    # derived maps
    # ------------------------------------------------------------------

    def clearance_map(self):
        """Distance (m) from each voxel center to the nearest Occupied one.

        Cached per grid version.  A grid without Occupied cells returns an
        all-infinite map.
        """
        if self._clearance_cache is not None:
            version, cached = self._clearance_cache
            if version == self._version:
                return cached
        occ = self.cells == OCCUPIED
        if not occ.any():
            dist = np.full(tuple(self.dims), np.inf)
        else:
            dist = ndimage.distance_transform_edt(~occ) * self.resolution
        self._clearance_cache = (self._version, dist)
        return dist

    def clearance_at(self, points):
        """Clearance-map values sampled at world points (inf out of bounds)."""
        single = np.asarray(points).ndim == 1
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = self.world_to_index(pts)
        ok = self.in_bounds_index(idx)
        out = np.full(pts.shape[0], np.inf)
        if np.any(ok):
            cmap = self.clearance_map()
            sel = idx[ok]
            out[ok] = cmap[sel[:, 0], sel[:, 1], sel[:, 2]]
        return float(out[0]) if single else out

    def free_components(self):
        """Label connected Free regions (6-connectivity).

        Returns (labels array, count); label 0 marks non-Free cells.
        """
        structure = ndimage.generate_binary_structure(3, 1)
        labels, count = ndimage.label(self.cells == FREE, structure=structure)
        return labels, count

    def copy(self):
        return OccupancyGrid(
            self.origin.copy(), self.resolution, self.dims.copy(), self.cells.copy()
        )

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------

    def to_bytes(self):
        """Flat binary layout: header (origin, resolution, dims) + one byte
        per cell in C order, 0=Unknown 1=Free 2=Occupied."""
        header = struct.pack(
            _HEADER_FMT,
            *self.origin.tolist(),
            self.resolution,
            *self.dims.tolist(),
        )
        return header + self.cells.tobytes(order="C")

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < _HEADER_SIZE:
            raise ValueError("buffer too short for grid header")
        fields = struct.unpack(_HEADER_FMT, blob[:_HEADER_SIZE])
        origin = np.array(fields[0:3])
        resolution = fields[3]
        dims = np.array(fields[4:7], dtype=np.int64)
        n_cells = int(np.prod(dims))
        body = blob[_HEADER_SIZE:]
        if len(body) != n_cells:
            raise ValueError("cell payload size does not match dims")
        cells = np.frombuffer(body, dtype=np.uint8).reshape(tuple(dims)).copy()
        return cls(origin, resolution, dims, cells)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _normalize_hits(hits):
    """Accept list-of-pairs or (points, flags) arrays; return both arrays."""
    if (
        isinstance(hits, tuple)
        and len(hits) == 2
        and np.asarray(hits[0]).ndim == 2
    ):
        points = np.asarray(hits[0], dtype=float).reshape(-1, 3)
        flags = np.asarray(hits[1], dtype=bool).reshape(-1)
    else:
        if len(hits) == 0:
            return np.zeros((0, 3)), np.zeros(0, dtype=bool)
        points = np.array([h[0] for h in hits], dtype=float).reshape(-1, 3)
        flags = np.array([bool(h[1]) for h in hits])
    if points.shape[0] != flags.shape[0]:
        raise ValueError("hit points and flags length mismatch")
    return points, flags


def _dda_setup(origins, directions, grid_origin, resolution):
    """Initial voxel, step signs, and boundary distances for DDA walks.

    Axes with zero direction get infinite boundary distances so they are
    never selected for stepping.
    """
    local = (origins - grid_origin) / resolution
    cur = np.floor(local).astype(np.int64)
    step = np.where(directions > 0, 1, -1).astype(np.int64)
    step[directions == 0] = 0
    next_boundary = np.where(directions > 0, cur + 1, cur).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_max = (next_boundary - local) * resolution / directions
        t_delta = resolution / np.abs(directions)
    t_max[directions == 0] = np.inf
    t_delta[directions == 0] = np.inf
    return cur, step, t_max, t_delta
