"""Time-parameterized reference trajectories along waypoint paths.

Each polyline segment gets a trapezoidal (or triangular, when short) speed
profile with zero speed at the path endpoints and reduced speed at sharp
corners, so downstream controllers can sample position and velocity at any
time without feasibility checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_MAX_ACCEL = 2.0


@dataclass
class _Segment:
    start: np.ndarray
    direction: np.ndarray  # unit
    length: float
    v_entry: float
    v_peak: float
    v_exit: float
    accel: float
    t_acc: float
    t_cruise: float
    t_dec: float

    @property
    def duration(self):
        return self.t_acc + self.t_cruise + self.t_dec

    def state_at(self, tau):
        """Arc position and speed ``tau`` seconds into this segment."""
        a = self.accel
        if tau <= self.t_acc:
            s = self.v_entry * tau + 0.5 * a * tau**2
            v = self.v_entry + a * tau
            return s, v
        s = self.v_entry * self.t_acc + 0.5 * a * self.t_acc**2
        tau -= self.t_acc
        if tau <= self.t_cruise:
            return s + self.v_peak * tau, self.v_peak
        s += self.v_peak * self.t_cruise
        tau -= self.t_cruise
        tau = min(tau, self.t_dec)
        s += self.v_peak * tau - 0.5 * a * tau**2
        return s, self.v_peak - a * tau


@dataclass
class ReferenceTrajectory:
    """Sampled-anywhere reference with bounded speed and acceleration."""

    waypoints: np.ndarray
    v_max: float
    a_max: float
    t0: float
    total_time: float
    segments: list = field(default_factory=list, repr=False)
    _seg_starts: np.ndarray = field(default=None, repr=False)

    def end_position(self):
        return self.waypoints[-1]

    def sample(self, t):
        """Position and velocity at time ``t`` (clamped to the duration)."""
        tau = float(t) - self.t0
        if tau <= 0.0 or not self.segments:
            start = self.waypoints[0]
            return start.copy(), np.zeros(3)
        if tau >= self.total_time:
            return self.waypoints[-1].copy(), np.zeros(3)
        k = int(np.searchsorted(self._seg_starts, tau, side="right") - 1)
        k = min(max(k, 0), len(self.segments) - 1)
        seg = self.segments[k]
        s, v = seg.state_at(tau - self._seg_starts[k])
        s = min(s, seg.length)
        return seg.start + s * seg.direction, v * seg.direction


def sample_reference(traj: ReferenceTrajectory, t):
    return traj.sample(t)


def plan_reference(path, v_max, a_max=DEFAULT_MAX_ACCEL, t0=0.0, corner_gain=None):
    """Plan a trapezoidal-speed trajectory along a waypoint polyline.

    Speed is zero at both path endpoints, at most ``v_max`` everywhere,
    and limited at interior corners to ``min(v_max, corner_gain * (pi -
    turn_angle))`` so sharp turns are taken slowly.  Acceleration stays
    within ``a_max`` including across segment boundaries (forward/backward
    limiting passes).

    Args:
        path: (K, 3) waypoint polyline; consecutive duplicates are merged.
        v_max: Cruise speed bound (m/s), > 0.
        a_max: Acceleration bound (m/s^2), > 0.
        t0: Stamp of the trajectory start (s).
        corner_gain: Corner speed per radian of remaining straightness;
            defaults to ``v_max / pi`` (full speed through straight
            corners, stop for U-turns).

    Returns:
        ReferenceTrajectory; a degenerate (zero-length) path yields a
        zero-duration trajectory pinned at the start point.
    """
    if v_max <= 0 or a_max <= 0:
        raise ValueError("v_max and a_max must be positive")
    pts = np.atleast_2d(np.asarray(path, dtype=float))
    if pts.shape[0] < 1:
        raise ValueError("path needs at least one vertex")
    keep = [0]
    for k in range(1, pts.shape[0]):
        if np.linalg.norm(pts[k] - pts[keep[-1]]) > 1e-12:
            keep.append(k)
    pts = pts[keep]
    if pts.shape[0] < 2:
        return ReferenceTrajectory(
            waypoints=pts[:1].repeat(2, axis=0),
            v_max=v_max,
            a_max=a_max,
            t0=t0,
            total_time=0.0,
            segments=[],
            _seg_starts=np.zeros(1),
        )
    if corner_gain is None:
        corner_gain = v_max / np.pi

    deltas = np.diff(pts, axis=0)
    lengths = np.linalg.norm(deltas, axis=1)
    dirs = deltas / lengths[:, None]
    n_seg = len(lengths)

    # Per-vertex speed caps: endpoints stop, corners slow with turn angle.
    caps = np.zeros(n_seg + 1)
    for k in range(1, n_seg):
        cos_turn = float(np.clip(dirs[k - 1] @ dirs[k], -1.0, 1.0))
        turn = np.arccos(cos_turn)
        caps[k] = min(v_max, corner_gain * (np.pi - turn))
    # Forward/backward passes keep vertex speeds reachable under a_max.
    for k in range(1, n_seg + 1):
        caps[k] = min(caps[k], np.sqrt(caps[k - 1] ** 2 + 2 * a_max * lengths[k - 1]))
    for k in range(n_seg - 1, -1, -1):
        caps[k] = min(caps[k], np.sqrt(caps[k + 1] ** 2 + 2 * a_max * lengths[k]))

    segments = []
    starts = [0.0]
    for k in range(n_seg):
        va, vb, length = caps[k], caps[k + 1], lengths[k]
        v_peak = min(v_max, np.sqrt((2 * a_max * length + va**2 + vb**2) / 2.0))
        v_peak = max(v_peak, va, vb)
        t_acc = (v_peak - va) / a_max
        t_dec = (v_peak - vb) / a_max
        d_acc = (v_peak**2 - va**2) / (2 * a_max)
        d_dec = (v_peak**2 - vb**2) / (2 * a_max)
        d_cruise = max(0.0, length - d_acc - d_dec)
        t_cruise = d_cruise / v_peak if v_peak > 0 else 0.0
        segments.append(
            _Segment(
                start=pts[k],
                direction=dirs[k],
                length=length,
                v_entry=va,
                v_peak=v_peak,
                v_exit=vb,
                accel=a_max,
                t_acc=t_acc,
                t_cruise=t_cruise,
                t_dec=t_dec,
            )
        )
        starts.append(starts[-1] + segments[-1].duration)
    return ReferenceTrajectory(
        waypoints=pts,
        v_max=v_max,
        a_max=a_max,
        t0=t0,
        total_time=starts[-1],
        segments=segments,
        _seg_starts=np.array(starts[:-1]),
    )


def trajectory_to_csv(traj: ReferenceTrajectory, dt=0.05):
    """Sample the trajectory and render a ``t,x,y,z,v`` CSV string."""
    rows = ["t,x,y,z,v"]
    n = max(2, int(np.ceil(traj.total_time / dt)) + 1)
    for t in traj.t0 + np.linspace(0.0, traj.total_time, n):
        p, v = traj.sample(t)
        speed = float(np.linalg.norm(v))
        rows.append(
            f"{t:.9g},{p[0]:.9g},{p[1]:.9g},{p[2]:.9g},{speed:.9g}"
        )
    return "\n".join(rows) + "\n"
