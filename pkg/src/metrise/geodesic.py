"""Geodesic integration in plane charts and parametrisation-blind comparison.

Adding Sym(xi) to a connection changes geodesic accelerations only along
the velocity, so equivalent connections trace the same point sets at
different speeds.  The distance function here compares trajectories as
unparametrised arcs: both are cut to the arc length both reach, then
measured against each other as polylines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Chart
from .tensor import ConnectionField


@dataclass(frozen=True)
class GeodesicPath:
    times: np.ndarray  # (n,)
    points: np.ndarray  # (n, 2)
    velocities: np.ndarray  # (n, 2)
    left_chart: bool = False
    diverged: bool = False

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def arc_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=-1)))


def integrate(
    conn: ConnectionField,
    start,
    velocity,
    t_total: float,
    step: float = 1e-3,
    chart: Chart | None = None,
) -> GeodesicPath:
    """Fixed-step fourth-order integration of the geodesic equation.

    Stops early (with the matching flag) if the trajectory leaves the
    chart or any state component stops being finite; the returned samples
    are the valid prefix.
    """
    if t_total <= 0 or step <= 0:
        raise ValueError("t_total and step must be positive")

    def rhs(pos, vel):
        gam = conn.values(pos[0], pos[1])
        return vel, -np.einsum("ijk,j,k->i", gam, vel, vel)

    pos = np.asarray(start, dtype=float).copy()
    vel = np.asarray(velocity, dtype=float).copy()
    n_steps = int(round(t_total / step))
    times = [0.0]
    points = [pos.copy()]
    velocities = [vel.copy()]
    left_chart = False
    diverged = False
    with np.errstate(all="ignore"):
        for k in range(1, n_steps + 1):
            p1, v1 = rhs(pos, vel)
            p2, v2 = rhs(pos + 0.5 * step * p1, vel + 0.5 * step * v1)
            p3, v3 = rhs(pos + 0.5 * step * p2, vel + 0.5 * step * v2)
            p4, v4 = rhs(pos + step * p3, vel + step * v3)
            pos = pos + step / 6.0 * (p1 + 2 * p2 + 2 * p3 + p4)
            vel = vel + step / 6.0 * (v1 + 2 * v2 + 2 * v3 + v4)
            if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
                diverged = True
                break
            if chart is not None and not chart.contains(pos[0], pos[1]):
                left_chart = True
                break
            times.append(k * step)
            points.append(pos.copy())
            velocities.append(vel.copy())
    return GeodesicPath(
        np.asarray(times),
        np.asarray(points),
        np.asarray(velocities),
        left_chart=left_chart,
        diverged=diverged,
    )


def _cumulative_arc(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=-1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _truncate_to_arc(points: np.ndarray, arc: np.ndarray, length: float) -> np.ndarray:
    if arc[-1] <= length:
        return points
    idx = int(np.searchsorted(arc, length))
    prev, cur = points[idx - 1], points[idx]
    span = arc[idx] - arc[idx - 1]
    frac = 0.0 if span == 0 else (length - arc[idx - 1]) / span
    return np.concatenate([points[:idx], [prev + frac * (cur - prev)]])


def _resample(points: np.ndarray, n: int) -> np.ndarray:
    arc = _cumulative_arc(points)
    targets = np.linspace(0.0, arc[-1], n)
    xs = np.interp(targets, arc, points[:, 0])
    ys = np.interp(targets, arc, points[:, 1])
    return np.stack([xs, ys], axis=-1)


def _points_to_polyline(samples: np.ndarray, polyline: np.ndarray) -> float:
    """Max over samples of the distance to the nearest polyline segment."""
    a = polyline[:-1]
    d = polyline[1:] - a
    dd = np.sum(d * d, -1)
    dd[dd == 0] = 1.0
    rel = samples[:, None, :] - a[None, :, :]
    t = np.clip(np.sum(rel * d[None], -1) / dd[None], 0.0, 1.0)
    near = a[None] + t[..., None] * d[None]
    dist = np.linalg.norm(samples[:, None, :] - near, axis=-1)
    return float(np.max(np.min(dist, axis=1)))


def unparametrized_distance(a: GeodesicPath, b: GeodesicPath, samples: int = 512) -> float:
    """Symmetric polyline distance between the arcs, parametrisation ignored.

    Both trajectories are truncated to the arc length both of them reach,
    so a slower parametrisation of the same path compares as equal even
    though its endpoint lags behind.
    """
    pa, pb = a.points, b.points
    if len(pa) < 2 or len(pb) < 2:
        return float(np.linalg.norm(pa[-1] - pb[-1]))
    arc_a, arc_b = _cumulative_arc(pa), _cumulative_arc(pb)
    common = min(arc_a[-1], arc_b[-1])
    pa = _truncate_to_arc(pa, arc_a, common)
    pb = _truncate_to_arc(pb, arc_b, common)
    ra, rb = _resample(pa, samples), _resample(pb, samples)
    return max(_points_to_polyline(ra, pb), _points_to_polyline(rb, pa))
