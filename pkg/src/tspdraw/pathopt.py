"""Polyline simplification and curvature-bounded cubic spline fitting.

Tours come in as closed polylines with one vertex per stipple. They are
thinned with Ramer-Douglas-Peucker, interpolated with one cubic Bezier per
edge (Catmull-Rom tangents, chord-length parameterization), and finally the
handle lengths are scaled up just enough to push every join curvature under
a bound, since join curvature is what limits how fast a pen can corner.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError


@dataclass
class PathOptParams:
    d_eps: float = 0.5  # max distance a dropped vertex may sit from the path
    kappa_eps: float = 2.0  # join curvature bound, 1/length-unit
    s_tolerance: float = 1e-3  # relative precision of the handle scale search
    s_max: float = 64.0  # give up beyond this handle scale

    def __post_init__(self):
        if self.d_eps < 0.0:
            raise ValueError("d_eps must be nonnegative")
        if self.kappa_eps <= 0.0:
            raise ValueError("kappa_eps must be positive")
        if self.s_tolerance <= 0.0:
            raise ValueError("s_tolerance must be positive")


@dataclass
class Polyline:
    """Vertex chain. Closed polylines carry the first vertex again at the end."""

    vertices: np.ndarray  # (N, 2) float64
    closed: bool

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        if len(self.vertices) < 2:
            raise ValueError("polyline needs at least two vertices")
        if np.any(np.all(np.diff(self.vertices, axis=0) == 0.0, axis=1)):
            raise ValueError("consecutive duplicate vertices")
        if self.closed and not np.array_equal(self.vertices[0], self.vertices[-1]):
            raise ValueError("closed polyline must repeat its first vertex last")

    def unique_vertices(self) -> np.ndarray:
        return self.vertices[:-1] if self.closed else self.vertices


@dataclass
class SplinePath:
    """Chain of cubic Bezier segments with per-join exit curvatures."""

    control_points: np.ndarray  # (M, 4, 2) float64
    closed: bool
    join_curvatures: np.ndarray  # (M,) closed, (M-1,) open

    def __post_init__(self):
        self.control_points = np.asarray(self.control_points, dtype=np.float64)
        if self.control_points.ndim != 3 or self.control_points.shape[1:] != (4, 2):
            raise ValueError("control_points must have shape (M, 4, 2)")
        self.join_curvatures = np.asarray(self.join_curvatures, dtype=np.float64)

    def max_join_curvature(self) -> float:
        if len(self.join_curvatures) == 0:
            return 0.0
        return float(np.max(self.join_curvatures))


def _point_segment_distances(pts: np.ndarray, a: np.ndarray, b: np.ndarray):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(pts - a, axis=1)
    t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(pts - proj, axis=1)


def _rdp_chain(verts: np.ndarray, eps: float) -> np.ndarray:
    """Open-chain RDP keeping endpoints; every dropped vertex stays within
    eps of the kept chord that covers it."""
    n = len(verts)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        d = _point_segment_distances(verts[i + 1 : j], verts[i], verts[j])
        m = int(np.argmax(d))
        if d[m] > eps:
            k = i + 1 + m
            keep[k] = True
            stack.append((i, k))
            stack.append((k, j))
    return verts[keep]


def _farthest_pair(verts: np.ndarray) -> tuple[int, int]:
    """Indices of the two mutually farthest vertices (lowest pair on ties)."""
    n = len(verts)
    try:
        hull = ConvexHull(verts)
        hv = np.sort(hull.vertices)
    except QhullError:
        # degenerate (collinear) set: extremes along the widest axis
        span = verts.max(axis=0) - verts.min(axis=0)
        axis = int(np.argmax(span))
        i = int(np.argmin(verts[:, axis]))
        j = int(np.argmax(verts[:, axis]))
        return (i, j) if i < j else (j, i)
    sub = verts[hv]
    d2 = np.sum((sub[:, None, :] - sub[None, :, :]) ** 2, axis=2)
    flat = int(np.argmax(d2))
    i, j = int(hv[flat // len(hv)]), int(hv[flat % len(hv)])
    return (i, j) if i < j else (j, i)


def rdp_simplify(line: Polyline, d_eps: float) -> Polyline:
    """Ramer-Douglas-Peucker simplification.

    Closed polylines are first cut at their two mutually farthest vertices
    and each half is simplified as an open chain, so the cycle cannot
    collapse through its own interior.
    """
    if d_eps < 0.0:
        raise ValueError("d_eps must be nonnegative")
    if not line.closed:
        return Polyline(_rdp_chain(line.vertices, d_eps), closed=False)
    unique = line.unique_vertices()
    if len(unique) <= 3:
        return Polyline(line.vertices.copy(), closed=True)
    i, j = _farthest_pair(unique)
    chain_a = unique[i : j + 1]
    chain_b = np.vstack([unique[j:], unique[: i + 1]])
    s_a = _rdp_chain(chain_a, d_eps)
    s_b = _rdp_chain(chain_b, d_eps)
    verts = np.vstack([s_a, s_b[1:]])  # s_b ends where s_a starts
    return Polyline(verts, closed=True)


def _tangent_directions(unique: np.ndarray, closed: bool) -> np.ndarray:
    """Unit tangent per vertex: Catmull-Rom with chord-length weights."""
    n = len(unique)
    if closed:
        nxt = np.roll(unique, -1, axis=0)
        chords = nxt - unique
        d = np.linalg.norm(chords, axis=1)
        t = np.empty_like(unique)
        for i in range(n):
            c_prev = chords[i - 1]
            c_next = chords[i]
            d0, d1 = d[i - 1], d[i]
            m = d1 * d1 * c_prev + d0 * d0 * c_next
            norm = np.linalg.norm(m)
            if norm < 1e-12:
                m = c_next  # spike vertex: fall back to the forward chord
                norm = d1
            t[i] = m / norm
        return t
    chords = np.diff(unique, axis=0)
    d = np.linalg.norm(chords, axis=1)
    t = np.empty_like(unique)
    t[0] = chords[0] / d[0]
    t[-1] = chords[-1] / d[-1]
    for i in range(1, n - 1):
        d0, d1 = d[i - 1], d[i]
        m = d1 * d1 * chords[i - 1] + d0 * d0 * chords[i]
        norm = np.linalg.norm(m)
        if norm < 1e-12:
            m = chords[i]
            norm = d1
        t[i] = m / norm
    return t


def _compute_joins(control_points: np.ndarray, closed: bool) -> np.ndarray:
    m = len(control_points)
    n_joins = m if closed else m - 1
    joins = np.empty(n_joins)
    for i in range(n_joins):
        joins[i] = join_curvature(control_points[i], control_points[(i + 1) % m])
    return joins


def fit_spline(line: Polyline) -> SplinePath:
    """One cubic per polyline edge, tangent-continuous at every vertex.

    Handle lengths are a third of the owning chord, so a straight polyline
    degenerates to straight Bezier segments.
    """
    unique = line.unique_vertices()
    if not line.closed and len(unique) == 2:
        p0, p3 = unique[0], unique[1]
        ctrl = np.array([[p0, p0 + (p3 - p0) / 3.0, p3 - (p3 - p0) / 3.0, p3]])
        return SplinePath(ctrl, closed=False, join_curvatures=np.empty(0))
    tangents = _tangent_directions(unique, line.closed)
    n = len(unique)
    m = n if line.closed else n - 1
    ctrl = np.empty((m, 4, 2))
    for i in range(m):
        j = (i + 1) % n
        p0, p3 = unique[i], unique[j]
        length = float(np.linalg.norm(p3 - p0))
        ctrl[i, 0] = p0
        ctrl[i, 1] = p0 + (length / 3.0) * tangents[i]
        ctrl[i, 2] = p3 - (length / 3.0) * tangents[j]
        ctrl[i, 3] = p3
    return SplinePath(ctrl, line.closed, _compute_joins(ctrl, line.closed))


def join_curvature(seg_a: np.ndarray, seg_b: np.ndarray) -> float:
    """Curvature of seg_a at its endpoint, where it hands off to seg_b.

    For a cubic with control points p0..p3 the curvature at p3 is
    (2/3) * c / d**2 with d the final handle length |p2 - p3| and c the
    distance of p1 from the line through p2 and p3. Collinear handles give
    exactly zero.
    """
    seg_a = np.asarray(seg_a, dtype=np.float64)
    seg_b = np.asarray(seg_b, dtype=np.float64)
    if not np.allclose(seg_a[3], seg_b[0], atol=1e-9):
        raise ValueError("segments do not share a join point")
    p1, p2, p3 = seg_a[1], seg_a[2], seg_a[3]
    handle = p3 - p2
    d = float(np.linalg.norm(handle))
    if d == 0.0:
        raise ValueError("degenerate handle")
    rel = p1 - p2
    cross = abs(handle[0] * rel[1] - handle[1] * rel[0])
    c = cross / d
    return (2.0 / 3.0) * c / (d * d)


def _scale_handles(control_points: np.ndarray, s: float) -> np.ndarray:
    ctrl = control_points.copy()
    ctrl[:, 1] = ctrl[:, 0] + s * (control_points[:, 1] - control_points[:, 0])
    ctrl[:, 2] = ctrl[:, 3] + s * (control_points[:, 2] - control_points[:, 3])
    return ctrl


def enforce_curvature(
    path: SplinePath, params: PathOptParams
) -> tuple[SplinePath, float]:
    """Scale all handles by the minimal s >= 1 so every join curvature fits.

    Handle directions are preserved, so tangent continuity survives and the
    interpolated vertices never move. Returns the adjusted path and s.
    Raises ValueError when the bound is unattainable within params.s_max.
    """

    def max_join_at(s: float) -> float:
        joins = _compute_joins(_scale_handles(path.control_points, s), path.closed)
        return float(np.max(joins)) if len(joins) else 0.0

    if len(path.join_curvatures) == 0 or path.max_join_curvature() <= params.kappa_eps:
        return (
            SplinePath(path.control_points.copy(), path.closed, path.join_curvatures.copy()),
            1.0,
        )

    lo, hi = 1.0, 2.0
    while max_join_at(hi) > params.kappa_eps:
        lo = hi
        hi *= 2.0
        if hi > params.s_max:
            joins = _compute_joins(
                _scale_handles(path.control_points, params.s_max), path.closed
            )
            worst = int(np.argmax(joins))
            raise ValueError(
                f"curvature bound {params.kappa_eps} unattainable within handle "
                f"scale {params.s_max}: join {worst} still at {joins[worst]:.6g}"
            )
    while hi - lo > params.s_tolerance * lo:
        mid = 0.5 * (lo + hi)
        if max_join_at(mid) > params.kappa_eps:
            lo = mid
        else:
            hi = mid
    ctrl = _scale_handles(path.control_points, hi)
    return SplinePath(ctrl, path.closed, _compute_joins(ctrl, path.closed)), hi


def bezier_points(ctrl: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Evaluate cubic segments at parameter values.

    ctrl may be (4, 2) with ts (T,), or (M, 4, 2) with ts (M, T).
    """
    ctrl = np.asarray(ctrl, dtype=np.float64)
    ts = np.asarray(ts, dtype=np.float64)
    single = ctrl.ndim == 2
    if single:
        ctrl = ctrl[None]
        ts = ts[None]
    t = ts[..., None]
    u = 1.0 - t
    p0 = ctrl[:, None, 0]
    p1 = ctrl[:, None, 1]
    p2 = ctrl[:, None, 2]
    p3 = ctrl[:, None, 3]
    out = u**3 * p0 + 3 * u**2 * t * p1 + 3 * u * t**2 * p2 + t**3 * p3
    return out[0] if single else out


def segment_lengths(control_points: np.ndarray, n_sub: int = 128) -> np.ndarray:
    """Arc length per segment by dense chord subdivision."""
    ts = np.linspace(0.0, 1.0, n_sub + 1)
    lengths = np.empty(len(control_points))
    chunk = 2048
    for s in range(0, len(control_points), chunk):
        ctrl = control_points[s : s + chunk]
        pts = bezier_points(ctrl, np.broadcast_to(ts, (len(ctrl), n_sub + 1)))
        seg = np.linalg.norm(np.diff(pts, axis=1), axis=2)
        lengths[s : s + chunk] = seg.sum(axis=1)
    return lengths


def sample_path(path: SplinePath, spacing: float) -> np.ndarray:
    """Sample the spline at near-uniform arc length steps.

    Every segment endpoint is included; within a segment the gap is the
    segment's arc length divided by the nearest whole step count, so it
    stays within a few percent of the requested spacing except on segments
    much shorter than it. Closed paths return first == last sample.
    """
    if spacing <= 0.0:
        raise ValueError("spacing must be positive")
    ctrl_all = path.control_points
    n_sub = 128
    ts = np.linspace(0.0, 1.0, n_sub + 1)
    samples = []
    chunk = 2048
    for s in range(0, len(ctrl_all), chunk):
        ctrl = ctrl_all[s : s + chunk]
        pts = bezier_points(ctrl, np.broadcast_to(ts, (len(ctrl), n_sub + 1)))
        seglen = np.linalg.norm(np.diff(pts, axis=1), axis=2)
        cum = np.concatenate(
            [np.zeros((len(ctrl), 1)), np.cumsum(seglen, axis=1)], axis=1
        )
        for i in range(len(ctrl)):
            length = float(cum[i, -1])
            if length == 0.0:
                if not samples:
                    samples.append(pts[i, :1])
                continue
            k = max(1, round(length / spacing))
            targets = np.linspace(0.0, length, k + 1)
            t_vals = np.interp(targets, cum[i], ts)
            seg_pts = bezier_points(ctrl_all[s + i], t_vals)
            if samples:
                seg_pts = seg_pts[1:]  # endpoint shared with previous segment
            samples.append(seg_pts)
    return np.vstack(samples)
