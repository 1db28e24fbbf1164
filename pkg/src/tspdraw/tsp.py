"""Single-stroke tour construction over stipple sites.

A tour visits every site exactly once and returns to its start. Tours are
built greedily (nearest unvisited neighbor) and then improved with 2-opt
and Or-opt moves restricted to spatial neighbor candidates, with don't-look
bits and an optional wall-clock budget. Only improving moves are accepted,
so the improved length never exceeds the constructed one.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass
from math import ceil, hypot, sqrt

import numpy as np

# Gains below this are treated as zero so float noise cannot cycle.
_GAIN_EPS = 1e-12


@dataclass
class TspParams:
    neighbor_k: int = 10
    time_budget: float | None = 60.0  # seconds per channel; None = unlimited
    or_opt_max: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if self.neighbor_k < 1:
            raise ValueError("neighbor_k must be positive")
        if self.time_budget is not None and self.time_budget <= 0.0:
            raise ValueError("time_budget must be positive when set")
        if self.or_opt_max < 0:
            raise ValueError("or_opt_max must be nonnegative")


@dataclass
class Tour:
    """Visit order (a permutation of 0..N-1) and closed-loop length."""

    order: np.ndarray
    length: float

    def __post_init__(self):
        self.order = np.asarray(self.order, dtype=np.int64)
        n = len(self.order)
        if n == 0:
            raise ValueError("empty tour")
        seen = np.zeros(n, dtype=bool)
        seen[self.order] = True
        if not seen.all():
            raise ValueError("tour order is not a permutation")


def tour_length(points: np.ndarray, order: np.ndarray) -> float:
    """Closed-loop Euclidean length of a visit order."""
    pts = np.asarray(points, dtype=np.float64)[np.asarray(order, dtype=np.int64)]
    diffs = np.diff(np.vstack([pts, pts[:1]]), axis=0)
    return float(np.hypot(diffs[:, 0], diffs[:, 1]).sum())


class _UniformGrid:
    """Uniform bucket grid over a 2D point set for neighbor queries."""

    def __init__(self, points: np.ndarray):
        self.pts = np.asarray(points, dtype=np.float64)
        n = len(self.pts)
        xmin, ymin = self.pts.min(axis=0)
        xmax, ymax = self.pts.max(axis=0)
        area = max((xmax - xmin) * (ymax - ymin), 1e-12)
        # roughly two points per cell
        self.cell = max(sqrt(2.0 * area / n), 1e-6)
        self.x0, self.y0 = xmin, ymin
        self.nx = int((xmax - xmin) / self.cell) + 1
        self.ny = int((ymax - ymin) / self.cell) + 1
        self.buckets: dict[tuple[int, int], list[int]] = {}
        ix = ((self.pts[:, 0] - xmin) / self.cell).astype(int)
        iy = ((self.pts[:, 1] - ymin) / self.cell).astype(int)
        for i in range(n):
            self.buckets.setdefault((int(ix[i]), int(iy[i])), []).append(i)
        self._ix, self._iy = ix, iy
        self.max_rings = max(self.nx, self.ny) + 1

    def _ring_cells(self, cx: int, cy: int, r: int):
        if r == 0:
            yield (cx, cy)
            return
        for x in range(cx - r, cx + r + 1):
            yield (x, cy - r)
            yield (x, cy + r)
        for y in range(cy - r + 1, cy + r):
            yield (cx - r, y)
            yield (cx + r, y)

    def knn(self, i: int, k: int) -> np.ndarray:
        """Indices of the k nearest points to point i, ties by index."""
        cx, cy = int(self._ix[i]), int(self._iy[i])
        px, py = self.pts[i]
        cand: list[int] = []
        r = 0
        while True:
            for cell in self._ring_cells(cx, cy, r):
                lst = self.buckets.get(cell)
                if lst:
                    cand.extend(lst)
            if len(cand) > k:
                arr = np.array(cand, dtype=np.int64)
                arr = arr[arr != i]
                if len(arr) >= k:
                    d2 = np.sum((self.pts[arr] - (px, py)) ** 2, axis=1)
                    kth = np.partition(d2, k - 1)[k - 1]
                    # ring r guarantees coverage out to radius r*cell
                    if sqrt(kth) <= r * self.cell or r >= self.max_rings:
                        sel = np.lexsort((arr, d2))[:k]
                        return arr[sel]
            if r > self.max_rings and len(cand) > k:
                break
            r += 1
        arr = np.array(cand, dtype=np.int64)
        arr = arr[arr != i]
        d2 = np.sum((self.pts[arr] - (px, py)) ** 2, axis=1)
        sel = np.lexsort((arr, d2))[:k]
        return arr[sel]

    def nearest_unvisited(self, px: float, py: float, visited) -> int | None:
        """Closest point not yet visited, distance ties to the lowest index."""
        cx = int((px - self.x0) / self.cell)
        cy = int((py - self.y0) / self.cell)
        best = -1
        best_d2 = float("inf")
        r = 0
        while r <= self.max_rings + 1:
            for cell in self._ring_cells(cx, cy, r):
                lst = self.buckets.get(cell)
                if not lst:
                    continue
                live = [j for j in lst if not visited[j]]
                if len(live) != len(lst):
                    self.buckets[cell] = live
                for j in live:
                    d2 = (self.pts[j, 0] - px) ** 2 + (self.pts[j, 1] - py) ** 2
                    if d2 < best_d2 or (d2 == best_d2 and j < best):
                        best = j
                        best_d2 = d2
            if best >= 0 and best_d2 <= (r * self.cell) ** 2:
                return best
            r += 1
        return best if best >= 0 else None


def build_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """Exact k-nearest-neighbor table, shape (N, k), ties broken by index."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n < 2:
        raise ValueError("need at least two points for a neighbor table")
    k = min(k, n - 1)
    grid = _UniformGrid(pts)
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        out[i] = grid.knn(i, k)
    return out


def construct_tour(points: np.ndarray, seed: int, start: int | None = None) -> Tour:
    """Greedy nearest-neighbor tour from a seeded random start site."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n < 3:
        raise ValueError("degenerate instance")
    if start is None:
        start = int(np.random.default_rng(seed).integers(n))
    if not (0 <= start < n):
        raise ValueError(f"start index {start} out of range")
    grid = _UniformGrid(pts)
    visited = np.zeros(n, dtype=bool)
    order = np.empty(n, dtype=np.int64)
    order[0] = start
    visited[start] = True
    cur = start
    for step in range(1, n):
        nxt = grid.nearest_unvisited(pts[cur, 0], pts[cur, 1], visited)
        order[step] = nxt
        visited[nxt] = True
        cur = nxt
    return Tour(order=order, length=tour_length(pts, order))


def improve_tour(tour: Tour, points: np.ndarray, params: TspParams) -> Tour:
    """Local search with neighbor-list 2-opt and Or-opt relocation.

    Runs to a local optimum of the move set, or until params.time_budget
    seconds elapse. Deterministic for fixed inputs when the budget never
    triggers.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n < 4:
        return Tour(order=tour.order.copy(), length=tour_length(pts, tour.order))

    neighbors = [row.tolist() for row in build_neighbors(pts, params.neighbor_k)]
    xs = pts[:, 0].tolist()
    ys = pts[:, 1].tolist()
    order = tour.order.copy()
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)

    deadline = None
    if params.time_budget is not None:
        deadline = time.monotonic() + params.time_budget

    queue = deque(order.tolist())
    in_queue = [True] * n

    def dist(a: int, b: int) -> float:
        return hypot(xs[a] - xs[b], ys[a] - ys[b])

    def push(c: int):
        if not in_queue[c]:
            in_queue[c] = True
            queue.append(c)

    def apply_2opt(x: int, y: int):
        # remove edges (x, succ x) and (y, succ y); reverse the span between
        i, j = int(pos[x]), int(pos[y])
        lo, hi = (i + 1, j) if i < j else (j + 1, i)
        order[lo : hi + 1] = order[lo : hi + 1][::-1]
        pos[order[lo : hi + 1]] = np.arange(lo, hi + 1)

    def try_two_opt(a: int) -> bool:
        pa = int(pos[a])
        a_next = int(order[(pa + 1) % n])
        a_prev = int(order[pa - 1])
        d_next = dist(a, a_next)
        d_prev = dist(a, a_prev)
        d_cap = d_next if d_next > d_prev else d_prev
        for b in neighbors[a]:
            d_ab = dist(a, b)
            if d_ab >= d_cap:
                break  # neighbors sorted: no closer candidate remains
            if d_ab < d_next and b != a_next:
                b_next = int(order[(pos[b] + 1) % n])
                if b_next != a:
                    delta = d_next + dist(b, b_next) - d_ab - dist(a_next, b_next)
                    if delta > _GAIN_EPS:
                        apply_2opt(a, b)
                        for c in (a, a_next, b, b_next):
                            push(c)
                        return True
            if d_ab < d_prev and b != a_prev:
                b_prev = int(order[pos[b] - 1])
                if b_prev != a:
                    delta = d_prev + dist(b_prev, b) - d_ab - dist(a_prev, b_prev)
                    if delta > _GAIN_EPS:
                        apply_2opt(a_prev, b_prev)
                        for c in (a, a_prev, b, b_prev):
                            push(c)
                        return True
        return False

    def try_or_opt(a: int) -> bool:
        nonlocal order
        p = int(pos[a])
        for seg_len in range(1, params.or_opt_max + 1):
            if p < 1 or p + seg_len > n - 1:
                continue  # segment must sit strictly inside the array
            e = int(order[p + seg_len - 1])
            pa = int(order[p - 1])
            se = int(order[p + seg_len])
            g_rem = dist(pa, a) + dist(e, se) - dist(pa, se)
            if g_rem <= _GAIN_EPS:
                continue
            seg_lo, seg_hi = p, p + seg_len - 1
            for b in neighbors[a] + (neighbors[e] if e != a else []):
                qb = int(pos[b])
                if seg_lo <= qb <= seg_hi or b == pa:
                    continue
                sb = int(order[(qb + 1) % n])
                if seg_lo <= int(pos[sb]) <= seg_hi:
                    continue
                d_b_sb = dist(b, sb)
                gain_fwd = g_rem + d_b_sb - dist(b, a) - dist(e, sb)
                gain_rev = g_rem + d_b_sb - dist(b, e) - dist(a, sb)
                if gain_fwd <= _GAIN_EPS and gain_rev <= _GAIN_EPS:
                    continue
                seg = order[seg_lo : seg_hi + 1].copy()
                if gain_rev > gain_fwd:
                    seg = seg[::-1]
                rest = np.concatenate([order[:seg_lo], order[seg_hi + 1 :]])
                q2 = qb - seg_len if qb > seg_hi else qb
                order = np.concatenate([rest[: q2 + 1], seg, rest[q2 + 1 :]])
                pos[order] = np.arange(n)
                for c in (a, e, pa, se, b, sb):
                    push(c)
                return True
        return False

    pops = 0
    while queue:
        pops += 1
        if deadline is not None and (pops & 0x3F) == 0:
            if time.monotonic() > deadline:
                break
        a = queue.popleft()
        in_queue[a] = False
        if try_two_opt(a):
            push(a)
            continue
        if params.or_opt_max > 0 and try_or_opt(a):
            push(a)

    return Tour(order=order, length=tour_length(pts, order))


def tour_to_polyline(tour: Tour, points: np.ndarray):
    """Closed polyline visiting the tour order, first point re-appended."""
    from .pathopt import Polyline

    pts = np.asarray(points, dtype=np.float64)[tour.order]
    verts = np.vstack([pts, pts[:1]])
    return Polyline(vertices=verts, closed=True)


def export_tsplib(points: np.ndarray, name: str = "channel") -> str:
    """Render a point set in TSPLIB format with EUC_2D edge weights."""
    pts = np.asarray(points, dtype=np.float64)
    lines = [
        f"NAME: {name}",
        "TYPE: TSP",
        f"DIMENSION: {len(pts)}",
        "EDGE_WEIGHT_TYPE: EUC_2D",
        "NODE_COORD_SECTION",
    ]
    for i, (x, y) in enumerate(pts, start=1):
        lines.append(f"{i} {float(x)!r} {float(y)!r}")
    lines.append("EOF")
    return "\n".join(lines) + "\n"
