"""Density-weighted stippling: turn an ink density field into point sites.

Two generators are provided. ``voronoi_stipple`` seeds a fixed number of
points by rejection sampling and relaxes them onto density-weighted Voronoi
centroids. ``lbg_stipple`` grows the point set from a single site by
splitting overfull Voronoi cells and deleting starved ones until the ink
per cell settles near one unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .imaging import DensityField

# Convergence threshold for Lloyd relaxation, mean displacement in pixels.
RELAX_TOL = 0.05

# Points closer than this many pixels are merged before the set is returned,
# so downstream tour construction never sees duplicate sites.
MIN_SEPARATION = 0.5


@dataclass
class StippleParams:
    """Knobs shared by both stipple generators."""

    target_count: int = 1000
    max_iterations: int = 60
    split_upper: float = 1.5
    merge_lower: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.target_count < 0:
            raise ValueError("target_count must be nonnegative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not (self.merge_lower < self.split_upper):
            raise ValueError("merge_lower must be below split_upper")


@dataclass
class StippleSet:
    """Point sites for one channel, in field pixel coordinates."""

    points: np.ndarray  # (N, 2) float64
    channel_index: int
    seed: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)


def validate_stipples(stipples: StippleSet, field: DensityField) -> None:
    """Check bounds and pairwise distinctness; raises ValueError on failure."""
    pts = stipples.points
    if len(pts) == 0:
        return
    if (
        np.min(pts[:, 0]) < 0.0
        or np.max(pts[:, 0]) > field.width
        or np.min(pts[:, 1]) < 0.0
        or np.max(pts[:, 1]) > field.height
    ):
        raise ValueError("stipple outside field bounds")
    if len(pts) > 1:
        d, _ = cKDTree(pts).query(pts, k=2)
        if np.min(d[:, 1]) <= 0.0:
            raise ValueError("coincident stipples")


def voronoi_assign(points: np.ndarray, field: DensityField) -> np.ndarray:
    """Label every pixel with the index of its nearest point.

    Returns an (height, width) int array. Distance ties go to the lowest
    point index, matching a brute-force nearest scan.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("voronoi_assign needs at least one point")
    centers = field.pixel_centers()
    if len(pts) == 1:
        return np.zeros((field.height, field.width), dtype=np.int64)
    tree = cKDTree(pts)
    dist, idx = tree.query(centers, k=2)
    labels = idx[:, 0].astype(np.int64)
    ties = dist[:, 0] == dist[:, 1]
    if np.any(ties):
        # ties can involve more than the two returned sites: rescan exactly
        tied_centers = centers[ties]
        d2 = np.sum((tied_centers[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        labels[ties] = np.argmin(d2, axis=1)
    return labels.reshape(field.height, field.width)


def _cell_moments(labels: np.ndarray, field: DensityField, n: int):
    """Per-cell ink mass and density-weighted first moments."""
    w = field.values.ravel()
    lab = labels.ravel()
    centers = field.pixel_centers()
    mass = np.bincount(lab, weights=w, minlength=n)
    sx = np.bincount(lab, weights=w * centers[:, 0], minlength=n)
    sy = np.bincount(lab, weights=w * centers[:, 1], minlength=n)
    return mass, sx, sy


def relax_step(points: np.ndarray, field: DensityField) -> np.ndarray:
    """One Lloyd step: move each point to its cell's density-weighted centroid.

    Points whose cell carries zero ink are dropped. Input order is preserved
    for the survivors.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return pts.copy()
    labels = voronoi_assign(pts, field)
    mass, sx, sy = _cell_moments(labels, field, len(pts))
    alive = mass > 0.0
    out = np.column_stack([sx[alive] / mass[alive], sy[alive] / mass[alive]])
    return out


def weighted_centroid(field: DensityField) -> np.ndarray:
    """Density-weighted centroid of the whole field."""
    w = field.values.ravel()
    total = float(w.sum())
    if total <= 0.0:
        raise ValueError("no ink mass")
    centers = field.pixel_centers()
    return (centers * w[:, None]).sum(axis=0) / total


def _merge_close(points: np.ndarray, min_dist: float) -> np.ndarray:
    """Delete the higher-index point of any pair closer than min_dist."""
    pts = points
    while len(pts) > 1:
        pairs = cKDTree(pts).query_pairs(min_dist, output_type="ndarray")
        if len(pairs) == 0:
            break
        drop = np.unique(pairs.max(axis=1))
        keep = np.setdiff1d(np.arange(len(pts)), drop)
        pts = pts[keep]
    return pts


def voronoi_stipple(field: DensityField, params: StippleParams) -> StippleSet:
    """Stipple by rejection-sampled seeding plus Lloyd relaxation.

    Sampling is proportional to density; relaxation stops when the mean
    point displacement falls below RELAX_TOL pixels or after
    params.max_iterations steps. Raises ValueError("no ink mass") when a
    positive target is requested on an all-zero field.
    """
    rng = np.random.default_rng(params.rng_seed)
    if params.target_count == 0:
        return StippleSet(np.empty((0, 2)), field.channel_index, params.rng_seed)
    w = field.values
    w_max = float(w.max()) if w.size else 0.0
    if w_max <= 0.0:
        raise ValueError("no ink mass")

    pts = np.empty((params.target_count, 2))
    got = 0
    while got < params.target_count:
        batch = max(256, 2 * (params.target_count - got))
        xs = rng.uniform(0.0, field.width, size=batch)
        ys = rng.uniform(0.0, field.height, size=batch)
        cols = np.minimum(xs.astype(int), field.width - 1)
        rows = np.minimum(ys.astype(int), field.height - 1)
        accept = rng.uniform(0.0, w_max, size=batch) < w[rows, cols]
        take = min(int(accept.sum()), params.target_count - got)
        sel = np.flatnonzero(accept)[:take]
        pts[got : got + take, 0] = xs[sel]
        pts[got : got + take, 1] = ys[sel]
        got += take

    for _ in range(params.max_iterations):
        new_pts = relax_step(pts, field)
        if len(new_pts) == len(pts):
            disp = float(np.linalg.norm(new_pts - pts, axis=1).mean())
            pts = new_pts
            if disp < RELAX_TOL:
                break
        else:
            pts = new_pts
        if len(pts) == 0:
            break

    pts = _merge_close(pts, MIN_SEPARATION)
    return StippleSet(pts, field.channel_index, params.rng_seed)


def _principal_axes(labels, field, n):
    """Weighted covariance eigendecomposition per cell.

    Returns (radius, direction) arrays where radius is the standard
    deviation along each cell's leading principal axis.
    """
    w = field.values.ravel()
    lab = labels.ravel()
    centers = field.pixel_centers()
    mass = np.bincount(lab, weights=w, minlength=n)
    safe = np.where(mass > 0.0, mass, 1.0)
    mx = np.bincount(lab, weights=w * centers[:, 0], minlength=n) / safe
    my = np.bincount(lab, weights=w * centers[:, 1], minlength=n) / safe
    sxx = np.bincount(lab, weights=w * centers[:, 0] ** 2, minlength=n) / safe - mx**2
    syy = np.bincount(lab, weights=w * centers[:, 1] ** 2, minlength=n) / safe - my**2
    sxy = (
        np.bincount(lab, weights=w * centers[:, 0] * centers[:, 1], minlength=n) / safe
        - mx * my
    )
    cov = np.zeros((n, 2, 2))
    cov[:, 0, 0] = np.maximum(sxx, 0.0)
    cov[:, 1, 1] = np.maximum(syy, 0.0)
    cov[:, 0, 1] = cov[:, 1, 0] = sxy
    vals, vecs = np.linalg.eigh(cov)
    radius = np.sqrt(np.maximum(vals[:, 1], 0.0))
    direction = vecs[:, :, 1]
    return radius, direction, np.column_stack([mx, my])


def lbg_stipple(field: DensityField, params: StippleParams) -> StippleSet:
    """Stipple by split-and-merge growth from a single site.

    Each iteration assigns pixels to sites and normalizes cell ink so the
    requested target corresponds to one unit per site. Cells above
    params.split_upper split into two sites displaced half a principal-axis
    radius apart; cells below params.merge_lower are deleted; everything
    else relaxes to its weighted centroid. Stops when an iteration performs
    no split or merge, or at params.max_iterations.
    """
    rng = np.random.default_rng(params.rng_seed)
    total_ink = float(field.values.sum())
    if total_ink <= 0.0 or params.target_count == 0:
        return StippleSet(np.empty((0, 2)), field.channel_index, params.rng_seed)
    scale = params.target_count / total_ink

    pts = weighted_centroid(field).reshape(1, 2)
    for _ in range(params.max_iterations):
        labels = voronoi_assign(pts, field)
        n = len(pts)
        mass, sx, sy = _cell_moments(labels, field, n)
        ink = mass * scale
        radius, direction, centroid = _principal_axes(labels, field, n)

        splits = ink > params.split_upper
        deaths = ink < params.merge_lower
        keeps = ~(splits | deaths)

        new_pts = []
        for i in range(n):
            if deaths[i]:
                continue
            if splits[i]:
                eps = 0.5 * radius[i]
                d = direction[i]
                if eps < 0.25:
                    # degenerate cell: pick a seeded random direction instead
                    ang = rng.uniform(0.0, 2.0 * np.pi)
                    d = np.array([np.cos(ang), np.sin(ang)])
                    eps = 0.25
                c = centroid[i]
                new_pts.append(c + eps * d)
                new_pts.append(c - eps * d)
            else:
                new_pts.append(centroid[i])
        if not new_pts:
            pts = np.empty((0, 2))
            break
        pts = np.clip(
            np.asarray(new_pts),
            [0.0, 0.0],
            [field.width, field.height],
        )
        if not np.any(splits) and not np.any(deaths):
            break

    pts = _merge_close(pts, MIN_SEPARATION)
    return StippleSet(pts, field.channel_index, params.rng_seed)


def stipple_density_raster(
    points: np.ndarray, width: int, height: int, sigma: float
) -> np.ndarray:
    """Gaussian-blurred point mass raster, for tone comparisons.

    Each point deposits unit mass into its containing pixel; the result is
    blurred with the given sigma (pixels) and returned as (height, width).
    """
    img = np.zeros((height, width), dtype=np.float64)
    pts = np.asarray(points).reshape(-1, 2)
    if len(pts) > 0:
        cols = np.clip(pts[:, 0].astype(int), 0, width - 1)
        rows = np.clip(pts[:, 1].astype(int), 0, height - 1)
        np.add.at(img, (rows, cols), 1.0)
    return ndimage.gaussian_filter(img, sigma=sigma)


def mean_neighbor_spacing(points: np.ndarray) -> float:
    """Mean nearest-neighbor distance of a point set."""
    pts = np.asarray(points).reshape(-1, 2)
    if len(pts) < 2:
        return 0.0
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(d[:, 1].mean())
