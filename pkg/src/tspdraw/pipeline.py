"""Staged image-to-plotter pipeline.

Each stage reads the previous stage's artifacts from the output directory
and writes its own, so a drawing can be produced in one call or stage by
stage across separate processes with byte-identical results. Artifacts are
versioned plain-text dumps; floats are written with repr so values survive
the round trip exactly.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .imaging import (
    DensityField,
    Palette,
    box_downscale,
    load_image,
    split_cmyk,
    split_kmeans,
)
from .kinematics import (
    GridSpec,
    SubCanvas,
    ToolPose,
    canvas_orientation,
    chain_preset,
    drawing_to_world,
    fit_canvas,
    load_chain,
    pathwise_ik,
    plane_basis,
    quat_from_matrix,
    reachability_map,
    tile_canvas,
    _PRESETS,
)
from .output import (
    StatsReport,
    emit_plotter_program,
    emit_stats,
    emit_svg,
    render_preview,
    save_png,
)
from .pathopt import (
    PathOptParams,
    Polyline,
    SplinePath,
    enforce_curvature,
    fit_spline,
    rdp_simplify,
    sample_path,
)
from .stippling import StippleParams, lbg_stipple, voronoi_stipple
from .tsp import Tour, TspParams, construct_tour, improve_tour, tour_length

_SEED_STRIDE = 7919  # fixed per-channel seed offset


@dataclass
class PipelineConfig:
    """Everything a run needs; round-trips through JSON."""

    image: str | None = None
    mode: str = "cmyk"  # "cmyk" or "kmeans"
    k: int = 4  # cluster count for kmeans mode
    max_size: int | None = 512  # cap on the longest image side, None keeps full size
    stipple_method: str = "voronoi"  # "voronoi" or "lbg"
    total_points: int = 4000  # stipples across all channels, split by ink mass
    stipple_iterations: int = 60
    neighbor_k: int = 10
    time_budget: float | None = 60.0  # tour improvement seconds per channel
    or_opt_max: int = 3
    d_eps: float = 0.5  # simplification tolerance, image pixels
    kappa_eps: float = 2.0  # join curvature bound, 1/pixel
    canvas_width: float = 200.0  # drawing width, mm
    canvas_height: float | None = None  # mm; None keeps the image aspect
    stroke_width: float = 0.5  # pen line width, mm
    sample_spacing: float = 1.0  # plotter waypoint spacing, mm
    preview_width: int = 512
    seed: int = 0
    chain: str | None = None  # preset name or chain JSON path; None skips planning
    plane_point: tuple = (0.0, 0.0, 0.0)
    plane_normal: tuple = (0.0, 0.0, 1.0)
    grid_step: float = 50.0  # reachability lattice pitch, mm
    hover: float = 5.0  # pen-up lift, mm
    jump_threshold: float = 0.5  # max joint move between pen-down waypoints, rad
    workers: int = 1

    def __post_init__(self):
        if self.mode not in ("cmyk", "kmeans"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.stipple_method not in ("voronoi", "lbg"):
            raise ValueError(f"unknown stipple method {self.stipple_method!r}")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.total_points < 0:
            raise ValueError("total_points must be nonnegative")
        if self.canvas_width <= 0.0:
            raise ValueError("canvas_width must be positive")
        if self.canvas_height is not None and self.canvas_height <= 0.0:
            raise ValueError("canvas_height must be positive")
        if self.sample_spacing <= 0.0:
            raise ValueError("sample_spacing must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def n_channels(self) -> int:
        return 4 if self.mode == "cmyk" else self.k


def config_from_dict(d: dict) -> PipelineConfig:
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    d = dict(d)
    for key in ("plane_point", "plane_normal"):
        if key in d:
            d[key] = tuple(float(v) for v in d[key])
    return PipelineConfig(**d)


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    return config_from_dict(data)


def save_config(config: PipelineConfig, path) -> None:
    d = asdict(config)
    d["plane_point"] = list(d["plane_point"])
    d["plane_normal"] = list(d["plane_normal"])
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")


def channel_seed(seed: int, channel: int) -> int:
    return seed + _SEED_STRIDE * (channel + 1)


# ---------------------------------------------------------------------------
# artifact dumps

def write_dump(path, kind: str, meta: dict, rows) -> None:
    with open(path, "w") as fh:
        fh.write(f"# tspdraw-{kind} v1\n")
        for key, val in meta.items():
            fh.write(f"# {key} {val}\n")
        for row in rows:
            fh.write(row + "\n")


def read_dump(path, kind: str) -> tuple[dict, list[str]]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != f"# tspdraw-{kind} v1":
        raise ValueError(f"{path} is not a tspdraw-{kind} v1 dump")
    meta: dict[str, str] = {}
    i = 1
    while i < len(lines) and lines[i].startswith("# "):
        key, _, val = lines[i][2:].partition(" ")
        meta[key] = val
        i += 1
    return meta, [ln for ln in lines[i:] if ln.strip()]


def _float_row(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _parse_floats(rows: list[str]) -> np.ndarray:
    if not rows:
        return np.empty((0, 0))
    return np.array([[float(t) for t in row.split()] for row in rows])


def _meta_path(out_dir) -> str:
    return os.path.join(out_dir, "meta.txt")


def update_meta(out_dir, updates: dict) -> None:
    meta = read_meta(out_dir)
    meta.update({k: str(v) for k, v in updates.items()})
    write_dump(_meta_path(out_dir), "meta", {}, [f"{k} {meta[k]}" for k in sorted(meta)])


def read_meta(out_dir) -> dict:
    path = _meta_path(out_dir)
    if not os.path.exists(path):
        return {}
    _, rows = read_dump(path, "meta")
    out = {}
    for row in rows:
        key, _, val = row.partition(" ")
        out[key] = val
    return out


def _channel_files(out_dir, prefix: str) -> list[str]:
    n = 0
    while os.path.exists(os.path.join(out_dir, f"{prefix}-{n}.txt")):
        n += 1
    if n == 0:
        raise ValueError(f"no {prefix} artifacts in {out_dir}; run the earlier stages")
    return [os.path.join(out_dir, f"{prefix}-{c}.txt") for c in range(n)]


def _write_palette(out_dir, palette: Palette) -> None:
    write_dump(
        os.path.join(out_dir, "palette.txt"),
        "palette",
        {"origin": palette.origin},
        [_float_row(c) for c in palette.colors],
    )


def _read_palette(out_dir) -> Palette:
    meta, rows = read_dump(os.path.join(out_dir, "palette.txt"), "palette")
    colors = tuple(tuple(float(t) for t in row.split()) for row in rows)
    return Palette(colors=colors, origin=meta["origin"])


def _write_field(path, field: DensityField) -> None:
    write_dump(
        path,
        "field",
        {
            "width": field.width,
            "height": field.height,
            "index": field.channel_index,
            "color": _float_row(field.channel_color),
        },
        [_float_row(row) for row in field.values],
    )


def _read_field(path) -> DensityField:
    meta, rows = read_dump(path, "field")
    values = _parse_floats(rows)
    return DensityField(
        width=int(meta["width"]),
        height=int(meta["height"]),
        values=values.reshape(int(meta["height"]), int(meta["width"])),
        channel_color=tuple(float(t) for t in meta["color"].split()),
        channel_index=int(meta["index"]),
    )


def _write_points(path, points: np.ndarray, seed: int) -> None:
    write_dump(
        path,
        "points",
        {"seed": seed, "count": len(points)},
        [_float_row(p) for p in points],
    )


def _read_points(path) -> np.ndarray:
    _, rows = read_dump(path, "points")
    return _parse_floats(rows).reshape(-1, 2)


def _write_tour(path, points: np.ndarray, length: float) -> None:
    write_dump(
        path,
        "tour",
        {"length": repr(float(length)), "count": len(points)},
        [_float_row(p) for p in points],
    )


def _read_tour(path) -> tuple[np.ndarray, float]:
    meta, rows = read_dump(path, "tour")
    return _parse_floats(rows).reshape(-1, 2), float(meta["length"])


def _write_path(path, spline: SplinePath | None, meta: dict) -> None:
    rows = []
    if spline is not None:
        rows = [_float_row(seg.reshape(8)) for seg in spline.control_points]
        meta = dict(meta)
        meta["closed"] = int(spline.closed)
    write_dump(path, "path", meta, rows)


def _read_path(path) -> tuple[SplinePath | None, dict]:
    meta, rows = read_dump(path, "path")
    if not rows:
        return None, meta
    ctrl = _parse_floats(rows).reshape(-1, 4, 2)
    closed = bool(int(meta.get("closed", 0)))
    n_joins = len(ctrl) if closed else len(ctrl) - 1
    joins = np.empty(0)
    if n_joins > 0 and "joins" in meta:
        joins = np.array([float(t) for t in meta["joins"].split()])
    return SplinePath(ctrl, closed=closed, join_curvatures=joins), meta


# ---------------------------------------------------------------------------
# stages

def _parallel(config: PipelineConfig, work, items):
    if config.workers == 1 or len(items) <= 1:
        return [work(it) for it in items]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(work, items))


def stage_split(config: PipelineConfig, out_dir) -> dict:
    """Image to per-channel density fields plus the pen palette."""
    if config.image is None:
        raise ValueError("no input image configured")
    os.makedirs(out_dir, exist_ok=True)
    image = load_image(config.image)
    if config.max_size is not None:
        image = box_downscale(image, config.max_size)
    if config.mode == "cmyk":
        fields, palette = split_cmyk(image)
    else:
        fields, palette = split_kmeans(image, config.k, config.seed)
    _write_palette(out_dir, palette)
    for c, field in enumerate(fields):
        _write_field(os.path.join(out_dir, f"field-{c}.txt"), field)
    update_meta(
        out_dir,
        {
            "image_width": image.width,
            "image_height": image.height,
            "channels": len(fields),
        },
    )
    return {"channels": len(fields), "width": image.width, "height": image.height}


def stage_stipple(config: PipelineConfig, out_dir) -> dict:
    """Density fields to per-channel point sets, budget split by ink mass."""
    field_paths = _channel_files(out_dir, "field")
    fields = [_read_field(p) for p in field_paths]
    masses = np.array([float(f.values.sum()) for f in fields])
    total = float(masses.sum())
    counts = [
        0 if total <= 0.0 else int(round(config.total_points * m / total))
        for m in masses
    ]
    timings: dict[str, float] = {}

    def work(item):
        c, field, n_target = item
        t0 = time.perf_counter()
        seed = channel_seed(config.seed, c)
        if n_target == 0:
            pts = np.empty((0, 2))
        else:
            params = StippleParams(
                target_count=n_target,
                max_iterations=config.stipple_iterations,
                rng_seed=seed,
            )
            method = voronoi_stipple if config.stipple_method == "voronoi" else lbg_stipple
            pts = method(field, params).points
        _write_points(os.path.join(out_dir, f"points-{c}.txt"), pts, seed)
        timings[f"stipple_seconds_{c}"] = time.perf_counter() - t0
        return len(pts)

    produced = _parallel(config, work, list(zip(range(len(fields)), fields, counts)))
    update_meta(out_dir, timings)
    return {"counts": produced}


def stage_tour(config: PipelineConfig, out_dir) -> dict:
    """Point sets to greedy nearest-neighbor visit orders."""
    point_paths = _channel_files(out_dir, "points")
    timings: dict[str, float] = {}

    def work(item):
        c, path = item
        pts = _read_points(path)
        t0 = time.perf_counter()
        if len(pts) < 3:
            ordered = pts
            length = tour_length(pts, np.arange(len(pts))) if len(pts) else 0.0
        else:
            tour = construct_tour(pts, seed=channel_seed(config.seed, c) + 1)
            ordered = pts[tour.order]
            length = tour.length
        _write_tour(os.path.join(out_dir, f"tour-{c}.txt"), ordered, length)
        timings[f"tsp_construct_seconds_{c}"] = time.perf_counter() - t0
        return length

    lengths = _parallel(config, work, list(enumerate(point_paths)))
    update_meta(out_dir, timings)
    return {"lengths": lengths}


def _degenerate_spline(points: np.ndarray) -> SplinePath | None:
    """Paths for 0, 1 or 2 sites, which no tour or spline fit can handle."""
    if len(points) == 0:
        return None
    if len(points) == 1:
        p = points[0]
        ctrl = np.array([[p, p, p, p]])
        return SplinePath(ctrl, closed=False, join_curvatures=np.empty(0))
    poly = Polyline(np.vstack([points, points[:1]]), closed=True)
    return fit_spline(poly)


def stage_optimize(config: PipelineConfig, out_dir) -> dict:
    """Tours to smooth bounded-curvature spline paths.

    Runs the local-search improvement, then simplification, then the spline
    fit with the curvature bound enforced by handle scaling.
    """
    tour_paths = _channel_files(out_dir, "tour")
    opt_params = PathOptParams(d_eps=config.d_eps, kappa_eps=config.kappa_eps)
    timings: dict[str, float] = {}

    def work(item):
        c, path = item
        pts, length = _read_tour(path)
        t0 = time.perf_counter()
        if len(pts) >= 4:
            tsp_params = TspParams(
                neighbor_k=config.neighbor_k,
                time_budget=config.time_budget,
                or_opt_max=config.or_opt_max,
                rng_seed=channel_seed(config.seed, c) + 2,
            )
            improved = improve_tour(
                Tour(order=np.arange(len(pts)), length=length), pts, tsp_params
            )
            pts_opt = pts[improved.order]
            length = improved.length
        else:
            pts_opt = pts
        t1 = time.perf_counter()
        meta = {"tour_length": repr(float(length))}
        if len(pts_opt) < 3:
            spline = _degenerate_spline(pts_opt)
            meta["vertices_pre"] = len(pts_opt) + (1 if len(pts_opt) == 2 else 0)
            meta["vertices_post"] = meta["vertices_pre"]
            meta["handle_scale"] = repr(1.0)
            meta["max_join_curvature"] = repr(0.0)
        else:
            poly = Polyline(np.vstack([pts_opt, pts_opt[:1]]), closed=True)
            simplified = rdp_simplify(poly, config.d_eps)
            spline, scale = enforce_curvature(fit_spline(simplified), opt_params)
            meta["vertices_pre"] = len(poly.vertices)
            meta["vertices_post"] = len(simplified.vertices)
            meta["handle_scale"] = repr(float(scale))
            meta["max_join_curvature"] = repr(spline.max_join_curvature())
        if spline is not None and len(spline.join_curvatures):
            meta["joins"] = _float_row(spline.join_curvatures)
        t2 = time.perf_counter()
        _write_path(os.path.join(out_dir, f"path-{c}.txt"), spline, meta)
        timings[f"tsp_improve_seconds_{c}"] = t1 - t0
        timings[f"optimize_seconds_{c}"] = t2 - t1
        return meta["tour_length"]

    lengths = _parallel(config, work, list(enumerate(tour_paths)))
    update_meta(out_dir, timings)
    return {"lengths": lengths}


# ---------------------------------------------------------------------------
# geometry shared by plan and render

def _drawing_size(config: PipelineConfig, meta: dict) -> tuple[float, float]:
    w_img = int(meta["image_width"])
    h_img = int(meta["image_height"])
    w_mm = float(config.canvas_width)
    h_mm = config.canvas_height
    if h_mm is None:
        h_mm = w_mm * h_img / w_img
    return w_mm, float(h_mm)


def _image_to_svg(ctrl: np.ndarray, meta: dict, size_mm) -> np.ndarray:
    """Affine map from image pixels (y down) to SVG millimeters (y down)."""
    w_img = int(meta["image_width"])
    h_img = int(meta["image_height"])
    w_mm, h_mm = size_mm
    s = min(w_mm / w_img, h_mm / h_img)
    flat = ctrl.reshape(-1, 2)
    out = np.empty_like(flat)
    out[:, 0] = (flat[:, 0] - w_img / 2.0) * s + w_mm / 2.0
    out[:, 1] = (flat[:, 1] - h_img / 2.0) * s + h_mm / 2.0
    return out.reshape(ctrl.shape)


def _svg_to_drawing(pts: np.ndarray, h_mm: float) -> np.ndarray:
    """SVG millimeters (y down) to drawing coordinates (y up)."""
    out = np.array(pts, dtype=np.float64)
    out[:, 1] = h_mm - out[:, 1]
    return out


def _load_svg_paths(config, out_dir):
    meta = read_meta(out_dir)
    size_mm = _drawing_size(config, meta)
    paths = []
    path_meta = []
    for p in _channel_files(out_dir, "path"):
        spline, m = _read_path(p)
        if spline is not None:
            ctrl = _image_to_svg(spline.control_points, meta, size_mm)
            spline = SplinePath(ctrl, spline.closed, spline.join_curvatures)
        paths.append(spline)
        path_meta.append(m)
    return paths, path_meta, meta, size_mm


def _read_plan(out_dir) -> list[SubCanvas] | None:
    path = os.path.join(out_dir, "plan.txt")
    if not os.path.exists(path):
        return None
    _, rows = read_dump(path, "plan")
    tiles = []
    for row in rows:
        x0, y0, w, h, bx, by = (float(t) for t in row.split())
        tiles.append(SubCanvas(x0=x0, y0=y0, width=w, height=h, base_offset=(bx, by)))
    return tiles


def _collect_strokes(config: PipelineConfig, out_dir):
    """Sampled pen strokes per tile per channel, in tile-local drawing mm.

    Without a plan the whole drawing is one tile at zero base offset. With
    tiles, each channel's sampled polyline is cut wherever consecutive
    samples fall in different tiles; the pen lifts there.
    """
    svg_paths, path_meta, meta, size_mm = _load_svg_paths(config, out_dir)
    w_mm, h_mm = size_mm
    tiles = _read_plan(out_dir)
    if tiles is None:
        tiles = [SubCanvas(x0=0.0, y0=0.0, width=w_mm, height=h_mm, base_offset=(0.0, 0.0))]
    nx = len({t.x0 for t in tiles})
    ny = len({t.y0 for t in tiles})
    cw, ch = tiles[0].width, tiles[0].height
    strokes = [[[] for _ in svg_paths] for _ in tiles]
    for c, spline in enumerate(svg_paths):
        if spline is None:
            continue
        pts = _svg_to_drawing(sample_path(spline, config.sample_spacing), h_mm)
        ti = np.minimum((pts[:, 0] // cw).astype(int), nx - 1).clip(0)
        tj = np.minimum((pts[:, 1] // ch).astype(int), ny - 1).clip(0)
        tile_of = tj * nx + ti
        cut = np.flatnonzero(np.diff(tile_of)) + 1
        for run in np.split(np.arange(len(pts)), cut):
            t = int(tile_of[run[0]])
            origin = np.array([tiles[t].x0, tiles[t].y0])
            strokes[t][c].append(pts[run] - origin)
    return strokes, tiles, svg_paths, path_meta, meta, size_mm


def _resolve_chain(config: PipelineConfig):
    if config.chain is None:
        raise ValueError("no kinematic chain configured")
    if config.chain in _PRESETS:
        return chain_preset(config.chain)
    return load_chain(config.chain)


def stage_plan(config: PipelineConfig, out_dir) -> dict:
    """Fit the drawing onto the arm's reachable canvas and solve joint paths.

    Requires a configured chain and, for now, a canvas plane normal along z
    so the reachability lattice can be a single axis-aligned layer on the
    plane itself.
    """
    chain = _resolve_chain(config)
    meta = read_meta(out_dir)
    if "image_width" not in meta:
        raise ValueError(f"no split artifacts in {out_dir}; run the earlier stages")
    w_mm, h_mm = _drawing_size(config, meta)
    normal = np.asarray(config.plane_normal, dtype=np.float64)
    if abs(abs(normal[2]) / np.linalg.norm(normal) - 1.0) > 1e-9:
        raise ValueError("plan requires a canvas plane normal along z")
    point = np.asarray(config.plane_point, dtype=np.float64)
    step = float(config.grid_step)
    reach = chain.max_reach()
    base = chain.base_pose[:3, 3]
    n_half = int(np.ceil(reach / step))
    grid = GridSpec(
        origin=(base[0] - n_half * step, base[1] - n_half * step, point[2]),
        spacing=step,
        counts=(2 * n_half + 1, 2 * n_half + 1, 1),
    )
    pen_quat = _pen_orientation(normal)
    reachable = reachability_map(chain, grid, orientation=pen_quat)
    canvas = fit_canvas(reachable, (point, normal), aspect=w_mm / h_mm, step=step)
    tiled = tile_canvas((w_mm, h_mm), canvas)
    rows = [
        _float_row([t.x0, t.y0, t.width, t.height, t.base_offset[0], t.base_offset[1]])
        for t in tiled.sub_canvases
    ]
    write_dump(
        os.path.join(out_dir, "plan.txt"),
        "plan",
        {
            "chain": config.chain,
            "canvas_width": repr(canvas.width),
            "canvas_height": repr(canvas.height),
            "drawing_width": repr(w_mm),
            "drawing_height": repr(h_mm),
            "center": _float_row(canvas.center),
            "grid_step": repr(step),
        },
        rows,
    )

    strokes, tiles, _, _, _, _ = _collect_strokes(config, out_dir)
    quat = canvas_orientation(canvas)
    n_waypoints = 0
    for t, tile in enumerate(tiles):
        flat_strokes = []
        tools = []
        for c, per_channel in enumerate(strokes[t]):
            for stroke in per_channel:
                world = drawing_to_world(stroke, canvas, (tile.width, tile.height))
                flat_strokes.append([ToolPose(position=p, orientation=quat) for p in world])
                tools.append(c)
        traj = pathwise_ik(
            chain,
            flat_strokes,
            q_start=chain.home,
            hover=config.hover,
            jump_threshold=config.jump_threshold,
            tool_indices=tools,
        )
        rows = [
            f"{int(traj.pen_down[i])} {int(traj.tool_index[i])} "
            + _float_row(traj.waypoints[i])
            for i in range(len(traj.waypoints))
        ]
        write_dump(
            os.path.join(out_dir, f"trajectory-{t}.txt"),
            "trajectory",
            {"dof": chain.dof, "waypoints": len(traj.waypoints)},
            rows,
        )
        n_waypoints += len(traj.waypoints)
    return {"tiles": len(tiles), "waypoints": n_waypoints}


def _pen_orientation(normal) -> np.ndarray:
    """Pen-down quaternion for a plane, before any canvas is fitted."""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    u, _ = plane_basis(n)
    z_t = -n
    y_t = np.cross(z_t, u)
    return quat_from_matrix(np.column_stack([u, y_t, z_t]))


def stage_render(config: PipelineConfig, out_dir) -> dict:
    """Emit the final artifacts: SVG, preview PNG, plotter program, stats."""
    strokes, tiles, svg_paths, path_meta, meta, size_mm = _collect_strokes(config, out_dir)
    palette = _read_palette(out_dir)
    run_meta = read_meta(out_dir)

    svg_text = emit_svg(
        svg_paths,
        palette,
        size_mm,
        out=os.path.join(out_dir, "drawing.svg"),
        stroke_width=config.stroke_width,
    )
    preview = render_preview(
        svg_paths,
        palette,
        config.preview_width,
        size=size_mm,
        stroke_width=config.stroke_width,
    )
    save_png(preview, os.path.join(out_dir, "preview.png"))
    program = emit_plotter_program(
        strokes,
        [t.base_offset for t in tiles],
        out=os.path.join(out_dir, "program.txt"),
    )

    w_img = int(meta["image_width"])
    h_img = int(meta["image_height"])
    scale = min(size_mm[0] / w_img, size_mm[1] / h_img)
    channels = []
    for c, m in enumerate(path_meta):
        pts = _read_points(os.path.join(out_dir, f"points-{c}.txt"))
        entry = {
            "point_count": len(pts),
            "tour_length_mm": float(m.get("tour_length", 0.0)) * scale,
            "vertices_pre": int(m.get("vertices_pre", 0)),
            "vertices_post": int(m.get("vertices_post", 0)),
            "max_join_curvature": float(m.get("max_join_curvature", 0.0)),
            "handle_scale": float(m.get("handle_scale", 1.0)),
            "stipple_seconds": float(run_meta.get(f"stipple_seconds_{c}", 0.0)),
            "tsp_seconds": float(run_meta.get(f"tsp_construct_seconds_{c}", 0.0))
            + float(run_meta.get(f"tsp_improve_seconds_{c}", 0.0)),
            "optimize_seconds": float(run_meta.get(f"optimize_seconds_{c}", 0.0)),
        }
        channels.append(entry)
    report = StatsReport(channels=channels)
    report.compute_totals()
    emit_stats(report, out=os.path.join(out_dir, "stats.txt"))
    return {
        "svg_bytes": len(svg_text),
        "instructions": len(program.instructions),
        "channels": len(channels),
    }


STAGES = {
    "split": stage_split,
    "stipple": stage_stipple,
    "tour": stage_tour,
    "optimize": stage_optimize,
    "plan": stage_plan,
    "render": stage_render,
}


def run_pipeline(config: PipelineConfig, out_dir) -> dict:
    """All stages in order; the plan stage runs only when a chain is set."""
    results = {}
    for name in ("split", "stipple", "tour", "optimize"):
        results[name] = STAGES[name](config, out_dir)
    if config.chain is not None:
        results["plan"] = STAGES["plan"](config, out_dir)
    results["render"] = STAGES["render"](config, out_dir)
    return results
