"""Drawing outputs: layered SVG, raster preview, plotter program, stats.

All emitters are deterministic: the same inputs produce byte-identical
files, so artifacts can be diffed across runs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from .imaging import Palette, RasterImage
from .pathopt import SplinePath, sample_path

# Plotter instruction set: TOOL n | PENUP | PENDOWN | MOVE x y | BASE dx dy.
# Coordinates are millimeters in the current tile frame, three decimals.


@dataclass
class PlotterProgram:
    instructions: list[tuple]

    def to_text(self) -> str:
        lines = []
        for ins in self.instructions:
            op = ins[0]
            if op in ("PENUP", "PENDOWN"):
                lines.append(op)
            elif op == "TOOL":
                lines.append(f"TOOL {int(ins[1])}")
            elif op in ("MOVE", "BASE"):
                lines.append(f"{op} {ins[1]:.3f} {ins[2]:.3f}")
            else:
                raise ValueError(f"unknown instruction {op!r}")
        return "".join(line + "\n" for line in lines)


def parse_program(text: str) -> PlotterProgram:
    """Inverse of PlotterProgram.to_text, for verification and tooling."""
    out: list[tuple] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split()
        if not parts:
            continue
        op = parts[0]
        if op in ("PENUP", "PENDOWN") and len(parts) == 1:
            out.append((op,))
        elif op == "TOOL" and len(parts) == 2:
            out.append(("TOOL", int(parts[1])))
        elif op in ("MOVE", "BASE") and len(parts) == 3:
            out.append((op, float(parts[1]), float(parts[2])))
        else:
            raise ValueError(f"program line {ln}: cannot parse {raw!r}")
    return PlotterProgram(out)


@dataclass
class StatsReport:
    """Per-channel metrics plus totals over the additive ones."""

    channels: list[dict]
    totals: dict = field(default_factory=dict)

    SUMMABLE = (
        "point_count",
        "tour_length_mm",
        "vertices_pre",
        "vertices_post",
        "stipple_seconds",
        "tsp_seconds",
        "optimize_seconds",
    )

    def compute_totals(self) -> None:
        self.totals = {}
        for key in self.SUMMABLE:
            if any(key in ch for ch in self.channels):
                self.totals[key] = sum(ch.get(key, 0) for ch in self.channels)


def emit_stats(report: StatsReport, out=None) -> str:
    """Key-value stats text: one line per metric, channels then totals."""
    lines = []
    for i, ch in enumerate(report.channels):
        for key in sorted(ch):
            lines.append(f"channel.{i}.{key} = {ch[key]}")
    for key in sorted(report.totals):
        lines.append(f"total.{key} = {report.totals[key]}")
    text = "".join(line + "\n" for line in lines)
    if out is not None:
        with open(out, "w") as fh:
            fh.write(text)
    return text


def parse_stats(text: str) -> StatsReport:
    channels: dict[int, dict] = {}
    totals: dict = {}
    for raw in text.splitlines():
        if not raw.strip():
            continue
        key, _, value = raw.partition(" = ")
        val = float(value) if ("." in value or "e" in value) else int(value)
        if key.startswith("channel."):
            _, idx, metric = key.split(".", 2)
            channels.setdefault(int(idx), {})[metric] = val
        elif key.startswith("total."):
            totals[key.split(".", 1)[1]] = val
        else:
            raise ValueError(f"stats line not understood: {raw!r}")
    chans = [channels[i] for i in sorted(channels)]
    return StatsReport(channels=chans, totals=totals)


def _hex_color(rgb) -> str:
    return "#" + "".join(f"{round(float(c) * 255):02x}" for c in rgb)


def emit_svg(
    paths: list[SplinePath | None],
    palette: Palette,
    size: tuple[float, float],
    out=None,
    stroke_width: float = 0.5,
) -> str:
    """Layered SVG: one group per palette color, one path per group.

    Coordinates are written verbatim (SVG y-down convention, millimeter
    units) with full float precision so a parse recovers the exact control
    points. Channels with no path get an empty group.
    """
    if len(paths) != len(palette.colors):
        raise ValueError("one path slot per palette color required")
    w, h = float(size[0]), float(size[1])
    lines = [
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{w!r}mm" height="{h!r}mm" viewBox="0 0 {w!r} {h!r}">'
    ]
    for i, (path, color) in enumerate(zip(paths, palette.colors)):
        lines.append(
            f'<g id="channel-{i}" fill="none" stroke="{_hex_color(color)}" '
            f'stroke-width="{stroke_width!r}" stroke-linecap="round" '
            'stroke-linejoin="round">'
        )
        if path is not None and len(path.control_points) > 0:
            ctrl = path.control_points
            gaps = np.linalg.norm(ctrl[1:, 0] - ctrl[:-1, 3], axis=1)
            if len(gaps) and float(gaps.max()) > 1e-9:
                raise ValueError(f"channel {i} path is not C0-continuous")
            parts = [f"M {float(ctrl[0, 0, 0])!r} {float(ctrl[0, 0, 1])!r}"]
            for seg in ctrl:
                coords = " ".join(repr(float(v)) for v in seg[1:].reshape(6))
                parts.append(f"C {coords}")
            if path.closed:
                parts.append("Z")
            lines.append(f'<path d="{" ".join(parts)}"/>')
        lines.append("</g>")
    lines.append("</svg>")
    text = "".join(line + "\n" for line in lines)
    if out is not None:
        with open(out, "w") as fh:
            fh.write(text)
    return text


def parse_svg(text: str) -> list[dict]:
    """Recover per-channel stroke color and Bezier control points."""
    groups = []
    for gm in re.finditer(r'<g id="channel-(\d+)"[^>]*stroke="([^"]+)"[^>]*>(.*?)</g>', text, re.S):
        color = gm.group(2)
        body = gm.group(3)
        entry = {"color": color, "control_points": None, "closed": False}
        pm = re.search(r'<path d="([^"]+)"/>', body)
        if pm:
            d = pm.group(1)
            entry["closed"] = d.rstrip().endswith("Z")
            tokens = d.replace("Z", "").split()
            assert tokens[0] == "M"
            cur = np.array([float(tokens[1]), float(tokens[2])])
            segs = []
            k = 3
            while k < len(tokens):
                assert tokens[k] == "C"
                vals = [float(t) for t in tokens[k + 1 : k + 7]]
                p1 = vals[0:2]
                p2 = vals[2:4]
                p3 = vals[4:6]
                segs.append([cur.tolist(), p1, p2, p3])
                cur = np.array(p3)
                k += 7
            entry["control_points"] = np.array(segs)
        groups.append(entry)
    return groups


def render_preview(
    paths: list[SplinePath | None],
    palette: Palette,
    width_px: int,
    size: tuple[float, float] | None = None,
    stroke_width: float = 0.5,
) -> RasterImage:
    """Composite all channels multiplicatively over white.

    Ink layers multiply like transparent pigments, so overlapping strokes
    darken. Degenerate zero-length segments render as dots.
    """
    if width_px < 16:
        raise ValueError("width_px must be at least 16")
    if len(paths) != len(palette.colors):
        raise ValueError("one path slot per palette color required")
    if size is None:
        boxes = [
            p.control_points.reshape(-1, 2)
            for p in paths
            if p is not None and len(p.control_points)
        ]
        if boxes:
            allpts = np.vstack(boxes)
            size = (
                max(float(allpts[:, 0].max()), 1e-6),
                max(float(allpts[:, 1].max()), 1e-6),
            )
        else:
            size = (1.0, 1.0)
    w_mm, h_mm = float(size[0]), float(size[1])
    height_px = max(1, round(width_px * h_mm / w_mm))
    ss = 2  # supersampling factor for antialiasing
    big_w, big_h = width_px * ss, height_px * ss
    px_per_mm = big_w / w_mm
    pen_px = max(1, round(stroke_width * px_per_mm))
    spacing = max(0.75 / px_per_mm, stroke_width / 2.0)

    result = np.ones((height_px, width_px, 3), dtype=np.float64)
    for path, color in zip(paths, palette.colors):
        if path is None or len(path.control_points) == 0:
            continue
        layer = Image.new("RGB", (big_w, big_h), (255, 255, 255))
        draw = ImageDraw.Draw(layer)
        rgb = tuple(round(float(c) * 255) for c in color)
        ctrl = path.control_points
        flat = np.linalg.norm(ctrl - ctrl[:, :1], axis=2).max(axis=1)
        if float(flat.max()) <= 1e-12:
            # all segments degenerate: a single dot
            cx, cy = ctrl[0, 0] * px_per_mm
            r = pen_px / 2.0
            draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=rgb)
        else:
            pts = sample_path(path, spacing) * px_per_mm
            draw.line([tuple(p) for p in pts], fill=rgb, width=pen_px, joint="curve")
        small = layer.resize((width_px, height_px), Image.Resampling.BOX)
        result *= np.asarray(small, dtype=np.float64) / 255.0
    return RasterImage(width=width_px, height=height_px, pixels=np.clip(result, 0.0, 1.0))


def save_png(image: RasterImage, path) -> None:
    arr = np.clip(np.round(image.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def emit_plotter_program(
    tiles: list[list[list[np.ndarray]]],
    base_offsets: list[np.ndarray],
    tool_order: list[int] | None = None,
    out=None,
) -> PlotterProgram:
    """Assemble the instruction stream for a (possibly tiled) drawing.

    tiles[t][c] is the list of strokes for channel c inside tile t, each an
    (K, 2) array in tile-local millimeters. base_offsets[t] is tile t's
    planar base position; a BASE instruction with the successive delta is
    emitted between tiles. Channels without strokes are skipped; an entirely
    empty drawing yields an empty program.
    """
    if len(tiles) != len(base_offsets):
        raise ValueError("one base offset per tile required")
    has_content = any(
        len(stroke) > 0 for tile in tiles for channel in tile for stroke in channel
    )
    if not has_content:
        return PlotterProgram([])
    n_channels = max(len(tile) for tile in tiles)
    if tool_order is None:
        tool_order = list(range(n_channels))
    ins: list[tuple] = []
    for t, tile in enumerate(tiles):
        if t > 0:
            delta = np.asarray(base_offsets[t]) - np.asarray(base_offsets[t - 1])
            ins.append(("BASE", float(delta[0]), float(delta[1])))
        for c in tool_order:
            strokes = tile[c] if c < len(tile) else []
            strokes = [s for s in strokes if len(s) > 0]
            if not strokes:
                continue
            ins.append(("TOOL", c))
            for stroke in strokes:
                ins.append(("PENUP",))
                ins.append(("MOVE", float(stroke[0][0]), float(stroke[0][1])))
                ins.append(("PENDOWN",))
                for p in stroke[1:]:
                    ins.append(("MOVE", float(p[0]), float(p[1])))
            ins.append(("PENUP",))
    program = PlotterProgram(ins)
    if out is not None:
        with open(out, "w") as fh:
            fh.write(program.to_text())
    return program
