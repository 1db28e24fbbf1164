"""Raster image loading and separation into per-pen ink density fields.

A density field holds one value per pixel in [0, 1]: how much ink the
assigned pen should deposit there. Fields come either from a fixed CMYK
decomposition or from a k-means palette fit to the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

# Canonical pen colors for the CMYK split, as sRGB triples.
CMYK_COLORS = (
    (0.0, 1.0, 1.0),  # cyan
    (1.0, 0.0, 1.0),  # magenta
    (1.0, 1.0, 0.0),  # yellow
    (0.0, 0.0, 0.0),  # black
)

# Rec. 709 luma weights, applied directly to the stored sRGB components.
_LUMA = np.array([0.2126, 0.7152, 0.0722])

KMEANS_MAX_ITER = 100


@dataclass
class RasterImage:
    """Decoded color image, row-major sRGB triples in [0, 1]."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) float64

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image has zero dimension")
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel array shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        if np.min(self.pixels) < 0.0 or np.max(self.pixels) > 1.0:
            raise ValueError("pixel components must lie in [0, 1]")


@dataclass
class DensityField:
    """Scalar ink density per pixel for one pen.

    ``values[row][col]`` is the density at the pixel whose center sits at
    ``(col + 0.5, row + 0.5)`` in field coordinates. ``channel_color`` is the
    pen color as an sRGB triple and ``channel_index`` its position in the
    palette.
    """

    width: int
    height: int
    values: np.ndarray  # (height, width) float64 in [0, 1]
    channel_color: tuple[float, float, float]
    channel_index: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.height, self.width):
            raise ValueError(
                f"value array shape {self.values.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if np.min(self.values) < -1e-12 or np.max(self.values) > 1.0 + 1e-12:
            raise ValueError("density values must lie in [0, 1]")
        self.values = np.clip(self.values, 0.0, 1.0)

    def pixel_centers(self) -> np.ndarray:
        """Pixel center coordinates, flattened row-major, shape (W*H, 2)."""
        cols, rows = np.meshgrid(np.arange(self.width), np.arange(self.height))
        return np.column_stack([cols.ravel() + 0.5, rows.ravel() + 0.5]).astype(float)


@dataclass
class Palette:
    """Ordered pen colors plus the separation that produced them."""

    colors: tuple[tuple[float, float, float], ...]
    origin: str  # "cmyk" or "kmeans"

    def __post_init__(self):
        if len(self.colors) < 1:
            raise ValueError("palette must contain at least one color")
        for c in self.colors:
            if len(c) != 3 or min(c) < 0.0 or max(c) > 1.0:
                raise ValueError(f"palette color {c} outside sRGB unit cube")
        if self.origin not in ("cmyk", "kmeans"):
            raise ValueError(f"unknown palette origin {self.origin!r}")


def load_image(path) -> RasterImage:
    """Decode a PNG or JPEG file into a normalized RasterImage.

    Raises ValueError("unsupported format") when the file cannot be decoded
    as an image.
    """
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError("unsupported format") from exc
    h, w = arr.shape[0], arr.shape[1]
    if w == 0 or h == 0:
        raise ValueError("image has zero dimension")
    return RasterImage(width=w, height=h, pixels=arr)


def box_downscale(image: RasterImage, max_dim: int) -> RasterImage:
    """Downscale with a box filter so that max(width, height) <= max_dim.

    Images already within the bound are returned unchanged.
    """
    if max_dim < 1:
        raise ValueError("max_dim must be positive")
    longest = max(image.width, image.height)
    if longest <= max_dim:
        return image
    scale = max_dim / longest
    w2 = max(1, round(image.width * scale))
    h2 = max(1, round(image.height * scale))
    channels = []
    for c in range(3):
        band = Image.fromarray(image.pixels[:, :, c].astype(np.float32), mode="F")
        band = band.resize((w2, h2), Image.Resampling.BOX)
        channels.append(np.asarray(band, dtype=np.float64))
    pixels = np.clip(np.stack(channels, axis=-1), 0.0, 1.0)
    return RasterImage(width=w2, height=h2, pixels=pixels)


def split_cmyk(image: RasterImage) -> tuple[list[DensityField], Palette]:
    """Separate an image into cyan, magenta, yellow, black density fields.

    Per pixel: K = 1 - max(r, g, b), and each chromatic component is the
    residual after removing K, normalized by 1 - K. A fully black pixel has
    zero chromatic ink. No under-color removal beyond the K extraction is
    applied.
    """
    r = image.pixels[:, :, 0]
    g = image.pixels[:, :, 1]
    b = image.pixels[:, :, 2]
    k = 1.0 - np.maximum(np.maximum(r, g), b)
    denom = 1.0 - k
    safe = np.where(denom > 1e-12, denom, 1.0)
    c = np.where(denom > 1e-12, (1.0 - r - k) / safe, 0.0)
    m = np.where(denom > 1e-12, (1.0 - g - k) / safe, 0.0)
    y = np.where(denom > 1e-12, (1.0 - b - k) / safe, 0.0)
    planes = [c, m, y, k]
    fields = [
        DensityField(
            width=image.width,
            height=image.height,
            values=np.clip(plane, 0.0, 1.0),
            channel_color=CMYK_COLORS[i],
            channel_index=i,
        )
        for i, plane in enumerate(planes)
    ]
    return fields, Palette(colors=CMYK_COLORS, origin="cmyk")


def cmyk_to_rgb(c, m, y, k):
    """Invert the CMYK split: r = (1-C)(1-K), likewise for g and b."""
    return (
        (1.0 - np.asarray(c)) * (1.0 - np.asarray(k)),
        (1.0 - np.asarray(m)) * (1.0 - np.asarray(k)),
        (1.0 - np.asarray(y)) * (1.0 - np.asarray(k)),
    )


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec. 709 luma of sRGB values, shape (..., 3) -> (...)."""
    return np.asarray(rgb) @ _LUMA


def kmeans_pp_init(pixels: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ center selection over an (N, 3) pixel array."""
    n = pixels.shape[0]
    centers = np.empty((k, 3), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = pixels[first]
    d2 = np.sum((pixels - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # all remaining mass identical: reuse an arbitrary pixel
            centers[i] = pixels[int(rng.integers(n))]
            continue
        probs = d2 / total
        choice = int(rng.choice(n, p=probs))
        centers[i] = pixels[choice]
        d2 = np.minimum(d2, np.sum((pixels - centers[i]) ** 2, axis=1))
    return centers


def split_kmeans(
    image: RasterImage, k: int, seed: int
) -> tuple[list[DensityField], Palette]:
    """Separate an image into k density fields by clustering pixel colors.

    Lloyd iterations run from a seeded k-means++ init until assignments stop
    changing or KMEANS_MAX_ITER is hit. Field i is nonzero exactly on pixels
    assigned to cluster i; the value is the luminance ratio
    (1 - lum(pixel)) / (1 - lum(center)), clamped to [0, 1], so darker
    pixels within a cluster ask for more ink. A cluster whose center is
    white carries no ink at all.
    """
    n_pixels = image.width * image.height
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n_pixels:
        raise ValueError(f"k={k} exceeds pixel count {n_pixels}")
    flat = image.pixels.reshape(-1, 3)
    rng = np.random.default_rng(seed)
    centers = kmeans_pp_init(flat, k, rng)

    assign = np.full(n_pixels, -1, dtype=np.int64)
    for _ in range(KMEANS_MAX_ITER):
        # argmin breaks distance ties toward the lowest cluster index
        d2 = np.sum((flat[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for i in range(k):
            members = flat[assign == i]
            if len(members) > 0:
                centers[i] = members.mean(axis=0)
            # empty cluster keeps its previous center

    fields = []
    lum_pix = luminance(flat)
    for i in range(k):
        lum_c = float(luminance(centers[i]))
        values = np.zeros(n_pixels, dtype=np.float64)
        mask = assign == i
        if 1.0 - lum_c > 1e-9:
            ratio = (1.0 - lum_pix[mask]) / (1.0 - lum_c)
            values[mask] = np.clip(ratio, 0.0, 1.0)
        fields.append(
            DensityField(
                width=image.width,
                height=image.height,
                values=values.reshape(image.height, image.width),
                channel_color=tuple(np.clip(centers[i], 0.0, 1.0)),
                channel_index=i,
            )
        )
    palette = Palette(colors=tuple(f.channel_color for f in fields), origin="kmeans")
    return fields, palette


def density_at(field: DensityField, p) -> float:
    """Bilinearly interpolated density at a continuous point.

    p must lie inside [0, width] x [0, height]; values are exact at pixel
    centers and clamped to the edge value within the half-pixel border.
    """
    x, y = float(p[0]), float(p[1])
    if not (0.0 <= x <= field.width and 0.0 <= y <= field.height):
        raise ValueError(f"point ({x}, {y}) outside field bounds")
    # shift so integers land on pixel centers, then clamp the border band
    fx = min(max(x - 0.5, 0.0), field.width - 1.0)
    fy = min(max(y - 0.5, 0.0), field.height - 1.0)
    x0 = int(np.floor(fx))
    y0 = int(np.floor(fy))
    x1 = min(x0 + 1, field.width - 1)
    y1 = min(y0 + 1, field.height - 1)
    tx = fx - x0
    ty = fy - y0
    v = field.values
    top = v[y0, x0] * (1.0 - tx) + v[y0, x1] * tx
    bot = v[y1, x0] * (1.0 - tx) + v[y1, x1] * tx
    return float(top * (1.0 - ty) + bot * ty)
