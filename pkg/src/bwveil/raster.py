"""Raster primitives for lesion borders and masks.

Images and masks are immutable row-major numpy arrays wrapped in thin
dataclasses; all coordinates are (row, col). The border pipeline turns a
hand-picked control polygon into a filled lesion mask: the polygon is
interpolated with a closed quadratic uniform B-spline, rasterized as an
8-connected loop, and filled by flooding the exterior from the image frame.
Ring extraction ranks background pixels by exact Euclidean distance to the
lesion so area quotas are hit exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from PIL import Image
from scipy import ndimage

from ._io import atomic_pil


class RasterError(ValueError):
    """Invalid raster input: bad curve, empty mask, out-of-range window..."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit color raster, pixels shaped (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.array(self.pixels, dtype=np.uint8, copy=True)
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise RasterError("image pixels must be a (height, width, 3) uint8 array")
        object.__setattr__(self, "pixels", _frozen(p))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean raster aligned with the image it annotates."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.array(self.bits, dtype=bool, copy=True)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise RasterError("mask bits must be a 2-D boolean array")
        object.__setattr__(self, "bits", _frozen(b))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True, eq=False)
class ControlPolygon:
    """Ordered loop of at least 3 (row, col) border control points."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise RasterError("control polygon needs at least 3 (row, col) points")
        nxt = np.roll(pts, -1, axis=0)
        if np.any(np.all(pts == nxt, axis=1)):
            raise RasterError("control polygon has consecutive duplicate points")
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Per-pixel exact Euclidean distance to the nearest foreground pixel."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2:
            raise RasterError("distance field must be 2-D")
        object.__setattr__(self, "values", _frozen(v))


class RingPair(NamedTuple):
    skip_ring: BinaryMask
    sample_ring: BinaryMask
    truncated: bool


# ---------------------------------------------------------------------------
# Border curve
# ---------------------------------------------------------------------------

def spline_close(poly: ControlPolygon, samples_per_segment: int) -> np.ndarray:
    """Sample the closed quadratic uniform B-spline through a control loop.

    Returns an (n_segments * samples_per_segment + 1, 2) float array of
    (row, col) samples; the last sample repeats the first so the curve is
    closed exactly. Every sample is a convex combination of three
    consecutive control points, so the curve never leaves the control
    polygon's convex hull.
    """
    if samples_per_segment < 1:
        raise RasterError("samples_per_segment must be >= 1")
    pts = poly.points
    n = len(pts)
    t = np.arange(samples_per_segment, dtype=float) / samples_per_segment
    b0 = 0.5 * (1.0 - t) ** 2
    b1 = 0.5 * (-2.0 * t * t + 2.0 * t + 1.0)
    b2 = 0.5 * t * t
    segments = []
    for i in range(n):
        p0, p1, p2 = pts[i], pts[(i + 1) % n], pts[(i + 2) % n]
        segments.append(b0[:, None] * p0 + b1[:, None] * p1 + b2[:, None] * p2)
    curve = np.concatenate(segments, axis=0)
    return np.concatenate([curve, curve[:1]], axis=0)


def _draw_segment(grid: np.ndarray, r0: int, c0: int, r1: int, c1: int) -> None:
    # Bresenham, all octants; marks an 8-connected chain of pixels.
    dr = abs(r1 - r0)
    dc = -abs(c1 - c0)
    sr = 1 if r0 < r1 else -1
    sc = 1 if c0 < c1 else -1
    err = dr + dc
    while True:
        grid[r0, c0] = True
        if r0 == r1 and c0 == c1:
            return
        e2 = 2 * err
        if e2 >= dc:
            err += dc
            r0 += sr
        if e2 <= dr:
            err += dr
            c0 += sc


def rasterize_filled(curve: np.ndarray, width: int, height: int) -> BinaryMask:
    """Rasterize a closed curve and fill its interior.

    The curve samples are rounded to pixels and joined into an 8-connected
    loop, so the interior is sealed; the exterior is then flooded
    (4-connected) from every background pixel on the image frame, and the
    mask is everything the flood did not reach. Curves that leave the
    image, open curves, and loops that enclose no interior pixel are
    rejected.
    """
    curve = np.asarray(curve, dtype=float)
    if curve.ndim != 2 or curve.shape[1] != 2 or curve.shape[0] < 4:
        raise RasterError("curve must be an (n, 2) array with n >= 4")
    if width < 1 or height < 1:
        raise RasterError("target raster must be at least 1x1")
    if not np.all(np.abs(curve[0] - curve[-1]) <= 1e-6):
        raise RasterError("open curve: first and last samples differ")
    rc = np.floor(curve + 0.5).astype(np.int64)  # round half up, deterministic
    if (rc[:, 0].min() < 0 or rc[:, 0].max() >= height
            or rc[:, 1].min() < 0 or rc[:, 1].max() >= width):
        raise RasterError(
            "curve leaves the image bounds; interior/exterior is ambiguous")
    on = np.zeros((height, width), dtype=bool)
    for (r0, c0), (r1, c1) in zip(rc[:-1], rc[1:]):
        _draw_segment(on, int(r0), int(c0), int(r1), int(c1))
    background = ~on
    seeds = np.zeros_like(background)
    seeds[0, :] = seeds[-1, :] = True
    seeds[:, 0] = seeds[:, -1] = True
    seeds &= background
    if seeds.any():
        exterior = ndimage.binary_propagation(seeds, mask=background)
    else:
        # Loop hugs the full frame; everything inside it is interior.
        exterior = np.zeros_like(background)
    fg = ~exterior
    if not (fg & ~on).any():
        raise RasterError("degenerate loop: the curve encloses no interior pixels")
    return BinaryMask(fg)


def polygon_to_mask(poly: ControlPolygon, width: int, height: int,
                    samples_per_segment: int | None = None) -> BinaryMask:
    """Border control points -> filled lesion mask.

    Sampling density defaults to 2 samples per pixel of the longest polygon
    edge, keeping adjacent curve samples within ~0.5 px so the rasterized
    loop is sealed.
    """
    if samples_per_segment is None:
        closed = np.vstack([poly.points, poly.points[:1]])
        edges = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        samples_per_segment = max(8, int(math.ceil(2.0 * float(edges.max()))))
    return rasterize_filled(spline_close(poly, samples_per_segment), width, height)


# ---------------------------------------------------------------------------
# Distance field and rings
# ---------------------------------------------------------------------------

def distance_field(mask: BinaryMask) -> DistanceField:
    """Exact Euclidean distance to the nearest foreground pixel (0 on it)."""
    if mask.count == 0:
        raise RasterError("distance field of an empty mask is undefined")
    return DistanceField(ndimage.distance_transform_edt(~mask.bits))


def outer_rings(lesion: BinaryMask, skip_fraction: float = 0.10,
                take_fraction: float = 0.20) -> RingPair:
    """Split the background nearest the lesion into skip and sample rings.

    Background pixels are ranked by ascending distance to the lesion (ties
    broken by row-major order); the first floor(skip_fraction * area)
    pixels form the skip ring and the next floor(take_fraction * area) the
    sample ring. Rings are truncated (and flagged) when the image has too
    few background pixels.
    """
    if lesion.count == 0:
        raise RasterError("outer rings of an empty lesion are undefined")
    if skip_fraction < 0 or take_fraction <= 0:
        raise RasterError("skip_fraction must be >= 0 and take_fraction > 0")
    area = lesion.count
    dist = distance_field(lesion).values.ravel()
    bg_idx = np.nonzero(~lesion.bits.ravel())[0]  # row-major
    order = bg_idx[np.argsort(dist[bg_idx], kind="stable")]
    n_skip = math.floor(skip_fraction * area)
    n_take = math.floor(take_fraction * area)
    truncated = order.size < n_skip + n_take
    skip_flat = order[:n_skip]
    take_flat = order[n_skip:n_skip + n_take]
    shape = lesion.shape
    skip = np.zeros(shape[0] * shape[1], dtype=bool)
    skip[skip_flat] = True
    take = np.zeros_like(skip)
    take[take_flat] = True
    return RingPair(BinaryMask(skip.reshape(shape)),
                    BinaryMask(take.reshape(shape)),
                    bool(truncated))


# ---------------------------------------------------------------------------
# Mask filtering and boundaries
# ---------------------------------------------------------------------------

def _window_sums(padded: np.ndarray, window: int) -> np.ndarray:
    c = padded.cumsum(axis=0, dtype=np.int64).cumsum(axis=1, dtype=np.int64)
    c = np.pad(c, ((1, 0), (1, 0)))
    return (c[window:, window:] - c[:-window, window:]
            - c[window:, :-window] + c[:-window, :-window])


def majority_filter(mask: BinaryMask, window: int = 5) -> BinaryMask:
    """Replace each pixel with the majority label of its window.

    Borders are handled by replicating edge pixels so every neighborhood
    casts window**2 votes; with an odd window, ties cannot occur.
    """
    if window % 2 == 0 or window < 3:
        raise RasterError("majority filter window must be odd and >= 3")
    r = window // 2
    padded = np.pad(mask.bits, r, mode="edge").astype(np.int64)
    counts = _window_sums(padded, window)
    return BinaryMask(2 * counts > window * window)


def boundary_pixels(mask: BinaryMask) -> np.ndarray:
    """Inner boundary under 4-adjacency, as a (P, 2) row-major array.

    A foreground pixel is on the boundary when at least one 4-neighbor is
    background or lies outside the image.
    """
    if mask.count == 0:
        raise RasterError("boundary of an empty mask is undefined")
    b = mask.bits
    padded = np.pad(b, 1)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1]
                & padded[1:-1, :-2] & padded[1:-1, 2:])
    return np.argwhere(b & ~interior)


# ---------------------------------------------------------------------------
# File formats: PNG / binary PPM for images, PGM / PNG for masks
# ---------------------------------------------------------------------------

def read_image(path) -> RgbImage:
    with Image.open(path) as im:
        return RgbImage(np.asarray(im.convert("RGB")))


def write_image(image: RgbImage, path) -> None:
    atomic_pil(path, Image.fromarray(image.pixels, mode="RGB"))


def read_mask(path) -> BinaryMask:
    with Image.open(path) as im:
        gray = np.asarray(im.convert("L"))
    return BinaryMask(gray >= 128)


def write_mask(mask: BinaryMask, path) -> None:
    gray = np.where(mask.bits, np.uint8(255), np.uint8(0))
    atomic_pil(path, Image.fromarray(gray, mode="L"))
