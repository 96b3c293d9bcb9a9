"""Per-pixel color and texture features with contextual median smoothing.

Eighteen features per pixel: chromaticity coordinates (F1-F3), ratios and
differences of the pixel color against the average background skin color
(F4-F15), and three co-occurrence texture statistics of the 5x5 luminance
neighborhood (F16 entropy, F17 contrast, F18 correlation, each averaged
over the four displacement directions). Each feature plane is then
replaced by its 5x5 median so a pixel's value reflects its context.

The 25-value median runs on a minimum-exchange network (a partial sort)
rather than a full sort; the network below is verified in the test suite
against every one of the 2**25 binary inputs, which by the 0/1 principle
proves it for all real inputs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import raster
from ._io import atomic_bytes, atomic_text
from .annotate import PixelSample
from .raster import BinaryMask, RgbImage

FEATURE_IDS = tuple(range(1, 19))
FEATURE_NAMES = tuple(f"F{i}" for i in FEATURE_IDS)
CSV_HEADER = ("image_id", "row", "col", "label") + FEATURE_NAMES

CHROMATICITY = (1, 2, 3)
RELATIVE_RATIO = (4, 5, 6)
NORM_RELATIVE_RATIO = (7, 8, 9)
RELATIVE_DIFF = (10, 11, 12)
NORM_RELATIVE_DIFF = (13, 14, 15)
TEXTURE = (16, 17, 18)

_DIRECTIONS = {0: (0, 1), 45: (-1, 1), 90: (-1, 0), 135: (-1, -1)}
_DEGENERATE_EPS = 1e-9


class FeatureError(ValueError):
    """Invalid feature-extraction input."""


class _Counter:
    """Counts GLCM evaluations; lets tests assert lazy extraction."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, n: int = 1) -> None:
        self.count += n

    def reset(self) -> None:
        self.count = 0


TEXTURE_EVALS = _Counter()


@dataclass(frozen=True)
class SkinColor:
    """Average background skin color (channel means in 0..255)."""

    r: float
    g: float
    b: float

    def __post_init__(self):
        for name, v in (("r", self.r), ("g", self.g), ("b", self.b)):
            if not 0.0 <= v <= 255.0:
                raise FeatureError(f"skin color channel {name}={v} outside 0..255")


# ---------------------------------------------------------------------------
# Skin rule and background color
# ---------------------------------------------------------------------------

def is_skin_pixel(r: float, g: float, b: float) -> bool:
    """Empirical rule excluding frames, rulers, hairs and bubbles."""
    return r > 90 and r > b and r > g


def _skin_mask(pixels: np.ndarray) -> np.ndarray:
    r = pixels[..., 0].astype(np.int64)
    g = pixels[..., 1].astype(np.int64)
    b = pixels[..., 2].astype(np.int64)
    return (r > 90) & (r > b) & (r > g)


def background_skin_color(image: RgbImage, lesion: BinaryMask,
                          skip_fraction: float = 0.10,
                          take_fraction: float = 0.20) -> SkinColor:
    """Mean color of skin-rule pixels in the sample ring outside the lesion.

    The ring nearest the border (skip ring) is left out to avoid peripheral
    inflammation and border-placement error; only the next ring out
    contributes.
    """
    if image.shape != lesion.shape:
        raise FeatureError("image and lesion mask dimensions differ")
    rings = raster.outer_rings(lesion, skip_fraction, take_fraction)
    keep = rings.sample_ring.bits & _skin_mask(image.pixels)
    if not keep.any():
        raise FeatureError(
            "no skin-colored pixels in the sample ring; widen the ring "
            "fractions or supply the background skin color manually")
    means = image.pixels[keep].astype(np.float64).mean(axis=0)
    return SkinColor(float(means[0]), float(means[1]), float(means[2]))


# ---------------------------------------------------------------------------
# Color features F1..F15
# ---------------------------------------------------------------------------

def color_features(pixel, skin: SkinColor, flags: set | None = None) -> tuple:
    """All fifteen color features of one pixel against the skin color.

    Degenerate denominators fall back to (1/3, 1/3, 1/3): a black pixel for
    the chromaticity and ratio triples, and a vanishing F10+F11+F12 for the
    normalized differences. When a `flags` set is passed, the fallbacks
    taken are recorded in it.
    """
    r, g, b = (float(v) for v in pixel)
    s = r + g + b
    if s == 0.0:
        f1 = f2 = f3 = 1.0 / 3.0
        if flags is not None:
            flags.add("chromaticity_fallback")
    else:
        f1, f2, f3 = r / s, g / s, b / s
    # Ratio denominators clamped to >= 1: a channel mean of 0 never occurs
    # on real skin and would make F4..F6 undefined.
    rs, gs, bs = max(skin.r, 1.0), max(skin.g, 1.0), max(skin.b, 1.0)
    f4, f5, f6 = r / rs, g / gs, b / bs
    sr = f4 + f5 + f6
    if sr == 0.0:
        f7 = f8 = f9 = 1.0 / 3.0
        if flags is not None:
            flags.add("ratio_fallback")
    else:
        f7, f8, f9 = f4 / sr, f5 / sr, f6 / sr
    f10, f11, f12 = r - skin.r, g - skin.g, b - skin.b
    d = f10 + f11 + f12
    if abs(d) < _DEGENERATE_EPS:
        f13 = f14 = f15 = 1.0 / 3.0
        if flags is not None:
            flags.add("difference_fallback")
    else:
        f13, f14, f15 = f10 / d, f11 / d, f12 / d
    return (f1, f2, f3, f4, f5, f6, f7, f8, f9, f10, f11, f12, f13, f14, f15)


def _color_planes(pixels: np.ndarray, skin: SkinColor
                  ) -> tuple[dict[int, np.ndarray], np.ndarray, np.ndarray]:
    """Vectorized color planes for a whole frame.

    Returns ({feature_id: plane}, chroma_fallback_mask, diff_fallback_mask).
    """
    r = pixels[..., 0].astype(np.float64)
    g = pixels[..., 1].astype(np.float64)
    b = pixels[..., 2].astype(np.float64)
    planes: dict[int, np.ndarray] = {}
    third = 1.0 / 3.0

    s = r + g + b
    black = s == 0.0
    safe = np.where(black, 1.0, s)
    planes[1] = np.where(black, third, r / safe)
    planes[2] = np.where(black, third, g / safe)
    planes[3] = np.where(black, third, b / safe)

    rs, gs, bs = max(skin.r, 1.0), max(skin.g, 1.0), max(skin.b, 1.0)
    planes[4] = r / rs
    planes[5] = g / gs
    planes[6] = b / bs
    sr = planes[4] + planes[5] + planes[6]
    safe = np.where(black, 1.0, sr)
    planes[7] = np.where(black, third, planes[4] / safe)
    planes[8] = np.where(black, third, planes[5] / safe)
    planes[9] = np.where(black, third, planes[6] / safe)

    planes[10] = r - skin.r
    planes[11] = g - skin.g
    planes[12] = b - skin.b
    d = planes[10] + planes[11] + planes[12]
    degen = np.abs(d) < _DEGENERATE_EPS
    safe = np.where(degen, 1.0, d)
    planes[13] = np.where(degen, third, planes[10] / safe)
    planes[14] = np.where(degen, third, planes[11] / safe)
    planes[15] = np.where(degen, third, planes[12] / safe)
    return planes, black, degen


# ---------------------------------------------------------------------------
# GLCM texture features F16..F18
# ---------------------------------------------------------------------------

def quantize_luminance(pixels: np.ndarray, levels: int = 16) -> np.ndarray:
    """Rec.601 luminance quantized to fixed global bins over [0, 255]."""
    if levels < 2:
        raise FeatureError("gray-level count must be >= 2")
    lum = (0.299 * pixels[..., 0] + 0.587 * pixels[..., 1]
           + 0.114 * pixels[..., 2])
    q = np.floor(lum * (levels / 256.0)).astype(np.int64)
    return np.clip(q, 0, levels - 1)


def glcm(window: np.ndarray, direction: int, levels: int = 16,
         displacement: int = 1, symmetric: bool = False) -> np.ndarray:
    """Normalized gray-level co-occurrence matrix of one window.

    Counts ordered pixel pairs (p, p + d) that both lie inside the window,
    where d is the displacement vector of the given direction (one of 0,
    45, 90, 135 degrees).
    """
    if direction not in _DIRECTIONS:
        raise FeatureError(f"direction must be one of {sorted(_DIRECTIONS)}")
    if displacement < 1:
        raise FeatureError("displacement must be >= 1")
    win = np.asarray(window)
    if win.ndim != 2:
        raise FeatureError("window must be 2-D")
    if win.min() < 0 or win.max() >= levels:
        raise FeatureError(f"window values must be quantized to 0..{levels - 1}")
    dr, dc = _DIRECTIONS[direction]
    dr, dc = dr * displacement, dc * displacement
    r0, r1 = max(0, -dr), win.shape[0] - max(0, dr)
    c0, c1 = max(0, -dc), win.shape[1] - max(0, dc)
    if r1 <= r0 or c1 <= c0:
        raise FeatureError(
            f"window of shape {win.shape} is too small for direction "
            f"{direction} at displacement {displacement}")
    a = win[r0:r1, c0:c1].ravel()
    b = win[r0 + dr:r1 + dr, c0 + dc:c1 + dc].ravel()
    m = np.zeros((levels, levels), dtype=np.float64)
    np.add.at(m, (a, b), 1.0)
    if symmetric:
        m = m + m.T
    m /= m.sum()
    TEXTURE_EVALS.add()
    return m


def _stats_from_glcm(m: np.ndarray) -> tuple[float, float, float]:
    p = np.asarray(m, dtype=np.float64)
    nz = p > 0
    entropy = float(-(p[nz] * np.log2(p[nz])).sum())
    levels = np.arange(p.shape[0], dtype=np.float64)
    contrast = float(((levels[:, None] - levels[None, :]) ** 2 * p).sum())
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    mu_a = float((levels * pa).sum())
    mu_b = float((levels * pb).sum())
    var_a = float(((levels - mu_a) ** 2 * pa).sum())
    var_b = float(((levels - mu_b) ** 2 * pb).sum())
    if var_a * var_b < 1e-18:
        correlation = 0.0
    else:
        cov = float((((levels[:, None] - mu_a) * (levels[None, :] - mu_b)) * p).sum())
        correlation = min(1.0, max(-1.0, cov / math.sqrt(var_a * var_b)))
    return entropy, contrast, correlation


def texture_features(window: np.ndarray, levels: int = 16,
                     displacement: int = 1, symmetric: bool = False
                     ) -> tuple[float, float, float]:
    """Entropy, contrast and correlation averaged over the four directions.

    The window holds quantized gray levels. A constant window yields
    (0, 0, 0); correlation is 0 by convention whenever a marginal variance
    vanishes.
    """
    ent = con = cor = 0.0
    for direction in (0, 45, 90, 135):
        e, c, r = _stats_from_glcm(
            glcm(window, direction, levels, displacement, symmetric))
        ent += e
        con += c
        cor += r
    return ent / 4.0, con / 4.0, cor / 4.0


def _pair_offsets(window: int, dr: int, dc: int) -> list[tuple[int, int]]:
    half = window // 2
    rows = [i for i in range(-half, half + 1) if -half <= i + dr <= half]
    cols = [j for j in range(-half, half + 1) if -half <= j + dc <= half]
    return [(i, j) for i in rows for j in cols]


def _entropy_from_codes(codes: np.ndarray) -> np.ndarray:
    # H = log2(K) - mean_k log2(multiplicity of code_k); identical to
    # -sum(p log2 p) over the co-occurrence histogram.
    k, n = codes.shape
    out = np.empty(n, dtype=np.float64)
    chunk = max(1, (1 << 23) // (k * k))
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        block = codes[:, s:e]
        mult = (block[:, None, :] == block[None, :, :]).sum(axis=1)
        out[s:e] = math.log2(k) - np.log2(mult).mean(axis=0)
    return out


def _texture_at(quantized: np.ndarray, rows: np.ndarray, cols: np.ndarray,
                levels: int = 16, window: int = 5, displacement: int = 1,
                symmetric: bool = False
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Texture statistics at arbitrary pixels, windows clamped at borders.

    Vectorized equivalent of running texture_features on each pixel's own
    window of the edge-padded luminance plane.
    """
    half = window // 2
    qpad = np.pad(quantized, half, mode="edge").astype(np.int64)
    r = np.asarray(rows, dtype=np.int64) + half
    c = np.asarray(cols, dtype=np.int64) + half
    n = r.size
    ent = np.zeros(n)
    con = np.zeros(n)
    cor = np.zeros(n)
    for direction in (0, 45, 90, 135):
        dr, dc = _DIRECTIONS[direction]
        dr, dc = dr * displacement, dc * displacement
        offs = _pair_offsets(window, dr, dc)
        if not offs:
            raise FeatureError(
                f"window {window} too small for direction {direction} "
                f"at displacement {displacement}")
        k = len(offs)
        a = np.empty((k, n), dtype=np.int64)
        b = np.empty((k, n), dtype=np.int64)
        for idx, (i, j) in enumerate(offs):
            a[idx] = qpad[r + i, c + j]
            b[idx] = qpad[r + i + dr, c + j + dc]
        if symmetric:
            a, b = np.concatenate([a, b]), np.concatenate([b, a])
        diff = (a - b).astype(np.float64)
        con += (diff * diff).mean(axis=0)
        af = a.astype(np.float64)
        bf = b.astype(np.float64)
        mu_a = af.mean(axis=0)
        mu_b = bf.mean(axis=0)
        var_a = (af * af).mean(axis=0) - mu_a * mu_a
        var_b = (bf * bf).mean(axis=0) - mu_b * mu_b
        cov = (af * bf).mean(axis=0) - mu_a * mu_b
        denom = var_a * var_b
        corr = np.where(denom < 1e-18, 0.0,
                        cov / np.sqrt(np.maximum(denom, 1e-300)))
        cor += np.clip(corr, -1.0, 1.0)
        ent += _entropy_from_codes(a * levels + b)
    TEXTURE_EVALS.add(4 * n)
    return ent / 4.0, con / 4.0, cor / 4.0


# ---------------------------------------------------------------------------
# 25-value median: minimum exchange network
# ---------------------------------------------------------------------------

# Partial-sort exchange network leaving the 13th order statistic of 25
# values on wire 12 after 99 min/max exchanges. Proven exhaustively over
# {0,1}^25 in the test suite (0/1 principle).
_MEDIAN25_EXCHANGES = (
    (0, 1), (3, 4), (2, 4), (2, 3), (6, 7), (5, 7), (5, 6), (9, 10),
    (8, 10), (8, 9), (12, 13), (11, 13), (11, 12), (15, 16), (14, 16),
    (14, 15), (18, 19), (17, 19), (17, 18), (21, 22), (20, 22), (20, 21),
    (23, 24), (2, 5), (3, 6), (0, 6), (0, 3), (4, 7), (1, 7), (1, 4),
    (11, 14), (8, 14), (8, 11), (12, 15), (9, 15), (9, 12), (13, 16),
    (10, 16), (10, 13), (20, 23), (17, 23), (17, 20), (21, 24), (18, 24),
    (18, 21), (19, 22), (8, 17), (9, 18), (0, 18), (0, 9), (10, 19),
    (1, 19), (1, 10), (11, 20), (2, 20), (2, 11), (12, 21), (3, 21),
    (3, 12), (13, 22), (4, 22), (4, 13), (14, 23), (5, 23), (5, 14),
    (15, 24), (6, 24), (6, 15), (7, 16), (7, 19), (13, 21), (15, 23),
    (7, 13), (7, 15), (1, 9), (3, 11), (5, 17), (11, 17), (9, 17),
    (4, 10), (6, 12), (7, 14), (4, 6), (4, 7), (12, 14), (10, 14),
    (6, 7), (10, 12), (6, 10), (6, 17), (12, 17), (7, 17), (7, 10),
    (12, 18), (7, 12), (10, 18), (12, 20), (10, 20), (10, 12),
)


def _median25_batch(columns: np.ndarray) -> np.ndarray:
    """Median of each column of a (25, n) array via the exchange network."""
    wires = [columns[i].copy() for i in range(25)]
    for i, j in _MEDIAN25_EXCHANGES:
        lo = np.minimum(wires[i], wires[j])
        wires[j] = np.maximum(wires[i], wires[j])
        wires[i] = lo
    return wires[12]


def median25(values) -> float:
    """13th order statistic of exactly 25 values (partial exchange sort)."""
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (25,):
        raise FeatureError(f"median25 requires exactly 25 values, got {v.size}")
    return float(_median25_batch(v[:, None])[0])


def _masked_median(plane: np.ndarray, valid: np.ndarray, window: int = 5
                   ) -> np.ndarray:
    """Windowed median over valid pixels only; NaN where the center is not
    valid. Even-count neighborhoods take the lower middle value."""
    if window % 2 == 0 or window < 1:
        raise FeatureError("median window must be odd and >= 1")
    half = window // 2
    h, w = plane.shape
    n = window * window
    vpad = np.pad(plane, half, constant_values=np.inf)
    mpad = np.pad(valid, half, constant_values=False)
    vals = np.empty((n, h, w), dtype=np.float64)
    ok = np.empty((n, h, w), dtype=bool)
    k = 0
    for dr in range(-half, half + 1):
        for dc in range(-half, half + 1):
            vals[k] = vpad[half + dr:half + dr + h, half + dc:half + dc + w]
            ok[k] = mpad[half + dr:half + dr + h, half + dc:half + dc + w]
            k += 1
    counts = ok.sum(axis=0)
    out = np.full((h, w), np.nan)
    full = valid & (counts == n)
    if n == 25 and full.any():
        out[full] = _median25_batch(vals[:, full])
    else:
        full = np.zeros_like(valid)
    rest = valid & ~full
    if rest.any():
        cols = np.where(ok[:, rest], vals[:, rest], np.inf)
        cols.sort(axis=0)
        mid = ((counts[rest] - 1) // 2)[None, :]
        out[rest] = np.take_along_axis(cols, mid, axis=0)[0]
    return out


# ---------------------------------------------------------------------------
# Feature planes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeaturePlanes:
    """Median-smoothed feature planes, defined exactly on the region mask."""

    region: BinaryMask
    planes: dict[int, np.ndarray]
    chroma_fallbacks: int = 0
    difference_fallbacks: int = 0

    def plane(self, feature_id: int) -> np.ndarray:
        try:
            return self.planes[feature_id]
        except KeyError:
            raise FeatureError(f"feature F{feature_id} was not extracted") from None

    def matrix(self, rows, cols, feature_ids=FEATURE_IDS) -> np.ndarray:
        out = np.empty((len(rows), len(feature_ids)))
        for k, fid in enumerate(feature_ids):
            out[:, k] = self.plane(fid)[rows, cols]
        return out

    def vector_at(self, row: int, col: int, feature_ids=FEATURE_IDS) -> np.ndarray:
        return self.matrix([row], [col], feature_ids)[0]


def _expand_groups(feature_ids) -> set[int]:
    ids = set(int(i) for i in feature_ids)
    bad = ids - set(FEATURE_IDS)
    if bad:
        raise FeatureError(f"unknown feature ids {sorted(bad)}; valid are 1..18")
    return ids


def extract_feature_planes(image: RgbImage, region: BinaryMask,
                           skin: SkinColor, feature_ids=FEATURE_IDS, *,
                           median_window: int = 5, texture_window: int = 5,
                           glcm_levels: int = 16, glcm_displacement: int = 1,
                           glcm_symmetric: bool = False) -> FeaturePlanes:
    """Raw features followed by per-plane contextual median smoothing.

    Step 1 computes each requested feature per pixel: color features from
    the pixel itself, texture from the pixel's own luminance window
    (clamped at the image border). Step 2 replaces every plane with its
    windowed median restricted to region pixels, so no value outside the
    region ever leaks in; border pixels take the median of however many
    valid neighbors exist (lower-of-two on even counts).
    """
    if image.shape != region.shape:
        raise FeatureError("image and region mask dimensions differ")
    if region.count == 0:
        raise FeatureError("feature extraction over an empty region")
    ids = _expand_groups(feature_ids)
    valid = region.bits

    raw: dict[int, np.ndarray] = {}
    chroma_fb = diff_fb = 0
    if ids & set(range(1, 16)):
        planes, black, degen = _color_planes(image.pixels, skin)
        raw.update(planes)
        chroma_fb = int(black[valid].sum())
        diff_fb = int(degen[valid].sum())
    if ids & set(TEXTURE):
        q = quantize_luminance(image.pixels, glcm_levels)
        rows, cols = np.nonzero(valid)
        ent, con, cor = _texture_at(q, rows, cols, glcm_levels, texture_window,
                                    glcm_displacement, glcm_symmetric)
        for fid, values in zip(TEXTURE, (ent, con, cor)):
            plane = np.full(region.shape, np.nan)
            plane[rows, cols] = values
            raw[fid] = plane

    # The median only ever reads region pixels, so run it on the region's
    # bounding box (window margin included) instead of the whole frame.
    rows, cols = np.nonzero(valid)
    half = median_window // 2
    r0 = max(0, int(rows.min()) - half)
    r1 = min(region.shape[0], int(rows.max()) + half + 1)
    c0 = max(0, int(cols.min()) - half)
    c1 = min(region.shape[1], int(cols.max()) + half + 1)
    box = (slice(r0, r1), slice(c0, c1))
    smoothed = {}
    for fid in sorted(ids):
        plane = np.full(region.shape, np.nan)
        plane[box] = _masked_median(raw[fid][box], valid[box], median_window)
        smoothed[fid] = plane
    return FeaturePlanes(region, smoothed, chroma_fb, diff_fb)


def sample_features(image: RgbImage, samples, skin: SkinColor, *,
                    median_window: int = 5, texture_window: int = 5,
                    glcm_levels: int = 16, glcm_displacement: int = 1,
                    glcm_symmetric: bool = False) -> list[PixelSample]:
    """Fill the 18-feature vectors of individual training/test pixels.

    Unlike plane extraction, the median neighborhoods here are clipped to
    the image only, not to the lesion: annotated circles may legitimately
    cross the lesion border.
    """
    samples = list(samples)
    if not samples:
        return []
    h, w = image.shape
    rows = np.array([s.row for s in samples], dtype=np.int64)
    cols = np.array([s.col for s in samples], dtype=np.int64)
    if rows.min() < 0 or rows.max() >= h or cols.min() < 0 or cols.max() >= w:
        raise FeatureError("sample pixel outside the image")

    half = median_window // 2
    offs = [(i, j) for i in range(-half, half + 1) for j in range(-half, half + 1)]
    nr = rows[:, None] + np.array([o[0] for o in offs])
    nc = cols[:, None] + np.array([o[1] for o in offs])
    inb = (nr >= 0) & (nr < h) & (nc >= 0) & (nc < w)
    nrc = nr.clip(0, h - 1)
    ncc = nc.clip(0, w - 1)
    counts = inb.sum(axis=1)
    mid = ((counts - 1) // 2)[:, None]

    color, _, _ = _color_planes(image.pixels, skin)
    q = quantize_luminance(image.pixels, glcm_levels)
    need = np.unique(np.stack([nrc[inb], ncc[inb]], axis=1), axis=0)
    ent, con, cor = _texture_at(q, need[:, 0], need[:, 1], glcm_levels,
                                texture_window, glcm_displacement,
                                glcm_symmetric)
    planes = dict(color)
    for fid, values in zip(TEXTURE, (ent, con, cor)):
        plane = np.full((h, w), np.nan)
        plane[need[:, 0], need[:, 1]] = values
        planes[fid] = plane

    feats = np.empty((len(samples), 18))
    for fid in FEATURE_IDS:
        vals = np.where(inb, planes[fid][nrc, ncc], np.inf)
        vals.sort(axis=1)
        feats[:, fid - 1] = np.take_along_axis(vals, mid, axis=1)[:, 0]
    return [s.with_features(feats[i]) for i, s in enumerate(samples)]


# ---------------------------------------------------------------------------
# Feature CSV and raw plane files
# ---------------------------------------------------------------------------

def write_feature_csv(path, samples) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in samples:
        if s.features is None:
            raise FeatureError(f"sample at ({s.row}, {s.col}) has no features")
        writer.writerow([s.image_id, s.row, s.col, s.label]
                        + [repr(float(v)) for v in s.features])
    atomic_text(path, buf.getvalue())


def read_feature_csv(path) -> list[PixelSample]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise FeatureError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_HEADER):
                raise FeatureError(f"{path}:{lineno}: expected "
                                   f"{len(CSV_HEADER)} columns, got {len(row)}")
            feats = np.array([float(v) for v in row[4:]])
            out.append(PixelSample(row[0], int(row[1]), int(row[2]), row[3],
                                   feats))
    return out


_PLANE_MAGIC = "FPLANE"


def write_feature_plane(path, plane: np.ndarray, feature_id: int) -> None:
    """One plane as float32 with a one-line text header."""
    arr = np.asarray(plane, dtype="<f4")
    if arr.ndim != 2:
        raise FeatureError("feature plane must be 2-D")
    header = f"{_PLANE_MAGIC} {arr.shape[1]} {arr.shape[0]} {feature_id}\n"
    atomic_bytes(path, header.encode("ascii") + arr.tobytes())


def read_feature_plane(path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != _PLANE_MAGIC:
            raise FeatureError(f"{path}: not a feature plane file")
        width, height, feature_id = (int(v) for v in header[1:])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != width * height:
        raise FeatureError(f"{path}: truncated plane data")
    return data.reshape(height, width).copy(), feature_id
