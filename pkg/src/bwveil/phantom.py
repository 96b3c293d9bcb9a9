"""Synthetic dermoscopy-like phantoms with exact ground truth.

A phantom is a skin-toned frame holding one lesion blob with an optional
planted veil disk whose color has a high blue chromaticity and a strongly
negative red difference against the background skin. The lesion mask is
produced through the same border pipeline real annotations use (control
points -> closed spline -> filled mask), so every downstream quantity can
be checked against known truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .annotate import (BENIGN, MELANOMA, NON_VEIL, VEIL, Circle,
                       LesionRecord, RegionAnnotation)
from .lesion import central_moments
from .raster import BinaryMask, ControlPolygon, RgbImage, polygon_to_mask

LESION_KINDS = ("disk", "ellipse", "blob")


class PhantomError(ValueError):
    pass


@dataclass(frozen=True)
class PhantomSpec:
    width: int = 768
    height: int = 512
    lesion_kind: str = "blob"
    lesion_scale: float = 0.62      # lesion radius relative to min(h, w)/2
    veil_fraction: float = 0.20     # 0 disables the veil
    noise_sigma: float = 2.5
    color_jitter: float = 6.0
    skin_rgb: tuple[int, int, int] = (205, 168, 150)
    lesion_rgb: tuple[int, int, int] = (128, 92, 74)
    veil_rgb: tuple[int, int, int] = (92, 108, 152)
    border_points: int = 18

    def __post_init__(self):
        if self.lesion_kind not in LESION_KINDS:
            raise PhantomError(f"lesion_kind must be one of {LESION_KINDS}")
        if min(self.width, self.height) < 64:
            raise PhantomError("phantom must be at least 64x64")
        if not 0.05 <= self.lesion_scale <= 0.85:
            raise PhantomError("lesion_scale must be in [0.05, 0.85]")
        if not 0.0 <= self.veil_fraction <= 0.5:
            raise PhantomError("veil_fraction must be in [0, 0.5]")
        if self.noise_sigma < 0:
            raise PhantomError("noise_sigma must be >= 0")


@dataclass(frozen=True, eq=False)
class Phantom:
    image: RgbImage
    border: ControlPolygon
    regions: RegionAnnotation
    record: LesionRecord
    lesion: BinaryMask
    veil_truth: BinaryMask


def _border_radii(spec: PhantomSpec, base_radius: float, angles: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    if spec.lesion_kind == "disk":
        return np.full_like(angles, base_radius)
    if spec.lesion_kind == "ellipse":
        a = 1.3 * base_radius       # column semi-axis
        b = base_radius / 1.3       # row semi-axis
        return a * b / np.sqrt((b * np.cos(angles)) ** 2
                               + (a * np.sin(angles)) ** 2)
    # blob: odd harmonics only, so the wobble reads as irregularity rather
    # than as an elliptical stretch
    p3 = rng.uniform(0, 2 * math.pi)
    p5 = rng.uniform(0, 2 * math.pi)
    return base_radius * (1.0 + 0.22 * np.sin(3 * angles + p3)
                          + 0.10 * np.sin(5 * angles + p5))


def _jitter_color(base: tuple[int, int, int], amount: float,
                  rng: np.random.Generator) -> np.ndarray:
    jit = rng.integers(-int(amount), int(amount) + 1, size=3)
    return np.clip(np.array(base, dtype=np.int64) + jit, 0, 255)


def _skin_safe(color: np.ndarray) -> np.ndarray:
    # keep the background within the skin rule (R > 90, R > G, R > B)
    r = max(int(color[0]), 95)
    g = min(int(color[1]), r - 2)
    b = min(int(color[2]), r - 2)
    return np.array([r, g, b], dtype=np.int64)


def _disk_mask(shape: tuple[int, int], center: tuple[float, float],
               radius: float) -> np.ndarray:
    rr, cc = np.ogrid[:shape[0], :shape[1]]
    return ((rr - center[0]) ** 2 + (cc - center[1]) ** 2) <= radius ** 2


def generate(spec: PhantomSpec, seed: int, image_id: str | None = None
             ) -> Phantom:
    """Deterministic phantom for a given (spec, seed)."""
    rng = np.random.default_rng(seed)
    if image_id is None:
        image_id = f"phantom-{spec.lesion_kind}-{seed}"
    h, w = spec.height, spec.width
    base_radius = spec.lesion_scale * min(h, w) / 2.0
    center = (h / 2.0 + rng.uniform(-0.03, 0.03) * h,
              w / 2.0 + rng.uniform(-0.03, 0.03) * w)
    angles = np.linspace(0.0, 2 * math.pi, spec.border_points, endpoint=False)
    radii = _border_radii(spec, base_radius, angles, rng)
    points = np.stack([center[0] + radii * np.sin(angles),
                       center[1] + radii * np.cos(angles)], axis=1)
    border = ControlPolygon(points)
    lesion = polygon_to_mask(border, w, h)

    veil_truth = BinaryMask(np.zeros((h, w), dtype=bool))
    veil_radius = 0.0
    veil_center = (0.0, 0.0)
    if spec.veil_fraction > 0:
        veil_radius = math.sqrt(spec.veil_fraction * lesion.count / math.pi)
        veil_center = central_moments(lesion).centroid
        veil_truth = BinaryMask(_disk_mask((h, w), veil_center, veil_radius)
                                & lesion.bits)
        if veil_truth.count == 0:
            raise PhantomError("planted veil ended up empty; grow the lesion")

    skin = _skin_safe(_jitter_color(spec.skin_rgb, spec.color_jitter, rng))
    lesion_color = _jitter_color(spec.lesion_rgb, spec.color_jitter, rng)
    veil_color = _jitter_color(spec.veil_rgb, spec.color_jitter, rng)
    img = np.empty((h, w, 3), dtype=np.float64)
    img[:] = skin
    img[lesion.bits & ~veil_truth.bits] = lesion_color
    img[veil_truth.bits] = veil_color
    if spec.noise_sigma > 0:
        img += rng.normal(0.0, spec.noise_sigma, size=img.shape)
    image = RgbImage(np.clip(np.rint(img), 0, 255).astype(np.uint8))

    circles = []
    if veil_truth.count:
        # the circle center is rounded while the truth disk center is not,
        # so keep a 1 px margin to guarantee every circle pixel is veil
        radius = min(max(3.0, math.floor(veil_radius * 0.45)),
                     math.floor(veil_radius - 1.0))
        if radius >= 1.0:
            circles.append(Circle(round(veil_center[0]),
                                  round(veil_center[1]), radius, VEIL))
    # deepest interior point of the non-veil lesion area hosts the
    # non-veil circle; ties resolve row-major via argmax
    allowed = lesion.bits & ~_disk_mask((h, w), veil_center, veil_radius + 3.0) \
        if veil_truth.count else lesion.bits
    depth = ndimage.distance_transform_edt(allowed)
    flat = int(np.argmax(depth))
    dr, dc = divmod(flat, w)
    radius = min(float(depth[dr, dc]) - 2.0, 14.0)
    if radius < 3.0:
        raise PhantomError("lesion too small to place a non-veil region")
    circles.append(Circle(float(dr), float(dc), math.floor(radius), NON_VEIL))
    regions = RegionAnnotation(tuple(circles))

    has_veil = veil_truth.count > 0
    melanoma = has_veil and spec.lesion_kind == "blob"
    record = LesionRecord(
        image_id=image_id,
        diagnosis=MELANOMA if melanoma else BENIGN,
        has_veil_area=has_veil,
        primary_veil=melanoma,
        veil_related=False,
    )
    return Phantom(image, border, regions, record, lesion, veil_truth)
