"""Human-authored annotations: border control points, circular veil /
non-veil training regions, lesion-level labels, and balanced pixel sampling.

One JSON document per image:

    {
      "image_id": "case-007",
      "border": [[r, c], ...],
      "regions": [{"center": [r, c], "radius": 8, "label": "veil"}, ...],
      "diagnosis": "melanoma",
      "has_veil_area": true,
      "primary_veil": true,
      "veil_related": false
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from ._io import atomic_text
from .raster import ControlPolygon

VEIL = "veil"
NON_VEIL = "non-veil"
PIXEL_LABELS = (VEIL, NON_VEIL)

MELANOMA = "melanoma"
BENIGN = "benign"
DIAGNOSES = (MELANOMA, BENIGN)


class AnnotationError(ValueError):
    """Schema violation; the message names the offending field."""


@dataclass(frozen=True)
class Circle:
    center_row: float
    center_col: float
    radius: float
    label: str


@dataclass(frozen=True)
class RegionAnnotation:
    circles: tuple[Circle, ...] = ()

    def with_label(self, label: str) -> tuple[Circle, ...]:
        return tuple(c for c in self.circles if c.label == label)


@dataclass(frozen=True)
class LesionRecord:
    image_id: str
    diagnosis: str
    has_veil_area: bool = False
    primary_veil: bool = False
    veil_related: bool = False


@dataclass(frozen=True, eq=False)
class PixelSample:
    image_id: str
    row: int
    col: int
    label: str
    features: np.ndarray | None = None

    def with_features(self, features: np.ndarray) -> "PixelSample":
        return replace(self, features=features)


def _require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise AnnotationError(f"{field}: {message}")


def _check_circle_bounds(circle: Circle, field: str,
                         image_size: tuple[int, int]) -> None:
    h, w = image_size
    inside = (circle.center_row - circle.radius >= 0
              and circle.center_row + circle.radius <= h - 1
              and circle.center_col - circle.radius >= 0
              and circle.center_col + circle.radius <= w - 1)
    _require(inside, field,
             f"circle (center=({circle.center_row}, {circle.center_col}), "
             f"radius={circle.radius}) is not fully inside a {h}x{w} image")


def _parse_circle(obj, field: str) -> Circle:
    _require(isinstance(obj, dict), field, "must be an object")
    center = obj.get("center")
    _require(isinstance(center, (list, tuple)) and len(center) == 2
             and all(isinstance(v, (int, float)) for v in center),
             f"{field}.center", "must be a [row, col] pair of numbers")
    radius = obj.get("radius")
    _require(isinstance(radius, (int, float)) and radius >= 1,
             f"{field}.radius", "must be a number >= 1")
    label = obj.get("label")
    _require(label in PIXEL_LABELS, f"{field}.label",
             f"must be one of {PIXEL_LABELS}")
    return Circle(float(center[0]), float(center[1]), float(radius), label)


def parse_annotations(doc: dict, image_size: tuple[int, int] | None = None
                      ) -> tuple[ControlPolygon, RegionAnnotation, LesionRecord]:
    _require(isinstance(doc, dict), "document", "must be a JSON object")
    image_id = doc.get("image_id")
    _require(isinstance(image_id, str) and image_id != "", "image_id",
             "must be a non-empty string")

    border = doc.get("border")
    _require(isinstance(border, list) and len(border) >= 3, "border",
             "must be a list of at least 3 [row, col] points")
    for i, pt in enumerate(border):
        _require(isinstance(pt, (list, tuple)) and len(pt) == 2
                 and all(isinstance(v, (int, float)) for v in pt),
                 f"border[{i}]", "must be a [row, col] pair of numbers")
    try:
        polygon = ControlPolygon(np.asarray(border, dtype=float))
    except ValueError as exc:
        raise AnnotationError(f"border: {exc}") from exc

    regions_doc = doc.get("regions", [])
    _require(isinstance(regions_doc, list), "regions", "must be a list")
    circles = []
    for i, obj in enumerate(regions_doc):
        circle = _parse_circle(obj, f"regions[{i}]")
        if image_size is not None:
            _check_circle_bounds(circle, f"regions[{i}]", image_size)
        circles.append(circle)
    regions = RegionAnnotation(tuple(circles))

    diagnosis = doc.get("diagnosis")
    _require(diagnosis in DIAGNOSES, "diagnosis", f"must be one of {DIAGNOSES}")
    flags = {}
    for name in ("has_veil_area", "primary_veil", "veil_related"):
        value = doc.get(name, False)
        _require(isinstance(value, bool), name, "must be a boolean")
        flags[name] = value
    _require(not flags["primary_veil"] or diagnosis == MELANOMA, "primary_veil",
             "primary veil implies a melanoma diagnosis")
    record = LesionRecord(image_id, diagnosis, **flags)
    return polygon, regions, record


def load_annotations(path, image_size: tuple[int, int] | None = None
                     ) -> tuple[ControlPolygon, RegionAnnotation, LesionRecord]:
    """Parse one annotation file; optionally validate circles against the
    (height, width) of the image the annotation belongs to."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise AnnotationError(f"document: invalid JSON ({exc})") from exc
    return parse_annotations(doc, image_size)


def save_annotations(path, polygon: ControlPolygon, regions: RegionAnnotation,
                     record: LesionRecord) -> None:
    doc = {
        "image_id": record.image_id,
        "border": [[float(r), float(c)] for r, c in polygon.points],
        "regions": [
            {"center": [c.center_row, c.center_col],
             "radius": c.radius, "label": c.label}
            for c in regions.circles
        ],
        "diagnosis": record.diagnosis,
        "has_veil_area": record.has_veil_area,
        "primary_veil": record.primary_veil,
        "veil_related": record.veil_related,
    }
    atomic_text(path, json.dumps(doc, indent=2) + "\n")


def _union_pixels(regions: RegionAnnotation, label: str) -> np.ndarray:
    """All integer pixels inside any circle of the given label, deduplicated
    and sorted row-major."""
    coords = []
    for c in regions.with_label(label):
        r0 = math.ceil(c.center_row - c.radius)
        r1 = math.floor(c.center_row + c.radius)
        c0 = math.ceil(c.center_col - c.radius)
        c1 = math.floor(c.center_col + c.radius)
        rr, cc = np.mgrid[r0:r1 + 1, c0:c1 + 1]
        inside = ((rr - c.center_row) ** 2 + (cc - c.center_col) ** 2
                  <= c.radius ** 2)
        coords.append(np.stack([rr[inside], cc[inside]], axis=1))
    if not coords:
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(np.concatenate(coords, axis=0), axis=0)


def sample_pixels(regions: RegionAnnotation, per_class: int, seed: int,
                  image_id: str = "") -> list[PixelSample]:
    """Draw a balanced training/test pixel sample.

    Exactly per_class pixels per label, uniformly without replacement from
    the union of same-label circle interiors; deterministic for a fixed
    seed (veil pixels are drawn first).
    """
    if per_class <= 0:
        raise AnnotationError("per_class: must be a positive integer")
    rng = np.random.default_rng(seed)
    samples: list[PixelSample] = []
    for label in PIXEL_LABELS:
        coords = _union_pixels(regions, label)
        if len(coords) < per_class:
            raise AnnotationError(
                f"regions: requested {per_class} {label!r} pixels but only "
                f"{len(coords)} are available")
        pick = rng.choice(len(coords), size=per_class, replace=False)
        samples.extend(
            PixelSample(image_id, int(r), int(c), label) for r, c in coords[pick])
    return samples
