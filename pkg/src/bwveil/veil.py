"""Per-image veil detection: classify every lesion pixel with the trained
tree, then smooth the resulting mask with a majority filter.

Only the feature planes the tree actually tests are extracted (their
contextual medians included); a tree over F3 and F10 never touches the
co-occurrence machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import features as ft
from .annotate import VEIL
from .dtree import DecisionTree, predict_batch
from .raster import BinaryMask, RgbImage, boundary_pixels, majority_filter


class VeilError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VeilMask:
    initial: BinaryMask
    final: BinaryMask


def detect_veil(image: RgbImage, lesion: BinaryMask, skin: ft.SkinColor,
                tree: DecisionTree, *, veil_label: str = VEIL,
                majority_window: int = 5, median_window: int = 5,
                glcm_levels: int = 16, glcm_displacement: int = 1,
                glcm_symmetric: bool = False, eager: bool = False) -> VeilMask:
    """End-to-end veil detection inside the lesion.

    The initial mask holds the pixels the tree labels as veil; the final
    mask is its majority-filtered version clipped back to the lesion.
    Pixels outside the lesion are never classified.
    """
    if image.shape != lesion.shape:
        raise VeilError("image and lesion mask dimensions differ")
    if lesion.count == 0:
        raise VeilError("veil detection over an empty lesion")
    needed = tree.feature_ids()
    invalid = needed - set(ft.FEATURE_IDS)
    if invalid:
        raise VeilError(f"tree references feature ids {sorted(invalid)} "
                        f"outside 1..18")
    wanted = tuple(ft.FEATURE_IDS) if eager else tuple(sorted(needed))
    rows, cols = np.nonzero(lesion.bits)
    if wanted:
        planes = ft.extract_feature_planes(
            image, lesion, skin, wanted, median_window=median_window,
            glcm_levels=glcm_levels, glcm_displacement=glcm_displacement,
            glcm_symmetric=glcm_symmetric)
        columns = {fid: planes.plane(fid)[rows, cols] for fid in needed}
    else:
        columns = {}
    labels = predict_batch(tree, columns, n=rows.size)
    hit = labels == veil_label
    initial = np.zeros(lesion.shape, dtype=bool)
    initial[rows[hit], cols[hit]] = True
    final = majority_filter(BinaryMask(initial), majority_window).bits & lesion.bits
    return VeilMask(BinaryMask(initial), BinaryMask(final))


def _dilate(mask: np.ndarray, times: int = 1) -> np.ndarray:
    out = mask.copy()
    for _ in range(times):
        grown = out.copy()
        grown[1:, :] |= out[:-1, :]
        grown[:-1, :] |= out[1:, :]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        grown[1:, 1:] |= out[:-1, :-1]
        grown[1:, :-1] |= out[:-1, 1:]
        grown[:-1, 1:] |= out[1:, :-1]
        grown[:-1, :-1] |= out[1:, 1:]
        out = grown
    return out


def overlay_image(image: RgbImage, lesion: BinaryMask, veil: BinaryMask,
                  lesion_rgb=(40, 90, 220), veil_rgb=(230, 40, 40)) -> RgbImage:
    """Detection overlay: thin lesion border, thick veil border."""
    out = image.pixels.copy()
    lb = np.zeros(lesion.shape, dtype=bool)
    pts = boundary_pixels(lesion)
    lb[pts[:, 0], pts[:, 1]] = True
    out[lb] = lesion_rgb
    if veil.count:
        vb = np.zeros(veil.shape, dtype=bool)
        pts = boundary_pixels(veil)
        vb[pts[:, 0], pts[:, 1]] = True
        out[_dilate(vb, 1)] = veil_rgb
    return RgbImage(out)
