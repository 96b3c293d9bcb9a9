"""Lesion-level shape features and melanoma/benign classification.

Three numbers summarize a lesion: the detected veil area fraction, a
circularity score (mean over standard deviation of boundary-to-centroid
distances), and an ellipticity score built from the affine-invariant
combination of second-order central moments, normalized so every perfect
ellipse scores exactly 1. Central moments are accumulated in exact integer
/ rational arithmetic and only converted to float at the end, so the fast
path agrees bit-for-bit with the defining double loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dtree import DecisionTree, Leaf, Split, predict
from .raster import BinaryMask, boundary_pixels

S2_CAP = 1e6
_ELLIPSE_A1 = 1.0 / (16.0 * math.pi ** 2)


class LesionError(ValueError):
    pass


@dataclass(frozen=True)
class Moments:
    """Second-order central moments of a binary lesion image."""

    mu00: float
    mu11: float
    mu20: float
    mu02: float
    centroid: tuple[float, float]


@dataclass(frozen=True)
class LesionShapeFeatures:
    s1: float  # veil area fraction
    s2: float  # circularity
    s3: float  # ellipticity

    def vector(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3])


def _exact_moments(mask: BinaryMask) -> tuple[Fraction, ...]:
    rr, cc = np.nonzero(mask.bits)
    if rr.size == 0:
        raise LesionError("moments of an empty mask are undefined")
    n = int(rr.size)
    sr = int(rr.sum(dtype=np.int64))
    sc = int(cc.sum(dtype=np.int64))
    srr = int((rr.astype(np.int64) ** 2).sum())
    scc = int((cc.astype(np.int64) ** 2).sum())
    src = int((rr.astype(np.int64) * cc.astype(np.int64)).sum())
    mu20 = Fraction(srr) - Fraction(sr * sr, n)
    mu02 = Fraction(scc) - Fraction(sc * sc, n)
    mu11 = Fraction(src) - Fraction(sr * sc, n)
    return (Fraction(n), mu11, mu20, mu02, Fraction(sr, n), Fraction(sc, n))


def central_moments(mask: BinaryMask) -> Moments:
    mu00, mu11, mu20, mu02, rbar, cbar = _exact_moments(mask)
    return Moments(float(mu00), float(mu11), float(mu20), float(mu02),
                   (float(rbar), float(cbar)))


def veil_ratio(veil: BinaryMask, lesion: BinaryMask) -> float:
    """Detected veil area divided by lesion area."""
    if veil.shape != lesion.shape:
        raise LesionError("veil and lesion mask dimensions differ")
    if lesion.count == 0:
        raise LesionError("veil ratio over an empty lesion")
    if (veil.bits & ~lesion.bits).any():
        raise LesionError("veil mask extends outside the lesion")
    return veil.count / lesion.count


def circularity(lesion: BinaryMask) -> float:
    """Mean over (population) standard deviation of the distances from the
    boundary pixels to the lesion centroid; capped at 1e6 when the
    distances are all equal."""
    boundary = boundary_pixels(lesion)
    if len(boundary) < 2:
        raise LesionError("circularity needs at least 2 boundary pixels")
    moments = central_moments(lesion)
    rbar, cbar = moments.centroid
    dist = np.hypot(boundary[:, 0] - rbar, boundary[:, 1] - cbar)
    mean = float(dist.mean())
    std = float(dist.std())
    if std < 1e-9:
        return S2_CAP
    return mean / std


def ellipticity(lesion: BinaryMask) -> float:
    """Ellipticity in (0, 1]; exactly 1 for a continuous ellipse.

    Uses the scale-free moment combination (mu20*mu02 - mu11^2) / mu00^4,
    folded so values on either side of the ellipse point map into (0, 1].
    """
    mu00, mu11, mu20, mu02, _, _ = _exact_moments(lesion)
    a1_exact = (mu20 * mu02 - mu11 * mu11) / mu00 ** 4
    if a1_exact <= 0:
        raise LesionError("degenerate (collinear) lesion has no ellipticity")
    a1 = float(a1_exact)
    if a1 <= _ELLIPSE_A1:
        return 16.0 * math.pi ** 2 * a1
    return 1.0 / (16.0 * math.pi ** 2 * a1)


def shape_features(veil: BinaryMask, lesion: BinaryMask) -> LesionShapeFeatures:
    return LesionShapeFeatures(veil_ratio(veil, lesion),
                               circularity(lesion),
                               ellipticity(lesion))


def reference_lesion_model() -> DecisionTree:
    """The fixed published decision rule over (S1, S2, S3).

    Benign when the veil fraction is strictly below 0.9%; otherwise benign
    when the ellipticity is strictly above 0.979; otherwise melanoma. The
    circularity feature is present in the input but never tested. With
    left meaning "<= threshold", the strict S1 < 0.009 comparison is
    encoded by the largest float below 0.009.
    """
    below = math.nextafter(0.009, -math.inf)
    root = Split(
        feature=1, threshold=below,
        left=Leaf("benign", {}),
        right=Split(feature=3, threshold=0.979,
                    left=Leaf("melanoma", {}),
                    right=Leaf("benign", {})),
    )
    return DecisionTree(root, 3)


def classify_lesion(features: LesionShapeFeatures, model: DecisionTree) -> str:
    """Melanoma/benign decision from the three shape features."""
    if model.n_features != 3:
        raise LesionError(f"lesion model expects {model.n_features} features, "
                          f"not the 3 shape features")
    return predict(model, features.vector())
