"""Blue-white veil detection and lesion classification for dermoscopy images.

Pipeline: manual border annotations become lesion masks through a closed
quadratic B-spline and flood fill; the background skin color is averaged
over a distance-ranked ring outside the border; every lesion pixel gets 18
median-smoothed color/texture features; a decision tree labels pixels as
veil or non-veil; and the veil area fraction plus moment-based shape
descriptors classify the lesion as melanoma or benign.
"""

from .annotate import (LesionRecord, PixelSample, RegionAnnotation,
                       load_annotations, sample_pixels, save_annotations)
from .config import PipelineConfig, build_config
from .dtree import (DecisionTree, InductionConfig, LabeledRow, cross_validate,
                    deserialize, induce, predict, predict_batch, prune,
                    serialize)
from .features import (FeaturePlanes, SkinColor, background_skin_color,
                       color_features, extract_feature_planes, glcm,
                       is_skin_pixel, median25, sample_features,
                       texture_features)
from .lesion import (LesionShapeFeatures, Moments, central_moments,
                     circularity, classify_lesion, ellipticity,
                     reference_lesion_model, shape_features, veil_ratio)
from .metrics import MetricsReport, confusion
from .phantom import Phantom, PhantomSpec
from .raster import (BinaryMask, ControlPolygon, DistanceField, RgbImage,
                     boundary_pixels, distance_field, majority_filter,
                     outer_rings, polygon_to_mask, rasterize_filled,
                     read_image, read_mask, spline_close, write_image,
                     write_mask)
from .veil import VeilMask, detect_veil, overlay_image

__version__ = "0.1.0"

__all__ = [
    "BinaryMask", "ControlPolygon", "DecisionTree", "DistanceField",
    "FeaturePlanes", "InductionConfig", "LabeledRow", "LesionRecord",
    "LesionShapeFeatures", "MetricsReport", "Moments", "Phantom",
    "PhantomSpec", "PipelineConfig", "PixelSample", "RegionAnnotation",
    "RgbImage", "SkinColor", "VeilMask", "background_skin_color",
    "boundary_pixels", "build_config", "central_moments", "circularity",
    "classify_lesion", "color_features", "confusion", "cross_validate",
    "deserialize", "detect_veil", "distance_field", "ellipticity",
    "extract_feature_planes", "glcm", "induce", "is_skin_pixel",
    "load_annotations", "majority_filter", "median25", "outer_rings",
    "overlay_image", "polygon_to_mask", "predict", "predict_batch", "prune",
    "rasterize_filled", "read_image", "read_mask", "reference_lesion_model",
    "sample_features", "sample_pixels", "save_annotations", "serialize",
    "shape_features", "spline_close", "texture_features", "veil_ratio",
    "write_image", "write_mask",
]
