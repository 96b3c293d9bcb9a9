import json

import numpy as np
import pytest

from bwveil.annotate import (AnnotationError, Circle, LesionRecord,
                             RegionAnnotation, load_annotations,
                             sample_pixels, save_annotations)
from bwveil.raster import ControlPolygon


def minimal_doc(**extra):
    doc = {
        "image_id": "case-1",
        "border": [[10.0, 10.0], [10.0, 40.0], [40.0, 25.0]],
        "regions": [],
        "diagnosis": "benign",
        "has_veil_area": False,
        "primary_veil": False,
        "veil_related": False,
    }
    doc.update(extra)
    return doc


def write_doc(tmp_path, doc, name="a.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_minimal_file_valid(tmp_path):
    path = write_doc(tmp_path, minimal_doc())
    polygon, regions, record = load_annotations(path)
    assert len(polygon) == 3
    assert regions.circles == ()
    assert record.image_id == "case-1"
    assert record.diagnosis == "benign"


def test_out_of_bounds_circle(tmp_path):
    doc = minimal_doc(regions=[{"center": [2, 30], "radius": 5, "label": "veil"}])
    path = write_doc(tmp_path, doc)
    with pytest.raises(AnnotationError, match="regions\\[0\\]"):
        load_annotations(path, image_size=(64, 64))
    # without a size the circle geometry is accepted as-is
    _, regions, _ = load_annotations(path)
    assert len(regions.circles) == 1


def test_label_typo_names_field(tmp_path):
    doc = minimal_doc(regions=[{"center": [30, 30], "radius": 4, "label": "viel"}])
    with pytest.raises(AnnotationError, match="regions\\[0\\].label"):
        load_annotations(write_doc(tmp_path, doc))


def test_bad_diagnosis_and_primary_veil(tmp_path):
    with pytest.raises(AnnotationError, match="diagnosis"):
        load_annotations(write_doc(tmp_path, minimal_doc(diagnosis="cyst")))
    doc = minimal_doc(diagnosis="benign", primary_veil=True)
    with pytest.raises(AnnotationError, match="primary_veil"):
        load_annotations(write_doc(tmp_path, doc))


def test_short_border_rejected(tmp_path):
    with pytest.raises(AnnotationError, match="border"):
        load_annotations(write_doc(tmp_path, minimal_doc(border=[[0, 0], [1, 1]])))


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(AnnotationError, match="invalid JSON"):
        load_annotations(path)


def test_roundtrip(tmp_path):
    polygon = ControlPolygon([[5.0, 5.0], [5.0, 50.0], [50.0, 50.0], [50.0, 5.0]])
    regions = RegionAnnotation((
        Circle(20.0, 20.0, 6.0, "veil"),
        Circle(40.0, 35.0, 5.0, "non-veil"),
    ))
    record = LesionRecord("case-7", "melanoma", True, True, False)
    path = tmp_path / "rt.json"
    save_annotations(path, polygon, regions, record)
    polygon2, regions2, record2 = load_annotations(path, image_size=(64, 64))
    assert np.array_equal(polygon.points, polygon2.points)
    assert regions == regions2
    assert record == record2


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def two_class_regions():
    return RegionAnnotation((
        Circle(30.0, 30.0, 11.0, "veil"),        # ~380 px
        Circle(80.0, 80.0, 17.0, "non-veil"),    # ~900 px
    ))


def test_sampling_balance_and_membership():
    regions = two_class_regions()
    samples = sample_pixels(regions, per_class=100, seed=3)
    labels = [s.label for s in samples]
    assert labels.count("veil") == 100 and labels.count("non-veil") == 100
    for s in samples:
        circle = regions.with_label(s.label)[0]
        d2 = (s.row - circle.center_row) ** 2 + (s.col - circle.center_col) ** 2
        assert d2 <= circle.radius ** 2


def test_sampling_shortfall():
    regions = two_class_regions()
    with pytest.raises(AnnotationError, match="veil"):
        sample_pixels(regions, per_class=500, seed=3)


def test_sampling_missing_class():
    regions = RegionAnnotation((Circle(30.0, 30.0, 11.0, "veil"),))
    with pytest.raises(AnnotationError, match="non-veil"):
        sample_pixels(regions, per_class=10, seed=0)


def test_sampling_deterministic_per_seed():
    regions = two_class_regions()
    a = sample_pixels(regions, per_class=50, seed=11)
    b = sample_pixels(regions, per_class=50, seed=11)
    assert [(s.row, s.col, s.label) for s in a] == \
           [(s.row, s.col, s.label) for s in b]
    c = sample_pixels(regions, per_class=50, seed=12)
    assert [(s.row, s.col) for s in a] != [(s.row, s.col) for s in c]


def test_sampling_no_duplicates():
    regions = two_class_regions()
    samples = sample_pixels(regions, per_class=300, seed=0)
    coords = [(s.row, s.col, s.label) for s in samples]
    assert len(set(coords)) == len(coords)
