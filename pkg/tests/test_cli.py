import json
import math

import numpy as np
import pytest

from bwveil.cli import main
from bwveil.dtree import load_tree
from bwveil.features import read_feature_csv
from bwveil.raster import read_mask


def run(args):
    return main([str(a) for a in args])


def make_phantom(tmp_path, name, seed, kind="blob", veil=0.2, size=(224, 224),
                 extra=()):
    image = tmp_path / f"{name}.png"
    ann = tmp_path / f"{name}.json"
    truth = tmp_path / f"{name}-truth.png"
    code = run(["phantom", "--out-image", image, "--out-annotation", ann,
                "--out-truth", truth, "--seed", seed, "--kind", kind,
                "--veil-fraction", veil, "--width", size[0],
                "--height", size[1], *extra])
    assert code == 0
    return image, ann, truth


def make_manifest(tmp_path, cases, name="manifest.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"entries": [
        {"image_path": str(i), "annotation_path": str(a), "split": s}
        for i, a, s in cases]}))
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Phantom trio + trained pixel tree shared by the CLI tests."""
    tmp_path = tmp_path_factory.mktemp("cli")
    cases = []
    for i, (kind, veil) in enumerate([("blob", 0.25), ("blob", 0.15),
                                      ("ellipse", 0.2)]):
        img, ann, _ = make_phantom(tmp_path, f"train{i}", 100 + i, kind, veil)
        cases.append((img, ann, "train"))
    manifest = make_manifest(tmp_path, cases)
    csv_path = tmp_path / "features.csv"
    assert run(["extract", "--manifest", manifest, "--out", csv_path,
                "--per-class", 80, "--seed", 7]) == 0
    tree_path = tmp_path / "pixel-tree.json"
    assert run(["train-pixel", "--csv", csv_path, "--out", tree_path]) == 0
    return tmp_path, manifest, csv_path, tree_path


# ---------------------------------------------------------------------------
# phantom / mask
# ---------------------------------------------------------------------------

def test_phantom_outputs_and_determinism(tmp_path):
    img1, ann1, truth1 = make_phantom(tmp_path, "a", 5)
    img2, ann2, truth2 = make_phantom(tmp_path, "b", 5)
    assert img1.read_bytes() == img2.read_bytes()
    assert truth1.read_bytes() == truth2.read_bytes()
    a1 = json.loads(ann1.read_text())
    a2 = json.loads(ann2.read_text())
    a1.pop("image_id"), a2.pop("image_id")  # ids carry the file-less name
    assert a1 == a2


def test_phantom_no_veil_truth_empty(tmp_path):
    _, _, truth = make_phantom(tmp_path, "novel", 3, kind="disk", veil=0.0)
    assert read_mask(truth).count == 0


def test_mask_square_annotation(tmp_path):
    ann = tmp_path / "sq.json"
    ann.write_text(json.dumps({
        "image_id": "sq", "border": [[30, 30], [30, 40], [40, 40], [40, 30]],
        "regions": [], "diagnosis": "benign"}))
    out = tmp_path / "sq.pgm"
    assert run(["mask", "--annotation", ann, "--out", out,
                "--width", 64, "--height", 64]) == 0
    mask = read_mask(out)
    # spline of a square stays within the control square's hull
    assert 0 < mask.count <= 121


def test_mask_circle_annotation_area(tmp_path):
    angles = np.linspace(0, 2 * math.pi, 24, endpoint=False)
    border = [[100 + 50 * math.sin(t), 100 + 50 * math.cos(t)] for t in angles]
    ann = tmp_path / "circle.json"
    ann.write_text(json.dumps({"image_id": "circle", "border": border,
                               "regions": [], "diagnosis": "benign"}))
    out = tmp_path / "circle.png"
    assert run(["mask", "--annotation", ann, "--out", out,
                "--width", 200, "--height", 200]) == 0
    area = read_mask(out).count
    assert abs(area - math.pi * 2500) <= 0.03 * math.pi * 2500


def test_mask_collinear_errors(tmp_path, capsys):
    ann = tmp_path / "line.json"
    ann.write_text(json.dumps({
        "image_id": "line", "border": [[10, 10], [10, 20], [10, 30]],
        "regions": [], "diagnosis": "benign"}))
    code = run(["mask", "--annotation", ann, "--out", tmp_path / "x.pgm",
                "--width", 64, "--height", 64])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ") and err.count("\n") == 1


def test_mask_requires_dimensions(tmp_path, capsys):
    ann = tmp_path / "sq2.json"
    ann.write_text(json.dumps({
        "image_id": "sq2", "border": [[30, 30], [30, 40], [40, 40]],
        "regions": [], "diagnosis": "benign"}))
    assert run(["mask", "--annotation", ann, "--out", tmp_path / "x.pgm"]) == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# extract / train
# ---------------------------------------------------------------------------

def test_extract_row_count_and_chromaticity(workspace):
    _, _, csv_path, _ = workspace
    samples = read_feature_csv(csv_path)
    assert len(samples) == 3 * 2 * 80
    labels = [s.label for s in samples]
    assert labels.count("veil") == labels.count("non-veil") == 240
    # the per-plane median may pick different neighbors for F1, F2 and F3,
    # so row sums drift by the local noise; the column means stay on 1
    feats = np.array([s.features for s in samples])
    assert abs(feats[:, :3].mean(axis=0).sum() - 1.0) < 1e-3
    assert np.all(np.abs(feats[:, :3].sum(axis=1) - 1.0) < 0.02)


def test_extract_rerun_byte_identical(workspace, tmp_path):
    ws, manifest, csv_path, _ = workspace
    out2 = tmp_path / "features2.csv"
    assert run(["extract", "--manifest", manifest, "--out", out2,
                "--per-class", 80, "--seed", 7]) == 0
    assert out2.read_bytes() == csv_path.read_bytes()


def test_extract_shortfall_errors(workspace, tmp_path, capsys):
    _, manifest, _, _ = workspace
    code = run(["extract", "--manifest", manifest, "--out", tmp_path / "x.csv",
                "--per-class", 100000, "--seed", 7])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_train_pixel_selects_few_features(workspace, capsys):
    ws, _, csv_path, tree_path = workspace
    tree = load_tree(tree_path)
    assert tree.n_features == 18
    assert 1 <= len(tree.feature_ids()) <= 3
    assert tree.node_count() <= 7
    # retrain to inspect stdout
    assert run(["train-pixel", "--csv", csv_path,
                "--out", ws / "tree2.json"]) == 0
    out = capsys.readouterr().out
    assert "selected features: F" in out


def test_train_pixel_paper_profile_flags(workspace, tmp_path):
    _, _, csv_path, _ = workspace
    out = tmp_path / "tree-paper.json"
    assert run(["train-pixel", "--csv", csv_path, "--out", out,
                "--confidence", 0.1, "--min-leaf", 100]) == 0
    tree = load_tree(out)
    assert min(tree.leaf_counts()) >= 100
    out2 = tmp_path / "tree-paper2.json"
    assert run(["train-pixel", "--csv", csv_path, "--out", out2,
                "--profile", "paper"]) == 0
    assert out2.read_bytes() == out.read_bytes()


def test_train_pixel_pure_class_single_leaf(tmp_path):
    from bwveil.annotate import PixelSample
    from bwveil.features import write_feature_csv
    rng = np.random.default_rng(0)
    samples = [PixelSample("i", r, 0, "veil", rng.random(18))
               for r in range(30)]
    csv_path = tmp_path / "pure.csv"
    write_feature_csv(csv_path, samples)
    out = tmp_path / "pure-tree.json"
    assert run(["train-pixel", "--csv", csv_path, "--out", out]) == 0
    tree = load_tree(out)
    assert tree.node_count() == 1


def test_train_lesion_and_cv_report(tmp_path):
    rows = ["image_id,S1,S2,S3,label"]
    rng = np.random.default_rng(1)
    for i in range(40):
        s1 = rng.uniform(0.0, 0.008) if i % 2 else rng.uniform(0.02, 0.2)
        label = "benign" if i % 2 else "melanoma"
        rows.append(f"case{i},{s1},{rng.uniform(1, 5)},{rng.uniform(0, 1)},{label}")
    csv_path = tmp_path / "lesions.csv"
    csv_path.write_text("\n".join(rows) + "\n")
    out = tmp_path / "lesion-tree.json"
    cv = tmp_path / "cv.json"
    assert run(["train-lesion", "--csv", csv_path, "--out", out,
                "--cv-folds", 5, "--cv-report", cv, "--min-leaf", 5]) == 0
    tree = load_tree(out)
    assert tree.n_features == 3
    report = json.loads(cv.read_text())
    assert report["k"] == 5 and len(report["folds"]) == 5
    assert report["pooled"]["accuracy"] == 1.0


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

def test_detect_leaf_tree_empty_mask(workspace, tmp_path):
    ws, _, _, _ = workspace
    tree_path = tmp_path / "leaf.json"
    tree_path.write_text(json.dumps(
        {"n_features": 18, "root": {"leaf": {"class": "non-veil",
                                             "counts": {}}}}))
    img, ann, _ = make_phantom(tmp_path, "d0", 55)
    out = tmp_path / "d0-mask.png"
    assert run(["detect", "--image", img, "--annotation", ann,
                "--tree", tree_path, "--out-mask", out]) == 0
    assert read_mask(out).count == 0


def test_detect_phantom_iou_and_subset(workspace, tmp_path):
    ws, _, _, tree_path = workspace
    img, ann, truth = make_phantom(tmp_path, "d1", 77, kind="blob", veil=0.22)
    out = tmp_path / "d1-mask.png"
    overlay = tmp_path / "d1-overlay.png"
    initial = tmp_path / "d1-initial.pgm"
    assert run(["detect", "--image", img, "--annotation", ann,
                "--tree", tree_path, "--out-mask", out,
                "--out-overlay", overlay, "--out-initial", initial]) == 0
    got = read_mask(out)
    want = read_mask(truth)
    inter = (got.bits & want.bits).sum()
    union = (got.bits | want.bits).sum()
    assert inter / union >= 0.9
    # mask stays inside the lesion derived from the same annotation
    lesion_out = tmp_path / "d1-lesion.pgm"
    assert run(["mask", "--annotation", ann, "--image", img,
                "--out", lesion_out]) == 0
    assert not (got.bits & ~read_mask(lesion_out).bits).any()
    assert overlay.exists() and initial.exists()


def test_detect_rerun_byte_identical(workspace, tmp_path):
    ws, _, _, tree_path = workspace
    img, ann, _ = make_phantom(tmp_path, "d2", 78)
    outs = []
    for k in range(2):
        out = tmp_path / f"d2-{k}.png"
        assert run(["detect", "--image", img, "--annotation", ann,
                    "--tree", tree_path, "--out-mask", out]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_detect_dump_planes(workspace, tmp_path):
    ws, _, _, tree_path = workspace
    from bwveil.features import read_feature_plane
    img, ann, _ = make_phantom(tmp_path, "d3", 79)
    out = tmp_path / "d3.png"
    planes = tmp_path / "planes"
    assert run(["detect", "--image", img, "--annotation", ann,
                "--tree", tree_path, "--out-mask", out,
                "--dump-planes", planes]) == 0
    tree = load_tree(tree_path)
    dumped = sorted(planes.glob("F*.plane"))
    assert len(dumped) == len(tree.feature_ids())
    plane, fid = read_feature_plane(dumped[0])
    assert plane.shape == (224, 224)


# ---------------------------------------------------------------------------
# classify / evaluate
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def classified(workspace, tmp_path_factory):
    ws, _, _, tree_path = workspace
    tmp_path = tmp_path_factory.mktemp("classify")
    cases = []
    # melanoma branch: irregular blob with 5% veil
    img, ann, _ = make_phantom(tmp_path, "mel", 200, kind="blob", veil=0.05)
    cases.append((img, ann, "test"))
    # benign via tiny veil fraction (< 0.9%); a disk so the recorded
    # diagnosis agrees with the shape rule
    img, ann, _ = make_phantom(tmp_path, "small-veil", 201, kind="disk",
                               veil=0.005)
    cases.append((img, ann, "test"))
    # benign via high ellipticity with 5% veil
    img, ann, _ = make_phantom(tmp_path, "ellipse", 202, kind="ellipse",
                               veil=0.05)
    cases.append((img, ann, "test"))
    manifest = make_manifest(tmp_path, cases)
    out_csv = tmp_path / "predictions.csv"
    assert run(["classify", "--manifest", manifest, "--pixel-tree", tree_path,
                "--lesion-model", "paper", "--out", out_csv]) == 0
    return tmp_path, manifest, out_csv


def read_predictions(path):
    import csv as _csv
    with open(path, newline="") as fh:
        return {r["image_id"]: r for r in _csv.DictReader(fh)}


def test_classify_reference_thresholds(classified):
    _, _, out_csv = classified
    rows = read_predictions(out_csv)
    assert rows["phantom-blob-200"]["predicted"] == "melanoma"
    assert rows["phantom-disk-201"]["predicted"] == "benign"
    assert float(rows["phantom-disk-201"]["S1"]) < 0.009
    assert rows["phantom-ellipse-202"]["predicted"] == "benign"
    assert float(rows["phantom-ellipse-202"]["S3"]) > 0.979


def test_classify_writes_figure(classified):
    tmp_path, _, out_csv = classified
    assert (tmp_path / "predictions.png").exists()


def test_classify_rerun_byte_identical(classified, workspace):
    tmp_path, manifest, out_csv = classified
    _, _, _, tree_path = workspace
    out2 = tmp_path / "predictions2.csv"
    assert run(["classify", "--manifest", manifest, "--pixel-tree", tree_path,
                "--lesion-model", "paper", "--out", out2]) == 0
    assert out2.read_bytes() == out_csv.read_bytes()
    assert (tmp_path / "predictions2.png").read_bytes() == \
        (tmp_path / "predictions.png").read_bytes()


def test_evaluate_perfect_and_subsets(classified):
    tmp_path, manifest, out_csv = classified
    report_path = tmp_path / "report.json"
    assert run(["evaluate", "--manifest", manifest, "--predictions", out_csv,
                "--out", report_path]) == 0
    report = json.loads(report_path.read_text())
    assert report["sensitivity"] == 1.0 and report["specificity"] == 1.0
    assert report["images"] == 3
    assert (tmp_path / "report.png").exists()
    # subset filters follow the annotation flags
    subset_path = tmp_path / "report-veil.json"
    assert run(["evaluate", "--manifest", manifest, "--predictions", out_csv,
                "--out", subset_path, "--subset", "primary-veil",
                "--no-figure"]) == 0
    subset = json.loads(subset_path.read_text())
    assert subset["images"] == 1  # only the blob is a primary-veil melanoma
    assert not (tmp_path / "report-veil.png").exists()


def test_evaluate_inverted_predictions(classified):
    tmp_path, manifest, out_csv = classified
    rows = read_predictions(out_csv)
    flipped = tmp_path / "flipped.csv"
    lines = ["image_id,predicted"]
    for image_id, row in sorted(rows.items()):
        wrong = "benign" if row["actual"] == "melanoma" else "melanoma"
        lines.append(f"{image_id},{wrong}")
    flipped.write_text("\n".join(lines) + "\n")
    report_path = tmp_path / "flipped.json"
    assert run(["evaluate", "--manifest", manifest, "--predictions", flipped,
                "--out", report_path, "--no-figure"]) == 0
    report = json.loads(report_path.read_text())
    assert report["sensitivity"] == 0.0 and report["specificity"] == 0.0


def test_evaluate_hand_built_counts(tmp_path):
    # 10 rows with hand-counted confusion: tp=3 fn=2 fp=1 tn=4
    cases = []
    preds = ["melanoma", "melanoma", "melanoma", "benign", "benign",
             "melanoma", "benign", "benign", "benign", "benign"]
    actual = ["melanoma"] * 5 + ["benign"] * 5
    lines = ["image_id,predicted"]
    for i, (p, a) in enumerate(zip(preds, actual)):
        ann = tmp_path / f"h{i}.json"
        ann.write_text(json.dumps({
            "image_id": f"h{i}", "border": [[5, 5], [5, 20], [20, 20], [20, 5]],
            "regions": [], "diagnosis": a}))
        img = tmp_path / f"h{i}.png"
        from bwveil.raster import RgbImage, write_image
        write_image(RgbImage(np.full((32, 32, 3), 200, np.uint8)), img)
        cases.append((img, ann, "all"))
        lines.append(f"h{i},{p}")
    manifest = make_manifest(tmp_path, cases)
    pred_csv = tmp_path / "hand.csv"
    pred_csv.write_text("\n".join(lines) + "\n")
    report_path = tmp_path / "hand.json"
    assert run(["evaluate", "--manifest", manifest, "--predictions", pred_csv,
                "--out", report_path, "--no-figure"]) == 0
    report = json.loads(report_path.read_text())
    assert (report["tp"], report["fn"], report["fp"], report["tn"]) == (3, 2, 1, 4)
    assert report["sensitivity"] == 0.6 and report["specificity"] == 0.8
    assert report["accuracy"] == 0.7


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def test_extract_split_filter_and_relative_paths(tmp_path):
    img1, ann1, _ = make_phantom(tmp_path, "s-train", 400, veil=0.2)
    img2, ann2, _ = make_phantom(tmp_path, "s-test", 401, veil=0.2)
    manifest = tmp_path / "split.json"
    manifest.write_text(json.dumps({"entries": [
        {"image_path": img1.name, "annotation_path": ann1.name,
         "split": "train"},
        {"image_path": img2.name, "annotation_path": ann2.name,
         "split": "test"}]}))
    out = tmp_path / "train-only.csv"
    assert run(["extract", "--manifest", manifest, "--out", out,
                "--per-class", 20, "--split", "train"]) == 0
    samples = read_feature_csv(out)
    assert len(samples) == 40
    assert {s.image_id for s in samples} == {"phantom-blob-400"}


def test_duplicate_image_id_rejected(tmp_path, capsys):
    img, ann, _ = make_phantom(tmp_path, "dup", 402, veil=0.2)
    manifest = make_manifest(tmp_path, [(img, ann, "all"), (img, ann, "all")])
    assert run(["extract", "--manifest", manifest,
                "--out", tmp_path / "x.csv", "--per-class", 10]) == 1
    assert "duplicate image_id" in capsys.readouterr().err


def test_evaluate_missing_prediction_errors(tmp_path, capsys):
    img, ann, _ = make_phantom(tmp_path, "mp", 403, veil=0.2)
    manifest = make_manifest(tmp_path, [(img, ann, "all")])
    preds = tmp_path / "preds.csv"
    preds.write_text("image_id,predicted\nsomeone-else,benign\n")
    assert run(["evaluate", "--manifest", manifest, "--predictions", preds,
                "--out", tmp_path / "r.json", "--no-figure"]) == 1
    assert "no prediction for" in capsys.readouterr().err


def test_tree_width_declaration_enforced(tmp_path, capsys):
    bad = tmp_path / "bad-tree.json"
    bad.write_text(json.dumps(
        {"n_features": 2,
         "root": {"feature": 5, "threshold": 0.1,
                  "left": {"leaf": {"class": "veil", "counts": {}}},
                  "right": {"leaf": {"class": "non-veil", "counts": {}}}}}))
    img, ann, _ = make_phantom(tmp_path, "w", 404)
    assert run(["detect", "--image", img, "--annotation", ann, "--tree", bad,
                "--out-mask", tmp_path / "m.png"]) == 1
    assert "beyond its declared width" in capsys.readouterr().err


def test_feature_csv_header_check(tmp_path, capsys):
    bogus = tmp_path / "bogus.csv"
    bogus.write_text("a,b,c\n1,2,3\n")
    assert run(["train-pixel", "--csv", bogus,
                "--out", tmp_path / "t.json"]) == 1
    assert "expected header" in capsys.readouterr().err


def test_config_file_parsing(workspace, tmp_path):
    _, manifest, _, _ = workspace
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nring_skip = 0.15\nmedian_window = 3\nseed = 9\n")
    out = tmp_path / "cfg-features.csv"
    assert run(["extract", "--manifest", manifest, "--out", out,
                "--per-class", 10, "--config", cfg]) == 0
    assert out.exists()


def test_bad_config_value_errors(workspace, tmp_path, capsys):
    _, manifest, _, _ = workspace
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("median_window = 4\n")
    assert run(["extract", "--manifest", manifest,
                "--out", tmp_path / "x.csv", "--per-class", 10,
                "--config", cfg]) == 1
    assert "median_window" in capsys.readouterr().err


def test_unknown_profile_errors(workspace, tmp_path):
    _, manifest, _, _ = workspace
    import subprocess, sys
    proc = subprocess.run(
        [sys.executable, "-m", "bwveil.cli", "extract", "--manifest",
         str(manifest), "--out", str(tmp_path / "x.csv"), "--per-class", "10",
         "--profile", "fast"], capture_output=True, text=True)
    assert proc.returncode != 0
