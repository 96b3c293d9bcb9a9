"""Batch command-line front end.

Verbs: phantom, mask, extract, train-pixel, train-lesion, detect,
classify, evaluate. Every command is deterministic given its inputs,
configuration and seed; outputs are written atomically. Errors exit
nonzero with a single "error: ..." line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import annotate, dtree, features, lesion, phantom, raster, report, veil
from ._io import atomic_text
from .config import PipelineConfig, build_config
from .metrics import confusion

SUBSETS = ("all", "veil", "primary-veil")


class CliError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline configuration")
    group.add_argument("--config", metavar="PATH",
                       help="key=value configuration file")
    group.add_argument("--profile", choices=("default", "paper"),
                       help="named parameter profile")
    group.add_argument("--seed", type=int, help="random seed")
    group.add_argument("--ring-skip", type=float, dest="ring_skip")
    group.add_argument("--ring-take", type=float, dest="ring_take")
    group.add_argument("--glcm-levels", type=int, dest="glcm_levels")
    group.add_argument("--median-window", type=int, dest="median_window")
    group.add_argument("--majority-window", type=int, dest="majority_window")
    group.add_argument("--confidence", type=float,
                       help="pruning confidence factor C")
    group.add_argument("--min-leaf", type=int, dest="min_leaf",
                       help="minimum training rows per leaf M")
    group.add_argument("--max-depth", type=int, dest="max_depth")


def _config_from(args: argparse.Namespace) -> PipelineConfig:
    keys = ("seed", "ring_skip", "ring_take", "glcm_levels", "median_window",
            "majority_window", "confidence", "min_leaf", "max_depth")
    overrides = {k: getattr(args, k, None) for k in keys}
    return build_config(getattr(args, "profile", None),
                        getattr(args, "config", None), overrides)


def _induction_config(cfg: PipelineConfig) -> dtree.InductionConfig:
    return dtree.InductionConfig(confidence=cfg.confidence,
                                 min_leaf=cfg.min_leaf,
                                 max_depth=cfg.max_depth, seed=cfg.seed)


def _load_manifest(path, split: str = "all") -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CliError(f"manifest {path}: invalid JSON ({exc})") from exc
    entries = doc.get("entries") if isinstance(doc, dict) else None
    if not isinstance(entries, list) or not entries:
        raise CliError(f"manifest {path}: expected a non-empty 'entries' list")
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for i, e in enumerate(entries):
        if not isinstance(e, dict):
            raise CliError(f"manifest entry {i}: expected an object")
        for key in ("image_path", "annotation_path"):
            if not isinstance(e.get(key), str):
                raise CliError(f"manifest entry {i}: missing {key}")
        entry_split = e.get("split", "all")
        if entry_split not in ("train", "test", "all"):
            raise CliError(f"manifest entry {i}: bad split {entry_split!r}")
        resolved = {
            "image_path": os.path.join(base, e["image_path"]),
            "annotation_path": os.path.join(base, e["annotation_path"]),
            "split": entry_split,
        }
        for key in ("image_path", "annotation_path"):
            if not os.path.exists(resolved[key]):
                raise CliError(f"manifest entry {i}: {resolved[key]} does not exist")
        out.append(resolved)
    if split != "all":
        out = [e for e in out if e["split"] in (split, "all")]
        if not out:
            raise CliError(f"manifest {path}: no entries in split {split!r}")
    return out


def _load_case(entry: dict):
    image = raster.read_image(entry["image_path"])
    polygon, regions, record = annotate.load_annotations(
        entry["annotation_path"], image_size=image.shape)
    mask = raster.polygon_to_mask(polygon, image.width, image.height)
    return image, polygon, regions, record, mask


def _check_unique_ids(records) -> None:
    seen = {}
    for r in records:
        if r.image_id in seen:
            raise CliError(f"duplicate image_id {r.image_id!r} in manifest")
        seen[r.image_id] = True


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_text(path, buf.getvalue())


def _figure_path(args, out_path) -> str | None:
    if getattr(args, "no_figure", False):
        return None
    explicit = getattr(args, "figure", None)
    if explicit:
        return explicit
    root, _ = os.path.splitext(out_path)
    return root + ".png"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_phantom(args) -> int:
    spec = phantom.PhantomSpec(
        width=args.width, height=args.height, lesion_kind=args.kind,
        lesion_scale=args.lesion_scale, veil_fraction=args.veil_fraction,
        noise_sigma=args.noise)
    ph = phantom.generate(spec, args.seed, image_id=args.image_id)
    raster.write_image(ph.image, args.out_image)
    annotate.save_annotations(args.out_annotation, ph.border, ph.regions,
                              ph.record)
    raster.write_mask(ph.veil_truth, args.out_truth)
    if args.out_lesion:
        raster.write_mask(ph.lesion, args.out_lesion)
    print(f"phantom {ph.record.image_id}: lesion {ph.lesion.count} px, "
          f"veil {ph.veil_truth.count} px")
    return 0


def cmd_mask(args) -> int:
    if args.image:
        image = raster.read_image(args.image)
        height, width = image.shape
    elif args.width and args.height:
        width, height = args.width, args.height
    else:
        raise CliError("provide --image or both --width and --height")
    polygon, _, _ = annotate.load_annotations(args.annotation)
    mask = raster.polygon_to_mask(polygon, width, height)
    raster.write_mask(mask, args.out)
    print(f"mask: {mask.count} foreground px of {width}x{height}")
    return 0


def cmd_extract(args) -> int:
    cfg = _config_from(args)
    entries = _load_manifest(args.manifest, args.split)
    all_samples = []
    records = []
    for index, entry in enumerate(entries):
        image, _, regions, record, mask = _load_case(entry)
        records.append(record)
        skin = features.background_skin_color(image, mask, cfg.ring_skip,
                                              cfg.ring_take)
        samples = annotate.sample_pixels(regions, args.per_class,
                                         seed=[cfg.seed, index],
                                         image_id=record.image_id)
        all_samples.extend(features.sample_features(
            image, samples, skin, median_window=cfg.median_window,
            glcm_levels=cfg.glcm_levels,
            glcm_displacement=cfg.glcm_displacement,
            glcm_symmetric=cfg.glcm_symmetric))
    _check_unique_ids(records)
    features.write_feature_csv(args.out, all_samples)
    print(f"extracted {len(all_samples)} feature rows from "
          f"{len(entries)} images into {args.out}")
    return 0


def _train(csv_rows, args, feature_count_hint: str) -> int:
    cfg = _config_from(args)
    tree = dtree.induce(csv_rows, _induction_config(cfg))
    dtree.save_tree(tree, args.out)
    used = sorted(tree.feature_ids())
    names = ", ".join(f"F{i}" for i in used) if used else "none (single leaf)"
    print(f"selected features: {names}")
    print(f"tree: {tree.node_count()} nodes over {feature_count_hint}")
    if args.cv_report:
        cv = dtree.cross_validate(csv_rows, k=args.cv_folds,
                                  config=_induction_config(cfg),
                                  seed=cfg.seed)
        atomic_text(args.cv_report, json.dumps(cv.to_dict(), indent=2) + "\n")
        print(f"cross-validation ({args.cv_folds}-fold) pooled accuracy: "
              f"{cv.pooled.accuracy:.4f}")
    return 0


def cmd_train_pixel(args) -> int:
    samples = features.read_feature_csv(args.csv)
    rows = [dtree.LabeledRow(s.features, s.label) for s in samples]
    return _train(rows, args, "the 18 pixel features")


def _read_lesion_csv(path) -> list[dtree.LabeledRow]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"S1", "S2", "S3"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise CliError(f"{path}: expected columns S1,S2,S3 plus a label")
        label_col = "label" if "label" in reader.fieldnames else (
            "actual" if "actual" in reader.fieldnames else None)
        if label_col is None:
            raise CliError(f"{path}: expected a 'label' or 'actual' column")
        for rec in reader:
            vec = np.array([float(rec["S1"]), float(rec["S2"]),
                            float(rec["S3"])])
            rows.append(dtree.LabeledRow(vec, rec[label_col]))
    return rows


def cmd_train_lesion(args) -> int:
    return _train(_read_lesion_csv(args.csv), args,
                  "the 3 lesion shape features")


def cmd_detect(args) -> int:
    cfg = _config_from(args)
    image = raster.read_image(args.image)
    polygon, _, _ = annotate.load_annotations(args.annotation,
                                              image_size=image.shape)
    mask = raster.polygon_to_mask(polygon, image.width, image.height)
    skin = features.background_skin_color(image, mask, cfg.ring_skip,
                                          cfg.ring_take)
    tree = dtree.load_tree(args.tree)
    result = veil.detect_veil(
        image, mask, skin, tree, majority_window=cfg.majority_window,
        median_window=cfg.median_window, glcm_levels=cfg.glcm_levels,
        glcm_displacement=cfg.glcm_displacement,
        glcm_symmetric=cfg.glcm_symmetric)
    raster.write_mask(result.final, args.out_mask)
    if args.out_initial:
        raster.write_mask(result.initial, args.out_initial)
    if args.out_overlay:
        raster.write_image(veil.overlay_image(image, mask, result.final),
                           args.out_overlay)
    if args.dump_planes:
        os.makedirs(args.dump_planes, exist_ok=True)
        planes = features.extract_feature_planes(
            image, mask, skin, sorted(tree.feature_ids()) or (1,),
            median_window=cfg.median_window, glcm_levels=cfg.glcm_levels,
            glcm_displacement=cfg.glcm_displacement,
            glcm_symmetric=cfg.glcm_symmetric)
        for fid, plane in planes.planes.items():
            features.write_feature_plane(
                os.path.join(args.dump_planes, f"F{fid}.plane"), plane, fid)
    print(f"detected veil: {result.final.count} px of lesion {mask.count} px")
    return 0


def _lesion_model(name: str) -> dtree.DecisionTree:
    if name == "paper":
        return lesion.reference_lesion_model()
    return dtree.load_tree(name)


def cmd_classify(args) -> int:
    cfg = _config_from(args)
    entries = _load_manifest(args.manifest, args.split)
    pixel_tree = dtree.load_tree(args.pixel_tree)
    model = _lesion_model(args.lesion_model)
    rows = []
    records = []
    for entry in entries:
        image, _, _, record, mask = _load_case(entry)
        records.append(record)
        skin = features.background_skin_color(image, mask, cfg.ring_skip,
                                              cfg.ring_take)
        detected = veil.detect_veil(
            image, mask, skin, pixel_tree,
            majority_window=cfg.majority_window,
            median_window=cfg.median_window, glcm_levels=cfg.glcm_levels,
            glcm_displacement=cfg.glcm_displacement,
            glcm_symmetric=cfg.glcm_symmetric)
        shape = lesion.shape_features(detected.final, mask)
        predicted = lesion.classify_lesion(shape, model)
        rows.append({"image_id": record.image_id,
                     "S1": repr(shape.s1), "S2": repr(shape.s2),
                     "S3": repr(shape.s3), "predicted": predicted,
                     "actual": record.diagnosis})
    _check_unique_ids(records)
    header = ("image_id", "S1", "S2", "S3", "predicted", "actual")
    _write_csv(args.out, header, [[r[k] for k in header] for r in rows])
    figure = _figure_path(args, args.out)
    if figure:
        thresholds = (0.009, 0.979) if args.lesion_model == "paper" else None
        report.save_classification_figure(rows, figure, thresholds)
    correct = sum(r["predicted"] == r["actual"] for r in rows)
    print(f"classified {len(rows)} lesions ({correct} match the recorded "
          f"diagnosis) into {args.out}")
    return 0


def _read_predictions(path) -> dict[str, str]:
    out = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"image_id", "predicted"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise CliError(f"{path}: expected image_id and predicted columns")
        for rec in reader:
            out[rec["image_id"]] = rec["predicted"]
    if not out:
        raise CliError(f"{path}: no prediction rows")
    return out


def cmd_evaluate(args) -> int:
    entries = _load_manifest(args.manifest, "all")
    predictions = _read_predictions(args.predictions)
    predicted, actual = [], []
    kept = 0
    records = []
    for entry in entries:
        _, _, record = annotate.load_annotations(entry["annotation_path"])
        records.append(record)
        if args.subset == "veil" and not record.has_veil_area:
            continue
        if args.subset == "primary-veil" and not record.primary_veil:
            continue
        if record.image_id not in predictions:
            raise CliError(f"no prediction for image_id {record.image_id!r}")
        predicted.append(predictions[record.image_id])
        actual.append(record.diagnosis)
        kept += 1
    _check_unique_ids(records)
    if not kept:
        raise CliError(f"subset {args.subset!r} is empty for this manifest")
    result = confusion(predicted, actual, positive=annotate.MELANOMA)
    doc = result.to_dict()
    doc["subset"] = args.subset
    doc["images"] = kept
    atomic_text(args.out, json.dumps(doc, indent=2) + "\n")
    figure = _figure_path(args, args.out)
    if figure:
        report.save_metrics_figure(result, figure)

    def pct(v):
        return "n/a" if v is None else f"{100 * v:.2f}%"

    print(f"evaluated {kept} lesions (subset {args.subset}): "
          f"sensitivity {pct(result.sensitivity)}, "
          f"specificity {pct(result.specificity)}, "
          f"accuracy {pct(result.accuracy)}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bwveil",
        description="Blue-white veil detection and lesion classification "
                    "for dermoscopy images.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic test image "
                                       "with exact ground truth")
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-annotation", required=True)
    p.add_argument("--out-truth", required=True,
                   help="ground-truth veil mask (empty when no veil)")
    p.add_argument("--out-lesion", help="optional ground-truth lesion mask")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=768)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--kind", choices=phantom.LESION_KINDS, default="blob")
    p.add_argument("--lesion-scale", type=float, default=0.62,
                   dest="lesion_scale")
    p.add_argument("--veil-fraction", type=float, default=0.20,
                   dest="veil_fraction")
    p.add_argument("--noise", type=float, default=2.5)
    p.add_argument("--image-id", dest="image_id")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("mask", help="border control points -> lesion mask")
    p.add_argument("--annotation", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--image", help="image the annotation belongs to "
                                   "(provides the mask dimensions)")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("extract", help="sample annotated pixels and write "
                                       "the 18-feature training CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, required=True, dest="per_class")
    p.add_argument("--split", choices=("train", "test", "all"), default="all")
    _add_config_flags(p)
    p.set_defaults(func=cmd_extract)

    for name, fn, csv_help in (
            ("train-pixel", cmd_train_pixel, "feature CSV from extract"),
            ("train-lesion", cmd_train_lesion,
             "CSV with S1,S2,S3 and label (or actual) columns")):
        p = sub.add_parser(name, help=f"induce and prune a tree from a "
                                      f"{csv_help}")
        p.add_argument("--csv", required=True, help=csv_help)
        p.add_argument("--out", required=True, help="tree JSON path")
        p.add_argument("--cv-folds", type=int, default=10, dest="cv_folds")
        p.add_argument("--cv-report", dest="cv_report",
                       help="optional cross-validation report JSON")
        _add_config_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("detect", help="detect the veil mask of one image")
    p.add_argument("--image", required=True)
    p.add_argument("--annotation", required=True)
    p.add_argument("--tree", required=True)
    p.add_argument("--out-mask", required=True, dest="out_mask")
    p.add_argument("--out-initial", dest="out_initial",
                   help="optional pre-smoothing mask")
    p.add_argument("--out-overlay", dest="out_overlay",
                   help="optional overlay PNG (thin lesion border, thick "
                        "veil border)")
    p.add_argument("--dump-planes", dest="dump_planes",
                   help="optional directory for raw float32 feature planes")
    _add_config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("classify", help="veil ratio + shape features -> "
                                        "melanoma/benign per image")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pixel-tree", required=True, dest="pixel_tree")
    p.add_argument("--lesion-model", required=True, dest="lesion_model",
                   help="'paper' for the fixed published thresholds, "
                        "or a tree JSON path")
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "test", "all"), default="all")
    p.add_argument("--figure", help="scatter figure path (default: next "
                                    "to the CSV)")
    p.add_argument("--no-figure", action="store_true", dest="no_figure")
    _add_config_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="confusion-matrix report for a "
                                        "predictions CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True, help="metrics report JSON")
    p.add_argument("--subset", choices=SUBSETS, default="all")
    p.add_argument("--figure", help="confusion figure path (default: next "
                                    "to the report)")
    p.add_argument("--no-figure", action="store_true", dest="no_figure")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
