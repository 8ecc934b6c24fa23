"""Batch command-line entry points.

Subcommands: roi-extract, dataset {scan,split,kfold,augment},
eval {verify,identify,detect,threshold}, serve.

Exit codes are a stable scripting contract: 0 success, 1 usage error,
2 data error (bad files, malformed names, empty inputs), 3 pipeline error
(incomplete detection, degenerate geometry, matching failures).
Every randomized subcommand takes --seed (default 20200101) and is
bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import dataset, evaluation, geometry, matching, pipeline, synthetic
from .dataset import DEFAULT_SEED
from .evaluation import KeypointScene
from .geometry import AnnotationFormatError, GeometryError
from .matching import DEFAULT_THRESHOLD, MatchingError
from .pipeline import IncompleteDetection

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PIPELINE = 3

DEFAULT_FAR_TARGETS = (1e-1, 1e-2, 1e-3, 1e-4)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors by default; the CLI contract says 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class UsageError(Exception):
    """Flag combinations argparse cannot catch (e.g. oracle without --annotation)."""


def _load_image(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError) as exc:
        raise dataset.DatasetError(f"cannot decode image {path}: {exc}") from exc


def _save_image(arr: np.ndarray, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


def _parse_detector(spec: str, ann_path: str | None) -> pipeline.DetectorBackend:
    """Backend spec: 'oracle[:jitter[:seed]]' (needs --annotation). A
    model-file backend can be plugged in programmatically via run_pipeline."""
    parts = spec.split(":")
    if parts[0] != "oracle":
        raise UsageError(f"unknown detector backend {spec!r}; available: oracle")
    if ann_path is None:
        raise UsageError("oracle detector needs --annotation")
    jitter = float(parts[1]) if len(parts) > 1 else 0.0
    seed = int(parts[2]) if len(parts) > 2 else 0
    return pipeline.oracle_detector(geometry.load_annotation(ann_path), jitter_sigma=jitter, seed=seed)


def _parse_embedder(spec: str) -> matching.EmbedderBackend:
    parts = spec.split(":")
    if parts[0] != "stub":
        raise UsageError(f"unknown embedder backend {spec!r}; available: stub")
    return matching.stub_embedder(int(parts[1]) if len(parts) > 1 else 0)


def _manifest_features(
    manifest: dataset.Manifest,
    root: Path,
    embedder: matching.EmbedderBackend,
    roi_size: int = 224,
) -> dict[dataset.SampleId, matching.FeatureVector]:
    """Oracle-ROI + embed + normalize for every annotated manifest entry."""
    features = {}
    for entry in manifest.entries:
        if entry.annotation_path is None:
            raise dataset.DatasetError(f"{entry.image_path} has no annotation sidecar")
        ann = geometry.load_annotation(root / entry.annotation_path)
        image = _load_image(root / entry.image_path)
        detector = pipeline.oracle_detector(ann)
        roi = pipeline.run_pipeline(image, detector, out_size=roi_size)
        features[entry.sample_id] = matching.normalize(matching.embed(roi, embedder))
    return features


# --- subcommands ---------------------------------------------------------------

def cmd_roi_extract(args) -> int:
    image = _load_image(args.image)
    detector = _parse_detector(args.backend, args.annotation)
    roi = pipeline.run_pipeline(
        image, detector, conf_min=args.conf_min, out_size=args.size, source_id=str(args.image)
    )
    _save_image(roi.pixels, args.out)
    corners = ", ".join(f"({c.x:.2f}, {c.y:.2f})" for c in roi.quad.corners)
    print(f"wrote {args.out} ({args.size}x{args.size}) from quad [{corners}] side {roi.quad.side:.2f}")
    return EXIT_OK


def cmd_dataset_scan(args) -> int:
    manifest = dataset.scan_directory(args.root)
    if len(manifest) == 0:
        raise dataset.DatasetError(f"no samples found under {args.root}")
    dataset.save_manifest(manifest, args.out)
    annotated = sum(1 for e in manifest.entries if e.annotation_path)
    print(f"wrote {args.out}: {len(manifest)} samples ({annotated} annotated, "
          f"{len(manifest.identities())} palm identities)")
    return EXIT_OK


def cmd_dataset_split(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    if args.mode == "detector":
        ratios = tuple(int(x) for x in args.ratio.split(":"))
        if len(ratios) != 3:
            raise dataset.DatasetError(f"ratio must look like 8:1:1, got {args.ratio!r}")
        split = dataset.detector_split(manifest, seed=args.seed, ratios=ratios)
    else:
        split = dataset.verifier_split(manifest, train_fraction=args.train_fraction, seed=args.seed)
    dataset.save_split(split, args.out_dir)
    print(f"wrote {args.out_dir}: train {len(split.train)} / val {len(split.val)} / "
          f"test {len(split.test)} ({args.mode} mode, seed {args.seed})")
    return EXIT_OK


def cmd_dataset_kfold(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    splits = dataset.kfold(manifest, k=args.k, seed=args.seed)
    for i, split in enumerate(splits):
        dataset.save_split(split, Path(args.out_dir) / f"fold_{i}")
        print(f"fold {i}: train {len(split.train)} / test {len(split.test)}")
    return EXIT_OK


def cmd_dataset_augment(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    root = Path(args.root)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    skipped = 0
    for entry in manifest.entries:
        if entry.annotation_path is None:
            raise dataset.DatasetError(f"{entry.image_path} has no annotation sidecar")
        ann = geometry.load_annotation(root / entry.annotation_path)
        image = _load_image(root / entry.image_path)
        result = dataset.augment_rotations(image, ann, J=args.J, s_f=args.sf)
        stem = Path(entry.image_path).stem
        for j, sample in enumerate(result.samples):
            out_img = out_dir / f"{stem}_aug{j:03d}.jpg"
            _save_image(sample.image, out_img)
            geometry.save_annotation(sample.annotation, geometry.sidecar_path(out_img))
            written += 1
        skipped += len(result.skipped_angles)
    print(f"wrote {written} augmented samples to {out_dir} "
          f"(J={args.J}, step {360.0 / args.J:g} deg, {skipped} skipped off-canvas)")
    return EXIT_OK


def _eval_prolog(args):
    manifest = dataset.load_manifest(args.manifest)
    root = Path(args.root)
    embedder = _parse_embedder(args.embedder)
    features = _manifest_features(manifest, root, embedder)
    return manifest, features


def cmd_eval_verify(args) -> int:
    manifest, features = _eval_prolog(args)
    scores = evaluation.gen_pairs(manifest.sample_ids(), features)
    far_targets = [float(x) for x in args.far.split(",")]
    rate = evaluation.eer(scores)
    calib = evaluation.tpr_at_far(scores, far_targets)
    rows = [
        [f"{c.far_target:g}", c.threshold, c.achieved_far, c.tpr, "yes" if c.saturated else "no"]
        for c in calib
    ]
    print(f"genuine pairs: {len(scores.genuine)}, impostor pairs: {len(scores.impostor)}")
    print(f"EER: {rate:.4f}")
    print(evaluation.format_table(
        "TPR at FAR targets", ["FAR target", "threshold", "achieved FAR", "TPR", "saturated"], rows
    ))
    if args.report:
        evaluation.write_json_report(args.report, {
            "eer": rate,
            "genuine_pairs": len(scores.genuine),
            "impostor_pairs": len(scores.impostor),
            "tpr_at_far": [c.__dict__ for c in calib],
        })
        print(f"wrote {args.report}")
    return EXIT_OK


def cmd_eval_identify(args) -> int:
    manifest, features = _eval_prolog(args)
    acc = evaluation.top1(manifest.sample_ids(), features, seed=args.seed, repeats=args.repeats)
    print(f"Top-1 accuracy over {args.repeats} repeats (seed {args.seed}): {acc:.4f}")
    if args.report:
        evaluation.write_json_report(args.report, {"top1": acc, "repeats": args.repeats, "seed": args.seed})
        print(f"wrote {args.report}")
    return EXIT_OK


def cmd_eval_detect(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    root = Path(args.root)
    gt_scenes = []
    det_scenes = []
    scenes_by_class = {geometry.BoxClass.DOUBLE_FINGER_GAP: [], geometry.BoxClass.PALM_CENTER: []}
    for i, entry in enumerate(manifest.entries):
        if entry.annotation_path is None:
            raise dataset.DatasetError(f"{entry.image_path} has no annotation sidecar")
        ann = geometry.load_annotation(root / entry.annotation_path)
        image = _load_image(root / entry.image_path)
        gt_boxes = geometry.boxes_from_annotation(ann)
        detector = pipeline.oracle_detector(ann, jitter_sigma=args.jitter, seed=args.seed + i)
        det_boxes = detector.detect(image)
        gt_scenes.append(gt_boxes)
        det_scenes.append(det_boxes)
        for class_id in scenes_by_class:
            scenes_by_class[class_id].append(KeypointScene(
                gts=tuple(b.center for b in gt_boxes if b.class_id is class_id),
                dets=tuple((d.center, d.confidence) for d in det_boxes if d.class_id is class_id),
            ))
    aps, mean_ap = evaluation.map_detection(gt_scenes, det_scenes)
    rows = [[class_id.name.lower(), class_id.value, ap] for class_id, ap in aps.items()]
    rows.append(["mAP", "-", mean_ap])
    print(evaluation.format_table("Detection AP (IoU 0.5)", ["class", "id", "AP"], rows))
    report = {"ap_per_class": {str(int(k)): v for k, v in aps.items()}, "map": mean_ap,
              "jitter_sigma": args.jitter, "delta": args.delta}
    thresholds = [t / 10 for t in range(11)]
    for class_id, scenes in scenes_by_class.items():
        curve = evaluation.miss_rate_fppi(scenes, thresholds, delta=args.delta)
        rate = evaluation.lamr(curve)
        print(f"LAMR[{class_id.name.lower()}] at delta={args.delta:g}: {rate:.4f}")
        report[f"lamr_class{int(class_id)}"] = rate
        if args.curves:
            out = Path(args.curves) / f"miss_rate_fppi_class{int(class_id)}.csv"
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(evaluation.curve_csv(curve), encoding="utf-8")
            print(f"wrote {out}")
    if args.report:
        evaluation.write_json_report(args.report, report)
        print(f"wrote {args.report}")
    return EXIT_OK


def cmd_eval_threshold(args) -> int:
    manifest, features = _eval_prolog(args)
    scores = evaluation.gen_pairs(manifest.sample_ids(), features)
    result = evaluation.tpr_at_far(scores, [args.far])[0]
    note = " (saturated: impostor set too small for the target)" if result.saturated else ""
    print(f"calibrated threshold at FAR<={args.far:g}: {result.threshold:.6f} "
          f"(achieved FAR {result.achieved_far:.6g}, TPR {result.tpr:.4f}){note}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from . import service

    store_path = Path(args.store)
    if store_path.exists() and store_path.is_dir():
        raise dataset.DatasetError(f"store path {store_path} is a directory")
    try:
        store_path.parent.mkdir(parents=True, exist_ok=True)
        service.TemplateStore(store_path)
    except (OSError, ValueError) as exc:
        raise dataset.DatasetError(f"cannot open template store {store_path}: {exc}") from exc
    detector = _parse_detector(args.backend, args.annotation)
    embedder = _parse_embedder(args.embedder)
    app = service.create_app(
        detector, embedder, store_path, threshold=args.threshold, static_dir=args.static
    )
    host, _, port = args.addr.rpartition(":")
    host = host or "127.0.0.1"

    import socket

    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.bind((host, int(port)))
        probe.close()
    except OSError as exc:
        print(f"cannot bind {args.addr}: {exc}", file=sys.stderr)
        return EXIT_DATA

    print(f"serving on {args.addr} with threshold {args.threshold}", flush=True)
    import uvicorn

    uvicorn.run(app, host=host, port=int(port), log_level="warning")
    return EXIT_OK


def cmd_synth(args) -> int:
    manifest = synthetic.make_synthetic_dataset(
        args.root, subjects=args.subjects, shots=args.shots, canvas=args.canvas,
        seed=args.seed, identical_shots=not args.varied,
    )
    dataset.save_manifest(manifest, Path(args.root) / "manifest.txt")
    print(f"wrote {len(manifest)} synthetic samples under {args.root} "
          f"({len(manifest.identities())} palm identities); manifest at {args.root}/manifest.txt")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="palmkit", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("roi-extract", help="run the ROI extraction pipeline on one image")
    p.add_argument("--image", required=True)
    p.add_argument("--annotation", help="sidecar annotation for the oracle backend")
    p.add_argument("--backend", default="oracle", help="detector backend spec (default: oracle)")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=224)
    p.add_argument("--conf-min", type=float, default=pipeline.DEFAULT_CONF_MIN)
    p.set_defaults(func=cmd_roi_extract)

    ds = sub.add_parser("dataset", help="manifest scanning, splits, folds, augmentation")
    dsub = ds.add_subparsers(dest="dataset_command", required=True)

    p = dsub.add_parser("scan", help="build a manifest from a directory tree")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset_scan)

    p = dsub.add_parser("split", help="detector (8:1:1) or subject-disjoint verifier split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mode", choices=("detector", "verifier"), default="detector")
    p.add_argument("--ratio", default="8:1:1")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_dataset_split)

    p = dsub.add_parser("kfold", help="subject-disjoint k-fold partitions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_dataset_kfold)

    p = dsub.add_parser("augment", help="rotation augmentation onto a square canvas")
    p.add_argument("--manifest", required=True)
    p.add_argument("--root", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--J", type=int, default=24, help="number of rotated versions (step 360/J)")
    p.add_argument("--sf", type=int, default=416, help="square canvas size")
    p.set_defaults(func=cmd_dataset_augment)

    ev = sub.add_parser("eval", help="verification / identification / detection metrics")
    esub = ev.add_subparsers(dest="eval_command", required=True)

    def eval_common(p):
        p.add_argument("--manifest", required=True)
        p.add_argument("--root", required=True)
        p.add_argument("--embedder", default="stub")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--report", help="write a JSON results document here")

    p = esub.add_parser("verify", help="EER and TPR@FAR on oracle-extracted ROIs")
    eval_common(p)
    p.add_argument("--far", default=",".join(f"{t:g}" for t in DEFAULT_FAR_TARGETS))
    p.set_defaults(func=cmd_eval_verify)

    p = esub.add_parser("identify", help="Top-1 identification accuracy")
    eval_common(p)
    p.add_argument("--repeats", type=int, default=10)
    p.set_defaults(func=cmd_eval_identify)

    p = esub.add_parser("detect", help="mAP, keypoint miss-rate curves, LAMR")
    p.add_argument("--manifest", required=True)
    p.add_argument("--root", required=True)
    p.add_argument("--jitter", type=float, default=0.0, help="oracle center jitter sigma")
    p.add_argument("--delta", type=float, default=evaluation.KEYPOINT_DELTA)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--report")
    p.add_argument("--curves", help="directory for miss-rate/FPPI CSV exports")
    p.set_defaults(func=cmd_eval_detect)

    p = esub.add_parser("threshold", help="calibrate the decision threshold at a FAR target")
    eval_common(p)
    p.add_argument("--far", type=float, default=1e-4)
    p.set_defaults(func=cmd_eval_threshold)

    p = sub.add_parser("serve", help="boot the enrollment/verification HTTP service")
    p.add_argument("--addr", default="127.0.0.1:8000")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--backend", default="oracle", help="detector backend: oracle[:jitter[:seed]]")
    p.add_argument("--annotation", help="annotation file for the oracle detector")
    p.add_argument("--embedder", default="stub", help="embedder spec: stub[:seed]")
    p.add_argument("--store", required=True, help="template store JSON file")
    p.add_argument("--static", help="directory of web UI assets to serve at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset for demos")
    p.add_argument("--root", required=True)
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--shots", type=int, default=2)
    p.add_argument("--canvas", type=int, default=256)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--varied", action="store_true",
                   help="redraw the pose per shot instead of identical copies")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"palmkit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (dataset.DatasetError, AnnotationFormatError, evaluation.EvaluationError, OSError) as exc:
        print(f"palmkit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (IncompleteDetection, GeometryError, MatchingError) as exc:
        print(f"palmkit: pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
