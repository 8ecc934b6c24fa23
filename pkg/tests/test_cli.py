import json

import numpy as np
import pytest
from PIL import Image

from palmkit import cli, geometry
from palmkit.cli import EXIT_DATA, EXIT_OK, EXIT_PIPELINE, EXIT_USAGE


@pytest.fixture(scope="module")
def synth_root(tmp_path_factory):
    """Small synthetic dataset shared by the CLI tests (identical copies)."""
    root = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--root", str(root), "--subjects", "2", "--shots", "2",
                     "--canvas", "128"]) == EXIT_OK
    return root


def test_synth_then_scan(synth_root, tmp_path, capsys):
    manifest = tmp_path / "manifest.txt"
    assert cli.main(["dataset", "scan", "--root", str(synth_root), "--out", str(manifest)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "32 samples" in out       # 2 subjects x 2 hands x 2 sessions x 2 devices x 2 shots
    assert "4 palm identities" in out
    assert manifest.exists()


def test_split_ratio(synth_root, tmp_path, capsys):
    manifest = synth_root / "manifest.txt"
    out_dir = tmp_path / "split"
    assert cli.main([
        "dataset", "split", "--manifest", str(manifest), "--out-dir", str(out_dir),
        "--ratio", "8:1:1", "--seed", "7",
    ]) == EXIT_OK
    lines = [len((out_dir / f"{p}.txt").read_text().splitlines()) for p in ("train", "val", "test")]
    assert sum(lines) == 32
    assert abs(lines[0] - 32 * 0.8) <= 1
    assert abs(lines[1] - 3.2) <= 1 and abs(lines[2] - 3.2) <= 1


def test_kfold_writes_folds(synth_root, tmp_path):
    manifest = synth_root / "manifest.txt"
    out_dir = tmp_path / "folds"
    assert cli.main([
        "dataset", "kfold", "--manifest", str(manifest), "--out-dir", str(out_dir), "--k", "2",
    ]) == EXIT_OK
    assert (out_dir / "fold_0" / "test.txt").exists()
    assert (out_dir / "fold_1" / "train.txt").exists()


def test_augment(synth_root, tmp_path, capsys):
    manifest = synth_root / "manifest.txt"
    out_dir = tmp_path / "aug"
    assert cli.main([
        "dataset", "augment", "--manifest", str(manifest), "--root", str(synth_root),
        "--out-dir", str(out_dir), "--J", "4", "--sf", "128",
    ]) == EXIT_OK
    out = capsys.readouterr().out
    assert "step 90 deg" in out
    written = list(out_dir.glob("*_aug*.jpg"))
    sidecars = list(out_dir.glob("*_aug*.ann.json"))
    assert len(written) == len(sidecars) > 0


def test_roi_extract(synth_root, tmp_path, capsys):
    image = sorted(synth_root.glob("*.jpg"))[0]
    ann = geometry.sidecar_path(image)
    out = tmp_path / "roi.png"
    assert cli.main([
        "roi-extract", "--image", str(image), "--annotation", str(ann),
        "--out", str(out), "--size", "64",
    ]) == EXIT_OK
    with Image.open(out) as img:
        assert img.size == (64, 64)
    assert "quad" in capsys.readouterr().out


def test_roi_extract_needs_annotation(synth_root, tmp_path):
    image = sorted(synth_root.glob("*.jpg"))[0]
    code = cli.main(["roi-extract", "--image", str(image), "--out", str(tmp_path / "x.png")])
    assert code == EXIT_USAGE


def test_degenerate_annotation_is_pipeline_error(synth_root, tmp_path):
    image = sorted(synth_root.glob("*.jpg"))[0]
    bad = tmp_path / "bad.ann.json"
    bad.write_text(json.dumps({
        "points": {
            "P1": {"x": 25, "y": 10},   # thumb gap on the gap line
            "P2": {"x": 10, "y": 10},
            "P3": {"x": 20, "y": 10},
            "P4": {"x": 30, "y": 10},
        },
        "hand": "l",
        "image_width": 128,
        "image_height": 128,
    }))
    code = cli.main(["roi-extract", "--image", str(image), "--annotation", str(bad),
                     "--out", str(tmp_path / "x.png")])
    assert code == EXIT_PIPELINE


def test_missing_manifest_is_data_error(tmp_path):
    code = cli.main(["dataset", "split", "--manifest", str(tmp_path / "nope.txt"),
                     "--out-dir", str(tmp_path / "s")])
    assert code == EXIT_DATA


def test_eval_verify_separated_copies(synth_root, tmp_path, capsys):
    report = tmp_path / "verify.json"
    code = cli.main([
        "eval", "verify", "--manifest", str(synth_root / "manifest.txt"),
        "--root", str(synth_root), "--report", str(report),
    ])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "EER: 0.0000" in out
    payload = json.loads(report.read_text())
    assert payload["eer"] == 0.0


def test_eval_threshold_far_one(synth_root, capsys):
    code = cli.main([
        "eval", "threshold", "--manifest", str(synth_root / "manifest.txt"),
        "--root", str(synth_root), "--far", "1.0",
    ])
    assert code == EXIT_OK
    assert "calibrated threshold" in capsys.readouterr().out


def test_eval_identify(synth_root, capsys):
    code = cli.main([
        "eval", "identify", "--manifest", str(synth_root / "manifest.txt"),
        "--root", str(synth_root), "--repeats", "2",
    ])
    assert code == EXIT_OK
    assert "Top-1 accuracy" in capsys.readouterr().out


def test_eval_detect_oracle_map_is_one(synth_root, tmp_path, capsys):
    report = tmp_path / "detect.json"
    code = cli.main([
        "eval", "detect", "--manifest", str(synth_root / "manifest.txt"),
        "--root", str(synth_root), "--report", str(report),
    ])
    assert code == EXIT_OK
    payload = json.loads(report.read_text())
    assert payload["map"] == 1.0
    assert "mAP" in capsys.readouterr().out


def test_serve_bad_store_path(tmp_path):
    code = cli.main([
        "serve", "--store", str(tmp_path), "--addr", "127.0.0.1:0",
    ])
    assert code == EXIT_DATA


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        cli.main(["dataset", "split"])   # missing required flags
    assert exc.value.code == EXIT_USAGE
