"""Acceptance suite: every release criterion as one test, one printed verdict line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion lines.
"""

import itertools
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import TEST_SEED, png_bytes, random_annotation
from palmkit import dataset, evaluation, geometry, matching, pipeline, service
from palmkit.dataset import Device, SampleId, format_name, parse_name
from palmkit.evaluation import DetCurve, KeypointScene, ScoreSet
from palmkit.geometry import BoxClass, BoxSpec, Hand, KeypointTriple, Point2D
from palmkit.matching import FEATURE_DIM, FeatureVector
from palmkit.pipeline import DetectionBox

from test_dataset import make_manifest
from test_evaluation import eer_bruteforce

_module_t0 = time.perf_counter()


@contextmanager
def criterion(name):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL ({time.perf_counter() - t0:.2f}s)")
        raise
    print(f"ACCEPTANCE {name}: PASS ({time.perf_counter() - t0:.2f}s)")


def test_c01_geometry_oracle_suite():
    """1,000 seeded random annotations: zero-jitter pipeline quad equals the
    geometry-module quad within 1e-9, and ROI corners are similarity
    equivariant within 1e-6 relative. Must finish inside 10 seconds."""
    with criterion("geometry-oracle-suite") as _:
        t0 = time.perf_counter()
        rng = np.random.default_rng(TEST_SEED)
        img = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        for _ in range(1000):
            ann = random_annotation(rng, canvas=64.0, unit_range=(8.0, 14.0))
            roi = pipeline.run_pipeline(img, pipeline.oracle_detector(ann), out_size=16)
            expected = geometry.roi_quad(geometry.frame_from_triple(geometry.derive_triple(ann)))
            for c, e in zip(roi.quad.corners, expected.corners):
                assert math.hypot(c.x - e.x, c.y - e.y) <= 1e-9

            # similarity equivariance: transform the annotation, transform the quad
            theta = rng.uniform(0.0, 360.0)
            scale = rng.uniform(0.5, 2.0)
            tx, ty = rng.uniform(0.0, 100.0, size=2)

            def sim(p):
                q = geometry.rotate_point(p, theta, Point2D(0, 0))
                return Point2D(q.x * scale + tx + 512.0, q.y * scale + ty + 512.0)

            pts = ann.points()
            moved = geometry.PalmAnnotation(
                gaps=tuple(sim(p) for p in pts[1:]),
                image_width=2048.0,
                image_height=2048.0,
                hand=ann.hand,
                thumb_gap=sim(pts[0]),
            )
            moved_quad = geometry.roi_quad(
                geometry.frame_from_triple(geometry.derive_triple(moved))
            )
            tol = 1e-6 * expected.side * scale
            for c, m in zip(expected.corners, moved_quad.corners):
                e = sim(c)
                assert math.hypot(m.x - e.x, m.y - e.y) <= tol
        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0, f"geometry oracle suite took {elapsed:.1f}s"


def test_c02_frame_constants():
    """Every generated frame obeys s_R = 2.5u and ROI-center offset = 1.5u,
    exactly as constructed (bit-equal to the documented formulas)."""
    with criterion("frame-constants"):
        rng = np.random.default_rng(TEST_SEED + 1)
        for _ in range(1000):
            t = geometry.derive_triple(random_annotation(rng))
            f = geometry.frame_from_triple(t)
            q = geometry.roi_quad(f)
            assert q.side == 2.5 * f.unit
            center = geometry.roi_center(f)
            # the center construction uses the constant 1.5 verbatim
            assert center == f.origin - f.y_axis.scaled(1.5 * f.unit)
            # numerical corroboration of the two ratios
            assert abs(q.side / f.unit - 2.5) <= 1e-12
            offset = math.hypot(center.x - f.origin.x, center.y - f.origin.y)
            assert abs(offset / f.unit - 1.5) <= 1e-12
            # corners reconstruct from the same constants
            h = q.side / 2.0
            hx, hy = f.x_axis.scaled(h), f.y_axis.scaled(h)
            expected = (center - hx + hy, center + hx + hy, center + hx - hy, center - hx - hy)
            assert q.corners == expected


def test_c03_farthest_pair_oracle():
    """select_keypoints agrees with an exhaustive farthest-pair oracle on
    10,000 random candidate sets (L <= 8, tie cases included) in under 5 s."""
    with criterion("farthest-pair-oracle"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(TEST_SEED + 2)
        c_box = DetectionBox(BoxClass.PALM_CENTER, 1.0, Point2D(31.847, -63.529), 4, 4)
        for _ in range(10_000):
            n = int(rng.integers(2, 9))
            while True:
                pts = rng.integers(0, 10, size=(n, 2)).astype(float)   # small grid forces ties
                if len(np.unique(pts, axis=0)) >= 2:   # all-coincident candidates are degenerate
                    break
            dets = [
                DetectionBox(BoxClass.DOUBLE_FINGER_GAP, 1.0, Point2D(x, y), 4, 4)
                for x, y in pts
            ] + [c_box]
            t = pipeline.select_keypoints(dets)
            if n == 2:
                best = (0, 1)
            else:
                best_d2 = -1.0
                best = None
                for i, j in itertools.combinations(range(n), 2):
                    d2 = float((pts[j] - pts[i]) @ (pts[j] - pts[i]))
                    if d2 > best_d2:   # strict: first maximum keeps smallest (i, j)
                        best_d2 = d2
                        best = (i, j)
            assert (t.a.x, t.a.y) == tuple(pts[best[0]])
            assert (t.b.x, t.b.y) == tuple(pts[best[1]])
        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0, f"farthest-pair sweep took {elapsed:.1f}s"


def test_c04_eer_bruteforce():
    """EER equals an independent brute-force midpoint sweep within 1e-9 on 100
    random score sets; separated sets give exactly 0; the worked half case
    gives exactly 0.5."""
    with criterion("eer-bruteforce"):
        rng = np.random.default_rng(TEST_SEED + 3)
        for _ in range(100):
            n_g = int(rng.integers(1, 201))
            n_i = int(rng.integers(1, 201))
            genuine = np.round(rng.uniform(-1, 1, n_g), 2)
            impostor = np.round(rng.uniform(-1, 1, n_i), 2)
            s = ScoreSet(genuine, impostor)
            assert abs(evaluation.eer(s) - eer_bruteforce(genuine, impostor)) <= 1e-9
        assert evaluation.eer(ScoreSet([0.9, 0.8], [0.1, 0.2])) == 0.0
        assert evaluation.eer(ScoreSet([0.9, 0.3], [0.7, 0.1])) == 0.5


def _stub_score_set(rng) -> ScoreSet:
    """Stub-embedder scores for 40 synthetic palms x 4 noisy shots each."""
    stub = matching.stub_embedder(seed=0)
    ids = []
    feats = {}
    for subject in range(1, 41):
        base = rng.integers(0, 256, size=(16, 16), dtype=np.int16)
        for index in range(1, 5):
            noisy = np.clip(base + rng.integers(-8, 9, size=base.shape), 0, 255).astype(np.uint8)
            sid = SampleId(subject, 1, Device.HUAWEI, Hand.LEFT, index)
            ids.append(sid)
            feats[sid] = matching.normalize(matching.FeatureVector(values=stub.embed(noisy)))
    return evaluation.gen_pairs(ids, feats, impostor_sampling="full")


def test_c05_tpr_at_far():
    """TPR@FAR calibration: monotone across targets, thresholds reproduce the
    exact accept counts through matching.decide, and the published-table shape
    (TPR non-increasing from FAR 1e-1 down to 1e-4) holds on stub scores."""
    with criterion("tpr-at-far"):
        rng = np.random.default_rng(TEST_SEED + 4)
        scores = _stub_score_set(rng)
        assert len(scores.impostor) >= 10_000   # enough pairs to reach FAR 1e-4
        targets = [1e-1, 1e-2, 1e-3, 1e-4]
        results = evaluation.tpr_at_far(scores, targets)
        tprs = [r.tpr for r in results]
        assert tprs == sorted(tprs, reverse=True)
        thresholds = [r.threshold for r in results]
        assert thresholds == sorted(thresholds)
        for r in results:
            assert r.achieved_far <= r.far_target
            accepted_g = sum(
                matching.decide(x, r.threshold).outcome is matching.Outcome.SUCCESS
                for x in scores.genuine
            )
            accepted_i = sum(
                matching.decide(x, r.threshold).outcome is matching.Outcome.SUCCESS
                for x in scores.impostor
            )
            assert accepted_g / len(scores.genuine) == r.tpr
            assert accepted_i / len(scores.impostor) == r.achieved_far


def test_c06_lamr():
    """LAMR samples exactly nine log-spaced FPPI references (1e-3 .. 1e1),
    keeps constant curves fixed, and matches the hand-computed two-segment
    case within 1e-9."""
    with criterion("lamr"):
        assert np.array_equal(evaluation.LAMR_FPPI_EXPONENTS, np.linspace(-3.0, 1.0, 9))
        assert len(evaluation.LAMR_FPPI_EXPONENTS) == 9
        for const in (0.1, 0.37, 1.0):
            curve = DetCurve(points=tuple((f, const) for f in (1e-3, 0.2, 10.0)))
            assert abs(evaluation.lamr(curve) - const) <= 1e-12
        # six references at the max miss rate 0.8, three at 0.3 (hand table)
        curve = DetCurve(points=((0.01, 0.8), (0.5, 0.3)))
        assert abs(evaluation.lamr(curve) - 0.8 ** (6 / 9) * 0.3 ** (3 / 9)) <= 1e-9


def test_c07_keypoint_criterion():
    """Distance exactly 10 at delta=10 is a miss (strict inequality), and the
    counting identities TP+miss=|gt|, TP+FP=|det| hold on 1,000 random scenes."""
    with criterion("keypoint-criterion"):
        counts = evaluation.keypoint_match([Point2D(0, 0)], [(Point2D(6, 8), 1.0)], delta=10.0)
        assert counts == (0, 1, 1)
        rng = np.random.default_rng(TEST_SEED + 5)
        for _ in range(1000):
            n_g = int(rng.integers(0, 7))
            n_d = int(rng.integers(0, 7))
            gts = [Point2D(*rng.uniform(0, 40, 2)) for _ in range(n_g)]
            dets = [(Point2D(*rng.uniform(0, 40, 2)), float(rng.uniform(0, 1))) for _ in range(n_d)]
            tp, fp, miss = evaluation.keypoint_match(gts, dets, delta=9.0)
            assert tp + miss == n_g
            assert tp + fp == n_d


def test_c08_map():
    """A confidence-1 copy of the ground truth scores mAP exactly 1.0 on 100
    random scenes, and the duplicate-detection toy case matches its
    hand-computed PR integration."""
    with criterion("map"):
        rng = np.random.default_rng(TEST_SEED + 6)
        for _ in range(100):
            gt_scenes = []
            det_scenes = []
            for _ in range(int(rng.integers(1, 5))):
                boxes = []
                for class_id in (BoxClass.DOUBLE_FINGER_GAP, BoxClass.PALM_CENTER):
                    for _ in range(int(rng.integers(0, 4))):
                        x, y = rng.integers(0, 50, size=2).astype(float)
                        w, h = rng.uniform(3, 10, size=2)
                        boxes.append(BoxSpec(class_id, Point2D(x, y), w, h))
                gt_scenes.append(boxes)
                copies = [
                    DetectionBox(b.class_id, 1.0, b.center, b.width, b.height) for b in boxes
                ]
                rng.shuffle(copies)
                det_scenes.append(copies)
            if not any(gt_scenes):
                gt_scenes[0] = [BoxSpec(BoxClass.PALM_CENTER, Point2D(5, 5), 4, 4)]
                det_scenes[0] = [DetectionBox(BoxClass.PALM_CENTER, 1.0, Point2D(5, 5), 4, 4)]
            _, mean_ap = evaluation.map_detection(gt_scenes, det_scenes)
            assert mean_ap == 1.0

        gt = [[
            BoxSpec(BoxClass.DOUBLE_FINGER_GAP, Point2D(10, 10), 4, 4),
            BoxSpec(BoxClass.DOUBLE_FINGER_GAP, Point2D(30, 30), 4, 4),
        ]]
        dets = [[
            DetectionBox(BoxClass.DOUBLE_FINGER_GAP, 0.9, Point2D(10, 10), 4, 4),
            DetectionBox(BoxClass.DOUBLE_FINGER_GAP, 0.8, Point2D(10, 10), 4, 4),
            DetectionBox(BoxClass.DOUBLE_FINGER_GAP, 0.7, Point2D(30, 30), 4, 4),
        ]]
        aps, _ = evaluation.map_detection(gt, dets)
        assert abs(aps[BoxClass.DOUBLE_FINGER_GAP] - 5 / 6) <= 1e-12


def test_c09_dataset():
    """Filename grammar worked example, 1,000 round trips, 8:1:1 split sizes
    within one sample, subject-disjoint 160/40 verifier split, and 5 folds
    partitioning the subjects."""
    with criterion("dataset"):
        sid = parse_name("006_2_h_r_08.jpg")
        assert sid == SampleId(6, 2, Device.HUAWEI, Hand.RIGHT, 8)
        rng = np.random.default_rng(TEST_SEED + 7)
        for _ in range(1000):
            sample = SampleId(
                subject=int(rng.integers(1, 1000)),
                session=int(rng.integers(1, 3)),
                device=Device.HUAWEI if rng.random() < 0.5 else Device.XIAOMI,
                hand=Hand.LEFT if rng.random() < 0.5 else Hand.RIGHT,
                index=int(rng.integers(1, 100)),
            )
            assert parse_name(format_name(sample)) == sample

        def ten_ids(subject):
            return [SampleId(subject, 1, Device.HUAWEI, Hand.LEFT, i) for i in range(1, 11)]

        split = dataset.detector_split(make_manifest(range(1, 11), ten_ids), seed=TEST_SEED)
        assert (len(split.train), len(split.val), len(split.test)) == (80, 10, 10)
        for n_subjects in (3, 7, 13):
            manifest = make_manifest(range(1, n_subjects + 1), ten_ids)
            sp = dataset.detector_split(manifest, seed=TEST_SEED)
            n = len(manifest)
            assert abs(len(sp.train) - 0.8 * n) <= 1
            assert abs(len(sp.val) - 0.1 * n) <= 1
            assert abs(len(sp.test) - 0.1 * n) <= 1

        manifest200 = make_manifest(range(1, 201))
        vs = dataset.verifier_split(manifest200, train_fraction=0.8, seed=TEST_SEED)
        train_subjects = {s.subject for s in vs.train}
        test_subjects = {s.subject for s in vs.test}
        assert len(train_subjects) == 160 and len(test_subjects) == 40
        assert not (train_subjects & test_subjects)

        folds = dataset.kfold(manifest200, k=5, seed=TEST_SEED)
        fold_subjects = [{s.subject for s in f.test} for f in folds]
        assert all(len(fs) == 40 for fs in fold_subjects)
        assert set().union(*fold_subjects) == set(range(1, 201))
        for i in range(5):
            for j in range(i + 1, 5):
                assert not (fold_subjects[i] & fold_subjects[j])


def test_c10_augmentation():
    """J=24 steps by 15 degrees; J in {1, 4, 24} partitions the full turn;
    a 360-degree rotation is the identity within 1e-9."""
    with criterion("augmentation"):
        # all points within radius ~12 of the canvas center survive any rotation
        ann = geometry.PalmAnnotation(
            gaps=(Point2D(40, 45), Point2D(50, 44), Point2D(60, 45)),
            image_width=100,
            image_height=100,
            hand=Hand.LEFT,
            thumb_gap=Point2D(50, 60),
        )
        img = np.zeros((100, 100, 3), np.uint8)
        for J in (1, 4, 24):
            result = dataset.augment_rotations(img, ann, J=J, s_f=100)
            assert not result.skipped_angles
            angles = [s.angle_deg for s in result.samples]
            assert angles == [j * 360.0 / J for j in range(J)]
        result = dataset.augment_rotations(img, ann, J=24, s_f=100)
        assert np.allclose(np.diff([s.angle_deg for s in result.samples]), 15.0)
        full_turn = geometry.rotate_annotation(ann, 360.0, 100.0)
        for p, q in zip(ann.points(), full_turn.points()):
            assert math.hypot(q.x - p.x, q.y - p.y) <= 1e-9 * 100


def test_c11_algorithm2_contract():
    """Identical ROIs score 1.0 +- 1e-6 through the stub embedder and pass at
    T=0.5014; scale invariance and symmetry hold over 10,000 random vector
    pairs within 1e-9."""
    with criterion("algorithm2-contract"):
        rng = np.random.default_rng(TEST_SEED + 8)
        img = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        triple = KeypointTriple(Point2D(24, 20), Point2D(40, 20), Point2D(32, 44))
        roi = pipeline.extract_roi(img, triple, out_size=224)
        decision = matching.verify_pair(roi, roi, matching.stub_embedder(), t=0.5014)
        assert abs(decision.score - 1.0) <= 1e-6
        assert decision.outcome is matching.Outcome.SUCCESS

        for _ in range(10_000):
            v1 = rng.standard_normal(FEATURE_DIM)
            v2 = rng.standard_normal(FEATURE_DIM)
            a, b = rng.uniform(0.1, 10.0, size=2)
            f1 = matching.normalize(FeatureVector(values=v1))
            f2 = matching.normalize(FeatureVector(values=v2))
            s = matching.score(f1, f2)
            assert s == matching.score(f2, f1)
            scaled = matching.score(
                matching.normalize(FeatureVector(values=a * v1)),
                matching.normalize(FeatureVector(values=b * v2)),
            )
            assert abs(s - scaled) <= 1e-9


def test_c12_service_flow(tmp_path):
    """End-to-end service flow with the oracle detector and stub embedder:
    three enrolls then a same-image verify succeeds; verifying before
    completion or after a reset is 409; the store survives a restart
    byte-identically. The acceptance module itself stays under 60 s."""
    with criterion("service-flow"):
        rng = np.random.default_rng(TEST_SEED + 9)
        ann = random_annotation(rng, canvas=128.0, unit_range=(16.0, 24.0))
        image_bytes = png_bytes(rng.integers(0, 256, size=(128, 128, 3), dtype=np.uint8))
        store_path = tmp_path / "store.json"
        app = service.create_app(
            pipeline.oracle_detector(ann), matching.stub_embedder(), store_path
        )
        client = TestClient(app)

        def post(url, **form):
            return client.post(
                url, files={"image": ("img.png", image_bytes, "image/png")}, data=form
            )

        assert post("/verify", user="ada").status_code == 404
        assert post("/enroll", user="ada", palm="left").json()["count"] == 1
        assert post("/verify", user="ada").status_code == 409
        assert post("/enroll", user="ada", palm="left").json()["count"] == 2
        assert post("/enroll", user="ada", palm="left").json()["count"] == 3
        verdict = post("/verify", user="ada")
        assert verdict.status_code == 200
        assert verdict.json()["outcome"] == "success"
        assert abs(verdict.json()["score"] - 1.0) <= 1e-6

        assert client.delete("/enrollments/ada/left").json()["count"] == 0
        assert post("/verify", user="ada").status_code == 409

        for _ in range(3):
            post("/enroll", user="ada", palm="left")
        before = store_path.read_bytes()
        app2 = service.create_app(
            pipeline.oracle_detector(ann), matching.stub_embedder(), store_path
        )
        client2 = TestClient(app2)
        assert client2.get("/enrollments/ada").json()["counts"]["left"] == 3
        app2.state.store.save()
        assert store_path.read_bytes() == before

        suite_elapsed = time.perf_counter() - _module_t0
        assert suite_elapsed < 60.0, f"acceptance module took {suite_elapsed:.1f}s"
