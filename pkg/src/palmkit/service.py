"""HTTP facade over the pipeline: detection preview, enrollment, verification.

The service holds exactly three normalized features per enrolled palm;
verification compares a probe against every stored feature of the user (both
palms) and keeps the best score. All decisions delegate to the matching
module; the service adds no logic beyond orchestration and persistence.

The template store is one JSON file, written atomically (temp file + rename);
features are serialized as base64 of their 512 single-precision values, so a
reload reproduces them bit-for-bit.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import os
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from PIL import Image, UnidentifiedImageError

from . import geometry, matching, pipeline
from .matching import DEFAULT_THRESHOLD, FeatureVector, Outcome
from .pipeline import DEFAULT_CONF_MIN, DetectorBackend, IncompleteDetection

PALMS = ("left", "right")
TEMPLATES_PER_PALM = 3
SCAN_FAIL_MESSAGE = "Scan fail, please take photo again"


class TemplateStore:
    """Per-(user, palm) feature templates with atomic single-file persistence.

    Guarded by a single lock: many readers are fine in CPython, but all
    mutations serialize, so concurrent enrolls can never push a palm past
    three features.
    """

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.Lock()
        self._data: dict = {}
        if self._path.exists():
            with open(self._path, "r", encoding="utf-8") as fh:
                self._data = json.load(fh)

    @staticmethod
    def _encode(values: np.ndarray) -> str:
        return base64.b64encode(values.astype(np.float32).tobytes()).decode("ascii")

    @staticmethod
    def _decode(blob: str) -> np.ndarray:
        return np.frombuffer(base64.b64decode(blob), dtype=np.float32).astype(np.float64)

    def _save_locked(self) -> None:
        self._path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self._path.with_suffix(self._path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self._data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, self._path)

    def save(self) -> None:
        with self._lock:
            self._save_locked()

    def counts(self, user: str) -> dict[str, int]:
        with self._lock:
            palms = self._data.get(user, {})
            return {p: len(palms.get(p, {}).get("features", [])) for p in PALMS}

    def known_user(self, user: str) -> bool:
        with self._lock:
            return user in self._data

    def has_palm(self, user: str, palm: str) -> bool:
        with self._lock:
            return palm in self._data.get(user, {})

    def add_feature(self, user: str, palm: str, feature: FeatureVector) -> int:
        """Append one normalized feature; returns the new count.

        Raises ValueError when the palm already holds three features.
        """
        if not feature.normalized:
            raise matching.NotNormalized("templates must be normalized")
        with self._lock:
            record = self._data.setdefault(user, {}).setdefault(
                palm, {"created_at": datetime.now(timezone.utc).isoformat(), "features": []}
            )
            if len(record["features"]) >= TEMPLATES_PER_PALM:
                raise ValueError("enrollment already complete")
            record["features"].append(self._encode(feature.values))
            self._save_locked()
            return len(record["features"])

    def clear(self, user: str, palm: str) -> None:
        """Reset a palm to the blank state. Raises KeyError when the (user,
        palm) record does not exist."""
        with self._lock:
            record = self._data[user][palm]
            record["features"] = []
            self._save_locked()

    def all_features(self, user: str) -> list[FeatureVector]:
        """Every stored feature of the user, both palms, enrollment order."""
        with self._lock:
            palms = self._data.get(user, {})
            out = []
            for p in PALMS:
                for blob in palms.get(p, {}).get("features", []):
                    out.append(FeatureVector(values=self._decode(blob), normalized=True))
            return out

    def complete_palms(self, user: str) -> list[str]:
        counts = self.counts(user)
        return [p for p in PALMS if counts[p] >= TEMPLATES_PER_PALM]


def _decode_image(upload: Optional[bytes], b64: Optional[str]) -> np.ndarray:
    if upload is None and not b64:
        raise HTTPException(status_code=400, detail="no image provided")
    if upload is None:
        try:
            upload = base64.b64decode(b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f"bad base64 image: {exc}") from exc
    try:
        with Image.open(io.BytesIO(upload)) as img:
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError) as exc:
        raise HTTPException(status_code=400, detail=f"undecodable image: {exc}") from exc


def _point(p: geometry.Point2D) -> dict:
    return {"x": p.x, "y": p.y}


def create_app(
    detector: DetectorBackend,
    embedder: matching.EmbedderBackend,
    store_path: str | Path,
    threshold: float = DEFAULT_THRESHOLD,
    conf_min: float = DEFAULT_CONF_MIN,
    roi_size: int = 224,
    static_dir: Optional[str | Path] = None,
) -> FastAPI:
    """Wire the service around a detector backend, an embedder backend, and a
    template store file."""
    app = FastAPI(title="palmkit service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = TemplateStore(store_path)
    app.state.store = store
    app.state.threshold = threshold

    def extract_feature(image: np.ndarray) -> FeatureVector:
        try:
            roi = pipeline.run_pipeline(image, detector, conf_min=conf_min, out_size=roi_size)
            return matching.normalize(matching.embed(roi, embedder))
        except IncompleteDetection as exc:
            raise HTTPException(
                status_code=422,
                detail={"message": SCAN_FAIL_MESSAGE, "missing": exc.missing},
            ) from exc
        except (geometry.DegenerateTriple, matching.ZeroVector) as exc:
            raise HTTPException(
                status_code=422,
                detail={"message": SCAN_FAIL_MESSAGE, "missing": str(exc)},
            ) from exc

    @app.post("/detect")
    async def detect(
        image: Optional[UploadFile] = File(default=None),
        image_b64: Optional[str] = Form(default=None),
    ):
        raw = await image.read() if image is not None else None
        raster = _decode_image(raw, image_b64)
        dets = detector.detect(raster)
        body = {
            "detections": [
                {
                    "class_id": int(d.class_id),
                    "confidence": d.confidence,
                    "center": _point(d.center),
                    "width": d.width,
                    "height": d.height,
                }
                for d in dets
            ]
        }
        try:
            triple = pipeline.select_keypoints(dets, conf_min=conf_min)
        except IncompleteDetection as exc:
            body.update({"status": "incomplete", "missing": exc.missing})
            return body
        frame = geometry.frame_from_triple(triple)
        quad = geometry.roi_quad(frame)
        body.update(
            {
                "status": "ok",
                "keypoints": {"a": _point(triple.a), "b": _point(triple.b), "c": _point(triple.c)},
                "frame": {
                    "origin": _point(frame.origin),
                    "x_axis": _point(frame.x_axis),
                    "y_axis": _point(frame.y_axis),
                    "unit": frame.unit,
                },
                "roi_quad": [_point(c) for c in quad.corners],
            }
        )
        return body

    @app.post("/enroll")
    async def enroll(
        user: str = Form(...),
        palm: str = Form(...),
        image: Optional[UploadFile] = File(default=None),
        image_b64: Optional[str] = Form(default=None),
    ):
        if palm not in PALMS:
            raise HTTPException(status_code=400, detail=f"palm must be one of {PALMS}")
        if store.counts(user)[palm] >= TEMPLATES_PER_PALM:
            raise HTTPException(status_code=409, detail="enrollment already complete; reset first")
        raw = await image.read() if image is not None else None
        raster = _decode_image(raw, image_b64)
        feature = extract_feature(raster)
        try:
            count = store.add_feature(user, palm, feature)
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return {"user": user, "palm": palm, "count": count}

    @app.post("/verify")
    async def verify(
        user: str = Form(...),
        image: Optional[UploadFile] = File(default=None),
        image_b64: Optional[str] = Form(default=None),
    ):
        if not store.known_user(user):
            raise HTTPException(status_code=404, detail=f"unknown user {user!r}")
        if not store.complete_palms(user):
            raise HTTPException(
                status_code=409, detail="enrollment incomplete: store 3 images for a palm first"
            )
        raw = await image.read() if image is not None else None
        raster = _decode_image(raw, image_b64)
        probe = extract_feature(raster)
        gallery = store.all_features(user)
        _, best_score = matching.match_against_gallery(probe, gallery)
        decision = matching.decide(best_score, threshold)
        return {
            "user": user,
            "score": decision.score,
            "threshold": decision.threshold,
            "outcome": decision.outcome.value,
        }

    @app.delete("/enrollments/{user}/{palm}")
    def reset(user: str, palm: str):
        if palm not in PALMS:
            raise HTTPException(status_code=400, detail=f"palm must be one of {PALMS}")
        try:
            store.clear(user, palm)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=f"no enrollment for {user!r}/{palm}") from exc
        return {"user": user, "palm": palm, "count": 0}

    @app.get("/enrollments/{user}")
    def enrollments(user: str):
        return {"user": user, "counts": store.counts(user)}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
