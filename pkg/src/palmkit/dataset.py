"""Dataset schema: filename grammar, manifests, splits, rotation augmentation.

Sample filenames follow ``<SSS>_<P>_<D>_<H>_<NN>.jpg``: three-digit subject
(001-999), session 1 or 2, device h (Huawei) or m (Xiaomi), hand l or r, and
a two-digit shot index (01-99). A palm identity is (subject, hand): the two
hands of one person count as different individuals, and verifier-side splits
are always subject-disjoint (open-set protocol).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import geometry, raster
from .geometry import Hand, PalmAnnotation, PointOutOfCanvas

DEFAULT_SEED = 20200101


class DatasetError(ValueError):
    pass


class MalformedName(DatasetError):
    """Filename violates the sample grammar; ``position`` is the index of the
    first offending character."""

    def __init__(self, name: str, position: int, message: str):
        super().__init__(f"{name!r}: {message} (at position {position})")
        self.name = name
        self.position = position


class TooFewSubjects(DatasetError):
    pass


class Device(str, enum.Enum):
    HUAWEI = "h"
    XIAOMI = "m"


@dataclass(frozen=True, order=True)
class PalmIdentity:
    """One palm: the left and right palms of a person are distinct identities."""

    subject: int
    hand: Hand

    def __str__(self) -> str:
        return f"{self.subject:03d}{self.hand.value[0]}"


@dataclass(frozen=True, order=True)
class SampleId:
    subject: int
    session: int
    device: Device
    hand: Hand
    index: int

    def __post_init__(self) -> None:
        if not 1 <= self.subject <= 999:
            raise DatasetError(f"subject {self.subject} outside 1..999")
        if self.session not in (1, 2):
            raise DatasetError(f"session {self.session} outside 1..2")
        if not 1 <= self.index <= 99:
            raise DatasetError(f"index {self.index} outside 1..99")

    def identity(self) -> PalmIdentity:
        return PalmIdentity(self.subject, self.hand)


_DEVICE_CODES = {d.value: d for d in Device}
_HAND_CODES = {"l": Hand.LEFT, "r": Hand.RIGHT}
_NAME_LEN = 16  # SSS_P_D_H_NN.jpg


def parse_name(name: str) -> SampleId:
    """Parse a sample filename, reporting the first violating position."""

    def fail(pos: int, msg: str) -> None:
        raise MalformedName(name, pos, msg)

    def expect(pos: int, allowed, msg: str) -> None:
        if pos >= len(name):
            fail(len(name), f"truncated name, expected {msg}")
        ok = name[pos].isdigit() if allowed is None else name[pos] in allowed
        if not ok:
            fail(pos, f"expected {msg}, got {name[pos]!r}")

    for pos in (0, 1, 2):
        expect(pos, None, "a digit (subject)")
    expect(3, "_", "'_' after subject")
    expect(4, "12", "session '1' or '2'")
    expect(5, "_", "'_' after session")
    expect(6, _DEVICE_CODES, "device 'h' or 'm'")
    expect(7, "_", "'_' after device")
    expect(8, _HAND_CODES, "hand 'l' or 'r'")
    expect(9, "_", "'_' after hand")
    for pos in (10, 11):
        expect(pos, None, "a digit (shot index)")
    for pos, ch in enumerate(".jpg", start=12):
        expect(pos, ch, f"{ch!r} of the '.jpg' suffix")
    if len(name) != _NAME_LEN:
        fail(_NAME_LEN, "trailing characters after '.jpg'")

    subject = int(name[0:3])
    if subject == 0:
        fail(0, "subject 000 outside 1..999")
    index = int(name[10:12])
    if index == 0:
        fail(10, "shot index 00 outside 1..99")
    return SampleId(
        subject=subject,
        session=int(name[4]),
        device=_DEVICE_CODES[name[6]],
        hand=_HAND_CODES[name[8]],
        index=index,
    )


def format_name(sid: SampleId) -> str:
    """Inverse of parse_name."""
    return (
        f"{sid.subject:03d}_{sid.session}_{sid.device.value}_"
        f"{sid.hand.value[0]}_{sid.index:02d}.jpg"
    )


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: SampleId
    image_path: str
    annotation_path: Optional[str] = None


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self) -> None:
        ids = [e.sample_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate sample ids in manifest")

    def __len__(self) -> int:
        return len(self.entries)

    def sample_ids(self) -> list[SampleId]:
        return [e.sample_id for e in self.entries]

    def subjects(self) -> list[int]:
        return sorted({e.sample_id.subject for e in self.entries})

    def identities(self) -> list[PalmIdentity]:
        return sorted({e.sample_id.identity() for e in self.entries})


def scan_directory(root: str | Path) -> Manifest:
    """Build a manifest from a directory tree of sample-named images with
    adjacent ``<stem>.ann.json`` sidecars. Non-matching files are ignored."""
    root = Path(root)
    entries = []
    for path in sorted(root.rglob("*.jpg")):
        try:
            sid = parse_name(path.name)
        except MalformedName:
            continue
        ann = geometry.sidecar_path(path)
        entries.append(
            ManifestEntry(
                sample_id=sid,
                image_path=str(path.relative_to(root)),
                annotation_path=str(ann.relative_to(root)) if ann.exists() else None,
            )
        )
    return Manifest(entries=tuple(entries))


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    """One tab-separated record per line: name, image path, annotation path
    ('-' when absent)."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            ann = e.annotation_path if e.annotation_path is not None else "-"
            fh.write(f"{format_name(e.sample_id)}\t{e.image_path}\t{ann}\n")


def load_manifest(path: str | Path) -> Manifest:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DatasetError(f"{path}:{lineno}: expected 3 tab-separated fields")
            name, image_path, ann = parts
            entries.append(
                ManifestEntry(
                    sample_id=parse_name(name),
                    image_path=image_path,
                    annotation_path=None if ann == "-" else ann,
                )
            )
    return Manifest(entries=tuple(entries))


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/val/test partitions of a manifest, by sample id."""

    train: tuple[SampleId, ...]
    val: tuple[SampleId, ...]
    test: tuple[SampleId, ...]
    seed: int

    def __post_init__(self) -> None:
        parts = (set(self.train), set(self.val), set(self.test))
        total = len(self.train) + len(self.val) + len(self.test)
        if len(parts[0] | parts[1] | parts[2]) != total:
            raise DatasetError("split partitions overlap")


def detector_split(
    manifest: Manifest,
    seed: int = DEFAULT_SEED,
    ratios: tuple[int, int, int] = (8, 1, 1),
) -> SplitSpec:
    """Sample-random split (default 8:1:1) with sizes within one of the exact
    proportions. Rotated versions of one source image share its sample id, so
    augmentation never straddles a split boundary."""
    if len(manifest) == 0:
        raise DatasetError("cannot split an empty manifest")
    ids = manifest.sample_ids()
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    total = sum(ratios)
    n = len(ids)
    n_val = round(n * ratios[1] / total)
    n_test = round(n * ratios[2] / total)
    n_train = n - n_val - n_test
    return SplitSpec(
        train=tuple(shuffled[:n_train]),
        val=tuple(shuffled[n_train:n_train + n_val]),
        test=tuple(shuffled[n_train + n_val:]),
        seed=seed,
    )


def _samples_of_subjects(manifest: Manifest, subjects: set[int]) -> tuple[SampleId, ...]:
    return tuple(sid for sid in manifest.sample_ids() if sid.subject in subjects)


def verifier_split(
    manifest: Manifest,
    train_fraction: float = 0.8,
    seed: int = DEFAULT_SEED,
) -> SplitSpec:
    """Subject-disjoint train/test split: every sample of a subject (both
    hands, sessions, devices) lands on one side."""
    subjects = manifest.subjects()
    if len(subjects) < 2:
        raise TooFewSubjects("verifier split needs at least 2 subjects")
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(subjects))
    shuffled = [subjects[i] for i in order]
    n_train = min(max(round(len(subjects) * train_fraction), 1), len(subjects) - 1)
    train_subjects = set(shuffled[:n_train])
    test_subjects = set(shuffled[n_train:])
    return SplitSpec(
        train=_samples_of_subjects(manifest, train_subjects),
        val=(),
        test=_samples_of_subjects(manifest, test_subjects),
        seed=seed,
    )


def kfold(manifest: Manifest, k: int = 5, seed: int = DEFAULT_SEED) -> list[SplitSpec]:
    """k subject-disjoint folds partitioning all subjects; fold i is the test
    side of split i, the rest train."""
    if k < 2:
        raise DatasetError("k must be at least 2")
    subjects = manifest.subjects()
    if len(subjects) < k:
        raise TooFewSubjects(f"{len(subjects)} subjects cannot form {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(subjects))
    shuffled = [subjects[i] for i in order]
    folds = [list(chunk) for chunk in np.array_split(shuffled, k)]
    splits = []
    for i, fold in enumerate(folds):
        test_subjects = set(int(s) for s in fold)
        train_subjects = {s for s in subjects if s not in test_subjects}
        splits.append(
            SplitSpec(
                train=_samples_of_subjects(manifest, train_subjects),
                val=(),
                test=_samples_of_subjects(manifest, test_subjects),
                seed=seed,
            )
        )
    return splits


def save_split(split: SplitSpec, out_dir: str | Path) -> None:
    """Write train.txt / val.txt / test.txt, one sample name per line."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for part in ("train", "val", "test"):
        with open(out_dir / f"{part}.txt", "w", encoding="utf-8") as fh:
            for sid in getattr(split, part):
                fh.write(format_name(sid) + "\n")


def load_split(out_dir: str | Path, seed: int = DEFAULT_SEED) -> SplitSpec:
    out_dir = Path(out_dir)
    parts = {}
    for part in ("train", "val", "test"):
        path = out_dir / f"{part}.txt"
        ids: list[SampleId] = []
        if path.exists():
            with open(path, "r", encoding="utf-8") as fh:
                ids = [parse_name(line.strip()) for line in fh if line.strip()]
        parts[part] = tuple(ids)
    return SplitSpec(train=parts["train"], val=parts["val"], test=parts["test"], seed=seed)


@dataclass(frozen=True)
class AugmentedSample:
    angle_deg: float
    image: np.ndarray
    annotation: PalmAnnotation


@dataclass(frozen=True)
class AugmentationResult:
    samples: tuple[AugmentedSample, ...]
    skipped_angles: tuple[float, ...]


def augment_rotations(
    image: np.ndarray,
    ann: PalmAnnotation,
    J: int,
    s_f: int = 416,
) -> AugmentationResult:
    """J rotated versions at angles j*(360/J), each on an s_f x s_f canvas.

    Annotations rotate via geometry.rotate_annotation; angles whose rotation
    pushes a point off-canvas are skipped and reported. Detection boxes must
    be recomputed from the rotated points, never rotated as boxes.
    """
    if J < 1:
        raise DatasetError("J must be at least 1")
    samples = []
    skipped = []
    step = 360.0 / J
    for j in range(J):
        angle = j * step
        try:
            rotated_ann = geometry.rotate_annotation(ann, angle, s_f)
        except PointOutOfCanvas:
            skipped.append(angle)
            continue
        rotated_img = raster.rotate_on_canvas(image, angle, s_f)
        samples.append(AugmentedSample(angle_deg=angle, image=rotated_img, annotation=rotated_ann))
    return AugmentationResult(samples=tuple(samples), skipped_angles=tuple(skipped))
