"""Readers for user-supplied copies of the E-DAIC and CMDC corpora.

Nothing is bundled; these only map a local directory onto
:class:`~phqfusion.corpus.InterviewSample` records.

E-DAIC layout (PHQ-8)::

    root/labels/train_split.csv     Participant_ID,PHQ_Score
    root/labels/dev_split.csv
    root/labels/test_split.csv
    root/<id>_P/<id>_Transcript.csv             Start_Time,End_Time,Text[,Confidence]
    root/<id>_P/features/<id>_<audio file>.csv  one frame per row
    root/<id>_P/features/<id>_<video file>.csv

CMDC layout (PHQ-9)::

    root/labels.csv          participant_id,split,score
    root/<id>/transcript.txt one answer per line
    root/<id>/audio.csv      one frame per row
    root/<id>/video.csv

Feature CSVs have a header row; non-numeric columns and the bookkeeping
columns in :data:`METADATA_COLUMNS` are dropped.
"""

from __future__ import annotations

import csv
import math
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import SPLITS, Corpus, InterviewSample, assign_splits, build_corpus
from .errors import DataError

EDAIC_SPLIT_SIZES = {"train": 163, "dev": 56, "test": 56}

# selector name -> (audio file suffix, video file suffix)
EDAIC_FEATURE_SETS = {
    "egemaps": ("OpenSMILE2.3.0_egemaps", "OpenFace2.1.0_Pose_gaze_AUs"),
    "mfcc": ("OpenSMILE2.3.0_mfcc", "OpenFace2.1.0_Pose_gaze_AUs"),
    "deep": ("BoAW_openSMILE_2.3.0_MFCC", "CNN_ResNet"),
}
DEFAULT_EDAIC_FEATURE_SET = "egemaps"
CMDC_FEATURE_SETS = ("default",)

METADATA_COLUMNS = {"name", "frametime", "timestamp", "frame", "confidence", "success", "face_id"}
LAYOUTS = ("edaic", "cmdc")


def _require(paths: Sequence[Path], what: str) -> None:
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise DataError(f"{what}: missing files: {', '.join(missing)}")


def _read_rows(path: Path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty CSV")
        return [{k.strip(): (v or "").strip() for k, v in row.items() if k is not None} for row in reader]


def read_feature_csv(path: Path) -> np.ndarray:
    """Numeric feature columns as a [frames x channels] float64 array."""
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise DataError(f"{path}: needs a header and at least one frame")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    keep = []
    for j, name in enumerate(header):
        if name.lower() in METADATA_COLUMNS:
            continue
        try:
            [float(r[j]) for r in body]
        except (ValueError, IndexError):
            continue
        keep.append(j)
    if not keep:
        raise DataError(f"{path}: no numeric feature columns")
    data = np.array([[float(r[j]) for j in keep] for r in body], dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite feature values")
    return data


def _parse_score(raw: str, where: str) -> int:
    try:
        value = float(raw)
    except ValueError:
        raise DataError(f"{where}: score {raw!r} is not a number") from None
    if not math.isfinite(value) or value != int(value):
        raise DataError(f"{where}: score {raw!r} is not a whole number")
    return int(value)


def _participant_dirs(root: Path, suffix: str) -> set[str]:
    return {p.name[: len(p.name) - len(suffix)] if suffix else p.name
            for p in root.iterdir() if p.is_dir() and p.name.endswith(suffix) and p.name != "labels"}


def _check_known(labelled: Sequence[str], present: set[str], source: Path) -> None:
    unknown = sorted(set(labelled) - present)
    if unknown:
        raise DataError(f"{source}: unknown participants with no data directory: {', '.join(unknown)}")


# -- E-DAIC -----------------------------------------------------------------------

def read_edaic_transcript(path: Path) -> str:
    rows = _read_rows(path)
    if rows and "Text" not in rows[0]:
        raise DataError(f"{path}: transcript CSV has no 'Text' column")
    return "\n".join(r["Text"] for r in rows if r.get("Text"))


def load_edaic(root: str | Path, feature_set: str = "") -> Corpus:
    root = Path(root)
    feature_set = feature_set or DEFAULT_EDAIC_FEATURE_SET
    if feature_set not in EDAIC_FEATURE_SETS:
        raise DataError(f"unknown E-DAIC feature set {feature_set!r}; choose from {', '.join(EDAIC_FEATURE_SETS)}")
    if not root.is_dir():
        raise DataError(f"E-DAIC root not found: {root}")
    label_files = {s: root / "labels" / f"{s}_split.csv" for s in SPLITS}
    _require(list(label_files.values()), "E-DAIC labels")

    labels: list[tuple[str, str, int]] = []
    for split, path in label_files.items():
        for n, row in enumerate(_read_rows(path), 2):
            if "Participant_ID" not in row or "PHQ_Score" not in row:
                raise DataError(f"{path}: expected columns Participant_ID,PHQ_Score")
            labels.append((row["Participant_ID"], split, _parse_score(row["PHQ_Score"], f"{path}:{n}")))
    _check_known([pid for pid, _, _ in labels], _participant_dirs(root, "_P"), root / "labels")

    audio_suffix, video_suffix = EDAIC_FEATURE_SETS[feature_set]
    missing = []
    for pid, _, _ in labels:
        base = root / f"{pid}_P"
        for p in (base / f"{pid}_Transcript.csv", base / "features" / f"{pid}_{audio_suffix}.csv",
                  base / "features" / f"{pid}_{video_suffix}.csv"):
            if not p.exists():
                missing.append(str(p))
    if missing:
        raise DataError(f"E-DAIC: missing files: {', '.join(missing)}")

    samples = []
    for pid, split, score in labels:
        base = root / f"{pid}_P"
        samples.append(InterviewSample(
            id=pid,
            transcript=read_edaic_transcript(base / f"{pid}_Transcript.csv"),
            audio=read_feature_csv(base / "features" / f"{pid}_{audio_suffix}.csv"),
            video=read_feature_csv(base / "features" / f"{pid}_{video_suffix}.csv"),
            score=score,
            instrument="phq8",
            split=split,
        ))
    corpus = build_corpus("edaic", samples, generator={"layout": "edaic", "feature_set": feature_set})
    if corpus.manifest.counts != EDAIC_SPLIT_SIZES:
        warnings.warn(
            f"E-DAIC split sizes {corpus.manifest.counts} differ from the full release {EDAIC_SPLIT_SIZES}",
            stacklevel=2,
        )
    return corpus


# -- CMDC -------------------------------------------------------------------------

def load_cmdc(root: str | Path, feature_set: str = "", seed: int = 0) -> Corpus:
    """Participants without a ``split`` value are assigned by id hash."""
    root = Path(root)
    if feature_set and feature_set not in CMDC_FEATURE_SETS:
        raise DataError(f"unknown CMDC feature set {feature_set!r}; choose from {', '.join(CMDC_FEATURE_SETS)}")
    if not root.is_dir():
        raise DataError(f"CMDC root not found: {root}")
    label_path = root / "labels.csv"
    _require([label_path], "CMDC labels")

    labels: list[tuple[str, str, int]] = []
    for n, row in enumerate(_read_rows(label_path), 2):
        if "participant_id" not in row or "score" not in row:
            raise DataError(f"{label_path}: expected columns participant_id,split,score")
        split = row.get("split", "")
        if split and split not in SPLITS:
            raise DataError(f"{label_path}:{n}: unknown split {split!r}")
        labels.append((row["participant_id"], split, _parse_score(row["score"], f"{label_path}:{n}")))
    _check_known([pid for pid, _, _ in labels], _participant_dirs(root, ""), label_path)

    missing = [str(root / pid / name) for pid, _, _ in labels
               for name in ("transcript.txt", "audio.csv", "video.csv") if not (root / pid / name).exists()]
    if missing:
        raise DataError(f"CMDC: missing files: {', '.join(missing)}")

    unsplit = [pid for pid, split, _ in labels if not split]
    hashed = assign_splits(unsplit, seed) if len(unsplit) >= len(SPLITS) else {pid: "train" for pid in unsplit}
    samples = [
        InterviewSample(
            id=pid,
            transcript=(root / pid / "transcript.txt").read_text(encoding="utf-8").strip(),
            audio=read_feature_csv(root / pid / "audio.csv"),
            video=read_feature_csv(root / pid / "video.csv"),
            score=score,
            instrument="phq9",
            split=split or hashed[pid],
        )
        for pid, split, score in labels
    ]
    return build_corpus("cmdc", samples, generator={"layout": "cmdc", "feature_set": feature_set or "default"})


def adapt_external(layout: str, root: str | Path, feature_set: str = "", seed: int = 0) -> Corpus:
    if layout == "edaic":
        return load_edaic(root, feature_set)
    if layout == "cmdc":
        return load_cmdc(root, feature_set, seed)
    raise DataError(f"unknown external layout {layout!r}; choose from {', '.join(LAYOUTS)}")
