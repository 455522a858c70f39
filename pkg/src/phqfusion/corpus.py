"""Interview corpora: records, JSONL persistence, and a synthetic generator
with a planted score signal in every modality."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import lexicon
from .errors import DataError
from .objectives import instrument_max
from .records import StageSummary

FORMAT_VERSION = "phqfusion.corpus/1"
SPLITS = ("train", "dev", "test")
SPLIT_FRACTIONS = (0.70, 0.15, 0.15)
SAMPLES_FILE = "samples.jsonl"
MANIFEST_FILE = "manifest.json"


def tensor_to_json(array) -> list:
    """Nested float lists; JSON float repr round-trips float64 exactly."""
    return np.asarray(array, dtype=np.float64).tolist()


def tensor_from_json(value) -> np.ndarray:
    return np.array(value, dtype=np.float64)


@dataclass
class InterviewSample:
    id: str
    transcript: str
    audio: np.ndarray
    video: np.ndarray
    score: int
    instrument: str = "phq8"
    split: str = "train"
    summaries: dict[int, StageSummary] = field(default_factory=dict)

    def __post_init__(self):
        self.audio = np.asarray(self.audio, dtype=np.float64)
        self.video = np.asarray(self.video, dtype=np.float64)
        top = instrument_max(self.instrument)
        if not 0 <= self.score <= top:
            raise DataError(f"sample {self.id}: score {self.score} outside {self.instrument} range [0, {top}]")
        if self.split not in SPLITS:
            raise DataError(f"sample {self.id}: unknown split {self.split!r}")
        for kind, arr in (("audio", self.audio), ("video", self.video)):
            if arr.ndim != 2 or arr.shape[0] < 1:
                raise DataError(f"sample {self.id}: {kind} must be [L x d] with L >= 1, got {list(arr.shape)}")
        if not self.transcript.strip():
            raise DataError(f"sample {self.id}: empty transcript")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "transcript": self.transcript,
            "audio": tensor_to_json(self.audio),
            "video": tensor_to_json(self.video),
            "score": self.score,
            "instrument": self.instrument,
            "split": self.split,
            "summaries": {str(k): s.to_json() for k, s in sorted(self.summaries.items())},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "InterviewSample":
        return cls(
            id=str(obj["id"]),
            transcript=obj["transcript"],
            audio=tensor_from_json(obj["audio"]),
            video=tensor_from_json(obj["video"]),
            score=int(obj["score"]),
            instrument=obj.get("instrument", "phq8"),
            split=obj.get("split", "train"),
            summaries={int(k): StageSummary.from_json(v) for k, v in obj.get("summaries", {}).items()},
        )


@dataclass
class CorpusManifest:
    name: str
    instrument: str
    d_a: int
    d_v: int
    counts: dict[str, int]
    generator: dict | None = None
    format_version: str = FORMAT_VERSION

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "instrument": self.instrument,
            "d_a": self.d_a,
            "d_v": self.d_v,
            "counts": dict(self.counts),
            "generator": self.generator,
            "format_version": self.format_version,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CorpusManifest":
        try:
            return cls(
                name=obj["name"],
                instrument=obj["instrument"],
                d_a=int(obj["d_a"]),
                d_v=int(obj["d_v"]),
                counts={k: int(v) for k, v in obj["counts"].items()},
                generator=obj.get("generator"),
                format_version=obj.get("format_version", FORMAT_VERSION),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed manifest: {exc}") from exc


@dataclass
class Corpus:
    manifest: CorpusManifest
    samples: list[InterviewSample]

    def split(self, name: str) -> list[InterviewSample]:
        return [s for s in self.samples if s.split == name]

    def by_id(self) -> dict[str, InterviewSample]:
        return {s.id: s for s in self.samples}

    def __len__(self) -> int:
        return len(self.samples)


def count_splits(samples: Iterable[InterviewSample]) -> dict[str, int]:
    counts = {name: 0 for name in SPLITS}
    for s in samples:
        counts[s.split] += 1
    return counts


def build_corpus(name: str, samples: list[InterviewSample], generator: dict | None = None) -> Corpus:
    if not samples:
        raise DataError("corpus has no samples")
    first = samples[0]
    d_a, d_v = first.audio.shape[1], first.video.shape[1]
    for s in samples:
        if s.audio.shape[1] != d_a or s.video.shape[1] != d_v:
            raise DataError(
                f"sample {s.id}: feature dims ({s.audio.shape[1]}, {s.video.shape[1]}) differ from ({d_a}, {d_v})"
            )
        if s.instrument != first.instrument:
            raise DataError(f"sample {s.id}: mixed instruments in one corpus")
    manifest = CorpusManifest(name, first.instrument, d_a, d_v, count_splits(samples), generator)
    return Corpus(manifest, samples)


# -- persistence ----------------------------------------------------------------

def save_corpus(corpus: Corpus, path: str | Path) -> Path:
    """Write ``samples.jsonl`` plus ``manifest.json`` into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = replace(corpus.manifest, counts=count_splits(corpus.samples))
    with (path / SAMPLES_FILE).open("w", encoding="utf-8") as fh:
        for sample in corpus.samples:
            fh.write(json.dumps(sample.to_json()))
            fh.write("\n")
    (path / MANIFEST_FILE).write_text(json.dumps(manifest.to_json(), indent=2, sort_keys=True), encoding="utf-8")
    return path


def load_corpus(path: str | Path) -> Corpus:
    path = Path(path)
    manifest_path, samples_path = path / MANIFEST_FILE, path / SAMPLES_FILE
    for p in (manifest_path, samples_path):
        if not p.exists():
            raise DataError(f"corpus file missing: {p}")
    try:
        manifest = CorpusManifest.from_json(json.loads(manifest_path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest {manifest_path}: {exc}") from exc

    samples = []
    with samples_path.open(encoding="utf-8") as fh:
        for line_num, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                sample = InterviewSample.from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{samples_path}: malformed sample on line {line_num}: {exc}") from exc
            if sample.audio.shape[1] != manifest.d_a or sample.video.shape[1] != manifest.d_v:
                raise DataError(
                    f"{samples_path}: line {line_num} has feature dims "
                    f"({sample.audio.shape[1]}, {sample.video.shape[1]}), manifest says ({manifest.d_a}, {manifest.d_v})"
                )
            samples.append(sample)

    counts = count_splits(samples)
    expected = {k: manifest.counts.get(k, 0) for k in SPLITS}
    if counts != expected:
        raise DataError(f"manifest counts {expected} do not match file contents {counts}")
    return Corpus(manifest, samples)


# -- synthetic generation -----------------------------------------------------------

def _stable_int(*parts) -> int:
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def _split_key(seed: int, sample_id: str) -> float:
    return _stable_int("split", seed, sample_id) / 2.0**64


def assign_splits(ids: Sequence[str], seed: int) -> dict[str, str]:
    """70/15/15 by hash of id, then guarantee every split has at least one member.

    A split left empty takes the member of the largest split whose hash key
    lies closest to the empty split's interval, so the result depends only on
    the set of ids.
    """
    if len(ids) < len(SPLITS):
        raise DataError(f"need at least {len(SPLITS)} samples to populate every split")
    bounds = np.cumsum(SPLIT_FRACTIONS)
    keys = {i: _split_key(seed, i) for i in ids}
    out = {i: SPLITS[min(int(np.searchsorted(bounds, k, side="right")), len(SPLITS) - 1)] for i, k in keys.items()}
    for target_idx, target in enumerate(SPLITS):
        if target in out.values():
            continue
        lo = 0.0 if target_idx == 0 else bounds[target_idx - 1]
        hi = bounds[target_idx]
        sizes = {s: sum(1 for v in out.values() if v == s) for s in SPLITS}
        donor = max(SPLITS, key=lambda s: (sizes[s], -SPLITS.index(s)))
        members = sorted((i for i, v in out.items() if v == donor), key=lambda i: (min(abs(keys[i] - lo), abs(keys[i] - hi)), i))
        out[members[0]] = target
    return out


def _distribute(score: int, domains: int, rng: np.random.Generator) -> np.ndarray:
    items = np.zeros(domains, dtype=int)
    for _ in range(score):
        open_slots = np.flatnonzero(items < 3)
        items[rng.choice(open_slots)] += 1
    return items


def synthesize_transcript(items: np.ndarray, score_frac: float, rng: np.random.Generator,
                          domains: Sequence[str], reveal: float) -> str:
    lines = []
    for domain, level in zip(domains, items):
        for _ in range(rng.binomial(int(level), reveal)):
            phrase = rng.choice(lexicon.PHQ_DOMAINS[domain])
            lines.append(rng.choice(lexicon.SYMPTOM_TEMPLATES).format(p=phrase))
    if rng.random() < score_frac:
        cause = rng.choice(list(lexicon.CAUSES))
        phrase = rng.choice(lexicon.CAUSES[cause])
        lines.append(rng.choice(lexicon.CAUSE_TEMPLATES).format(p=phrase))
    for _ in range(rng.binomial(2, 1.0 - score_frac)):
        lines.append(rng.choice(lexicon.WELLBEING_TEMPLATES).format(p=rng.choice(lexicon.WELLBEING)))
    for _ in range(int(rng.integers(2, 5))):
        lines.append(str(rng.choice(lexicon.FILLERS)))
    order = rng.permutation(len(lines))
    return "\n".join(lines[i] for i in order)


def planted_features(length: int, width: int, shift: float, rng: np.random.Generator) -> np.ndarray:
    """Unit Gaussian frames with the first ceil(width/4) channels shifted by ``shift``."""
    x = rng.standard_normal((length, width))
    x[:, : math.ceil(width / 4)] += shift
    return x


def generate_sample(sample_id: str, seed: int, *, instrument: str = "phq8", d_a: int = 12, d_v: int = 16,
                    min_len: int = 8, max_len: int = 24, signal_scale: float = 2.5,
                    text_reveal: float = 0.7) -> tuple[InterviewSample, np.ndarray]:
    """One synthetic interview plus its per-domain item scores. The RNG stream is
    derived from (seed, id) only, so generation order never matters."""
    top = instrument_max(instrument)
    domains = lexicon.domains_for(instrument)
    rng = np.random.default_rng([seed, _stable_int("sample", sample_id)])
    score = int(rng.integers(0, top + 1))
    frac = score / top
    items = _distribute(score, len(domains), rng)
    transcript = synthesize_transcript(items, frac, rng, domains, text_reveal)
    audio = planted_features(int(rng.integers(min_len, max_len + 1)), d_a, signal_scale * frac, rng)
    video = planted_features(int(rng.integers(min_len, max_len + 1)), d_v, signal_scale * frac, rng)
    sample = InterviewSample(sample_id, transcript, audio, video, score, instrument)
    return sample, items


def generate_synthetic(n: int, seed: int = 0, *, instrument: str = "phq8", d_a: int = 12, d_v: int = 16,
                       min_len: int = 8, max_len: int = 24, signal_scale: float = 2.5,
                       text_reveal: float = 0.7, name: str = "synthetic") -> Corpus:
    if n < len(SPLITS) + 1:
        raise DataError(f"synthetic corpus needs n >= 4 to populate every split, got {n}")
    if d_a < 1 or d_v < 1 or min_len < 1 or max_len < min_len:
        raise DataError("feature dims and lengths must be positive with min_len <= max_len")
    params = dict(instrument=instrument, d_a=d_a, d_v=d_v, min_len=min_len, max_len=max_len,
                  signal_scale=signal_scale, text_reveal=text_reveal)
    ids = [f"s{i:05d}" for i in range(n)]
    splits = assign_splits(ids, seed)
    samples = []
    for sample_id in ids:
        sample, _ = generate_sample(sample_id, seed, **params)
        sample.split = splits[sample_id]
        samples.append(sample)
    return build_corpus(name, samples, generator={"n": n, "seed": seed, **params})
