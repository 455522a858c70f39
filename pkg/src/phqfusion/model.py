"""Per-stage model (encoders + fusion + head), batching and checkpoints."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .encoders import KINDS, ModalityEncoder, SummaryProjector
from .errors import ConfigError, ModelError
from .fusion import FusionOutput, FusionToggles, PredictionHead, ReportGuidedFusion, Stage
from .numeric import Module, Parameter, Tensor, as_tensor
from .corpus import tensor_from_json, tensor_to_json
from .objectives import instrument_max

MODALITY_CODES = {"T": "text", "A": "audio", "V": "video", "S": "summary"}
CHECKPOINT_FORMAT = "phqfusion.checkpoint/1"


@dataclass
class ModelConfig:
    d: int = 32
    heads: int = 4
    layers: int = 2
    ffn_mult: int = 2
    text_dim: int = 64
    d_a: int = 12
    d_v: int = 16
    instrument: str = "phq8"
    modalities: str = "TAVS"
    gate: bool = True
    bca: bool = True
    ap: bool = True
    seed: int = 0

    def __post_init__(self):
        self.modalities = normalize_modalities(self.modalities)
        if self.d % self.heads:
            raise ConfigError(f"model.d={self.d} is not divisible by model.heads={self.heads}")
        if self.d < 2 or self.layers < 0 or self.heads < 1:
            raise ConfigError("model.d must be >= 2, model.layers >= 0, model.heads >= 1")
        instrument_max(self.instrument)

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(MODALITY_CODES[c] for c in self.modalities if c != "S")

    @property
    def use_summary(self) -> bool:
        return "S" in self.modalities


def normalize_modalities(spec: str | Sequence[str]) -> str:
    codes = "".join(spec).replace("+", "").replace(",", "").replace(" ", "").upper()
    unknown = set(codes) - set(MODALITY_CODES)
    if unknown:
        raise ConfigError(f"unknown modality codes {sorted(unknown)}; use T, A, V, S")
    ordered = "".join(c for c in "TAVS" if c in codes)
    if not ordered:
        raise ConfigError("at least one of T, A, V, S must be enabled")
    return ordered


@dataclass
class SampleFeatures:
    """Model-ready arrays for one interview."""

    id: str
    text: np.ndarray  # [L_t, text_dim]
    audio: np.ndarray  # [L_a, d_a]
    video: np.ndarray  # [L_v, d_v]
    summaries: dict[int, np.ndarray]  # stage -> [text_dim]
    score: float


@dataclass
class Batch:
    ids: list[str]
    inputs: dict[str, tuple[np.ndarray, np.ndarray]]  # kind -> (data [B, L, d_m], mask [B, L])
    summary: np.ndarray  # [B, text_dim]
    scores: np.ndarray  # [B]

    def __len__(self) -> int:
        return len(self.ids)


def _pad(arrays: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    longest = max(a.shape[0] for a in arrays)
    width = arrays[0].shape[1]
    data = np.zeros((len(arrays), longest, width))
    mask = np.zeros((len(arrays), longest), dtype=bool)
    for i, a in enumerate(arrays):
        data[i, : a.shape[0]] = a
        mask[i, : a.shape[0]] = True
    return data, mask


def collate(samples: Sequence[SampleFeatures], summary_stage: int) -> Batch:
    if not samples:
        raise ModelError("cannot collate an empty batch")
    inputs = {kind: _pad([getattr(s, kind) for s in samples]) for kind in KINDS}
    try:
        summary = np.stack([s.summaries[summary_stage] for s in samples])
    except KeyError:
        raise ModelError(f"stage-{summary_stage} summary missing; run summarize first") from None
    return Batch(
        ids=[s.id for s in samples],
        inputs=inputs,
        summary=summary,
        scores=np.array([s.score for s in samples], dtype=np.float64),
    )


@dataclass
class StageOutput:
    logits: Tensor
    fusion: FusionOutput


class StageModel(Module):
    """Encoders, fusion and head for one stage; stages never share weights."""

    def __init__(self, stage: int | Stage, config: ModelConfig):
        self.stage = Stage(stage)
        self.config = config
        rng = np.random.default_rng([config.seed, int(self.stage)])
        c = config
        in_dims = {"text": c.text_dim, "audio": c.d_a, "video": c.d_v}
        self.encoders = {
            kind: ModalityEncoder(kind, in_dims[kind], c.d, c.layers, c.heads, rng, c.ffn_mult)
            for kind in c.kinds
        }
        if c.use_summary:
            self.summary_proj = SummaryProjector(c.text_dim, c.d, rng)
        else:
            # learned stand-in for h_S when the summary is ablated
            self.summary_const = Parameter(rng.normal(0.0, 0.1, size=c.d))
        self.fusion = ReportGuidedFusion(
            c.d, c.heads, c.layers, rng, c.ffn_mult,
            FusionToggles(gate=c.gate, bca=c.bca, ap=c.ap, modalities=c.kinds),
        )
        self.head = PredictionHead(self.stage, c.d, rng, score_max=instrument_max(c.instrument))
        self.assign_names()

    def summary_vector(self, summary: np.ndarray) -> Tensor:
        if self.config.use_summary:
            return self.summary_proj(summary)
        return self.summary_const * np.ones((summary.shape[0], 1))

    def forward(self, batch: Batch, force_gates: Mapping[str, float] | None = None) -> StageOutput:
        h_s = self.summary_vector(batch.summary)
        encoded = {}
        for kind, encoder in self.encoders.items():
            data, mask = batch.inputs[kind]
            encoded[kind] = (encoder(data, mask), mask)
        fused = self.fusion(h_s, encoded, force_gates=force_gates)
        return StageOutput(self.head(fused.embedding.vector), fused)

    def decide(self, logits: np.ndarray) -> list:
        return self.head.decide(logits)


# -- checkpoints --------------------------------------------------------------

def checkpoint_payload(model: StageModel, extra: Mapping | None = None) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "stage": int(model.stage),
        "config": asdict(model.config),
        "extra": dict(extra or {}),
        "parameters": {name: tensor_to_json(p.data) for name, p in model.named_parameters()},
    }


def save_checkpoint(model: StageModel, path: str | Path, extra: Mapping | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint_payload(model, extra)), encoding="utf-8")
    return path


def load_checkpoint(path: str | Path) -> StageModel:
    path = Path(path)
    if not path.exists():
        raise ModelError(f"checkpoint not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ModelError(f"checkpoint {path} has unknown format {payload.get('format')!r}")
    known = {f.name for f in fields(ModelConfig)}
    config = ModelConfig(**{k: v for k, v in payload["config"].items() if k in known})
    model = StageModel(payload["stage"], config)
    model.load_state_dict({k: tensor_from_json(v) for k, v in payload["parameters"].items()})
    return model
