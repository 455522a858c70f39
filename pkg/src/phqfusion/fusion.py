"""Summary-guided fusion of text, audio and video sequences.

Steps: sigmoid gates computed from the summary vector rescale each modality;
the gated sequences are concatenated (text, video, audio); the summary token
and the concatenated sequence attend to each other; a CLS token is pooled by a
transformer encoder; and [h_S; H_CLS; z1; z2] feeds a stage-specific head.
All tensors carry a leading batch dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np

from .encoders import MultiHeadAttention, TransformerEncoder
from .errors import DimensionError, ModelError
from .numeric import (
    MLP,
    Linear,
    Module,
    Parameter,
    Tensor,
    as_tensor,
    concat,
    getitem,
    matmul,
    reshape,
    sigmoid,
    tsum,
)

CONCAT_ORDER = ("text", "video", "audio")
GATE_ORDER = ("text", "audio", "video")


class Stage(IntEnum):
    SCREEN = 1
    SEVERITY = 2
    SCORE = 3

    @property
    def width(self) -> int:
        return {Stage.SCREEN: 2, Stage.SEVERITY: 5, Stage.SCORE: 1}[self]


@dataclass(frozen=True)
class GateVector:
    g_T: float
    g_A: float
    g_V: float

    def __post_init__(self):
        for name in ("g_T", "g_A", "g_V"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ModelError(f"gate {name}={value} outside (0, 1)")

    @classmethod
    def from_row(cls, row) -> "GateVector":
        row = np.asarray(row, dtype=np.float64)
        return cls(float(row[0]), float(row[1]), float(row[2]))

    def as_dict(self) -> dict[str, float]:
        return {"text": self.g_T, "audio": self.g_A, "video": self.g_V}


@dataclass
class ConcatSequence:
    seq: Tensor  # [B, L, d]
    segment_ids: list[str]
    mask: np.ndarray  # [B, L]

    @property
    def length(self) -> int:
        return len(self.segment_ids)

    def rows(self, kind: str) -> np.ndarray:
        return np.array([s == kind for s in self.segment_ids])


@dataclass
class CrossContext:
    z1: Tensor  # [B, d]
    z2: Tensor  # [B, d]
    summary_weights: np.ndarray | None = None


@dataclass
class FusionEmbedding:
    vector: Tensor  # [B, 4d]
    dim: int

    @property
    def parts(self) -> dict[str, np.ndarray]:
        d, v = self.dim, self.vector.data
        return {
            "h_S": v[..., 0:d],
            "H_CLS": v[..., d : 2 * d],
            "z1": v[..., 2 * d : 3 * d],
            "z2": v[..., 3 * d : 4 * d],
        }


@dataclass
class StagePrediction:
    stage: Stage
    logits: np.ndarray
    decision: int | float


# -- functional steps ---------------------------------------------------------

def gate(h_s, w_g, b_g) -> Tensor:
    """sigma(W_g h_S + b_g) for batched h_S [..., d]; returns [..., 3] in (T, A, V) order."""
    h_s, w_g, b_g = as_tensor(h_s), as_tensor(w_g), as_tensor(b_g)
    d = h_s.shape[-1]
    if w_g.shape != (3, d) or b_g.shape != (3,):
        raise DimensionError(
            f"gate expects W_g [3 x {d}] and b_g [3], got {list(w_g.shape)} and {list(b_g.shape)}"
        )
    return sigmoid(matmul(h_s, w_g.T) + b_g)


def apply_gate(seq, g) -> Tensor:
    """Broadcast one scalar per sample over the whole sequence: g [B] * seq [B, L, d]."""
    g = as_tensor(g)
    return as_tensor(seq) * reshape(g, (g.shape[0], 1, 1))


def concat_gated(gated: Mapping[str, tuple[Tensor, np.ndarray]]) -> ConcatSequence:
    """Row-stack gated sequences in text, video, audio order (absent kinds skipped)."""
    present = [k for k in CONCAT_ORDER if k in gated]
    unknown = set(gated) - set(CONCAT_ORDER)
    if unknown:
        raise ModelError(f"unknown modality kinds {sorted(unknown)}")
    if not present:
        raise ModelError("nothing to concatenate")
    dims = {as_tensor(gated[k][0]).shape[-1] for k in present}
    if len(dims) != 1:
        raise DimensionError(f"modality widths differ: { {k: as_tensor(gated[k][0]).shape[-1] for k in present} }")
    seqs, masks, segments = [], [], []
    for kind in present:
        seq, mask = gated[kind]
        seqs.append(as_tensor(seq))
        masks.append(np.asarray(mask, dtype=bool))
        segments.extend([kind] * seqs[-1].shape[1])
    return ConcatSequence(concat(seqs, axis=1), segments, np.concatenate(masks, axis=1))


def masked_mean(seq, mask: np.ndarray) -> Tensor:
    """Mean over valid rows: seq [B, L, d], mask [B, L] -> [B, d]."""
    seq = as_tensor(seq)
    w = np.asarray(mask, dtype=np.float64)
    counts = w.sum(axis=1, keepdims=True)
    if np.any(counts == 0):
        raise ModelError("masked mean over a fully masked sequence")
    return tsum(seq * w[:, :, None], axis=1) * (1.0 / counts)


def cross_attend(h_s, cat: ConcatSequence, z1_attn: MultiHeadAttention, z2_attn: MultiHeadAttention) -> CrossContext:
    """z1: summary token over H_cat. z2: H_cat rows over the summary token,
    mean-pooled across valid query rows."""
    h_s = as_tensor(h_s)
    if not np.all(cat.mask.any(axis=1)):
        raise ModelError("cross attention over a fully masked sequence")
    b, d = h_s.shape
    token = reshape(h_s, (b, 1, d))
    z1, weights = z1_attn(token, cat.seq, cat.seq, key_mask=cat.mask, return_weights=True)
    z2_rows = z2_attn(cat.seq, token, token)
    return CrossContext(reshape(z1, (b, d)), masked_mean(z2_rows, cat.mask), weights.data[:, :, 0, :])


def cls_pool(cat: ConcatSequence, cls_token: Parameter, encoder: TransformerEncoder) -> Tensor:
    """Prepend the learned CLS vector (always valid), encode, return its output row."""
    b, _, d = cat.seq.shape
    cls_rows = as_tensor(cls_token) * np.ones((b, 1, 1))
    seq = concat([cls_rows, cat.seq], axis=1)
    mask = np.concatenate([np.ones((b, 1), dtype=bool), cat.mask], axis=1)
    out = encoder(seq, mask)
    return getitem(out, (slice(None), 0))


def aggregate(h_s, h_cls, ctx: CrossContext) -> FusionEmbedding:
    parts = [as_tensor(h_s), as_tensor(h_cls), as_tensor(ctx.z1), as_tensor(ctx.z2)]
    widths = {p.shape[-1] for p in parts}
    if len(widths) != 1:
        raise DimensionError(f"aggregate inputs differ in width: {[p.shape[-1] for p in parts]}")
    return FusionEmbedding(concat(parts, axis=-1), widths.pop())


class PredictionHead(Module):
    """4d -> d -> width MLP. The score head maps its raw output affinely onto the
    instrument range (centre + half-range * raw); clamping happens only in
    :meth:`decide` so the loss sees the unclamped value."""

    def __init__(self, stage: Stage, dim: int, rng: np.random.Generator, score_max: float = 24.0):
        self.stage = Stage(stage)
        self.score_max = float(score_max)
        self.mlp = MLP(4 * dim, dim, self.stage.width, rng)

    def forward(self, x) -> Tensor:
        out = self.mlp(x)
        if self.stage is Stage.SCORE:
            half = self.score_max / 2.0
            out = out * half + half
        return out

    def decide(self, logits: np.ndarray) -> list:
        logits = np.asarray(logits)
        if self.stage is Stage.SCORE:
            return [float(v) for v in np.clip(logits[:, 0], 0.0, self.score_max)]
        # np.argmax returns the first maximum: ties go to the lowest class index
        return [int(v) for v in np.argmax(logits, axis=-1)]


def predict(fusion: FusionEmbedding, stage: Stage, head: PredictionHead) -> list[StagePrediction]:
    stage = Stage(stage)
    if head.stage is not stage:
        raise ModelError(f"head built for stage {int(head.stage)} used for stage {int(stage)}")
    logits = head(fusion.vector)
    decisions = head.decide(logits.data)
    return [StagePrediction(stage, logits.data[i].copy(), decisions[i]) for i in range(len(decisions))]


# -- module -------------------------------------------------------------------

@dataclass
class FusionOutput:
    embedding: FusionEmbedding
    gates: np.ndarray  # [B, 3] in (T, A, V) order; 1.0 when gating is off
    cat: ConcatSequence | None
    context: CrossContext | None
    h_cls: Tensor


@dataclass
class FusionToggles:
    gate: bool = True
    bca: bool = True
    ap: bool = True
    modalities: tuple[str, ...] = ("text", "audio", "video")


class ReportGuidedFusion(Module):
    def __init__(self, dim: int, heads: int, layers: int, rng: np.random.Generator,
                 ffn_mult: int = 2, toggles: FusionToggles | None = None):
        self.dim = dim
        self.toggles = toggles or FusionToggles()
        self.gate_proj = Linear(dim, 3, rng)
        self.z1_attn = MultiHeadAttention(dim, heads, rng)
        self.z2_attn = MultiHeadAttention(dim, heads, rng)
        self.cls_token = Parameter(rng.normal(0.0, 0.02, size=dim))
        self.cls_encoder = TransformerEncoder(dim, layers, heads, rng, ffn_mult)

    def gates(self, h_s) -> Tensor:
        return gate(h_s, self.gate_proj.weight, self.gate_proj.bias)

    def forward(self, h_s, encoded: Mapping[str, tuple[Tensor, np.ndarray]],
                force_gates: Mapping[str, float] | None = None) -> FusionOutput:
        """``encoded`` maps kind -> (H_m [B, L_m, d], mask [B, L_m]); only enabled
        kinds are fused. ``force_gates`` pins individual gate values."""
        h_s = as_tensor(h_s)
        b, d = h_s.shape
        toggles = self.toggles
        kinds = [k for k in GATE_ORDER if k in toggles.modalities and k in encoded]

        if toggles.gate:
            g = self.gates(h_s)
        else:
            g = as_tensor(np.ones((b, 3)))
        if force_gates:
            columns = [getitem(g, (slice(None), i)) for i in range(3)]
            for name, value in force_gates.items():
                columns[GATE_ORDER.index(name)] = as_tensor(np.full(b, float(value)))
            g = concat([reshape(c, (b, 1)) for c in columns], axis=1)

        gated = {
            kind: (apply_gate(encoded[kind][0], getitem(g, (slice(None), GATE_ORDER.index(kind)))),
                   np.asarray(encoded[kind][1], dtype=bool))
            for kind in kinds
        }
        cat = concat_gated(gated) if gated else None

        if toggles.bca and cat is not None:
            ctx = cross_attend(h_s, cat, self.z1_attn, self.z2_attn)
        else:
            zeros = as_tensor(np.zeros((b, d)))
            ctx = CrossContext(zeros, zeros)

        if toggles.ap or cat is None:
            h_cls = cls_pool(cat if cat is not None else _empty_cat(b, d), self.cls_token, self.cls_encoder)
        else:
            h_cls = masked_mean(cat.seq, cat.mask)

        return FusionOutput(aggregate(h_s, h_cls, ctx), g.data.copy(), cat, ctx, h_cls)


def _empty_cat(batch: int, dim: int) -> ConcatSequence:
    return ConcatSequence(as_tensor(np.zeros((batch, 0, dim))), [], np.zeros((batch, 0), dtype=bool))
