"""Modality encoders: text/summary embedding providers, projection to the
shared width, sinusoidal positions, and a pre-norm transformer encoder."""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol

import numpy as np

from .errors import ConfigError, DataError, DimensionError, ProviderParseError
from .numeric import (
    MLP,
    LayerNorm,
    Linear,
    Module,
    Tensor,
    as_tensor,
    masked_fill,
    matmul,
    reshape,
    softmax,
    transpose,
)
from .transport import httpx_transport, post_json_with_retry

KINDS = ("text", "audio", "video")


# -- embedding providers --------------------------------------------------------

class EmbeddingProvider(Protocol):
    name: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def tokenize(text: str) -> list[str]:
    return text.lower().split()


@lru_cache(maxsize=65536)
def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}\x1f{token}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    v.setflags(write=False)
    return v


def hashed_embed(text: str, dim: int = 64, seed: int = 0) -> np.ndarray:
    """L2-normalised mean of seeded per-token unit vectors; empty text gives zeros."""
    if dim < 8:
        raise ConfigError("hashed embedding dimension must be at least 8")
    tokens = tokenize(text)
    if not tokens:
        return np.zeros(dim)
    total = np.zeros(dim)
    for tok in tokens:
        total += _token_vector(tok, dim, seed)
    total /= len(tokens)
    norm = np.linalg.norm(total)
    return total / norm if norm > 0 else total


@dataclass
class HashedEmbeddingProvider:
    dim: int = 64
    seed: int = 0
    name: str = "hashed"

    def embed(self, text: str) -> np.ndarray:
        return hashed_embed(text, self.dim, self.seed)


class HttpEmbeddingProvider:
    """Remote embedder: POST {"input": text} -> {"embedding": [floats]}.

    Uses the same transport and retry policy as the HTTP summary client and
    memoises vectors per text for the life of the instance.
    """

    def __init__(self, url: str, dim: int, credential_env: str = "PHQFUSION_API_KEY",
                 transport=None, attempts: int = 3, base_delay: float = 1.0, timeout: float = 60.0,
                 sleep=None, name: str = "http"):
        self.url = url
        self.dim = dim
        self.credential_env = credential_env
        self.transport = transport or httpx_transport
        self.attempts = attempts
        self.base_delay = base_delay
        self.timeout = timeout
        self.sleep = sleep or time.sleep
        self.name = name
        self._memo: dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        if text in self._memo:
            return self._memo[text]
        if not self.url:
            raise ConfigError("embedder.url is not configured")
        key = os.environ.get(self.credential_env, "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        raw, _ = post_json_with_retry(
            self.transport, self.url, {"input": text}, headers,
            timeout=self.timeout, attempts=self.attempts, base_delay=self.base_delay, sleep=self.sleep,
        )
        try:
            vector = np.asarray(json.loads(raw)["embedding"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderParseError(f"embedding response malformed: {exc}") from exc
        if vector.shape != (self.dim,) or not np.all(np.isfinite(vector)):
            raise ProviderParseError(f"embedding has shape {list(vector.shape)}, expected [{self.dim}]")
        self._memo[text] = vector
        return vector


# -- raw and encoded modalities -----------------------------------------------

@dataclass
class RawModality:
    kind: str
    data: np.ndarray  # [L, d_m]
    mask: np.ndarray  # [L] bool, True = valid

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.kind not in KINDS:
            raise DataError(f"unknown modality kind {self.kind!r}")
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise DataError(f"{self.kind} data must be [L x d] with L >= 1, got {list(self.data.shape)}")
        if self.mask.shape != (self.data.shape[0],):
            raise DataError(f"{self.kind} mask length {self.mask.shape} does not match L={self.data.shape[0]}")
        if not self.mask.any():
            raise DataError(f"{self.kind} modality has no valid positions")


@dataclass
class EncodedModality:
    kind: str
    seq: Tensor  # [B, L, d] or [L, d]
    mask: np.ndarray


@dataclass
class SummaryEmbedding:
    text: str
    vector: Tensor


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(0, dim, 2)[None, :]
    angles = pos / np.power(10000.0, i / dim)
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : dim // 2])
    return pe


# -- attention ----------------------------------------------------------------

class MultiHeadAttention(Module):
    """Scaled dot-product attention with separate Q/K/V/output projections.

    Inputs are batched: queries [B, Lq, d], keys/values [B, Lk, d]. ``key_mask``
    ([B, Lk], True = valid) removes keys from every query's softmax.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ConfigError(f"model width {dim} is not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.q_proj = Linear(dim, dim, rng)
        self.k_proj = Linear(dim, dim, rng)
        self.v_proj = Linear(dim, dim, rng)
        self.out_proj = Linear(dim, dim, rng)

    def _split(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        return transpose(reshape(x, (b, n, self.heads, self.dim // self.heads)), (0, 2, 1, 3))

    def forward(self, query, key, value, key_mask=None, return_weights: bool = False):
        query, key, value = as_tensor(query), as_tensor(key), as_tensor(value)
        b, lq, _ = query.shape
        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(key))
        v = self._split(self.v_proj(value))
        scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(self.dim // self.heads))
        if key_mask is not None:
            blocked = ~np.asarray(key_mask, dtype=bool)[:, None, None, :]
            scores = masked_fill(scores, blocked, -np.inf)
        weights = softmax(scores, axis=-1)
        ctx = transpose(matmul(weights, v), (0, 2, 1, 3))
        out = self.out_proj(reshape(ctx, (b, lq, self.dim)))
        return (out, weights) if return_weights else out


class EncoderBlock(Module):
    """Pre-norm block: x + Attn(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, dim: int, heads: int, ffn_mult: int, rng: np.random.Generator):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.ffn = MLP(dim, ffn_mult * dim, dim, rng)

    def forward(self, x: Tensor, mask: np.ndarray) -> Tensor:
        h = self.norm1(x)
        # masked query rows neither attend nor feed anything downstream
        a = self.attn(h, h, h, key_mask=mask) * mask[:, :, None].astype(np.float64)
        x = x + a
        return x + self.ffn(self.norm2(x))


class TransformerEncoder(Module):
    def __init__(self, dim: int, layers: int, heads: int, rng: np.random.Generator, ffn_mult: int = 2):
        if dim % heads:
            raise ConfigError(f"model width {dim} is not divisible by {heads} heads")
        self.blocks = [EncoderBlock(dim, heads, ffn_mult, rng) for _ in range(layers)]
        self.final_norm = LayerNorm(dim)

    def forward(self, x: Tensor, mask: np.ndarray) -> Tensor:
        for block in self.blocks:
            x = block(x, mask)
        return self.final_norm(x)


def transformer_encode(seq: EncodedModality, encoder: TransformerEncoder) -> EncodedModality:
    """Run ``encoder`` over ``seq``; unbatched [L, d] input is treated as B = 1."""
    x = as_tensor(seq.seq)
    mask = np.asarray(seq.mask, dtype=bool)
    squeeze = x.ndim == 2
    if squeeze:
        x, mask = reshape(x, (1,) + x.shape), mask[None, :]
    out = encoder(x, mask)
    if squeeze:
        out, mask = reshape(out, out.shape[1:]), mask[0]
    return EncodedModality(seq.kind, out, mask)


# -- per-modality encoders --------------------------------------------------------

class ModalityEncoder(Module):
    """Row-wise projection d_m -> d (two layers, GELU), positions, transformer."""

    def __init__(self, kind: str, in_dim: int, dim: int, layers: int, heads: int,
                 rng: np.random.Generator, ffn_mult: int = 2):
        self.kind = kind
        self.in_dim = in_dim
        self.dim = dim
        self.project = MLP(in_dim, dim, dim, rng)
        self.encoder = TransformerEncoder(dim, layers, heads, rng, ffn_mult)

    def projection(self, x) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise DimensionError(
                f"{self.kind} features have width {x.shape[-1]}, expected d_m={self.in_dim}"
            )
        return self.project(x)

    def forward(self, x, mask: np.ndarray) -> Tensor:
        """x: [B, L, d_m], mask: [B, L] -> [B, L, d]."""
        h = self.projection(x)
        h = h + sinusoidal_positions(h.shape[1], self.dim)
        return self.encoder(h, mask)


class SummaryProjector(Module):
    def __init__(self, in_dim: int, dim: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.linear = Linear(in_dim, dim, rng)

    def forward(self, x) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise DimensionError(f"summary embedding width {x.shape[-1]}, expected {self.in_dim}")
        return self.linear(x)


def project_modality(raw: RawModality, encoder: ModalityEncoder) -> EncodedModality:
    if raw.kind != encoder.kind:
        raise DataError(f"{raw.kind} input given to the {encoder.kind} encoder")
    return EncodedModality(raw.kind, encoder.projection(raw.data), raw.mask.copy())


def encode_modality(raw: RawModality, encoder: ModalityEncoder) -> EncodedModality:
    x = reshape(as_tensor(raw.data), (1,) + raw.data.shape)
    out = encoder(x, raw.mask[None, :])
    return EncodedModality(raw.kind, reshape(out, out.shape[1:]), raw.mask.copy())


def split_utterances(transcript: str) -> list[str]:
    return [line.strip() for line in transcript.splitlines() if line.strip()]


def embed_transcript(transcript: str, provider: EmbeddingProvider) -> np.ndarray:
    """One provider embedding per utterance (line): [n_utterances x provider.dim]."""
    lines = split_utterances(transcript)
    if not lines:
        raise DataError("empty text modality")
    return np.stack([np.asarray(provider.embed(line), dtype=np.float64) for line in lines])


def encode_text(transcript: str, provider: EmbeddingProvider, encoder: ModalityEncoder) -> EncodedModality:
    tokens = embed_transcript(transcript, provider)
    raw = RawModality("text", tokens, np.ones(len(tokens), dtype=bool))
    return encode_modality(raw, encoder)


def embed_summary(summary_text: str, provider: EmbeddingProvider, projector: SummaryProjector) -> SummaryEmbedding:
    if not summary_text.strip():
        raise DataError("empty summary text")
    pooled = np.asarray(provider.embed(summary_text), dtype=np.float64)
    return SummaryEmbedding(summary_text, projector(pooled))
