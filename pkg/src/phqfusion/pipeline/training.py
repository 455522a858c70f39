"""Stage-wise training: minibatch AdamW with step decay, CE for the two
classification stages and CCC loss for score regression, best-dev selection."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..corpus import Corpus, InterviewSample
from ..encoders import EmbeddingProvider, embed_transcript
from ..errors import DataError
from ..fusion import Stage
from ..model import ModelConfig, SampleFeatures, StageModel, collate
from ..numeric import AdamW, StepDecay, backward, no_grad
from ..objectives import (
    ccc_loss,
    classification_metrics,
    cross_entropy,
    mae,
    regression_metrics,
    rmse,
    screen_label,
    severity_bins,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 24
    lr: float = 7e-4
    epochs: int = 150
    decay_factor: float = 0.1
    decay_every: int = 50
    weight_decay: float = 0.01
    seed: int = 0
    summary_stage: int = 0  # 0: use the summary of the stage being trained
    eval_train: bool = False
    stop_train_ccc: float = 0.0  # > 0: stop once train CCC reaches it (needs eval_train)


@dataclass
class TrainHistory:
    stage: int
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_dev: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def build_features(samples: Sequence[InterviewSample], embedder: EmbeddingProvider) -> dict[str, SampleFeatures]:
    """Embed transcripts (one vector per utterance) and any attached summaries."""
    out = {}
    for s in samples:
        out[s.id] = SampleFeatures(
            id=s.id,
            text=embed_transcript(s.transcript, embedder),
            audio=s.audio,
            video=s.video,
            summaries={k: np.asarray(embedder.embed(v.text), dtype=np.float64) for k, v in s.summaries.items()},
            score=float(s.score),
        )
    return out


def stage_targets(stage: Stage, scores: np.ndarray, instrument: str) -> np.ndarray:
    if stage is Stage.SCREEN:
        return np.array([screen_label(s) for s in scores], dtype=np.int64)
    if stage is Stage.SEVERITY:
        return np.array([severity_bins(s, instrument) for s in scores], dtype=np.int64)
    return np.asarray(scores, dtype=np.float64)


def stage_loss(stage: Stage, logits, targets: np.ndarray):
    if stage is Stage.SCORE:
        loss, _ = ccc_loss(logits.reshape(-1), targets)
        return loss
    return cross_entropy(logits, targets)


def batches(ids: Sequence[str], batch_size: int, rng: np.random.Generator | None = None) -> list[list[str]]:
    """Shuffle (when ``rng`` is given) and chunk; a trailing singleton joins the
    previous chunk because the concordance loss needs two samples."""
    order = list(ids) if rng is None else [ids[i] for i in rng.permutation(len(ids))]
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2].extend(chunks.pop())
    return chunks


def predict_ids(model: StageModel, features: dict[str, SampleFeatures], ids: Sequence[str],
                summary_stage: int | None = None, batch_size: int = 64) -> tuple[np.ndarray, list]:
    """Raw outputs [n, width] and decisions for ``ids``, without recording a graph."""
    summary_stage = summary_stage or int(model.stage)
    logits, decisions = [], []
    with no_grad():
        for chunk in batches(ids, batch_size):
            out = model(collate([features[i] for i in chunk], summary_stage))
            logits.append(out.logits.data)
            decisions.extend(model.decide(out.logits.data))
    return np.concatenate(logits, axis=0), decisions


def evaluate_ids(model: StageModel, features: dict[str, SampleFeatures], ids: Sequence[str],
                 summary_stage: int | None = None) -> dict[str, float]:
    if not ids:
        raise DataError("cannot evaluate an empty split")
    stage = model.stage
    logits, decisions = predict_ids(model, features, ids, summary_stage)
    scores = np.array([features[i].score for i in ids])
    targets = stage_targets(stage, scores, model.config.instrument)
    with no_grad():
        if stage is Stage.SCORE and len(ids) < 2:
            loss = float("nan")
        else:
            loss = float(stage_loss(stage, logits, targets).data)
    if stage is Stage.SCORE:
        if len(ids) >= 2:
            metrics = regression_metrics(decisions, targets)
        else:
            metrics = {"mae": mae(decisions, targets), "rmse": rmse(decisions, targets)}
    else:
        metrics = classification_metrics(decisions, targets, stage.width)
    return {"loss": loss, **metrics}


def selection_key(stage: Stage, metrics: dict[str, float]) -> float:
    """Higher is better. A one-sample dev split has no CCC, so fall back to -MAE."""
    if stage is Stage.SCORE:
        value = metrics["ccc"] if "ccc" in metrics else -metrics.get("mae", float("nan"))
    else:
        value = metrics.get("macro_f1", float("nan"))
    return -math.inf if math.isnan(value) else value


def train_stage(
    stage: int | Stage,
    corpus: Corpus,
    embedder: EmbeddingProvider,
    model_config: ModelConfig,
    train_config: TrainConfig,
    features: dict[str, SampleFeatures] | None = None,
) -> tuple[StageModel, TrainHistory]:
    stage = Stage(stage)
    train_ids = [s.id for s in corpus.split("train")]
    dev_ids = [s.id for s in corpus.split("dev")]
    if not train_ids:
        raise DataError("train split is empty")
    if not dev_ids:
        raise DataError("dev split is empty")
    if features is None:
        features = build_features(corpus.samples, embedder)
    summary_stage = train_config.summary_stage or int(stage)
    instrument = model_config.instrument

    model = StageModel(stage, model_config)
    optimizer = AdamW(model.parameters(), lr=train_config.lr, weight_decay=train_config.weight_decay)
    schedule = StepDecay(optimizer, train_config.decay_factor, train_config.decay_every)
    rng = np.random.default_rng([train_config.seed, int(stage)])
    history = TrainHistory(int(stage))
    best_key, best_state = -math.inf, model.state_dict()

    for epoch in range(train_config.epochs):
        lr = optimizer.lr
        losses = []
        for chunk in batches(train_ids, train_config.batch_size, rng):
            batch = collate([features[i] for i in chunk], summary_stage)
            out = model(batch)
            loss = stage_loss(stage, out.logits, stage_targets(stage, batch.scores, instrument))
            backward(loss)
            optimizer.step()
            optimizer.zero_grad()
            losses.append(float(loss.data))
        schedule.step()

        dev = evaluate_ids(model, features, dev_ids, summary_stage)
        record = {"epoch": epoch + 1, "lr": lr, "train_loss": float(np.mean(losses)),
                  **{f"dev_{k}": v for k, v in dev.items()}}
        if train_config.eval_train:
            record.update({f"train_{k}": v for k, v in evaluate_ids(model, features, train_ids, summary_stage).items()
                           if k != "loss"})
        history.epochs.append(record)

        key = selection_key(stage, dev)
        if key > best_key or history.best_epoch < 0:
            best_key, best_state = key, model.state_dict()
            history.best_epoch, history.best_dev = epoch + 1, dev
        log.debug("stage %d epoch %d: %s", int(stage), epoch + 1, record)

        if train_config.stop_train_ccc > 0 and record.get("train_ccc", -math.inf) >= train_config.stop_train_ccc:
            break

    model.load_state_dict(best_state)
    return model, history
