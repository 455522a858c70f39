"""Stage losses (cross-entropy, concordance) and evaluation metrics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, DimensionError
from .numeric import Tensor, as_tensor, clamp_min, getitem, log_softmax, mean

CCC_EPS = 1e-8

INSTRUMENT_MAX = {"phq8": 24, "phq9": 27}
SEVERITY_CUTOFFS = (5, 10, 15, 20)
SEVERITY_NAMES = ("none", "mild", "moderate", "moderately severe", "severe")
SCREEN_NAMES = ("not depressed", "depressed")
SCREEN_CUTOFF = 10


@dataclass(frozen=True)
class CCCStats:
    r: float
    s_t: float
    s_p: float
    m_t: float
    m_p: float
    ccc: float
    loss: float


def _stats(p: np.ndarray, t: np.ndarray) -> tuple[float, float, float, float, float]:
    m_p, m_t = p.mean(), t.mean()
    dp, dt = p - m_p, t - m_t
    var_p = (dp * dp).mean()
    var_t = (dt * dt).mean()
    cov = (dp * dt).mean()
    return m_p, m_t, var_p, var_t, cov


def _check_pair(pred_len: int, target_len: int) -> None:
    if pred_len != target_len:
        raise DimensionError(f"prediction/target length mismatch: {pred_len} vs {target_len}")
    if pred_len < 2:
        raise DataError("CCC undefined for fewer than two samples")


def ccc_loss(pred, target) -> tuple[Tensor, CCCStats]:
    """1 - CCC with population statistics; differentiable in ``pred``.

    The denominator is floored at ``CCC_EPS`` so constant, equal-mean batches
    stay finite without biasing well-conditioned ones.
    """
    pred = as_tensor(pred)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.ndim != 1:
        pred = pred.reshape(-1)
    _check_pair(pred.shape[0], t.shape[0])
    if not np.all(np.isfinite(t)):
        raise DataError("CCC targets must be finite")

    m_t = t.mean()
    dt = t - m_t
    var_t = (dt * dt).mean()
    m_p = mean(pred)
    dp = pred - m_p
    cov = mean(dp * dt)
    var_p = mean(dp * dp)
    gap = m_p - m_t
    den = clamp_min((var_p + var_t) + gap * gap, CCC_EPS)
    ccc = 2.0 * cov / den
    loss = 1.0 - ccc

    s_p, s_t = math.sqrt(float(var_p.data)), math.sqrt(var_t)
    r = float(cov.data) / (s_p * s_t) if s_p > 0 and s_t > 0 else 0.0
    stats = CCCStats(
        r=r, s_t=s_t, s_p=s_p, m_t=float(m_t), m_p=float(m_p.data), ccc=float(ccc.data), loss=float(loss.data)
    )
    return loss, stats


def ccc_metric(pred: Sequence[float], target: Sequence[float]) -> float:
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    _check_pair(p.shape[0], t.shape[0])
    m_p, m_t, var_p, var_t, cov = _stats(p, t)
    gap = m_p - m_t
    den = max((var_p + var_t) + gap * gap, CCC_EPS)
    return float(2.0 * cov / den)


def cross_entropy(logits, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects [n x K] logits, got {list(logits.shape)}")
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != n:
        raise DimensionError(f"{n} rows of logits but {labels.shape[0]} labels")
    if np.any(labels < 0) or np.any(labels >= k):
        raise DataError(f"labels must lie in [0, {k})")
    picked = getitem(log_softmax(logits, axis=-1), (np.arange(n), labels))
    return -mean(picked)


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise DimensionError(f"prediction/target length mismatch: {p.size} vs {t.size}")
    if p.size < 1:
        raise DataError("metrics need at least one sample")
    return p, t


def mae(pred, target) -> float:
    p, t = _pair(pred, target)
    return float(np.abs(p - t).mean())


def rmse(pred, target) -> float:
    p, t = _pair(pred, target)
    return float(np.sqrt(((p - t) ** 2).mean()))


def macro_f1(pred_labels, true_labels, num_classes: int) -> float:
    """Unweighted mean of per-class F1; classes with no support anywhere score 0."""
    p, t = _pair(pred_labels, true_labels)
    p, t = p.astype(np.int64), t.astype(np.int64)
    scores = []
    absent = []
    for c in range(num_classes):
        tp = int(np.sum((p == c) & (t == c)))
        fp = int(np.sum((p == c) & (t != c)))
        fn = int(np.sum((p != c) & (t == c)))
        if tp + fp + fn == 0:
            absent.append(c)
            scores.append(0.0)
            continue
        scores.append(2.0 * tp / (2.0 * tp + fp + fn))
    if absent:
        warnings.warn(f"macro_f1: classes {absent} absent from predictions and labels", stacklevel=2)
    return float(np.mean(scores))


def accuracy(pred_labels, true_labels) -> float:
    p, t = _pair(pred_labels, true_labels)
    return float(np.mean(p == t))


def instrument_max(instrument: str) -> int:
    try:
        return INSTRUMENT_MAX[instrument]
    except KeyError:
        raise DataError(f"unknown instrument {instrument!r}; expected one of {sorted(INSTRUMENT_MAX)}") from None


def severity_bins(score: float, instrument: str = "phq8") -> int:
    top = instrument_max(instrument)
    if not 0 <= score <= top:
        raise DataError(f"score {score} outside {instrument} range [0, {top}]")
    return sum(score >= cut for cut in SEVERITY_CUTOFFS)


def screen_label(score: float) -> int:
    return int(score >= SCREEN_CUTOFF)


def regression_metrics(pred, target) -> dict[str, float]:
    return {"ccc": ccc_metric(pred, target), "mae": mae(pred, target), "rmse": rmse(pred, target)}


def classification_metrics(pred_labels, true_labels, num_classes: int) -> dict[str, float]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f1 = macro_f1(pred_labels, true_labels, num_classes)
    return {"macro_f1": f1, "accuracy": accuracy(pred_labels, true_labels)}
