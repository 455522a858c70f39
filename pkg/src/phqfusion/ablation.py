"""Ablation sweeps: retrain the score stage once per variant and tabulate
dev/test metrics. Identical variants are trained once and shared."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Corpus
from .encoders import EmbeddingProvider
from .errors import ConfigError
from .fusion import Stage
from .model import ModelConfig, SampleFeatures, collate, normalize_modalities, save_checkpoint
from .numeric import no_grad
from .pipeline.training import TrainConfig, build_features, evaluate_ids, train_stage


@dataclass(frozen=True)
class Variant:
    table: str  # "modality" or "fusion"
    modalities: str
    gate: bool = True
    bca: bool = True
    ap: bool = True

    @property
    def key(self) -> tuple:
        return (normalize_modalities(self.modalities), self.gate, self.bca, self.ap)

    @property
    def slug(self) -> str:
        m, g, b, a = self.key
        return f"{m}-g{int(g)}b{int(b)}a{int(a)}"

    @property
    def label(self) -> str:
        toggles = "+".join(n for n, on in (("Gate", self.gate), ("BCA", self.bca), ("AP", self.ap)) if on)
        return f"{'+'.join(self.modalities)} | {toggles or 'none'}"


MODALITY_ROWS = tuple(Variant("modality", m) for m in ("T", "A", "V", "S", "TA", "TAV", "TAVS"))
FUSION_ROWS = (
    Variant("fusion", "TAVS", gate=False, bca=False, ap=False),
    Variant("fusion", "TAVS", gate=True, bca=False, ap=False),
    Variant("fusion", "TAVS", gate=True, bca=True, ap=False),
    Variant("fusion", "TAVS", gate=True, bca=True, ap=True),
)
ALL_ROWS = MODALITY_ROWS + FUSION_ROWS


def rows_for(selector: str) -> tuple[Variant, ...]:
    table = {"all": ALL_ROWS, "modality": MODALITY_ROWS, "fusion": FUSION_ROWS}
    if selector not in table:
        raise ConfigError(f"unknown ablation selection {selector!r}")
    return table[selector]


@dataclass
class AblationResult:
    variant: Variant
    dev: dict[str, float]
    test: dict[str, float]
    mean_gates: tuple[float, float, float]  # (T, A, V) over the dev split
    gate_values: np.ndarray  # [n_dev, 3]
    best_epoch: int

    def row(self) -> dict:
        v = self.variant
        out = {"table": v.table, "label": v.label, "modalities": v.modalities,
               "gate": v.gate, "bca": v.bca, "ap": v.ap, "best_epoch": self.best_epoch}
        out.update({f"dev_{k}": val for k, val in self.dev.items()})
        out.update({f"test_{k}": val for k, val in self.test.items()})
        out.update({f"gate_{k}": g for k, g in zip("TAV", self.mean_gates)})
        return out


def _gate_values(model, features, ids) -> np.ndarray:
    with no_grad():
        return model(collate([features[i] for i in ids], int(Stage.SCORE))).fusion.gates


def run_variant(variant: Variant, corpus: Corpus, model_config: ModelConfig, train_config: TrainConfig,
                features: dict[str, SampleFeatures], out_dir: str | Path | None = None) -> AblationResult:
    """Train one variant. With ``out_dir`` its checkpoint and history go to
    ``out_dir/<slug>/``, so parallel workers never share files."""
    cfg = replace(model_config, modalities=variant.modalities, gate=variant.gate, bca=variant.bca, ap=variant.ap)
    model, history = train_stage(Stage.SCORE, corpus, None, cfg, train_config, features=features)
    if out_dir is not None:
        sub = Path(out_dir) / variant.slug
        save_checkpoint(model, sub / "stage3.ckpt.json", {"variant": variant.label})
        (sub / "history.json").write_text(json.dumps(history.to_json(), indent=2) + "\n", encoding="utf-8")
    dev_ids = [s.id for s in corpus.split("dev")]
    test_ids = [s.id for s in corpus.split("test")]
    gates = _gate_values(model, features, dev_ids)
    return AblationResult(
        variant=variant,
        dev=evaluate_ids(model, features, dev_ids),
        test=evaluate_ids(model, features, test_ids) if test_ids else {},
        mean_gates=tuple(float(g) for g in gates.mean(axis=0)),
        gate_values=gates,
        best_epoch=history.best_epoch,
    )


def _worker(args):
    return run_variant(*args)


def run_ablation(
    corpus: Corpus,
    embedder: EmbeddingProvider,
    model_config: ModelConfig,
    train_config: TrainConfig,
    rows: Sequence[Variant] = ALL_ROWS,
    workers: int = 1,
    features: dict[str, SampleFeatures] | None = None,
    out_dir: str | Path | None = None,
) -> list[AblationResult]:
    """One result per requested row, in order. Each distinct variant trains once
    with the same seeds, so rows are deterministic and worker count is irrelevant."""
    rows = list(rows)
    if not rows:
        raise ConfigError("ablation needs at least one configuration")
    for v in rows:
        normalize_modalities(v.modalities)
    if features is None:
        features = build_features(corpus.samples, embedder)
    unique: dict[tuple, Variant] = {}
    for v in rows:
        unique.setdefault(v.key, v)
    jobs = [(v, corpus, model_config, train_config, features, out_dir) for v in unique.values()]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_worker, jobs))
    else:
        done = [_worker(job) for job in jobs]
    by_key = {r.variant.key: r for r in done}
    return [replace(by_key[v.key], variant=v) for v in rows]


# -- output ---------------------------------------------------------------------

TABLE_COLUMNS = ("dev_ccc", "dev_mae", "dev_rmse", "test_ccc", "test_mae", "test_rmse")


def ablation_csv(results: Sequence[AblationResult]) -> str:
    rows = [r.row() for r in results]
    names = list(dict.fromkeys(k for row in rows for k in row))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def ablation_table(results: Sequence[AblationResult]) -> str:
    header = f"{'variant':<28}" + "".join(f"{c:>10}" for c in TABLE_COLUMNS)
    lines = [header, "-" * len(header)]
    for r in results:
        row = r.row()
        cells = "".join(f"{row.get(c, float('nan')):>10.4f}" for c in TABLE_COLUMNS)
        lines.append(f"{r.variant.label:<28}{cells}")
    return "\n".join(lines) + "\n"


def write_ablation(results: Sequence[AblationResult], directory: str | Path) -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"csv": directory / "ablation.csv", "txt": directory / "ablation.txt", "json": directory / "ablation.json"}
    paths["csv"].write_text(ablation_csv(results), encoding="utf-8")
    paths["txt"].write_text(ablation_table(results), encoding="utf-8")
    paths["json"].write_text(json.dumps([r.row() for r in results], indent=2) + "\n", encoding="utf-8")
    return paths
