"""Command-line entry point: ``phqfusion <verb> [--config PATH] [--seed N] [--out DIR]``.

Verbs share one output directory. ``generate`` writes ``corpus/``,
``summarize`` rewrites it with summaries, ``train`` writes per-stage
checkpoints and histories, ``evaluate`` writes a metrics table, ``ablate``
writes the ablation table and ``report`` writes per-sample reports. Every
verb also writes ``config.resolved``.

Failures print one line ``error[<category>]: <message>`` on stderr and exit
with the category's code (config 2, data 3, provider 4, model 5, numeric 6,
stage 7, other 1).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .ablation import rows_for, run_ablation, write_ablation
from .adapters import adapt_external
from .config import PRESETS, RunConfig, describe, parse_override
from .corpus import Corpus, generate_synthetic, load_corpus, save_corpus
from .encoders import EmbeddingProvider, HashedEmbeddingProvider, HttpEmbeddingProvider
from .errors import DataError, ModelError, PhqFusionError
from .model import load_checkpoint, save_checkpoint
from .pipeline.orchestration import run_pipeline, write_report
from .pipeline.providers import HttpSummaryProvider, MockSummaryProvider, SummaryProvider, summarize_corpus
from .pipeline.training import build_features, evaluate_ids, train_stage

log = logging.getLogger("phqfusion")

VERBS = ("generate", "summarize", "train", "evaluate", "ablate", "report")


# -- resources from config ----------------------------------------------------------

def out_dir(cfg: RunConfig) -> Path:
    return Path(cfg["output.dir"])


def make_provider(cfg: RunConfig) -> SummaryProvider:
    if cfg["provider.kind"] == "mock":
        return MockSummaryProvider(cfg["provider.seed"])
    cache = cfg["provider.cache_dir"] or str(out_dir(cfg) / "summary_cache")
    return HttpSummaryProvider(
        cfg["provider.url"], cfg["provider.credential_env"], cache,
        attempts=cfg["provider.attempts"], base_delay=cfg["provider.base_delay"],
    )


def make_embedder(cfg: RunConfig) -> EmbeddingProvider:
    if cfg["embedder.kind"] == "hashed":
        return HashedEmbeddingProvider(cfg["embedder.dim"])
    return HttpEmbeddingProvider(cfg["embedder.url"], cfg["embedder.dim"], cfg["provider.credential_env"],
                                 attempts=cfg["provider.attempts"], base_delay=cfg["provider.base_delay"])


def generate_from_config(cfg: RunConfig) -> Corpus:
    layout = cfg["corpus.layout"]
    if layout == "synthetic":
        return generate_synthetic(
            cfg["corpus.n"], cfg["corpus.seed"], instrument=cfg["corpus.instrument"],
            d_a=cfg["corpus.d_a"], d_v=cfg["corpus.d_v"], min_len=cfg["corpus.min_len"],
            max_len=cfg["corpus.max_len"], signal_scale=cfg["corpus.signal_scale"],
            text_reveal=cfg["corpus.text_reveal"],
        )
    if not cfg["corpus.path"]:
        raise DataError(f"corpus.layout={layout} needs corpus.path")
    if layout == "jsonl":
        return load_corpus(cfg["corpus.path"])
    return adapt_external(layout, cfg["corpus.path"], cfg["corpus.feature_set"], cfg["corpus.seed"])


def resolve_corpus(cfg: RunConfig) -> Corpus:
    """The corpus in the output directory if one exists, else the configured source."""
    saved = out_dir(cfg) / "corpus"
    if (saved / "manifest.json").exists():
        return load_corpus(saved)
    return generate_from_config(cfg)


def ensure_summaries(corpus: Corpus, cfg: RunConfig, stages=(1, 2, 3)) -> Corpus:
    if all(k in s.summaries for s in corpus.samples for k in stages):
        return corpus
    return summarize_corpus(corpus, make_provider(cfg), cfg["provider.concurrency"], stages)


def checkpoint_path(cfg: RunConfig, stage: int) -> Path:
    return out_dir(cfg) / f"stage{stage}.ckpt.json"


def load_models(cfg: RunConfig, paths: Sequence[str] = ()) -> dict[int, object]:
    models = {}
    for path in paths or [checkpoint_path(cfg, k) for k in (1, 2, 3)]:
        model = load_checkpoint(path)
        models[int(model.stage)] = model
    return models


# -- verbs ------------------------------------------------------------------------

def cmd_generate(cfg: RunConfig) -> Path:
    corpus = generate_from_config(cfg)
    path = save_corpus(corpus, out_dir(cfg) / "corpus")
    print(f"wrote {len(corpus)} samples {corpus.manifest.counts} to {path}")
    return path


def cmd_summarize(cfg: RunConfig) -> Path:
    corpus = resolve_corpus(cfg)
    summarize_corpus(corpus, make_provider(cfg), cfg["provider.concurrency"])
    path = save_corpus(corpus, out_dir(cfg) / "corpus")
    print(f"summarised {len(corpus)} samples with the {cfg['provider.kind']} provider into {path}")
    return path


def cmd_train(cfg: RunConfig) -> dict[int, Path]:
    corpus = ensure_summaries(resolve_corpus(cfg), cfg)
    embedder = make_embedder(cfg)
    features = build_features(corpus.samples, embedder)
    m = corpus.manifest
    model_cfg = cfg.model_config(m.d_a, m.d_v, m.instrument)
    written = {}
    for stage in cfg.stages:
        model, history = train_stage(stage, corpus, embedder, model_cfg, cfg.train_config(), features=features)
        written[stage] = save_checkpoint(model, checkpoint_path(cfg, stage), {"best_epoch": history.best_epoch})
        (out_dir(cfg) / f"stage{stage}.history.json").write_text(
            json.dumps(history.to_json(), indent=2) + "\n", encoding="utf-8")
        best = ", ".join(f"{k}={v:.4f}" for k, v in history.best_dev.items())
        print(f"stage {stage}: best epoch {history.best_epoch}: dev {best}")
    return written


def metrics_rows(models: dict, corpus: Corpus, features) -> list[dict]:
    rows = []
    for stage, model in sorted(models.items()):
        for split in ("dev", "test"):
            ids = [s.id for s in corpus.split(split)]
            if ids:
                rows.append({"stage": stage, "split": split, "n": len(ids), **evaluate_ids(model, features, ids)})
    return rows


def format_metrics(rows: list[dict]) -> tuple[str, str]:
    columns = ["stage", "split", "n", "loss", "ccc", "mae", "rmse", "macro_f1", "accuracy"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", restval="")
    writer.writeheader()
    writer.writerows(rows)
    header = "".join(f"{c:>10}" for c in columns)
    lines = [header, "-" * len(header)]
    for r in rows:
        cells = []
        for c in columns:
            v = r.get(c, "")
            cells.append(f"{v:>10.4f}" if isinstance(v, float) else f"{v!s:>10}")
        lines.append("".join(cells))
    return "\n".join(lines) + "\n", buf.getvalue()


def cmd_evaluate(cfg: RunConfig, checkpoints: Sequence[str] = ()) -> list[dict]:
    models = load_models(cfg, checkpoints) if checkpoints else {
        k: load_checkpoint(checkpoint_path(cfg, k)) for k in cfg.stages}
    corpus = ensure_summaries(resolve_corpus(cfg), cfg, tuple(models))
    features = build_features(corpus.samples, make_embedder(cfg))
    rows = metrics_rows(models, corpus, features)
    table, csv_text = format_metrics(rows)
    (out_dir(cfg) / "metrics.txt").write_text(table, encoding="utf-8")
    (out_dir(cfg) / "metrics.csv").write_text(csv_text, encoding="utf-8")
    print(table, end="")
    return rows


def cmd_ablate(cfg: RunConfig) -> list:
    corpus = ensure_summaries(resolve_corpus(cfg), cfg, (3,))
    embedder = make_embedder(cfg)
    m = corpus.manifest
    results = run_ablation(
        corpus, embedder, cfg.model_config(m.d_a, m.d_v, m.instrument), cfg.train_config(),
        rows_for(cfg["ablation.rows"]), workers=cfg["ablation.workers"],
        features=build_features(corpus.samples, embedder), out_dir=out_dir(cfg) / "ablation",
    )
    paths = write_ablation(results, out_dir(cfg))
    print(paths["txt"].read_text(encoding="utf-8"), end="")
    return results


def cmd_report(cfg: RunConfig, ids: Sequence[str] = (), checkpoints: Sequence[str] = ()) -> list[Path]:
    models = load_models(cfg, checkpoints)
    missing = [k for k in (1, 2, 3) if k not in models]
    if missing:
        raise ModelError(f"report needs checkpoints for all three stages; missing stage {missing}")
    corpus = resolve_corpus(cfg)
    known = corpus.by_id()
    wanted = list(ids) or [i.strip() for i in cfg["report.ids"].split(",") if i.strip()] \
        or [s.id for s in corpus.split("test")]
    unknown = [i for i in wanted if i not in known]
    if unknown:
        raise DataError(f"unknown sample ids {unknown}; available: {', '.join(sorted(known))}")
    provider, embedder = make_provider(cfg), make_embedder(cfg)
    written = []
    for sample_id in wanted:
        report = run_pipeline(known[sample_id], models, provider, embedder)
        written.extend(write_report(report, out_dir(cfg) / "reports"))
    print(f"wrote {len(wanted)} reports to {out_dir(cfg) / 'reports'}")
    return written


# -- argument handling -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file")
    common.add_argument("--seed", type=int, help="sets train.seed, corpus.seed and provider.seed")
    common.add_argument("--out", metavar="DIR", help="output directory (output.dir)")
    common.add_argument("--preset", choices=sorted(PRESETS), default="full", help="default set to start from")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="phqfusion", description=__doc__.splitlines()[0],
                                     epilog="config keys:\n" + describe(),
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"phqfusion {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")
    sub.add_parser("generate", parents=[common], help="write a corpus (synthetic or adapted)")
    sub.add_parser("summarize", parents=[common], help="attach stage summaries to the corpus")
    train = sub.add_parser("train", parents=[common], help="train stage models")
    train.add_argument("--stage", choices=["1", "2", "3", "all"], help="stage selector")
    ev = sub.add_parser("evaluate", parents=[common], help="dev/test metrics for checkpoints")
    ev.add_argument("--stage", choices=["1", "2", "3", "all"], help="stage selector")
    ev.add_argument("--checkpoint", action="append", default=[], metavar="PATH")
    sub.add_parser("ablate", parents=[common], help="modality and fusion ablation table")
    rep = sub.add_parser("report", parents=[common], help="per-sample assessment reports")
    rep.add_argument("--ids", nargs="+", default=[], metavar="ID")
    rep.add_argument("--checkpoint", action="append", default=[], metavar="PATH")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = dict(parse_override(o) for o in args.overrides)
    if args.seed is not None:
        for key in ("train.seed", "corpus.seed", "provider.seed"):
            overrides.setdefault(key, args.seed)
    if args.out:
        overrides["output.dir"] = args.out
    if getattr(args, "stage", None):
        overrides["stage"] = args.stage
    return RunConfig.load(args.config, args.preset, overrides)


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = config_from_args(args)
    cfg.write_echo(out_dir(cfg))
    if args.verb == "generate":
        cmd_generate(cfg)
    elif args.verb == "summarize":
        cmd_summarize(cfg)
    elif args.verb == "train":
        cmd_train(cfg)
    elif args.verb == "evaluate":
        cmd_evaluate(cfg, args.checkpoint)
    elif args.verb == "ablate":
        cmd_ablate(cfg)
    elif args.verb == "report":
        cmd_report(cfg, args.ids, args.checkpoint)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return run(argv)
    except PhqFusionError as exc:
        print(f"error[{exc.category}]: {' '.join(str(exc).split())}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("error[interrupted]: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # noqa: BLE001 - last-resort single-line report
        print(f"error[internal]: {type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
