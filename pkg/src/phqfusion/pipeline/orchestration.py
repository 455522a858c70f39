"""Coarse-to-fine inference: each stage's decision feeds the next stage's
prompt, and the three summaries plus decisions become one report."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from ..corpus import InterviewSample
from ..encoders import EmbeddingProvider, embed_transcript
from ..errors import ModelError, StageError
from ..fusion import Stage
from ..model import SampleFeatures, StageModel, collate
from ..numeric import no_grad
from ..objectives import severity_bins
from ..records import StageSummary
from .prompts import SummaryRequest, build_prompt, screen_label_text, severity_label_text
from .providers import SummaryProvider

REPORT_FORMAT = "phqfusion.report/1"


@dataclass
class AssessmentReport:
    sample_id: str
    instrument: str
    screen_decision: int
    severity_decision: int
    score: float
    summaries: tuple[StageSummary, StageSummary, StageSummary]
    consistency_flag: bool
    rendered: str
    prompts: dict[int, str] = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "sample_id": self.sample_id,
            "instrument": self.instrument,
            "screen_decision": self.screen_decision,
            "screen_label": screen_label_text(self.screen_decision),
            "severity_decision": self.severity_decision,
            "severity_label": severity_label_text(self.severity_decision),
            "score": self.score,
            "summaries": [s.to_json() for s in self.summaries],
            "consistency_flag": self.consistency_flag,
            "rendered": self.rendered,
        }


def is_consistent(score: float, severity_decision: int, instrument: str = "phq8") -> bool:
    """True when the regressed score falls in the predicted severity band."""
    return severity_bins(score, instrument) == int(severity_decision)


def render_report(sample_id: str, instrument: str, screen: int, severity: int, score: float,
                  summaries, consistent: bool) -> str:
    lines = [
        f"ASSESSMENT REPORT: {sample_id}",
        f"Instrument: {instrument.upper()}",
        "",
        "SCREENING",
        f"  Decision: {screen_label_text(screen)} ({screen})",
        "",
        "SEVERITY",
        f"  Decision: {severity_label_text(severity)} ({severity})",
        "",
        "SCORE",
        f"  Estimated total: {score:.2f}",
        "",
        "SUMMARIES",
    ]
    for s in summaries:
        lines.append(f"  [Stage {s.stage}]")
        lines.extend(f"    {line}" for line in s.text.splitlines())
    lines += [
        "",
        "CONSISTENCY",
        f"  Score band: {severity_label_text(severity_bins(score, instrument))}",
        f"  Consistent with severity decision: {'yes' if consistent else 'no'}",
    ]
    return "\n".join(lines) + "\n"


def _run_stage(stage: Stage, model: StageModel, features: SampleFeatures):
    if model.stage is not stage:
        raise ModelError(f"model for stage {int(stage)} was trained for stage {int(model.stage)}")
    with no_grad():
        out = model(collate([features], int(stage)))
    return model.decide(out.logits.data)[0]


def run_pipeline(
    sample: InterviewSample,
    models: Mapping[int, StageModel],
    provider: SummaryProvider,
    embedder: EmbeddingProvider,
) -> AssessmentReport:
    """Chain the three stages on one interview using predicted prior labels.

    Any failure is re-raised as :class:`StageError` naming the stage.
    """
    features = SampleFeatures(
        id=sample.id,
        text=embed_transcript(sample.transcript, embedder),
        audio=sample.audio,
        video=sample.video,
        summaries={},
        score=float(sample.score),
    )
    decisions: dict[int, object] = {}
    summaries: list[StageSummary] = []
    prompts: dict[int, str] = {}
    for stage in Stage:
        try:
            req = SummaryRequest(
                int(stage),
                sample.transcript,
                prior_screen=decisions.get(1) if stage >= Stage.SEVERITY else None,
                prior_severity=decisions.get(2) if stage is Stage.SCORE else None,
                instrument=sample.instrument,
            )
            prompts[int(stage)] = build_prompt(req)
            summary = provider.summarize(req)
            summaries.append(summary)
            features.summaries[int(stage)] = np.asarray(embedder.embed(summary.text), dtype=np.float64)
            if int(stage) not in models:
                raise ModelError(f"no model for stage {int(stage)}")
            decisions[int(stage)] = _run_stage(stage, models[int(stage)], features)
        except Exception as exc:
            raise StageError(int(stage), exc) from exc

    screen, severity, score = int(decisions[1]), int(decisions[2]), float(decisions[3])
    consistent = is_consistent(score, severity, sample.instrument)
    return AssessmentReport(
        sample_id=sample.id,
        instrument=sample.instrument,
        screen_decision=screen,
        severity_decision=severity,
        score=score,
        summaries=tuple(summaries),
        consistency_flag=consistent,
        rendered=render_report(sample.id, sample.instrument, screen, severity, score, summaries, consistent),
        prompts=prompts,
    )


@lru_cache(maxsize=1)
def report_schema() -> dict:
    text = resources.files(__package__).joinpath("schemas", "report.schema.json").read_text("utf-8")
    return json.loads(text)


def write_report(report: AssessmentReport, directory: str | Path) -> tuple[Path, Path]:
    """Write ``<id>.report.txt`` and ``<id>.report.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    txt = directory / f"{report.sample_id}.report.txt"
    js = directory / f"{report.sample_id}.report.json"
    txt.write_text(report.rendered, encoding="utf-8")
    js.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return txt, js
