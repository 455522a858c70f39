"""Summary generation, stage training and coarse-to-fine inference."""

from .orchestration import AssessmentReport, is_consistent, render_report, report_schema, run_pipeline, write_report
from .prompts import SummaryRequest, build_prompt, fingerprint
from .providers import (
    HttpSummaryProvider,
    MockSummaryProvider,
    SummaryCache,
    SummaryProvider,
    mock_summarize,
    summarize_corpus,
    teacher_forced_requests,
)
from .training import TrainConfig, TrainHistory, build_features, evaluate_ids, train_stage

__all__ = [
    "AssessmentReport", "is_consistent", "render_report", "report_schema", "run_pipeline", "write_report",
    "SummaryRequest", "build_prompt", "fingerprint",
    "HttpSummaryProvider", "MockSummaryProvider", "SummaryCache", "SummaryProvider", "mock_summarize",
    "summarize_corpus", "teacher_forced_requests",
    "TrainConfig", "TrainHistory", "build_features", "evaluate_ids", "train_stage",
]
