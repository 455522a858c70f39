"""Stage prompts built from versioned text templates."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Template

from .. import lexicon
from ..errors import DataError
from ..objectives import SCREEN_NAMES, SEVERITY_NAMES, instrument_max

TEMPLATE_VERSION = "v1"
INSTRUMENT_NAMES = {"phq8": "PHQ-8", "phq9": "PHQ-9"}


@dataclass(frozen=True)
class SummaryRequest:
    stage: int
    transcript: str
    prior_screen: int | None = None
    prior_severity: int | None = None
    instrument: str = "phq8"

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise DataError(f"stage must be 1, 2 or 3, got {self.stage}")
        instrument_max(self.instrument)
        if self.stage >= 2 and self.prior_screen is None:
            raise DataError(f"stage {self.stage} request needs the stage-1 label")
        if self.stage == 3 and self.prior_severity is None:
            raise DataError("stage 3 request needs the stage-2 label")
        if self.prior_screen is not None and self.prior_screen not in (0, 1):
            raise DataError(f"stage-1 label must be 0 or 1, got {self.prior_screen}")
        if self.prior_severity is not None and self.prior_severity not in range(5):
            raise DataError(f"stage-2 label must be in 0..4, got {self.prior_severity}")


def screen_label_text(label: int) -> str:
    return SCREEN_NAMES[int(label)]


def severity_label_text(label: int) -> str:
    return SEVERITY_NAMES[int(label)]


@lru_cache(maxsize=None)
def load_template(stage: int, version: str = TEMPLATE_VERSION) -> Template:
    text = resources.files(__package__).joinpath("templates", f"stage{stage}.{version}.txt").read_text("utf-8")
    return Template(text)


def build_prompt(req: SummaryRequest) -> str:
    domains = lexicon.domains_for(req.instrument)
    fields = {
        "instrument": INSTRUMENT_NAMES[req.instrument],
        "n_domains": str(len(domains)),
        "transcript": req.transcript.strip(),
        "domain_list": "\n".join(f"- {lexicon.DOMAIN_LABELS[d]}" for d in domains),
    }
    if req.stage >= 2:
        fields["stage1_label"] = screen_label_text(req.prior_screen)
    if req.stage == 3:
        fields["stage2_label"] = severity_label_text(req.prior_severity)
    return load_template(req.stage).substitute(fields)


def fingerprint(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()
