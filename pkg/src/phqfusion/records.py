"""Plain records shared by the corpus and pipeline modules."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .errors import DataError


@dataclass(frozen=True)
class StageSummary:
    stage: int
    text: str
    provider: str
    prompt_fingerprint: str

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise DataError(f"summary stage must be 1, 2 or 3, got {self.stage}")
        if not self.text.strip():
            raise DataError(f"stage-{self.stage} summary text is empty")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "StageSummary":
        return cls(
            stage=int(obj["stage"]),
            text=str(obj["text"]),
            provider=str(obj["provider"]),
            prompt_fingerprint=str(obj["prompt_fingerprint"]),
        )
