"""Run configuration: a flat ``key = value`` file with dotted keys.

Grammar, one entry per line::

    # comment
    section.key = value

Blank lines and ``#`` comments are ignored. Values are typed by the key's
default (int, float, bool, str); booleans accept true/false/yes/no/on/off/1/0.
Unknown keys and duplicate keys are errors. Every key has a default, listed
in :data:`SCHEMA`; a preset overrides a subset of them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import ConfigError
from .model import ModelConfig, normalize_modalities
from .objectives import instrument_max
from .pipeline.training import TrainConfig


@dataclass(frozen=True)
class Key:
    default: Any
    doc: str
    choices: tuple = ()


SCHEMA: dict[str, Key] = {
    "model.d": Key(32, "hidden width d"),
    "model.heads": Key(4, "attention heads (must divide d)"),
    "model.layers": Key(2, "encoder layers per transformer"),
    "model.ffn_mult": Key(2, "feed-forward expansion factor"),
    "model.modalities": Key("TAVS", "enabled sources, any subset of T, A, V, S"),
    "model.gate": Key(True, "summary-driven modality gating"),
    "model.bca": Key(True, "bidirectional cross-attention"),
    "model.ap": Key(True, "CLS attention pooling (off: masked mean)"),
    "train.batch_size": Key(24, "minibatch size"),
    "train.lr": Key(7e-4, "AdamW learning rate"),
    "train.epochs": Key(150, "training epochs"),
    "train.decay_factor": Key(0.1, "step-decay multiplier"),
    "train.decay_every": Key(50, "epochs between decays"),
    "train.weight_decay": Key(0.01, "decoupled weight decay"),
    "train.seed": Key(0, "initialisation and shuffling seed"),
    "provider.kind": Key("mock", "summary provider", ("mock", "http")),
    "provider.url": Key("", "HTTP summary endpoint"),
    "provider.credential_env": Key("PHQFUSION_API_KEY", "environment variable holding the API key"),
    "provider.cache_dir": Key("", "summary cache directory (empty: <out>/summary_cache for http)"),
    "provider.concurrency": Key(4, "max in-flight summary requests"),
    "provider.attempts": Key(3, "HTTP attempts per request"),
    "provider.base_delay": Key(1.0, "first retry delay in seconds, doubled per retry"),
    "provider.seed": Key(0, "mock provider seed"),
    "embedder.kind": Key("hashed", "text embedder", ("hashed", "http")),
    "embedder.dim": Key(64, "text embedding width"),
    "embedder.url": Key("", "HTTP embedding endpoint"),
    "corpus.layout": Key("synthetic", "corpus source", ("synthetic", "jsonl", "edaic", "cmdc")),
    "corpus.path": Key("", "corpus directory (jsonl) or external root (edaic/cmdc)"),
    "corpus.feature_set": Key("", "external feature set name (edaic/cmdc)"),
    "corpus.instrument": Key("phq8", "questionnaire", ("phq8", "phq9")),
    "corpus.n": Key(300, "synthetic sample count"),
    "corpus.seed": Key(0, "synthetic generator seed"),
    "corpus.d_a": Key(12, "synthetic audio feature width"),
    "corpus.d_v": Key(16, "synthetic video feature width"),
    "corpus.min_len": Key(8, "shortest synthetic frame sequence"),
    "corpus.max_len": Key(24, "longest synthetic frame sequence"),
    "corpus.signal_scale": Key(2.5, "planted mean shift at the maximum score"),
    "corpus.text_reveal": Key(0.7, "chance each symptom point is voiced in the transcript"),
    "stage": Key("all", "stage selector", ("1", "2", "3", "all")),
    "output.dir": Key("runs/default", "output directory"),
    "ablation.rows": Key("all", "ablation table", ("all", "modality", "fusion")),
    "ablation.workers": Key(1, "parallel ablation workers"),
    "report.ids": Key("", "comma-separated sample ids (empty: whole test split)"),
}

PRESETS: dict[str, dict[str, Any]] = {
    "full": {},
    # small enough to train every stage in seconds on one CPU core
    "desk": {
        "model.d": 16, "model.heads": 2, "model.layers": 1,
        "train.lr": 3e-3, "train.epochs": 30, "train.decay_every": 20,
    },
    # weak, independent per-modality signal so that modalities complement each other
    "cross-modal": {
        "model.d": 16, "model.heads": 2, "model.layers": 1,
        "train.lr": 3e-3, "train.epochs": 30, "train.decay_every": 20,
        "corpus.signal_scale": 0.8, "corpus.text_reveal": 0.35,
    },
}

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def coerce(key: str, raw: Any) -> Any:
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    spec = SCHEMA[key]
    kind = type(spec.default)
    if isinstance(raw, str):
        text = raw.strip()
        try:
            if kind is bool:
                if text.lower() in _TRUE:
                    value = True
                elif text.lower() in _FALSE:
                    value = False
                else:
                    raise ValueError(text)
            elif kind is int:
                value = int(text)
            elif kind is float:
                value = float(text)
            else:
                value = text
        except ValueError:
            raise ConfigError(f"{key}: cannot read {text!r} as {kind.__name__}") from None
    else:
        if kind is float and isinstance(raw, int) and not isinstance(raw, bool):
            raw = float(raw)
        if not isinstance(raw, kind) or (kind is int and isinstance(raw, bool)):
            raise ConfigError(f"{key}: expected {kind.__name__}, got {type(raw).__name__}")
        value = raw
    if spec.choices and value not in spec.choices:
        raise ConfigError(f"{key}: {value!r} is not one of {', '.join(map(str, spec.choices))}")
    return value


def parse_lines(lines: Iterable[str], source: str = "<config>") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for number, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{number}: expected 'key = value'")
        key, raw = (part.strip() for part in text.split("=", 1))
        if key in out:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        try:
            out[key] = coerce(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{number}: {exc}") from None
    return out


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = (part.strip() for part in text.split("=", 1))
    return key, coerce(key, raw)


class RunConfig:
    """Resolved configuration: defaults, then preset, then file, then overrides."""

    def __init__(self, values: Mapping[str, Any] | None = None, preset: str = "full"):
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        self.preset = preset
        self.values = {k: spec.default for k, spec in SCHEMA.items()}
        self.values.update(PRESETS[preset])
        for key, value in (values or {}).items():
            self.values[key] = coerce(key, value)
        self.validate()

    @classmethod
    def load(cls, path: str | Path | None = None, preset: str = "full",
             overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        values: dict[str, Any] = {}
        if path:
            p = Path(path)
            if not p.exists():
                raise ConfigError(f"config file not found: {p}")
            values.update(parse_lines(p.read_text(encoding="utf-8").splitlines(), str(p)))
        values.update(overrides or {})
        return cls(values, preset)

    def __getitem__(self, key: str) -> Any:
        if key not in self.values:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def replace(self, **changes) -> "RunConfig":
        """Copy with dotted keys given as ``model__d=8`` style keywords."""
        values = dict(self.values)
        values.update({k.replace("__", "."): v for k, v in changes.items()})
        return RunConfig(values, self.preset)

    def validate(self) -> None:
        v = self.values
        for key in ("model.d", "model.heads", "model.ffn_mult", "train.batch_size", "train.epochs",
                    "train.decay_every", "embedder.dim", "provider.concurrency", "provider.attempts",
                    "ablation.workers", "corpus.d_a", "corpus.d_v", "corpus.min_len"):
            if v[key] < 1:
                raise ConfigError(f"{key} must be >= 1, got {v[key]}")
        if v["train.lr"] <= 0:
            raise ConfigError("train.lr must be positive")
        if v["model.d"] % v["model.heads"]:
            raise ConfigError(f"model.d={v['model.d']} is not divisible by model.heads={v['model.heads']}")
        if v["corpus.max_len"] < v["corpus.min_len"]:
            raise ConfigError("corpus.max_len must be >= corpus.min_len")
        v["model.modalities"] = normalize_modalities(v["model.modalities"])
        instrument_max(v["corpus.instrument"])

    @property
    def stages(self) -> tuple[int, ...]:
        return (1, 2, 3) if self["stage"] == "all" else (int(self["stage"]),)

    def model_config(self, d_a: int | None = None, d_v: int | None = None, instrument: str | None = None) -> ModelConfig:
        v = self.values
        return ModelConfig(
            d=v["model.d"], heads=v["model.heads"], layers=v["model.layers"], ffn_mult=v["model.ffn_mult"],
            text_dim=v["embedder.dim"], d_a=d_a or v["corpus.d_a"], d_v=d_v or v["corpus.d_v"],
            instrument=instrument or v["corpus.instrument"], modalities=v["model.modalities"],
            gate=v["model.gate"], bca=v["model.bca"], ap=v["model.ap"], seed=v["train.seed"],
        )

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            batch_size=v["train.batch_size"], lr=v["train.lr"], epochs=v["train.epochs"],
            decay_factor=v["train.decay_factor"], decay_every=v["train.decay_every"],
            weight_decay=v["train.weight_decay"], seed=v["train.seed"],
        )

    def echo(self) -> str:
        """Every key with its resolved value, in schema order, re-parseable."""
        lines = [f"# resolved configuration (preset: {self.preset})"]
        for key in SCHEMA:
            value = self.values[key]
            text = str(value).lower() if isinstance(value, bool) else str(value)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    def write_echo(self, directory: str | Path) -> Path:
        path = Path(directory) / "config.resolved"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.echo(), encoding="utf-8")
        return path


def describe() -> str:
    """Human-readable key reference."""
    width = max(len(k) for k in SCHEMA)
    return "\n".join(f"{k.ljust(width)}  {spec.default!r:>20}  {spec.doc}" for k, spec in SCHEMA.items())
