import numpy as np
import pytest

from phqfusion.corpus import generate_synthetic
from phqfusion.encoders import HashedEmbeddingProvider
from phqfusion.model import ModelConfig, SampleFeatures
from phqfusion.pipeline import MockSummaryProvider, build_features, summarize_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def embedder():
    return HashedEmbeddingProvider(16)


@pytest.fixture
def tiny_config():
    return ModelConfig(d=8, heads=2, layers=1, text_dim=16, d_a=5, d_v=6)


@pytest.fixture
def tiny_features(rng):
    """Three hand-built samples with L_t = L_a = L_v = 3 and a stage-3 summary vector."""
    out = []
    for i, score in enumerate((3, 11, 19)):
        out.append(SampleFeatures(
            id=f"x{i}",
            text=rng.normal(size=(3, 16)),
            audio=rng.normal(size=(3, 5)),
            video=rng.normal(size=(3, 6)),
            summaries={k: rng.normal(size=16) for k in (1, 2, 3)},
            score=float(score),
        ))
    return out


@pytest.fixture(scope="session")
def small_corpus():
    corpus = generate_synthetic(24, seed=7, d_a=5, d_v=6)
    return summarize_corpus(corpus, MockSummaryProvider(0), concurrency=1)


@pytest.fixture(scope="session")
def small_features(small_corpus):
    return build_features(small_corpus.samples, HashedEmbeddingProvider(16))


@pytest.fixture(scope="session")
def trained_models(small_corpus, small_features):
    """Three briefly trained stage models; enough to exercise the pipeline."""
    from phqfusion.pipeline import TrainConfig, train_stage

    config = ModelConfig(d=8, heads=2, layers=1, text_dim=16, d_a=5, d_v=6)
    train = TrainConfig(batch_size=8, lr=3e-3, epochs=2)
    return {k: train_stage(k, small_corpus, None, config, train, features=small_features)[0] for k in (1, 2, 3)}


_ACCEPTANCE: list[str] = []


class AcceptanceLog:
    """Records one PASS/FAIL line per criterion; an exception inside counts as FAIL."""

    def __init__(self, number, title):
        self.number, self.title, self.details = number, title, []

    def note(self, text):
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "FAIL" if exc_type else "PASS"
        detail = "; ".join(self.details)
        if exc_type:
            detail = (detail + "; " if detail else "") + f"{exc_type.__name__}: {' '.join(str(exc).split())[:160]}"
        line = f"[{verdict}] criterion {self.number}: {self.title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return False


@pytest.fixture
def criterion():
    return AcceptanceLog


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
