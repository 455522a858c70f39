"""Summary-guided multimodal depression assessment: a three-stage
(screening, severity, score) pipeline on a small numpy autograd engine."""

from .corpus import Corpus, InterviewSample, generate_synthetic, load_corpus, save_corpus
from .errors import PhqFusionError
from .fusion import Stage
from .model import ModelConfig, StageModel, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "Corpus", "InterviewSample", "generate_synthetic", "load_corpus", "save_corpus",
    "PhqFusionError", "Stage", "ModelConfig", "StageModel", "load_checkpoint", "save_checkpoint",
    "__version__",
]
