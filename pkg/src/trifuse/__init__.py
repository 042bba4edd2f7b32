"""trifuse: three-branch multimodal emotion recognition.

Independent transformer encoders summarize an image-feature sequence,
an audio-feature sequence, and a text sequence into one vector each;
a learned convex combination fuses them and a softmax head classifies
into the seven emotion categories. Built on an in-package reverse-mode
autodiff tensor core with compiled (Cython) or numpy kernels.
"""

from .backend import available_backends, get_backend, set_backend
from .data import (
    Dataset,
    EMOTION_LABELS,
    MultimodalSample,
    SynthSpec,
    generate_synthetic,
    load_jsonl,
    make_batches,
    save_jsonl,
)
from .metrics import EpochLog, EvalReport, evaluate, export_epoch_curve
from .model import (
    ABLATION_MODES,
    ModelParams,
    forward_batch,
    forward_full,
    init_model_params,
    named_parameters,
)
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    backward,
    get_default_dtype,
    grad_check,
    set_default_dtype,
)
from .training import AugmentationConfig, TrainConfig, augment, train
from .transformer import ModelConfig

__version__ = "0.1.0"

__all__ = [
    "ABLATION_MODES", "AugmentationConfig", "Dataset", "EMOTION_LABELS",
    "EpochLog", "EvalReport", "ModelConfig", "ModelParams",
    "MultimodalSample", "NonFiniteError", "ShapeError", "SynthSpec",
    "Tape", "TapeError", "Tensor", "TrainConfig", "augment",
    "available_backends", "backward", "evaluate", "export_epoch_curve",
    "forward_batch", "forward_full", "generate_synthetic",
    "get_backend", "get_default_dtype", "grad_check", "init_model_params",
    "load_jsonl", "make_batches", "named_parameters", "save_jsonl",
    "set_backend", "set_default_dtype", "train",
]
