"""In-context denoising with attention layers and associative-memory energies."""

__version__ = "0.1.0"

from .attention import AttentionKind, AttentionWeights, forward, grad_mse
from .baselines import BaselineKind, evaluate_baseline, predict_baseline
from .energy import EnergyKind, EnergyModel, attention_step, descend
from .errors import InvalidArgument, NonFiniteGradient, TrainingDiverged, Unsupported
from .numerics import RngStream, bessel_ratio
from .tasks import Case, Prompt, PromptBatch, TaskSpec, TransformSpec, sample_dataset
from .training import TrainConfig, TrainResult, train

__all__ = [
    "AttentionKind", "AttentionWeights", "BaselineKind", "Case", "EnergyKind", "EnergyModel",
    "InvalidArgument", "NonFiniteGradient", "Prompt", "PromptBatch", "RngStream", "TaskSpec",
    "TrainConfig", "TrainResult", "TrainingDiverged", "TransformSpec", "Unsupported",
    "attention_step", "bessel_ratio", "descend", "evaluate_baseline", "forward", "grad_mse",
    "predict_baseline", "sample_dataset", "train",
]
