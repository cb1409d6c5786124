from vqt.qtransformer.checkpoint import load_checkpoint, save_checkpoint
from vqt.qtransformer.config import DEFAULT, LARGE, ModelConfig, q_dim, qubit_bounds
from vqt.qtransformer.model import (
    QuantumHead,
    QuantumHeadOutput,
    VQTModel,
    build_model,
    cross_entropy,
    expressive_head_forward,
    quantum_perplexity,
    tanh_head_forward,
)
from vqt.qtransformer.quantum import QuantumKernel, straight_through_backward
from vqt.qtransformer.training import TrainResult, evaluate, make_windows, train

__all__ = [
    "DEFAULT", "LARGE", "ModelConfig", "QuantumHead", "QuantumHeadOutput", "QuantumKernel",
    "TrainResult", "VQTModel", "build_model", "cross_entropy", "evaluate", "expressive_head_forward",
    "load_checkpoint", "make_windows", "q_dim", "quantum_perplexity", "qubit_bounds",
    "save_checkpoint", "straight_through_backward", "tanh_head_forward", "train",
]
