from .checkpoint import load_weights, save_weights
from .network import (
    NLL_CONST,
    VAR_FLOOR,
    GaussianPrediction,
    LayerSpec,
    Network,
    NetworkSpec,
    build_network,
    count_params,
    forward_gaussian,
    grad,
    loss_and_grad,
    nll_loss,
    param_layout,
)
from .optim import OPTIMIZERS, init_state, optimizer_step
from .train import TrainingConfig, TrainResult, evaluate_nll, train

__all__ = [
    "NLL_CONST",
    "OPTIMIZERS",
    "VAR_FLOOR",
    "GaussianPrediction",
    "LayerSpec",
    "Network",
    "NetworkSpec",
    "TrainResult",
    "TrainingConfig",
    "build_network",
    "count_params",
    "evaluate_nll",
    "forward_gaussian",
    "grad",
    "init_state",
    "load_weights",
    "loss_and_grad",
    "nll_loss",
    "optimizer_step",
    "param_layout",
    "save_weights",
    "train",
]
