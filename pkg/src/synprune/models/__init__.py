"""
Model definitions: architectures, parameter states and the forward pass
"""

from .architecture import Architecture, LayerSpec, ParamBlock, convnet3, linear, mlp
from .network import forward, loss_and_grad, predict_logits
from .state import ModelState, init_state, load_state, save_state

__all__ = [
    "Architecture",
    "LayerSpec",
    "ModelState",
    "ParamBlock",
    "convnet3",
    "forward",
    "init_state",
    "linear",
    "load_state",
    "loss_and_grad",
    "mlp",
    "predict_logits",
    "save_state",
]
