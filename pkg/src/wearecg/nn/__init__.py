from . import functional
from .checkpoint import load_checkpoint, save_checkpoint, state_hash
from .gradcheck import GradCheckReport, grad_check
from .modules import AttnBlock, Conv1d, GroupNorm, Linear, Module, ResBlock, SelfAttention
from .optim import Adam, AdamW, LrSchedule, NonFiniteGradientError, OptimizerState, adamw_step, onecycle_lr
from .tensor import FrozenParameterError, Tensor, as_tensor, no_grad

__all__ = [
    "Adam", "AdamW", "AttnBlock", "Conv1d", "FrozenParameterError", "GradCheckReport", "GroupNorm",
    "Linear", "LrSchedule", "Module", "NonFiniteGradientError", "OptimizerState", "ResBlock",
    "SelfAttention", "Tensor", "adamw_step", "as_tensor", "functional", "grad_check",
    "load_checkpoint", "no_grad", "onecycle_lr", "save_checkpoint", "state_hash",
]
