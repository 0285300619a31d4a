from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import PRESETS, ConfigError, ModelConfig, count_parameters, load_preset
from .ops import attention, rms_norm, rope_apply, rope_tables, silu, softmax, swiglu_ffn
from .transformer import (
    ForwardError,
    backward,
    check_params,
    cross_entropy,
    cross_entropy_grad,
    forward,
    init_params,
    is_norm,
    logits_fn,
    loss_and_grads,
    param_shapes,
)
