from .loop import (
    TRACE_FIELDS,
    StepRecord,
    TrainingAborted,
    batch_indices,
    load_training_state,
    save_training_state,
    steps_per_epoch,
    train,
    write_trace,
)
from .optim import (
    NonFiniteError,
    OptimizerConfig,
    OptimizerState,
    adamw_step,
    clip_gradients,
    default_warmup,
    global_norm,
    lr_at_step,
    tokens_per_parameter,
)
