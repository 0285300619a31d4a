from .scoring import ContextOverflow, NumpyLM, ScoringModel, candidate_token_split, score_candidate
from .tasks import (
    DEFAULT_CLS_TEMPLATE,
    DEFAULT_MC_TEMPLATE,
    ClsItem,
    EvalReport,
    ItemError,
    ItemTrace,
    MCItem,
    TaskConfig,
    TaskConfigError,
    argmax_first,
    evaluate_classification,
    evaluate_mc,
    read_cls_jsonl,
    read_mc_jsonl,
    scaling_report,
)
