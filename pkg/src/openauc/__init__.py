"""Open-set recognition evaluation: extended confusion metrics, OpenAUC and its
relatives, adversarial audits of metric consistency, and a small trainer."""
from .core import FILE_OPEN, EmptyInputError, MalformedInputError, ScoreConvention, ScoreTable, decide, decide_all, normalize
from .ranking import auc, close_set_accuracy, openauc

__all__ = [
    "FILE_OPEN",
    "EmptyInputError",
    "MalformedInputError",
    "ScoreConvention",
    "ScoreTable",
    "auc",
    "close_set_accuracy",
    "decide",
    "decide_all",
    "normalize",
    "openauc",
]
