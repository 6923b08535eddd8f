"""Higher-order dynamic mode decomposition for transient circuit waveforms."""

from .dmd import (
    HodmdModel,
    RankSelection,
    fit,
    fit_plain_dmd,
    load_model,
    predict,
    predict_steps,
    save_model,
    select_rank,
)
from .errors import HodmdError, HodmdWarning, NumericalError, ValidationError
from .metrics import ErrorReport, compare, error_report, l2_relative, max_amplitude_diff, timed
from .snapshots import (
    EmbeddedPair,
    SnapshotSet,
    load_csv,
    make_embedded_pair,
    make_pair,
    recommend_depth,
    save_csv,
)

__version__ = "0.1.0"

__all__ = [
    "EmbeddedPair", "ErrorReport", "HodmdError", "HodmdModel", "HodmdWarning",
    "NumericalError", "RankSelection", "SnapshotSet", "ValidationError", "compare",
    "error_report", "fit", "fit_plain_dmd", "l2_relative", "load_csv", "load_model",
    "make_embedded_pair", "make_pair", "max_amplitude_diff", "predict", "predict_steps",
    "recommend_depth", "save_csv", "save_model", "select_rank", "timed",
]
