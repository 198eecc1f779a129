"""Data-driven identification of Koopman-invariant subspaces.

The package fits linear models of nonlinear dynamics on spans of dictionary
functions (EDMD), and prunes a dictionary until the model is accurate to a
chosen level:

* :func:`ssd` keeps the largest subspace on which the data are consistent
  with exact invariance;
* :func:`tssd` keeps the largest subspace whose worst-case relative one-step
  prediction error is at most ``epsilon``.
"""

from .dictionary import (
    Dictionary,
    DictionarySizeError,
    evaluate,
    monomial_dictionary,
    monomial_terms,
    orthonormalize_on_data,
    restrict,
)
from .koopman import (
    KoopmanModel,
    edmd_fit,
    eigenfunction_value,
    predict_dictionary,
    predict_function,
    relative_prediction_error,
    rrmse,
    rrmse_max,
)
from .linalg import (
    InputError,
    RankDeficiencyError,
    epsilon_apart_measure,
    null_space_basis,
    range_basis,
    subspace_intersection,
)
from .ssd import empty_basis, is_empty_basis, ssd
from .systems import (
    DomainError,
    SnapshotPair,
    SystemSpec,
    TrajectoryEscapeError,
    get_system,
    sample_snapshots,
)
from .tssd import TssdConfig, TssdTrace, symmetric_intersection, tssd

__version__ = "0.1.0"

__all__ = [
    "Dictionary",
    "DictionarySizeError",
    "DomainError",
    "InputError",
    "KoopmanModel",
    "RankDeficiencyError",
    "SnapshotPair",
    "SystemSpec",
    "TrajectoryEscapeError",
    "TssdConfig",
    "TssdTrace",
    "edmd_fit",
    "eigenfunction_value",
    "empty_basis",
    "epsilon_apart_measure",
    "evaluate",
    "get_system",
    "is_empty_basis",
    "monomial_dictionary",
    "monomial_terms",
    "null_space_basis",
    "orthonormalize_on_data",
    "predict_dictionary",
    "predict_function",
    "range_basis",
    "relative_prediction_error",
    "restrict",
    "rrmse",
    "rrmse_max",
    "sample_snapshots",
    "ssd",
    "subspace_intersection",
    "symmetric_intersection",
    "tssd",
]
