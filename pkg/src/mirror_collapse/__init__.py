"""Interferometric visibility of a mirror in superposition under collapse noise.

Submodules: ``fock`` (truncated operator algebra), ``experiment`` (model and
closed forms), ``master`` (density-matrix integration), ``stochastic``
(trajectory ensembles and the Gaussian-ansatz route), ``ito`` (Monte Carlo
checks of Ito identities), ``csl`` (CSL rates) and ``cli``.
"""

from .experiment import (
    ExperimentParams,
    UnitError,
    damping_exponent,
    eta_for_damping,
    f_closed_form,
    visibility_collapse,
    visibility_qm,
)
from .fock import TruncationError
from .master import NumericalError, solve_visibility
from .stochastic import ensemble_offdiag, f_factorized

__version__ = "0.1.0"

__all__ = [
    "ExperimentParams",
    "NumericalError",
    "TruncationError",
    "UnitError",
    "damping_exponent",
    "ensemble_offdiag",
    "eta_for_damping",
    "f_closed_form",
    "f_factorized",
    "solve_visibility",
    "visibility_collapse",
    "visibility_qm",
]
