"""Scrooge ensembles, projected ensembles and emergent state designs."""

from .exceptions import ConfigError, InputError, NumericalError, RegimeWarning, ScroogeLabError, ShapeError, SizeError
from .numeric import Bipartition, DensityOperator, StateVector, hs_distance, partial_trace, reduced_state, trace_distance
from .symmetric import MomentOperator, haar_moment, haar_twirl, sym_dim, weingarten_table
from .ensembles import make_rng, derive_seed, subentropy, von_neumann_entropy, effective_dimension
from .scrooge import (
    generalized_scrooge_reference,
    sample_scrooge_state,
    scrooge_moment_mc,
    scrooge_moment_proxy,
    theorem_bound,
)
from .projected import ProjectedEnsemble, delta_k, projected_ensemble, projected_moment, sampled_projected_moment

__version__ = "0.1.0"
