"""Termination and universal termination of nondeterministic quantum programs."""

from .divergence import DivergenceResult, DivNode, compute_divergent, divergence_scheduler
from .errors import InconsistencyError, NQTermError, PreconditionError, ValidationError
from .io import FIXTURES, load_model, model_from_json, model_to_json
from .model import (
    LassoScheduler,
    LocatedQMDP,
    Measurement,
    QuantumMDP,
    SuperOperator,
    flat_to_located,
    located_to_flat,
    termination_probability,
    termination_probability_lasso,
)
from .numerics import DEFAULT_TOL, Subspace, Tolerances
from .program import compile_to_located, parse_program
from .reachability import reachable_space_I, reachable_space_II
from .termination import (
    Status,
    TerminationVerdict,
    check_termination,
    check_termination_II,
    synth_nontermination_scheduler,
)
from .universal import (
    InvariantSpaceResult,
    UniversalStatus,
    UniversalVerdict,
    check_universal_termination,
    invariant_space,
    synth_universal_scheduler,
)

__version__ = "0.1.0"
