"""Algebraic discrete Morse reductions of weighted chain complexes that preserve signals."""

__version__ = "0.1.0"

from .complex import (
    BasedChainComplex,
    CellId,
    Signal,
    betti_numbers,
    dual_complex,
    filled_triangle,
    hollow_triangle,
    interval,
    validate,
)
from .hodge import hodge_basis, hodge_decompose, hodge_matching
from .morse import (
    Matching,
    Retraction,
    SequentialMatching,
    is_morse_matching,
    reduce,
    sequential_reduce,
    single_pairing_reduce,
    summed_index,
)
from .morsify import DeformationRetract, is_free, morsify, pair_counts, reconstruction_operator, split_retract
from .optimize import (
    OptimizerConfig,
    dual_pairing_loss,
    free_reduce,
    full_reduce,
    k_optimal_pairings,
    optimal_pairing,
    random_pairings,
    single_pairing_loss,
    topological_loss,
)
from .harness import ExperimentSpec, generate_grid_complex, generate_signal, project_report, run_experiment
