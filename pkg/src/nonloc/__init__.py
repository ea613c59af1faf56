"""Finite-context hidden-variables models for bipartite quantum states.

Builds and verifies deterministic and stochastic local/causal models for
sequences of ideal and unsharp measurements, decides local-causal
realizability by LP, and probes hidden (collapse-revealed) nonlocality in
the flip-operator state family.
"""

from .hilbert import (
    DimPair,
    NotHermitianError,
    SpectralDecomposition,
    flip_operator,
    kron,
    partial_trace,
    spectral_decompose,
)
from .states import (
    DensityMatrix,
    StateValidationError,
    WernerParams,
    ZeroProbabilityOutcome,
    collapse,
    collapsed_c_prime,
    collapse_separability_threshold,
    entanglement_threshold,
    lhv1_threshold,
    make_density,
    maximally_mixed,
    normalization_bound,
    product_state,
    singlet,
    werner,
    werner_fit,
    werner_gen,
)
from .measurement import (
    CommutingDecomposition,
    MeasurementSequence,
    MeasurementStep,
    NotCommuting,
    Observable,
    OperationFamily,
    Povm,
    commuting_decompose,
    local_sequence,
    pauli,
    sequence_distribution,
    smeared_povm,
)
from .hvmodels import (
    ATOM_BUDGET,
    BudgetExceededError,
    Context,
    DeterministicModel,
    FiniteSampleSpace,
    NotCommutingError,
    StochasticModel,
    VerificationReport,
    collapse_model,
    couple_lchv_d2,
    deterministic_to_stochastic,
    extend_commuting_povm,
    mix_models,
    model_from_json,
    model_to_json,
    product_local_model,
    stochastic_to_deterministic,
    trivial_causal_model,
    verify_model,
)
from .feasibility import (
    ChshSettings,
    ClassificationRecord,
    FeasibilityResult,
    LocalStrategy,
    LpNumericalFailure,
    bell_polytope_oracle,
    chsh_maximize,
    chsh_value,
    classify_evidence,
    correlation_table,
    enumerate_strategies,
    lchv_feasibility,
)

__version__ = "0.1.0"

__all__ = [
    "ATOM_BUDGET",
    "BudgetExceededError",
    "ChshSettings",
    "ClassificationRecord",
    "CommutingDecomposition",
    "Context",
    "DensityMatrix",
    "DeterministicModel",
    "DimPair",
    "FeasibilityResult",
    "FiniteSampleSpace",
    "LocalStrategy",
    "LpNumericalFailure",
    "MeasurementSequence",
    "MeasurementStep",
    "NotCommuting",
    "NotCommutingError",
    "NotHermitianError",
    "Observable",
    "OperationFamily",
    "Povm",
    "SpectralDecomposition",
    "StateValidationError",
    "StochasticModel",
    "VerificationReport",
    "WernerParams",
    "ZeroProbabilityOutcome",
    "bell_polytope_oracle",
    "chsh_maximize",
    "chsh_value",
    "classify_evidence",
    "collapse",
    "collapse_model",
    "collapse_separability_threshold",
    "collapsed_c_prime",
    "commuting_decompose",
    "correlation_table",
    "couple_lchv_d2",
    "deterministic_to_stochastic",
    "entanglement_threshold",
    "enumerate_strategies",
    "extend_commuting_povm",
    "flip_operator",
    "kron",
    "lchv_feasibility",
    "lhv1_threshold",
    "local_sequence",
    "make_density",
    "maximally_mixed",
    "mix_models",
    "model_from_json",
    "model_to_json",
    "normalization_bound",
    "partial_trace",
    "pauli",
    "product_local_model",
    "product_state",
    "sequence_distribution",
    "singlet",
    "smeared_povm",
    "spectral_decompose",
    "stochastic_to_deterministic",
    "trivial_causal_model",
    "verify_model",
    "werner",
    "werner_fit",
    "werner_gen",
]
