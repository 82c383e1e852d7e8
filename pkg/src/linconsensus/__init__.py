"""Analysis and synthesis of linear consensus protocols ``x' = Ax``."""

from .chi import (
    ConsensusFunctional,
    WeightedAverage,
    check_average_consensus,
    consensus_function_limit,
    consensus_function_method1,
    consensus_function_scalar,
    evaluate_chi,
    limit_expm,
)
from .classify import CDDecomposition, ConsensusVerdict, SystemMatrix, classify_consensus, decompose_cd
from .errors import (
    ComputationError,
    ConditioningError,
    ConsensusError,
    GenerationError,
    InconsistencyError,
    InputError,
    StructuralError,
)
from .linalg import DEFAULT_TOL, Spectrum, TolerancePolicy, matrix_exponential
from .reports import Clause, Report
from .similarity import (
    CanonicalForm,
    StructuredTransform,
    bring_to_canonical,
    construct_transform,
    random_consensus_system,
    random_nonconsensus_system,
    retarget_to_average,
    synthesize_system,
    verify_transform,
)
from .switched import (
    BlockLaplacian,
    SwitchedSystem,
    SwitchingSignal,
    Trajectory,
    block_laplacian_spectrum_check,
    check_switched_assumptions,
    incidence_from_edges,
    is_block_laplacian,
    laplacian_from_incidence,
    lyapunov_audit,
    quadratic_form_identity,
    random_block_laplacian,
    simulate_switched,
)

__version__ = "0.1.0"
