"""NOON-state preparation simulator for a five-level qudit coupled to two
microwave cavities: operator algebra, pulse design, full/effective models,
Lindblad dynamics, robustness sweeps and a CLI."""

from .hilbert import (
    HilbertSpec,
    TruncationError,
    TruncationWarning,
    NumericalIntegrityError,
    annihilation,
    creation,
    displacement,
    embed,
    expectation,
    fidelity_state,
    qudit_transition,
)
from .pulses import Envelope, optimized_pulse, pi_pulse, sensitivity_q
from .hamiltonians import (
    DriveSet,
    ErrorModel,
    SystemParams,
    TimeDependentOperator,
    build_crosstalk,
    build_effective,
    build_full,
    build_step1_eff,
    build_step2_eff,
    build_step3_reduced,
)
from .dynamics import (
    CollapseSet,
    DecoherenceRates,
    IntegratorConfig,
    StiffnessError,
    build_collapse_set,
    dressed_decoherence,
    evolve_density,
    evolve_state,
    evolve_trajectories,
)
from .protocol import (
    ProtocolParams,
    SimResult,
    derive_params,
    run_protocol,
    rwa_report,
    target_state,
)

__version__ = "0.1.0"
