"""Modelling, simulation and spectral analysis of droop-free frequency
control in islanded microgrids."""

from .control import (
    ClosedLoopSystem,
    Scheme,
    SchemeConfig,
    filter_augmented_matrix,
    filter_eigen_map,
    frequency_law,
    system_matrix,
)
from .errors import (
    AmbiguousSpectrumError,
    ConnectivityError,
    DivergenceError,
    GridfreeError,
    NoCriticalElementError,
    NumericalError,
    ReductionError,
    ValidationError,
)
from .margins import (
    MetricKind,
    SweepResult,
    b_avg,
    capacity_crossover,
    l_sparse,
    p_avg,
    sample_system,
    sweep,
)
from .network import (
    AdmittancePartition,
    CommGraph,
    DerFleet,
    ElectricalNetwork,
    build_comm_laplacian,
    build_susceptance_laplacian,
    frame_transform_laplacian,
    is_connected,
    kron_reduce,
)
from .simulation import (
    Disturbance,
    Scenario,
    Trajectory,
    detect_convergence,
    scheme_equivalence_report,
    simulate,
    steady_state_consensus,
)
from .spectral import (
    Spectrum,
    StabilityReport,
    Verdict,
    dominant_pole,
    eigendecompose,
    participation_factors,
    stability_margin,
    stability_verdict,
)
from .vulnerability import (
    CriticalElement,
    MatrixId,
    PerturbationTarget,
    SensitivityMap,
    critical_element,
    eigen_sensitivity,
    min_destabilizing_perturbation,
    sensitivity_map,
)

__version__ = "0.1.0"
