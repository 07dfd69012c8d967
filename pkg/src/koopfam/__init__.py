"""Koopman operator families of linear non-autonomous systems from snapshot data."""

from koopfam.catalog import catalog, catalog_names
from koopfam.dmd import LocalOperator, companion_coefficients, local_operator, moving_stencil_spectrum
from koopfam.errors import (
    AliasingError,
    ConfigError,
    DomainError,
    KoopfamError,
    NumericalError,
    OriginError,
    RankError,
    WarmupError,
)
from koopfam.grid import SnapshotMatrix, TimeGrid
from koopfam.koopman import (
    algorithm1,
    algorithm2,
    bias_sweep,
    compartment_rates,
    error_Ek,
    extract_koopman_eigs,
    generator_estimates,
    koopman_mode_decomposition,
    theorem2_bias,
)
from koopfam.snapshots import (
    ObservableMap,
    StencilWindow,
    apply_observables,
    reconstruct_state,
    sample_trajectory,
    select_active_observables,
)
from koopfam.spectral import OperatorFamily, SpectralTimeSeries
from koopfam.systems import (
    CommutingSystem,
    GenericSystem,
    HybridSystem,
    SpiralBlock,
    SpiralSystem,
    TrigFunction,
    coupled_frequencies,
    fundamental_matrix,
    integrate_rk4,
    koopman_exact,
)

__version__ = "0.1.0"
