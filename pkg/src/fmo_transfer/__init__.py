"""Multi-exciton energy transfer through the 7-site FMO network.

Three propagators share one model: an amplitude closure
(:mod:`.semiclassical`), a second-moment closure (:mod:`.meanfield`) and an
exact density-matrix reference in a truncated Fock sector
(:mod:`.lindblad_oracle`).
"""

from .errors import (
    CapacityError,
    ConfigError,
    ConsistencyError,
    DomainError,
    FMOError,
    NumericalError,
    StepSizeError,
    UnitError,
)
from .model import (
    DecoherenceSpec,
    RunConfig,
    SiteNetwork,
    Theory,
    Unit,
    build_fmo_hamiltonian,
    fmo_angular,
    nonlocal_rates,
    optimal_rates,
    to_angular,
    transfer_efficiency,
    validate_rates,
)
from .lindblad_oracle import simulate_oracle
from .meanfield import simulate_meanfield
from .optimizer import optimize_dephasing, simulate, sweep
from .semiclassical import simulate_semiclassical

__version__ = "0.1.0"
