"""Ground states and order signatures of a 1D Hubbard chain whose
hopping amplitude depends on the occupation of the opposite spin
species on the bond.

The package is layered bottom-up: local operator algebra (model),
dense linear-algebra helpers (tensor), the two-site-unit-cell matrix
product state (mps), imaginary-time evolution on the infinite chain
(itebd) and on short open chains (finite), an exact-diagonalization
oracle (ed), correlation functions and cosine spectra (observables),
chemical-potential sweeps with phase classification (trap), and the
config/CLI front end (config, cli).
"""

__version__ = "0.1.0"

from .config import RunConfig, parse_config, serialize_config
from .ed import ground_state_ed, ground_state_grand, ed_correlation_set
from .errors import (ConfigError, DegenerateStateError, DegeneracyError,
                     DivergenceError, Ghm1dError, InvalidStateError,
                     RootFindError, SolverError)
from .finite import ground_state_finite, init_finite_state
from .itebd import (ConvergenceReport, ScheduleStage, default_schedule,
                    energy_per_site, ground_state_itebd)
from .model import (LocalState, ModelParams, bond_gate, bond_hamiltonian,
                    fock_apply, local_operator)
from .mps import CanonicalMps, environments, init_state, load_state, save_state
from .observables import (CorrelationSet, Peak, PeakList, Spectrum,
                          connected_correlator, correlation_set,
                          default_k_grid, detect_peaks, fourier_transform,
                          site_expectations, write_correlation_csv,
                          write_spectrum_csv)
from .trap import (ClassifierThresholds, Phase, PhaseLabel, SweepRecord,
                   TuneResult, classify_phase, harmonic_trap_profile,
                   lda_sweep, tune_to_filling)

__all__ = [
    "__version__",
    "CanonicalMps", "ClassifierThresholds", "ConfigError",
    "ConvergenceReport", "CorrelationSet", "DegenerateStateError",
    "DegeneracyError", "DivergenceError", "Ghm1dError",
    "InvalidStateError", "LocalState", "ModelParams", "Peak", "PeakList",
    "Phase", "PhaseLabel", "RootFindError", "RunConfig", "ScheduleStage",
    "SolverError", "Spectrum", "SweepRecord", "TuneResult",
    "bond_gate", "bond_hamiltonian", "classify_phase",
    "connected_correlator", "correlation_set", "default_k_grid",
    "default_schedule", "detect_peaks", "ed_correlation_set",
    "energy_per_site", "environments", "fock_apply", "fourier_transform",
    "ground_state_ed", "ground_state_finite", "ground_state_grand",
    "ground_state_itebd", "harmonic_trap_profile", "init_finite_state",
    "init_state", "lda_sweep", "load_state", "local_operator",
    "parse_config", "save_state", "serialize_config", "site_expectations",
    "tune_to_filling", "write_correlation_csv", "write_spectrum_csv",
]
