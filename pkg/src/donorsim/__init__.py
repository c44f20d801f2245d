"""Simulator for an electron-nuclear donor spin pair near zero magnetic field.

Subpackage map:

- ``spincore``: Hamiltonian, closed-form levels, transition elements,
  field sensitivity, field estimation.
- ``pump``: optical pumping rate equations, steady states,
  photoconductive spectra.
- ``program`` / ``seqdsl``: pulse-sequence data model and its text format.
- ``noise``: ensemble specification, member RNG streams, static and
  Ornstein-Uhlenbeck detuning noise.
- ``pulse``: two-level pulse engine, ensemble experiments, the honest
  4-level integrator, RF spectra.
- ``fitkit``: damped least-squares fits (stretched exponential, peaks).
- ``config`` / ``csvio`` / ``cli``: run configuration, CSV I/O, entry point.
"""

from .config import RunConfig, load_config
from .fitkit import FitResult, fit_peaks, fit_stretched_exp
from .noise import EnsembleSpec, NoiseModel
from .program import Delay, PhaseCycle, Pulse, PulseProgram, hahn_program, ramsey_program
from .pulse import (
    TwoLevelParams,
    hahn_experiment,
    rabi_experiment,
    ramsey_experiment,
    rf_spectrum,
    run_sequence,
    simulate_4level,
)
from .pump import PopulationState, PumpConfig, evolve_populations, optical_spectrum, steady_state
from .seqdsl import compile as compile_sequence
from .seqdsl import parse as parse_sequence
from .seqdsl import pretty_print
from .spincore import (
    PHOSPHORUS,
    FieldVector,
    SpinSystem,
    breit_rabi_levels,
    build_hamiltonian,
    clock_sensitivity,
    eigensystem,
    estimate_field_from_splitting,
    transition_frequency,
    transition_table,
)

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "load_config",
    "FitResult", "fit_peaks", "fit_stretched_exp",
    "EnsembleSpec", "NoiseModel",
    "Delay", "PhaseCycle", "Pulse", "PulseProgram", "hahn_program", "ramsey_program",
    "TwoLevelParams", "hahn_experiment", "rabi_experiment", "ramsey_experiment",
    "rf_spectrum", "run_sequence", "simulate_4level",
    "PopulationState", "PumpConfig", "evolve_populations", "optical_spectrum",
    "steady_state",
    "compile_sequence", "parse_sequence", "pretty_print",
    "PHOSPHORUS", "FieldVector", "SpinSystem", "breit_rabi_levels",
    "build_hamiltonian", "clock_sensitivity", "eigensystem",
    "estimate_field_from_splitting", "transition_frequency", "transition_table",
    "__version__",
]
