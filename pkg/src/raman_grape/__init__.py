"""Optimal-control Raman pulses for light-pulse atom interferometry.

Two-level pulse dynamics, thermal ensembles, GRAPE pulse optimisation and
three-pulse Mach-Zehnder sequence simulation.
"""

__version__ = "0.1.0"

from .dynamics import AtomParams, PulseWaveform, StateVector, flip_reverse, pulse_propagator, rotation_axis_angle
from .ensemble import Ensemble, ThermalSpec, build_ensemble
from .fidelity import FidelityKind, ObjectiveSpec, ensemble_fidelity, ensemble_objective
from .grape import InitStrategy, OptimizeConfig, optimize
from .interferometer import PulseSequence, fit_fringe, flip_reverse_sequence, fringe_scan, rect_sequence

__all__ = [
    "AtomParams", "PulseWaveform", "StateVector", "flip_reverse", "pulse_propagator", "rotation_axis_angle",
    "Ensemble", "ThermalSpec", "build_ensemble",
    "FidelityKind", "ObjectiveSpec", "ensemble_fidelity", "ensemble_objective",
    "InitStrategy", "OptimizeConfig", "optimize",
    "PulseSequence", "fit_fringe", "flip_reverse_sequence", "fringe_scan", "rect_sequence",
]
