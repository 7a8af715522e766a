"""Simulation of two lower-limb agents coupled through a rendered virtual spring-damper."""

from .analysis import (InsufficientCycles, TrialSummary, band_stats, coupling_energy,
                       detect_heel_strikes, mean_abs_diff, normalize_cycles, phase_sync,
                       static_transfer, summarize, torque_tracking_error)
from .coupling import CouplingConfig, Mode, RenderLimits, Space, desired_torques, render
from .model import AgentState, GaitPattern, ImpedanceParams, Leg, SegmentParams
from .presets import PRESETS, UnknownPreset, preset
from .sim import AgentConfig, Scenario, SimulationAborted, TrialLog, run_trial

__version__ = "0.1.0"

__all__ = [
    "AgentConfig", "AgentState", "CouplingConfig", "GaitPattern", "ImpedanceParams",
    "InsufficientCycles", "Leg", "Mode", "PRESETS", "RenderLimits", "Scenario",
    "SegmentParams", "SimulationAborted", "Space", "TrialLog", "TrialSummary", "UnknownPreset",
    "band_stats", "coupling_energy", "desired_torques", "detect_heel_strikes", "mean_abs_diff",
    "normalize_cycles", "phase_sync", "preset", "render", "run_trial", "static_transfer",
    "summarize", "torque_tracking_error",
]
