"""Event-triggered transmission policies for linear closed loops.

Simulation of hybrid arcs under synchronous and asynchronous trigger rules,
with dwell-time timers, an optional observer, perturbation injection, and
Lyapunov-based run audits.
"""

__version__ = "0.1.0"

from .system import (Cascade, ErrorSystem, ObserverConfig, NotStabilized,
                     build_error_system, check_assumption1, check_observer,
                     estimation_error_matrix)
from .policy import (AsyncPolicy, Classification, DesignInfeasible,
                     SyncPolicy, TabuadaBaseline, TimerParams, deadzone,
                     design_async, design_sync, retune_alpha, timer_rate)
from .hybridsim import (HybridArc, HybridState, Mode, NonFiniteState,
                        PerturbationSpec, SimConfig, distance_to_target,
                        simulate)
from .analysis import (AuditReport, DecayFit, InsufficientData,
                       LyapunovMonitor, TransmissionStats, audit_arc,
                       evaluate_W, find_certifying_lambda, fit_decay,
                       observer_monitor, transmission_stats)
from .config import (ExperimentConfig, ParseError, build_experiment,
                     load_config, parse_config, preset_config, presets)

__all__ = [
    "Cascade", "ErrorSystem", "ObserverConfig", "NotStabilized",
    "build_error_system", "check_assumption1", "check_observer",
    "estimation_error_matrix",
    "AsyncPolicy", "Classification", "DesignInfeasible", "SyncPolicy",
    "TabuadaBaseline", "TimerParams", "deadzone", "design_async",
    "design_sync", "retune_alpha", "timer_rate",
    "HybridArc", "HybridState", "Mode", "NonFiniteState",
    "PerturbationSpec", "SimConfig", "distance_to_target", "simulate",
    "AuditReport", "DecayFit", "InsufficientData", "LyapunovMonitor",
    "TransmissionStats", "audit_arc", "evaluate_W",
    "find_certifying_lambda", "fit_decay", "observer_monitor",
    "transmission_stats",
    "ExperimentConfig", "ParseError", "build_experiment", "load_config",
    "parse_config", "preset_config", "presets",
    "__version__",
]
