"""Predictor-based event-triggered consensus for linear multi-agent systems.

Library plus CLI: numerical kernels (eigenvalues, matrix exponential,
Lyapunov/Riccati solvers), directed-graph topology, closed-loop spectral
analysis and gain design, the per-agent event-triggered protocol runtime,
and a deterministic fixed-step simulation engine.
"""

from .graph import DirectedGraph
from .model import SystemModel, check_consensus_condition, design_gain
from .sim import Scenario, SimTrace, compare_baseline, run, zeno_diagnostics

__all__ = [
    "DirectedGraph",
    "SystemModel",
    "Scenario",
    "SimTrace",
    "check_consensus_condition",
    "design_gain",
    "compare_baseline",
    "run",
    "zeno_diagnostics",
]

__version__ = "0.1.0"
