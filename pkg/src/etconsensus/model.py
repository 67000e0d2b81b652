"""Closed-loop analysis objects and gain synthesis.

Builds the per-agent difference-dynamics matrices used by the predictors,
the stacked disagreement dynamics, and the spectral consensus condition
(all matrices ``A + lam * B K`` over the nonzero Laplacian spectrum must be
Hurwitz).  Also hosts the Riccati-based gain design recipe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matlib
from .errors import AssumptionError, DimensionError, NumericalError, PreconditionError
from .graph import DirectedGraph

HURWITZ_MARGIN = 1e-9
ZERO_EIGENVALUE_TOL = 1e-8


@dataclass(frozen=True)
class SystemModel:
    """Agent dynamics ``xdot = A x + B u``, feedback gain K, and the topology."""

    a_mat: np.ndarray = field(repr=False)
    b_mat: np.ndarray = field(repr=False)
    k_mat: np.ndarray = field(repr=False)
    graph: DirectedGraph

    def __init__(self, a_mat, b_mat, k_mat, graph: DirectedGraph):
        a = matlib.as_matrix(a_mat, name="A")
        matlib.require_square(a, "A")
        b = matlib.as_matrix(b_mat, rows=a.shape[0], name="B")
        k = matlib.as_matrix(k_mat, rows=b.shape[1], cols=a.shape[0], name="K")
        if graph.n_agents < 2:
            raise DimensionError("consensus needs at least 2 agents")
        for m in (a, b, k):
            m.flags.writeable = False
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "b_mat", b)
        object.__setattr__(self, "k_mat", k)
        object.__setattr__(self, "graph", graph)

    @property
    def state_dim(self) -> int:
        return self.a_mat.shape[0]

    @property
    def input_dim(self) -> int:
        return self.b_mat.shape[1]

    @property
    def n_agents(self) -> int:
        return self.graph.n_agents

    @property
    def bk(self) -> np.ndarray:
        return self.b_mat @ self.k_mat


@dataclass(frozen=True)
class ClosedLoopMatrices:
    """Derived closed-loop matrices.

    ``predictor_mats[i]`` drives the stacked difference predictor of agent i,
    ``disagreement_mat`` the dynamics of the state disagreements relative to
    agent 0, and ``error_coupling_mat`` maps stacked measurement errors into
    the disagreement dynamics.
    """

    predictor_mats: tuple
    disagreement_mat: np.ndarray
    error_coupling_mat: np.ndarray


def predictor_matrix(model: SystemModel, i: int) -> np.ndarray:
    """Difference-dynamics matrix for agent ``i``.

    Governs the stacked differences ``x_i - x_p`` (p ascending, self omitted)
    under the continuous protocol; the event-triggered predictor propagates
    with its exponential.
    """
    n_agents = model.n_agents
    if not (0 <= i < n_agents):
        raise IndexError(f"agent index {i} out of range [0, {n_agents})")
    adj = model.graph.weights
    lap = model.graph.laplacian()
    others = [p for p in range(n_agents) if p != i]
    degrees = np.diag(lap[others, others])
    row = adj[i, others]
    sub_adj = adj[np.ix_(others, others)]
    coupling = degrees + np.outer(np.ones(n_agents - 1), row) - sub_adj
    return matlib.kron(np.eye(n_agents - 1), model.a_mat) + matlib.kron(coupling, model.bk)


def closed_loop_matrices(model: SystemModel) -> ClosedLoopMatrices:
    """Assemble all predictor matrices plus the disagreement-system pair.

    Writing ``l_i`` for the Laplacian rows, the disagreement dynamics of
    ``delta_i = x_i - x_0`` (i = 1..N-1) is
    ``delta' = Pi delta + W e`` with error coupling rows ``l_i - l_0``;
    this is the form obtained by direct expansion of the closed loop.
    """
    n_agents = model.n_agents
    adj = model.graph.weights
    lap = model.graph.laplacian()
    ones = np.ones(n_agents - 1)
    l22 = lap[1:, 1:]
    first_row = adj[0, 1:]
    disagreement = matlib.kron(np.eye(n_agents - 1), model.a_mat) + matlib.kron(
        l22 + np.outer(ones, first_row), model.bk
    )
    coupling_rows = lap[1:, :] - np.outer(ones, lap[0, :])
    error_coupling = matlib.kron(coupling_rows, model.bk)
    predictors = tuple(predictor_matrix(model, i) for i in range(n_agents))
    return ClosedLoopMatrices(predictors, disagreement, error_coupling)


def is_hurwitz(m, margin: float = HURWITZ_MARGIN) -> bool:
    """True iff every eigenvalue has real part below ``-margin``."""
    m = np.asarray(m)
    matlib.require_square(m, "Hurwitz check input")
    return bool(matlib.eigenvalues(m).real.max() < -margin)


@dataclass(frozen=True)
class EigenvalueVerdict:
    """Per-eigenvalue entry of the consensus-condition report."""

    laplacian_eigenvalue: complex
    abscissa: float           # max Re over spectrum of A + lam B K
    hurwitz: bool
    marginal: bool            # abscissa numerically on the imaginary axis


@dataclass(frozen=True)
class ConsensusConditionReport:
    holds: bool
    entries: tuple


def check_consensus_condition(model: SystemModel) -> ConsensusConditionReport:
    """Spectral consensus test over the nonzero Laplacian eigenvalues.

    Requires a spanning tree (which guarantees a simple zero eigenvalue);
    forms the complex matrix ``A + lam B K`` for every nonzero eigenvalue
    and verifies it is Hurwitz.
    """
    if not model.graph.has_spanning_tree():
        raise AssumptionError("graph has no directed spanning tree")
    lap_eigs = matlib.eigenvalues(model.graph.laplacian())
    zero_like = [lam for lam in lap_eigs if abs(lam) <= ZERO_EIGENVALUE_TOL]
    if len(zero_like) != 1:
        raise NumericalError(
            f"expected a simple zero Laplacian eigenvalue, found {len(zero_like)}"
        )
    entries = []
    for lam in sorted(
        (lam for lam in lap_eigs if abs(lam) > ZERO_EIGENVALUE_TOL),
        key=lambda z: (z.real, z.imag),
    ):
        closed = model.a_mat.astype(complex) + lam * model.bk
        abscissa = float(matlib.eigenvalues(closed).real.max())
        hurwitz = abscissa < -HURWITZ_MARGIN
        marginal = -HURWITZ_MARGIN <= abscissa <= 0.0
        entries.append(EigenvalueVerdict(complex(lam), abscissa, hurwitz, marginal))
    return ConsensusConditionReport(all(e.hurwitz for e in entries), tuple(entries))


def check_stabilizable(a, b) -> bool:
    """PBH stabilizability test for the pair ``(a, b)``."""
    return matlib.stabilizable(a, b)


def design_gain(a, b, graph: DirectedGraph, c_margin: float = 0.5) -> np.ndarray:
    """Riccati-based gain synthesis.

    Solves ``A.T P + P A - P B B.T P + I = 0``, then returns
    ``K = -c B.T P`` with ``c = c_margin + 1 / min Re(lam)`` over the nonzero
    Laplacian eigenvalues.  The resulting gain is verified against the
    spectral consensus condition before being returned.
    """
    if c_margin <= 0:
        raise PreconditionError("c_margin must be positive")
    a = matlib.as_matrix(a, name="A")
    b = matlib.as_matrix(b, rows=a.shape[0], name="B")
    if not matlib.stabilizable(a, b):
        raise AssumptionError("(A, B) is not stabilizable")
    if not graph.has_spanning_tree():
        raise AssumptionError("graph has no directed spanning tree")
    p = matlib.solve_care(a, b)
    lap_eigs = matlib.eigenvalues(graph.laplacian())
    nonzero_real_parts = [
        lam.real for lam in lap_eigs if abs(lam) > ZERO_EIGENVALUE_TOL
    ]
    c = c_margin + 1.0 / min(nonzero_real_parts)
    gain = -c * b.T @ p
    report = check_consensus_condition(SystemModel(a, b, gain, graph))
    if not report.holds:
        raise NumericalError("designed gain failed the spectral consensus condition")
    return gain


def validate_alpha(alpha: float, disagreement_mat) -> bool:
    """Admissibility of the trigger decay rate: ``0 < alpha < -abscissa``."""
    abscissa = matlib.spectral_abscissa(disagreement_mat)
    if abscissa >= 0.0:
        raise PreconditionError(
            "disagreement dynamics is not Hurwitz; decay-rate constraint is vacuous"
        )
    return 0.0 < alpha < -abscissa


@dataclass(frozen=True)
class AbscissaReport:
    """Spectral abscissae of the closed-loop matrices (diagnostics only)."""

    disagreement: float
    per_agent: tuple


def spectral_abscissa_report(clm: ClosedLoopMatrices) -> AbscissaReport:
    return AbscissaReport(
        matlib.spectral_abscissa(clm.disagreement_mat),
        tuple(matlib.spectral_abscissa(om) for om in clm.predictor_mats),
    )
