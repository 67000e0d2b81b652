"""Per-agent event-triggered runtime.

Each agent maintains two predictors between communication events:

* ``xhat`` -- its own broadcast-state predictor, the quantity whose gap to
  the true state defines the measurement error and the trigger;
* a stacked difference predictor over ``x_i - x_p`` (p ascending, self
  omitted), propagated exactly by the exponential of the agent's
  difference-dynamics matrix and rebased at every event that touches the
  agent: its own triggers and every reception.

All operations mutate only the runtime they are handed; the simulation
engine owns delivery order and time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import matlib
from .errors import TimeOrderError, TopologyError
from .model import SystemModel, predictor_matrix


@dataclass(frozen=True)
class AgentParams:
    """Precomputed per-agent constants (immutable, shareable)."""

    agent_id: int
    n_agents: int
    state_dim: int
    a_mat: np.ndarray
    b_mat: np.ndarray
    gain: np.ndarray
    weight_row: np.ndarray          # full adjacency row of this agent
    in_neighbors: tuple
    others: tuple                   # all agent ids except self, ascending
    slot_of: dict                   # agent id -> block index in the difference stack
    predictor_mat: np.ndarray       # difference-dynamics matrix
    input_map: np.ndarray           # K (weights-over-others x I_n): stack -> input estimate


def agent_params(model: SystemModel, i: int) -> AgentParams:
    others = tuple(p for p in range(model.n_agents) if p != i)
    row = model.graph.weights[i]
    input_map = model.k_mat @ matlib.kron(
        row[list(others)].reshape(1, -1), np.eye(model.state_dim)
    )
    return AgentParams(
        agent_id=i,
        n_agents=model.n_agents,
        state_dim=model.state_dim,
        a_mat=model.a_mat,
        b_mat=model.b_mat,
        gain=model.k_mat,
        weight_row=row,
        in_neighbors=tuple(model.graph.in_neighbors(i)),
        others=others,
        slot_of={p: s for s, p in enumerate(others)},
        predictor_mat=predictor_matrix(model, i),
        input_map=input_map,
    )


class NeighborRecord(NamedTuple):
    """Last broadcast received from one in-neighbor."""

    diffs: np.ndarray
    state: np.ndarray
    time: float


@dataclass(frozen=True)
class BroadcastMessage:
    sender: int
    time: float
    state: np.ndarray
    diffs: np.ndarray


@dataclass
class AgentRuntime:
    """Mutable event-triggered state of one agent."""

    agent_id: int
    xhat: np.ndarray
    diff_ref: np.ndarray            # difference stack at the last rebase
    diff_ref_time: float = 0.0
    neighbor_cache: dict = field(default_factory=dict)
    last_trigger_time: float = 0.0
    trigger_count: int = 0


class TriggerDecision(NamedTuple):
    fired: bool
    f_value: float


def predict_differences(ref_value: np.ndarray, predictor_mat: np.ndarray, dt: float) -> np.ndarray:
    """Propagate a difference stack forward by ``dt`` via the exact flow."""
    if dt < 0:
        raise TimeOrderError(f"cannot propagate differences backwards (dt={dt})")
    if dt == 0.0:
        return ref_value.copy()
    return matlib.mat_exp(predictor_mat, dt) @ ref_value


def estimate_input(
    params: AgentParams, ref_value: np.ndarray, ref_time: float, t: float
) -> np.ndarray:
    """Input estimate reconstructed from a difference stack rebased at ``ref_time``.

    Works both for an agent's own predictor and for a cached neighbor
    broadcast (using that neighbor's params and cached stack).
    """
    if t < ref_time:
        raise TimeOrderError(f"query time {t} precedes rebase time {ref_time}")
    return params.input_map @ predict_differences(ref_value, params.predictor_mat, t - ref_time)


def estimate_input_self(runtime: AgentRuntime, params: AgentParams, t: float) -> np.ndarray:
    return estimate_input(params, runtime.diff_ref, runtime.diff_ref_time, t)


def advance_xhat(
    runtime: AgentRuntime,
    params: AgentParams,
    t0: float,
    t1: float,
    substeps: int,
) -> np.ndarray:
    """Advance the broadcast-state predictor from ``t0`` to ``t1``.

    Classic RK4 with the input estimate sampled at the stage times (the
    estimate is continuously defined, so no hold is applied).  Mutates and
    returns ``runtime.xhat``.
    """
    if t1 < t0:
        raise TimeOrderError(f"t1={t1} precedes t0={t0}")
    if t0 < runtime.last_trigger_time:
        raise TimeOrderError(
            f"t0={t0} precedes the predictor rebase at {runtime.last_trigger_time}"
        )
    if substeps < 1:
        raise ValueError("substeps must be positive")
    a, b = params.a_mat, params.b_mat
    h = (t1 - t0) / substeps
    x = runtime.xhat
    for k in range(substeps):
        t = t0 + k * h
        u0 = estimate_input_self(runtime, params, t)
        uh = estimate_input_self(runtime, params, t + 0.5 * h)
        u1 = estimate_input_self(runtime, params, t + h)
        k1 = a @ x + b @ u0
        k2 = a @ (x + 0.5 * h * k1) + b @ uh
        k3 = a @ (x + 0.5 * h * k2) + b @ uh
        k4 = a @ (x + h * k3) + b @ u1
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    runtime.xhat = x
    return x


def measurement_error(runtime: AgentRuntime, true_state: np.ndarray) -> np.ndarray:
    """Gap between the broadcast-state predictor and the true state."""
    return runtime.xhat - true_state


def trigger_check(error_norm: float, t: float, c1: float, alpha: float) -> TriggerDecision:
    """Decaying-threshold trigger; fires on ``|e| - c1 exp(-alpha t) >= 0``."""
    f_value = error_norm - c1 * math.exp(-alpha * t)
    return TriggerDecision(f_value >= 0.0, f_value)


def on_trigger(
    runtime: AgentRuntime, params: AgentParams, true_state: np.ndarray, t: float
) -> BroadcastMessage:
    """Fire the agent's event: reset its predictor and emit a broadcast.

    Propagates the difference stack up to ``t``, rebases it there, snaps the
    broadcast-state predictor to the true state (error resets to zero), and
    returns the message carrying the state and the difference stack.
    """
    diffs_now = predict_differences(
        runtime.diff_ref, params.predictor_mat, t - runtime.diff_ref_time
    )
    runtime.diff_ref = diffs_now
    runtime.diff_ref_time = t
    runtime.xhat = np.array(true_state, dtype=float)
    runtime.last_trigger_time = t
    runtime.trigger_count += 1
    return BroadcastMessage(
        sender=runtime.agent_id,
        time=t,
        state=np.array(true_state, dtype=float),
        diffs=diffs_now.copy(),
    )


def on_receive(
    runtime: AgentRuntime,
    params: AgentParams,
    msg: BroadcastMessage,
    own_state: np.ndarray,
) -> None:
    """Fold an in-neighbor broadcast into the difference predictor.

    Propagates the stack to the message time, replaces the sender's block
    with the exact difference ``own_state - msg.state``, rebases there, and
    caches the broadcast for later reconstruction queries.
    """
    if msg.sender not in params.slot_of:
        raise TopologyError(f"agent {msg.sender} is not a peer of agent {params.agent_id}")
    if msg.sender not in params.in_neighbors:
        raise TopologyError(
            f"agent {params.agent_id} has no edge from agent {msg.sender}"
        )
    cached = runtime.neighbor_cache.get(msg.sender)
    if cached is not None and msg.time < cached.time:
        raise TimeOrderError(
            f"message time {msg.time} precedes cached time {cached.time}"
        )
    diffs_now = predict_differences(
        runtime.diff_ref, params.predictor_mat, msg.time - runtime.diff_ref_time
    )
    n = params.state_dim
    slot = params.slot_of[msg.sender]
    diffs_now[slot * n : (slot + 1) * n] = np.asarray(own_state, dtype=float) - msg.state
    runtime.diff_ref = diffs_now
    runtime.diff_ref_time = msg.time
    runtime.neighbor_cache[msg.sender] = NeighborRecord(
        msg.diffs.copy(), msg.state.copy(), msg.time
    )


def control_input(
    runtime: AgentRuntime, params: AgentParams, neighbor_xhats: dict
) -> np.ndarray:
    """Applied control: weighted predictor differences over the in-neighbors."""
    total = np.zeros(params.state_dim)
    for j in params.in_neighbors:
        if j not in neighbor_xhats:
            raise KeyError(f"engine invariant violated: no predictor for in-neighbor {j}")
        total += params.weight_row[j] * (runtime.xhat - neighbor_xhats[j])
    return params.gain @ total
