"""Deterministic fixed-step simulation engine.

Integrates the true agent dynamics under the event-triggered protocol with
classic RK4, detects trigger events at step boundaries, delivers broadcasts
instantly, and logs a complete trace.  A continuous-communication baseline
mode and a divergence guard (for necessity experiments) are included.

Within a step the difference predictors are propagated by precomputed
half-step matrix exponentials (their flow is exactly linear), while the true
states and broadcast-state predictors advance by one stacked RK4 step whose
stage controls are recomputed from the stage-consistent predictor values.
Samples are logged after event processing, so a trigger shows up as an
exactly-zero measurement error at its own sample.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import matlib, protocol
from .errors import AssumptionError, NumericalError, PreconditionError
from .model import (
    SystemModel,
    check_consensus_condition,
    closed_loop_matrices,
    validate_alpha,
)

EVENT_TRIGGERED = "event_triggered"
CONTINUOUS_BASELINE = "continuous_baseline"

INIT_GLOBAL = "global"          # difference stacks seeded with exact initial differences
INIT_BROADCAST = "broadcast"    # only in-neighbor blocks learned from the initial round

DIVERGENCE_GUARD = 1e9
REPLICATION_TOL = 1e-12


@dataclass(frozen=True)
class Scenario:
    """Full simulation configuration."""

    model: SystemModel
    initial_states: np.ndarray          # (N, n)
    c1: float
    alpha: float
    horizon: float
    step: float
    mode: str = EVENT_TRIGGERED
    init_policy: str = INIT_GLOBAL
    expect_divergence: bool = False
    replication_check: bool = False

    def __post_init__(self):
        states = matlib.as_matrix(
            self.initial_states,
            rows=self.model.n_agents,
            cols=self.model.state_dim,
            name="initial_states",
        )
        states.flags.writeable = False
        object.__setattr__(self, "initial_states", states)


@dataclass(frozen=True)
class SimSummary:
    trigger_counts: tuple
    min_inter_event_interval: float
    final_consensus_error: float


@dataclass(frozen=True)
class SimTrace:
    """Time-indexed log of one run."""

    times: np.ndarray                   # (T,)
    states: np.ndarray                  # (T, N, n)
    error_norms: np.ndarray             # (T, N)
    thresholds: np.ndarray              # (T,)
    events: tuple                       # ((agent, time), ...) in processing order
    consensus_errors: np.ndarray        # (T,)
    summary: SimSummary
    mode: str
    step: float
    horizon: float
    diverged: bool = False


@dataclass(frozen=True)
class ZenoReport:
    min_gap: float
    per_agent_min_gap: tuple
    event_totals: tuple


@dataclass(frozen=True)
class BaselineComparison:
    et_trace: SimTrace
    cont_trace: SimTrace
    et_final_error: float
    cont_final_error: float


def consensus_error(states) -> float:
    """Maximum pairwise state distance over all ordered agent pairs."""
    states = np.asarray(states, dtype=float)
    if states.shape[0] < 2:
        raise PreconditionError("consensus error needs at least 2 agents")
    diffs = states[:, None, :] - states[None, :, :]
    return float(np.sqrt((diffs**2).sum(axis=-1)).max())


def validate_scenario(scenario: Scenario) -> None:
    """Eagerly check every scenario invariant; raises on the first failure."""
    if scenario.step <= 0:
        raise PreconditionError("step must be positive")
    if scenario.step > scenario.horizon:
        raise PreconditionError("step must not exceed the horizon")
    if scenario.c1 <= 0:
        raise PreconditionError("c1 must be positive")
    if scenario.alpha <= 0:
        raise PreconditionError("alpha must be positive")
    if scenario.mode not in (EVENT_TRIGGERED, CONTINUOUS_BASELINE):
        raise PreconditionError(f"unknown mode {scenario.mode!r}")
    if scenario.init_policy not in (INIT_GLOBAL, INIT_BROADCAST):
        raise PreconditionError(f"unknown init_policy {scenario.init_policy!r}")
    if not scenario.model.graph.has_spanning_tree():
        raise AssumptionError("graph has no directed spanning tree")
    if scenario.expect_divergence:
        return
    report = check_consensus_condition(scenario.model)
    if not report.holds:
        raise AssumptionError(
            "spectral consensus condition fails; flag the scenario as a "
            "divergence experiment to run it anyway"
        )
    if scenario.mode == EVENT_TRIGGERED:
        disagreement = closed_loop_matrices(scenario.model).disagreement_mat
        if not validate_alpha(scenario.alpha, disagreement):
            raise AssumptionError(
                f"alpha={scenario.alpha} is not below the decay rate of the "
                "disagreement dynamics"
            )


def run(scenario: Scenario) -> SimTrace:
    """Simulate one scenario and return its trace."""
    validate_scenario(scenario)
    if scenario.mode == CONTINUOUS_BASELINE:
        return _run_baseline(scenario)
    return _run_event_triggered(scenario)


def zeno_diagnostics(trace: SimTrace) -> ZenoReport:
    """Per-agent minimum inter-event intervals and event totals.

    Agents with fewer than two events report the horizon (no interval
    exists); the global minimum is taken over the per-agent values.
    """
    n_agents = trace.states.shape[1]
    per_agent_times = [[] for _ in range(n_agents)]
    for agent, time in trace.events:
        per_agent_times[agent].append(time)
    gaps = []
    for times in per_agent_times:
        if len(times) < 2:
            gaps.append(trace.horizon)
        else:
            gaps.append(float(np.diff(np.asarray(times)).min()))
    totals = tuple(len(times) for times in per_agent_times)
    return ZenoReport(min(gaps), tuple(gaps), totals)


def compare_baseline(scenario: Scenario) -> BaselineComparison:
    """Run the event-triggered and continuous modes on identical initial data."""
    et = run(dataclasses.replace(scenario, mode=EVENT_TRIGGERED))
    cont = run(dataclasses.replace(scenario, mode=CONTINUOUS_BASELINE))
    return BaselineComparison(
        et_trace=et,
        cont_trace=cont,
        et_final_error=et.summary.final_consensus_error,
        cont_final_error=cont.summary.final_consensus_error,
    )


def _steps_for(scenario: Scenario) -> int:
    steps = int(round(scenario.horizon / scenario.step))
    return max(steps, 1)


def _summarize(trace_events, n_agents, horizon, consensus_errors) -> SimSummary:
    counts = [0] * n_agents
    per_agent_times = [[] for _ in range(n_agents)]
    for agent, time in trace_events:
        counts[agent] += 1
        per_agent_times[agent].append(time)
    gaps = [
        float(np.diff(np.asarray(t)).min()) if len(t) > 1 else horizon
        for t in per_agent_times
    ]
    return SimSummary(
        trigger_counts=tuple(counts),
        min_inter_event_interval=min(gaps) if gaps else horizon,
        final_consensus_error=float(consensus_errors[-1]),
    )


class _Replica:
    """Independent reconstruction of one agent's predictors.

    Fed the same messages and advanced by the same update rule as the
    canonical engine state, but on its own arrays; any drift beyond
    REPLICATION_TOL exposes aliasing or bookkeeping bugs in the engine.
    """

    def __init__(self, params, xhat0, diffs0, exp_half):
        self.params = params
        self.xhat = xhat0.copy()
        self.diffs = diffs0.copy()
        self.exp_half = exp_half

    def advance(self, h):
        p = self.params
        d0 = self.diffs
        d_half = self.exp_half @ d0
        d_full = self.exp_half @ d_half
        u0 = p.input_map @ d0
        uh = p.input_map @ d_half
        u1 = p.input_map @ d_full
        a, b = p.a_mat, p.b_mat
        x = self.xhat
        k1 = a @ x + b @ u0
        k2 = a @ (x + 0.5 * h * k1) + b @ uh
        k3 = a @ (x + 0.5 * h * k2) + b @ uh
        k4 = a @ (x + h * k3) + b @ u1
        self.xhat = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        self.diffs = d_full

    def on_own_trigger(self, msg):
        self.xhat = msg.state.copy()
        self.diffs = msg.diffs.copy()

    def on_reception(self, msg, own_true_state):
        n = self.params.state_dim
        slot = self.params.slot_of[msg.sender]
        self.diffs = self.diffs.copy()
        self.diffs[slot * n : (slot + 1) * n] = own_true_state - msg.state

    def check(self, xhat_ref, diffs_ref, t):
        if (
            np.abs(self.xhat - xhat_ref).max() > REPLICATION_TOL
            or np.abs(self.diffs - diffs_ref).max() > REPLICATION_TOL
        ):
            raise NumericalError(f"replication consistency violated at t={t}")


def _initial_diff_stacks(scenario: Scenario) -> np.ndarray:
    """Seed the difference predictors according to the init policy.

    ``global``: every block holds the exact initial difference (all agents
    are assumed to learn the full initial state at the initial instant).
    ``broadcast``: blocks start at zero; the initial broadcast round fills
    in the in-neighbor blocks only.
    """
    model = scenario.model
    n_agents, n = model.n_agents, model.state_dim
    x0 = scenario.initial_states
    stacks = np.zeros((n_agents, (n_agents - 1) * n))
    if scenario.init_policy == INIT_GLOBAL:
        for i in range(n_agents):
            others = [p for p in range(n_agents) if p != i]
            for slot, p in enumerate(others):
                stacks[i, slot * n : (slot + 1) * n] = x0[i] - x0[p]
    return stacks


def _run_event_triggered(scenario: Scenario) -> SimTrace:
    model = scenario.model
    graph = model.graph
    n_agents, n = model.n_agents, model.state_dim
    h = scenario.step
    steps = _steps_for(scenario)

    params = [protocol.agent_params(model, i) for i in range(n_agents)]
    exp_half = [matlib.mat_exp(p.predictor_mat, 0.5 * h) for p in params]
    ia = matlib.kron(np.eye(n_agents), model.a_mat)
    lbk = matlib.kron(graph.laplacian(), model.bk)
    b = model.b_mat

    x = scenario.initial_states.flatten()
    xh = x.copy()
    diff_stacks = _initial_diff_stacks(scenario)
    runtimes = [
        protocol.AgentRuntime(
            agent_id=i, xhat=x[i * n : (i + 1) * n].copy(), diff_ref=diff_stacks[i].copy()
        )
        for i in range(n_agents)
    ]

    events: list = []

    def block(vec, i):
        return vec[i * n : (i + 1) * n]

    def fire(i, t):
        """Trigger agent i and deliver its broadcast to all out-neighbors."""
        rt = runtimes[i]
        rt.diff_ref = diff_stacks[i].copy()
        rt.diff_ref_time = t
        rt.xhat = block(xh, i).copy()
        msg = protocol.on_trigger(rt, params[i], block(x, i).copy(), t)
        xh[i * n : (i + 1) * n] = rt.xhat
        diff_stacks[i] = rt.diff_ref
        events.append((i, t))
        if replica is not None and i == replica_id:
            replica.on_own_trigger(msg)
        for j in graph.out_neighbors(i):
            rtj = runtimes[j]
            rtj.diff_ref = diff_stacks[j].copy()
            rtj.diff_ref_time = t
            protocol.on_receive(rtj, params[j], msg, block(x, j).copy())
            diff_stacks[j] = rtj.diff_ref
            if replica is not None and j == replica_id:
                replica.on_reception(msg, block(x, j).copy())

    replica_id = 0
    replica = None
    if scenario.replication_check:
        replica = _Replica(
            params[replica_id],
            block(xh, replica_id),
            diff_stacks[replica_id],
            exp_half[replica_id],
        )

    # All agents fire at the initial instant by convention.
    for i in range(n_agents):
        fire(i, 0.0)

    times = np.arange(steps + 1) * h
    states_log = np.empty((steps + 1, n_agents, n))
    error_log = np.empty((steps + 1, n_agents))
    threshold_log = scenario.c1 * np.exp(-scenario.alpha * times)

    def log(k):
        states_log[k] = x.reshape(n_agents, n)
        error_log[k] = np.linalg.norm((xh - x).reshape(n_agents, n), axis=1)

    log(0)
    if replica is not None:
        replica.check(block(xh, replica_id), diff_stacks[replica_id], 0.0)

    def deriv(xv, xhv, bu):
        return ia @ xv + lbk @ xhv, ia @ xhv + bu

    diverged = False
    last_index = steps
    for k in range(1, steps + 1):
        # exact predictor propagation to the half and full step
        d0 = diff_stacks
        d_half = np.stack([exp_half[i] @ d0[i] for i in range(n_agents)])
        d_full = np.stack([exp_half[i] @ d_half[i] for i in range(n_agents)])
        bu0 = np.concatenate([b @ (params[i].input_map @ d0[i]) for i in range(n_agents)])
        buh = np.concatenate([b @ (params[i].input_map @ d_half[i]) for i in range(n_agents)])
        bu1 = np.concatenate([b @ (params[i].input_map @ d_full[i]) for i in range(n_agents)])

        k1x, k1h = deriv(x, xh, bu0)
        k2x, k2h = deriv(x + 0.5 * h * k1x, xh + 0.5 * h * k1h, buh)
        k3x, k3h = deriv(x + 0.5 * h * k2x, xh + 0.5 * h * k2h, buh)
        k4x, k4h = deriv(x + h * k3x, xh + h * k3h, bu1)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        xh = xh + (h / 6.0) * (k1h + 2.0 * k2h + 2.0 * k3h + k4h)
        diff_stacks = d_full
        if replica is not None:
            replica.advance(h)
        t = times[k]

        if not np.isfinite(x).all() or max(
            np.linalg.norm(block(x, i)) for i in range(n_agents)
        ) > DIVERGENCE_GUARD:
            diverged = True
            last_index = k
            log(k)
            break

        fired = [
            i
            for i in range(n_agents)
            if protocol.trigger_check(
                float(np.linalg.norm(block(xh, i) - block(x, i))),
                t,
                scenario.c1,
                scenario.alpha,
            ).fired
        ]
        for i in fired:
            fire(i, t)
        log(k)
        if replica is not None:
            replica.check(block(xh, replica_id), diff_stacks[replica_id], t)

    end = last_index + 1 if diverged else steps + 1
    times = times[:end]
    states_log = states_log[:end]
    error_log = error_log[:end]
    threshold_log = threshold_log[:end]
    cons = _pairwise_errors(states_log)
    summary = _summarize(events, n_agents, scenario.horizon, cons)
    return SimTrace(
        times=times,
        states=states_log,
        error_norms=error_log,
        thresholds=threshold_log,
        events=tuple(events),
        consensus_errors=cons,
        summary=summary,
        mode=scenario.mode,
        step=h,
        horizon=scenario.horizon,
        diverged=diverged,
    )


def _run_baseline(scenario: Scenario) -> SimTrace:
    """Continuous-communication protocol on the true states; no events."""
    model = scenario.model
    n_agents, n = model.n_agents, model.state_dim
    h = scenario.step
    steps = _steps_for(scenario)
    closed = matlib.kron(np.eye(n_agents), model.a_mat) + matlib.kron(
        model.graph.laplacian(), model.bk
    )

    x = scenario.initial_states.flatten()
    times = np.arange(steps + 1) * h
    states_log = np.empty((steps + 1, n_agents, n))
    states_log[0] = x.reshape(n_agents, n)

    diverged = False
    last_index = steps
    for k in range(1, steps + 1):
        k1 = closed @ x
        k2 = closed @ (x + 0.5 * h * k1)
        k3 = closed @ (x + 0.5 * h * k2)
        k4 = closed @ (x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states_log[k] = x.reshape(n_agents, n)
        if not np.isfinite(x).all() or max(
            np.linalg.norm(x[i * n : (i + 1) * n]) for i in range(n_agents)
        ) > DIVERGENCE_GUARD:
            diverged = True
            last_index = k
            break

    end = last_index + 1 if diverged else steps + 1
    times = times[:end]
    states_log = states_log[:end]
    cons = _pairwise_errors(states_log)
    summary = _summarize([], n_agents, scenario.horizon, cons)
    return SimTrace(
        times=times,
        states=states_log,
        error_norms=np.zeros((end, n_agents)),
        thresholds=scenario.c1 * np.exp(-scenario.alpha * times),
        events=(),
        consensus_errors=cons,
        summary=summary,
        mode=scenario.mode,
        step=h,
        horizon=scenario.horizon,
        diverged=diverged,
    )


def _pairwise_errors(states_log: np.ndarray) -> np.ndarray:
    diffs = states_log[:, :, None, :] - states_log[:, None, :, :]
    return np.sqrt((diffs**2).sum(axis=-1)).max(axis=(1, 2))
