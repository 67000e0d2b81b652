import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from etconsensus import protocol
from etconsensus.errors import TimeOrderError, TopologyError
from etconsensus.graph import DirectedGraph
from etconsensus.model import SystemModel
from etconsensus.protocol import (
    AgentRuntime,
    BroadcastMessage,
    advance_xhat,
    agent_params,
    control_input,
    estimate_input,
    estimate_input_self,
    measurement_error,
    on_receive,
    on_trigger,
    predict_differences,
    trigger_check,
)

BENCH_X0 = np.array([
    [0.4, 0.3],
    [0.5, 0.2],
    [0.6, 0.1],
    [0.7, 0.0],
    [0.8, -0.1],
    [0.4, -0.2],
])


@pytest.fixture(scope="module")
def bench_params(bench_model):
    return [agent_params(bench_model, i) for i in range(6)]


def exact_diff_stack(i, states):
    n_agents = states.shape[0]
    return np.concatenate([states[i] - states[p] for p in range(n_agents) if p != i])


def fresh_runtime(i, params, states=BENCH_X0):
    return AgentRuntime(
        agent_id=i,
        xhat=states[i].copy(),
        diff_ref=exact_diff_stack(i, states),
    )


class TestPredictDifferences:
    def test_zero_dt_is_identity(self, bench_params):
        value = np.arange(10.0)
        out = predict_differences(value, bench_params[0].predictor_mat, 0.0)
        assert np.array_equal(out, value)
        assert out is not value

    def test_zero_stack_stays_zero(self, bench_params):
        out = predict_differences(np.zeros(10), bench_params[2].predictor_mat, 0.7)
        assert np.abs(out).max() == 0.0

    def test_fine_step_ode_oracle(self, bench_params):
        # integrate the linear flow with RK4 at a much finer step
        omega = bench_params[0].predictor_mat
        rng = np.random.default_rng(21)
        value = rng.normal(size=10)
        got = predict_differences(value, omega, 0.1)
        h = 1e-4
        state = value.copy()
        for _ in range(1000):
            k1 = omega @ state
            k2 = omega @ (state + 0.5 * h * k1)
            k3 = omega @ (state + 0.5 * h * k2)
            k4 = omega @ (state + h * k3)
            state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        assert np.abs(got - state).max() < 1e-6

    def test_negative_dt_rejected(self, bench_params):
        with pytest.raises(TimeOrderError):
            predict_differences(np.zeros(10), bench_params[0].predictor_mat, -1e-9)

    @given(st.floats(0.0, 0.5), st.floats(0.0, 0.5), st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_propagation_composes(self, dt1, dt2, seed):
        omega = np.array([[-0.4, 1.0], [-1.0, -0.4]])
        value = np.random.default_rng(seed).normal(size=2)
        two_hops = predict_differences(
            predict_differences(value, omega, dt1), omega, dt2
        )
        one_hop = predict_differences(value, omega, dt1 + dt2)
        assert np.abs(two_hops - one_hop).max() <= 1e-10


class TestEstimateInput:
    def test_zero_stack_gives_zero(self, bench_params):
        rt = fresh_runtime(0, bench_params[0])
        rt.diff_ref = np.zeros(10)
        assert np.abs(estimate_input_self(rt, bench_params[0], 0.5)).max() == 0.0

    def test_zero_gain_gives_zero(self, bench_model):
        model = SystemModel(
            bench_model.a_mat, bench_model.b_mat, np.zeros((1, 2)), bench_model.graph
        )
        params = agent_params(model, 0)
        rt = fresh_runtime(0, params)
        assert np.abs(estimate_input_self(rt, params, 1.0)).max() == 0.0

    def test_rebase_instant_has_no_exponential(self, bench_params):
        # at the rebase time the estimate is the plain weighted read-out, which
        # with exact differences equals the continuous protocol value
        params = bench_params[0]
        rt = fresh_runtime(0, params)
        got = estimate_input(params, rt.diff_ref, 0.0, 0.0)
        direct = params.gain @ sum(
            params.weight_row[j] * (BENCH_X0[0] - BENCH_X0[j]) for j in range(6)
        )
        assert np.abs(got - direct).max() < 1e-14

    def test_time_order_enforced(self, bench_params):
        with pytest.raises(TimeOrderError):
            estimate_input(bench_params[0], np.zeros(10), 1.0, 0.5)


class TestAdvanceXhat:
    def test_zero_dynamics_zero_input(self, bench_params):
        params = bench_params[0]
        still = protocol.AgentParams(
            **{**params.__dict__, "a_mat": np.zeros((2, 2)), "gain": np.zeros((1, 2)),
               "input_map": np.zeros((1, 10))}
        )
        rt = fresh_runtime(0, still)
        before = rt.xhat.copy()
        advance_xhat(rt, still, 0.0, 1.0, substeps=10)
        assert np.array_equal(rt.xhat, before)

    def test_rotation_quarter_turn(self, bench_params):
        params = bench_params[0]
        rt = fresh_runtime(0, params)
        rt.diff_ref = np.zeros(10)   # zero input estimate, pure rotation
        start = rt.xhat.copy()
        advance_xhat(rt, params, 0.0, np.pi / 2, substeps=2000)
        quarter = np.array([[0.0, 1.0], [-1.0, 0.0]])
        expected = scipy.linalg.expm(quarter * (np.pi / 2)) @ start
        assert np.abs(rt.xhat - expected).max() < 1e-8

    def test_constant_input_variation_of_constants(self, bench_params):
        # a zero predictor matrix freezes the input estimate, so the exact
        # answer is the standard constant-forcing convolution
        params = bench_params[0]
        frozen = protocol.AgentParams(
            **{**params.__dict__, "predictor_mat": np.zeros((10, 10))}
        )
        rt = fresh_runtime(0, frozen)
        u = frozen.input_map @ rt.diff_ref
        forcing = frozen.b_mat @ u
        aug = np.zeros((3, 3))
        aug[:2, :2] = frozen.a_mat
        aug[:2, 2] = forcing
        start = np.append(rt.xhat.copy(), 1.0)
        expected = (scipy.linalg.expm(aug * 0.4) @ start)[:2]
        advance_xhat(rt, frozen, 0.0, 0.4, substeps=400)
        assert np.abs(rt.xhat - expected).max() < 1e-8

    def test_general_augmented_flow_oracle(self, bench_params):
        # stack the predictor with the difference flow; the pair is linear and
        # its exact propagator is one big matrix exponential
        params = bench_params[3]
        rt = fresh_runtime(3, params)
        a, b = params.a_mat, params.b_mat
        bc = b @ params.input_map
        aug = np.block([
            [a, bc],
            [np.zeros((10, 2)), params.predictor_mat],
        ])
        start = np.concatenate([rt.xhat, rt.diff_ref])
        expected = (scipy.linalg.expm(aug * 0.3) @ start)[:2]
        advance_xhat(rt, params, 0.0, 0.3, substeps=300)
        assert np.abs(rt.xhat - expected).max() < 1e-9

    def test_time_order_enforced(self, bench_params):
        rt = fresh_runtime(0, bench_params[0])
        with pytest.raises(TimeOrderError):
            advance_xhat(rt, bench_params[0], 1.0, 0.5, substeps=1)


class TestTrigger:
    def test_quiet_at_start(self):
        decision = trigger_check(0.0, 0.0, c1=0.6, alpha=0.4)
        assert not decision.fired
        assert decision.f_value == pytest.approx(-0.6)

    def test_boundary_inclusive(self):
        threshold = 0.6 * np.exp(-0.4 * 1.5)
        decision = trigger_check(threshold, 1.5, c1=0.6, alpha=0.4)
        assert decision.fired
        assert decision.f_value == pytest.approx(0.0, abs=1e-15)

    def test_excess_fires(self):
        decision = trigger_check(0.7, 0.0, c1=0.6, alpha=0.4)
        assert decision.fired
        assert decision.f_value == pytest.approx(0.1)

    @given(
        st.floats(0.0, 10.0),
        st.floats(0.0, 30.0),
        st.floats(1e-3, 10.0),
        st.floats(1e-3, 2.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_fires_exactly_when_threshold_reached(self, error_norm, t, c1, alpha):
        decision = trigger_check(error_norm, t, c1, alpha)
        assert decision.fired == (error_norm >= c1 * np.exp(-alpha * t))
        assert decision.f_value == pytest.approx(
            error_norm - c1 * np.exp(-alpha * t), abs=1e-12
        )


class TestOnTrigger:
    def test_reset_semantics(self, bench_params):
        params = bench_params[0]
        rt = fresh_runtime(0, params)
        rt.xhat = rt.xhat + 0.05      # simulated drift
        true_state = BENCH_X0[0] + 0.01
        msg = on_trigger(rt, params, true_state, t=1.25)
        assert np.abs(measurement_error(rt, true_state)).max() == 0.0
        assert msg.time == 1.25
        assert np.array_equal(msg.state, true_state)
        assert rt.last_trigger_time == 1.25
        assert rt.trigger_count == 1
        assert rt.diff_ref_time == 1.25

    def test_count_increments_once_per_call(self, bench_params):
        rt = fresh_runtime(1, bench_params[1])
        for expected in (1, 2, 3):
            on_trigger(rt, bench_params[1], BENCH_X0[1], t=float(expected))
            assert rt.trigger_count == expected

    def test_broadcast_carries_propagated_stack(self, bench_params):
        params = bench_params[0]
        rt = fresh_runtime(0, params)
        expected = predict_differences(rt.diff_ref, params.predictor_mat, 0.5)
        msg = on_trigger(rt, params, BENCH_X0[0], t=0.5)
        assert np.abs(msg.diffs - expected).max() < 1e-14


class TestOnReceive:
    def test_sender_slot_assignment(self, bench_params):
        params = bench_params[0]       # in-neighbors are 3, 4, 5
        rt = fresh_runtime(0, params)
        own = np.array([0.11, -0.07])
        msg = BroadcastMessage(sender=3, time=0.4, state=np.array([0.5, 0.5]),
                               diffs=np.zeros(10))
        on_receive(rt, params, msg, own)
        slot = params.slot_of[3]
        got = rt.diff_ref[slot * 2 : slot * 2 + 2]
        assert np.array_equal(got, own - msg.state)
        assert rt.diff_ref_time == 0.4
        assert rt.neighbor_cache[3].time == 0.4

    def test_non_neighbor_rejected(self, bench_params):
        params = bench_params[0]
        rt = fresh_runtime(0, params)
        msg = BroadcastMessage(sender=1, time=0.1, state=np.zeros(2), diffs=np.zeros(10))
        with pytest.raises(TopologyError):
            on_receive(rt, params, msg, BENCH_X0[0])

    def test_cache_time_monotonicity(self, bench_params):
        params = bench_params[0]
        rt = fresh_runtime(0, params)
        first = BroadcastMessage(sender=4, time=0.5, state=np.zeros(2), diffs=np.zeros(10))
        on_receive(rt, params, first, BENCH_X0[0])
        stale = BroadcastMessage(sender=4, time=0.4, state=np.zeros(2), diffs=np.zeros(10))
        with pytest.raises(TimeOrderError):
            on_receive(rt, params, stale, BENCH_X0[0])

    def test_consistent_message_keeps_input_estimate_continuous(self, bench_params):
        # if the broadcast state equals the receiver's implied estimate of the
        # sender, folding it in must not move the input estimate
        params = bench_params[0]
        rt = fresh_runtime(0, params)
        t = 0.8
        propagated = predict_differences(rt.diff_ref, params.predictor_mat, t)
        before = params.input_map @ propagated
        own = np.array([0.3, -0.2])
        slot = params.slot_of[5]
        implied_sender_state = own - propagated[slot * 2 : slot * 2 + 2]
        msg = BroadcastMessage(sender=5, time=t, state=implied_sender_state,
                               diffs=np.zeros(10))
        on_receive(rt, params, msg, own)
        after = estimate_input_self(rt, params, t)
        assert np.abs(after - before).max() < 1e-12


class TestNeighborReconstruction:
    def test_cached_broadcast_reproduces_sender_estimate(self, bench_params):
        # a receiver reconstructs the sender's input estimate from the cached
        # broadcast; it matches the sender's own estimate until the sender
        # rebases again
        sender, receiver = 0, 1        # agent 1 receives from agent 0
        rt_sender = fresh_runtime(sender, bench_params[sender])
        rt_receiver = fresh_runtime(receiver, bench_params[receiver])
        msg = on_trigger(rt_sender, bench_params[sender], BENCH_X0[sender], t=0.0)
        on_receive(rt_receiver, bench_params[receiver], msg, BENCH_X0[receiver])
        cached = rt_receiver.neighbor_cache[sender]
        for t in (0.0, 0.25, 0.8):
            reconstructed = estimate_input(
                bench_params[sender], cached.diffs, cached.time, t
            )
            own = estimate_input_self(rt_sender, bench_params[sender], t)
            assert np.abs(reconstructed - own).max() < 1e-12


class TestControlInput:
    def test_consensus_fixed_point(self, bench_params):
        params = bench_params[0]
        rt = fresh_runtime(0, params)
        common = np.array([0.2, 0.4])
        rt.xhat = common.copy()
        neighbor_xhats = {j: common.copy() for j in params.in_neighbors}
        assert np.abs(control_input(rt, params, neighbor_xhats)).max() == 0.0

    def test_two_agent_single_term(self):
        graph = DirectedGraph([[0.0, 1.0], [1.0, 0.0]])
        model = SystemModel([[0.0, 1.0], [-1.0, 0.0]], [[1.0], [1.0]],
                            [[-2.2, -1.1]], graph)
        params = agent_params(model, 0)
        rt = AgentRuntime(agent_id=0, xhat=np.array([1.0, 0.0]),
                          diff_ref=np.zeros(2))
        u = control_input(rt, params, {1: np.array([0.0, 1.0])})
        expected = model.k_mat @ (rt.xhat - np.array([0.0, 1.0]))
        assert np.abs(u - expected).max() < 1e-14

    def test_initial_instant_matches_continuous_protocol(self, bench_model, bench_params):
        # with everyone freshly triggered the applied control coincides with
        # the continuous protocol evaluated on the true initial states
        adj = bench_model.graph.weights
        for i in range(6):
            params = bench_params[i]
            rt = fresh_runtime(i, params)
            neighbor_xhats = {j: BENCH_X0[j].copy() for j in params.in_neighbors}
            got = control_input(rt, params, neighbor_xhats)
            direct = bench_model.k_mat @ sum(
                adj[i, j] * (BENCH_X0[i] - BENCH_X0[j]) for j in range(6)
            )
            assert np.abs(got - direct).max() < 1e-14

    def test_missing_neighbor_detected(self, bench_params):
        params = bench_params[0]
        rt = fresh_runtime(0, params)
        with pytest.raises(KeyError):
            control_input(rt, params, {})
