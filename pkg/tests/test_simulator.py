"""Closed-loop simulator tests.

The per-slot recursion is validated structurally (window law, conservation,
causality), against an independent unthrottled queue reference, against
hand-computed deterministic traces, and against the dioid guarantee that
departures dominate arrivals convolved with the exact equivalent service.
"""

import numpy as np
import pytest

from winflow.algebra import BivariateFunction, convolve
from winflow.bounds import FeedbackParams, ThetaGrid, backlog_bound, per_slot_curve
from winflow.models import (
    DeterministicService,
    ExponentialArrivals,
    ExponentialVbrService,
    LeftoverService,
    MmooService,
)
from winflow.oracle import SamplePath, equivalent_service_closure
from winflow.simulator import (
    SimConfig,
    backlog_quantile,
    empirical_equivalent_mgf,
    run_flow_control,
)


def small_config(**overrides):
    base = dict(
        seed=42,
        total_slots=2000,
        warmup_slots=100,
        arrivals=ExponentialArrivals(0.05),
        service=ExponentialVbrService(1.0),
        feedback=FeedbackParams(w=0.1, d=1),
        replications=1,
    )
    base.update(overrides)
    return SimConfig(**base)


def replay_increments(config, replication=0):
    """Redraw the exact arrival and service increments a run consumed."""
    from winflow.simulator import _replication_rngs

    arrival_rng, service_rng = _replication_rngs(config.seed, replication)
    a = config.arrivals.sample_increments(arrival_rng, config.total_slots, 1)[0]
    c = config.service.sample_increments(service_rng, config.total_slots, 1)[0]
    return a, c


class TestStructuralInvariants:
    @pytest.mark.parametrize("d,w", [(1, 0.1), (3, 0.5), (10, 2.0)])
    def test_window_law_holds_every_slot(self, d, w):
        config = small_config(feedback=FeedbackParams(w=w, d=d))
        run = run_flow_control(config)
        a, _ = replay_increments(config)
        A = np.concatenate(([0.0], np.cumsum(a)))
        T = config.total_slots
        admitted = A[run.checkpoints] - run.backlog[run.checkpoints] + run.queue[run.checkpoints]
        departed = admitted - run.queue[run.checkpoints]
        # window law A'(0,t) = min(A(0,t), D(0,t-d) + w) at full resolution
        full_backlog = run.backlog
        full_queue = run.queue
        full_admitted = A - full_backlog + full_queue
        full_departed = full_admitted - full_queue
        for t in range(1, T + 1):
            ref = full_departed[t - d] if t - d > 0 else 0.0
            assert full_admitted[t] == pytest.approx(min(A[t], ref + w), abs=1e-9)
        assert np.allclose(departed, admitted - run.queue[run.checkpoints])

    def test_conservation_and_causality(self):
        run = run_flow_control(small_config())
        a, _ = replay_increments(small_config())
        A = np.concatenate(([0.0], np.cumsum(a)))
        admitted = A - run.backlog + run.queue
        departed = admitted - run.queue
        assert np.all(run.backlog >= -1e-12)
        assert np.all(run.queue >= -1e-12)
        assert np.all(admitted <= A + 1e-9)
        assert np.all(departed <= admitted + 1e-12)
        assert np.all(np.diff(departed) >= -1e-9)

    def test_network_queue_never_exceeds_window(self):
        for d, w in [(1, 0.1), (5, 0.7)]:
            run = run_flow_control(small_config(feedback=FeedbackParams(w=w, d=d)))
            assert np.max(run.queue) <= w + 1e-9

    def test_checkpoint_values_match_cumulative_processes(self):
        config = small_config(total_slots=300, warmup_slots=10)
        run = run_flow_control(config)
        a, _ = replay_increments(config)
        A = np.concatenate(([0.0], np.cumsum(a)))
        assert np.allclose(run.arrivals_cum, A[run.checkpoints])
        assert np.allclose(
            run.departures_cum, run.arrivals_cum - run.backlog[run.checkpoints]
        )
        assert np.allclose(
            run.admitted_cum, run.departures_cum + run.queue[run.checkpoints]
        )


class TestAgainstReferences:
    def test_huge_window_matches_unthrottled_queue(self):
        config = small_config(
            feedback=FeedbackParams(w=1e9, d=1),
            arrivals=ExponentialArrivals(0.8),
            total_slots=5000,
            warmup_slots=10,
        )
        run = run_flow_control(config)
        a, c = replay_increments(config)
        q = 0.0
        for k in range(config.total_slots):
            q = max(q + a[k] - max(c[k], 0.0), 0.0)
        assert run.backlog[-1] == pytest.approx(q, abs=1e-9)
        assert run.queue[-1] == pytest.approx(q, abs=1e-9)

    def test_deterministic_lossless_trace(self):
        # constant arrivals below the feedback ceiling pass untouched
        config = small_config(
            arrivals=DeterministicService(0.09),
            service=DeterministicService(1.0),
            feedback=FeedbackParams(w=1.0, d=10),
            total_slots=1000,
            warmup_slots=10,
        )
        run = run_flow_control(config)
        assert run.throughput == pytest.approx(0.09, abs=1e-12)
        assert np.max(run.backlog) <= 1.0 + 1e-9

    def test_saturated_deterministic_throughput(self):
        for d in (1, 10, 100):
            config = small_config(
                arrivals=DeterministicService(10.0),
                service=DeterministicService(1.0),
                feedback=FeedbackParams(w=0.1 * d, d=d),
                total_slots=10_000,
                warmup_slots=100,
            )
            run = run_flow_control(config)
            assert run.throughput == pytest.approx(0.1, rel=0.02)

    def test_hand_computed_first_slots(self):
        # a=10 each slot, c=1, w=1, d=10: one window of traffic departs
        # immediately, the next only after the feedback returns
        config = small_config(
            arrivals=DeterministicService(10.0),
            service=DeterministicService(1.0),
            feedback=FeedbackParams(w=1.0, d=10),
            total_slots=40,
            warmup_slots=1,
        )
        run = run_flow_control(config)
        A = 10.0 * run.checkpoints
        admitted = A - run.backlog + run.queue
        departed = admitted - run.queue
        assert departed[1] == pytest.approx(1.0)
        assert departed[10] == pytest.approx(1.0)
        assert departed[11] == pytest.approx(2.0)
        assert departed[20] == pytest.approx(2.0)
        assert departed[21] == pytest.approx(3.0)

    @pytest.mark.parametrize(
        "service",
        [
            ExponentialVbrService(1.0),
            MmooService(p00=0.2, p11=0.9, peak=1.125),
            LeftoverService(DeterministicService(1.0), ExponentialArrivals(0.4)),
        ],
        ids=["exponential", "mmoo", "leftover"],
    )
    def test_departures_dominate_equivalent_service_guarantee(self, service):
        # dynamic-server property: D(0,t) >= (A o S_eq)(0,t) for the exact
        # equivalent service built from the realized service path
        T = 32
        config = small_config(
            service=service,
            arrivals=ExponentialArrivals(0.5),
            feedback=FeedbackParams(w=0.8, d=3),
            total_slots=T,
            warmup_slots=1,
        )
        run = run_flow_control(config)
        a, c = replay_increments(config)
        A = BivariateFunction.from_increments(a, check=False)
        # the physical queue serves the clipped rate; its equivalent service
        # is what the loop guarantees
        s_eq = equivalent_service_closure(
            SamplePath(np.maximum(c, 0.0)), config.feedback
        )
        floor = convolve(A, s_eq)
        arrivals_cum = np.concatenate(([0.0], np.cumsum(a)))
        departed = arrivals_cum - run.backlog
        for t in range(T + 1):
            assert departed[t] >= floor.value(0, t) - 1e-9

    def test_exact_server_identity_for_admitted_traffic(self):
        # with admission before service, departures equal the min-plus
        # convolution of admitted traffic with the clipped service path
        config = small_config(total_slots=64, warmup_slots=1)
        run = run_flow_control(config)
        a, c = replay_increments(config)
        A = np.concatenate(([0.0], np.cumsum(a)))
        admitted_cum = A - run.backlog + run.queue
        admitted = BivariateFunction.from_increments(np.diff(admitted_cum))
        S = BivariateFunction.from_increments(np.maximum(c, 0.0))
        exact = convolve(admitted, S)
        departed = admitted_cum - run.queue
        for t in range(65):
            assert departed[t] == pytest.approx(exact.value(0, t), abs=1e-9)


class TestDeterminism:
    def test_identical_configs_identical_runs(self):
        a = run_flow_control(small_config())
        b = run_flow_control(small_config())
        assert np.array_equal(a.backlog, b.backlog)
        assert np.array_equal(a.queue, b.queue)

    def test_replications_use_disjoint_streams(self):
        config = small_config(replications=3)
        runs = [run_flow_control(config, r) for r in range(3)]
        assert not np.array_equal(runs[0].backlog, runs[1].backlog)
        assert not np.array_equal(runs[1].backlog, runs[2].backlog)

    def test_replication_index_validated(self):
        with pytest.raises(ValueError):
            run_flow_control(small_config(), replication=1)


class TestEmpiricalMgf:
    def test_zero_theta_is_exactly_one(self):
        mean, se = empirical_equivalent_mgf(
            ExponentialVbrService(1.0), FeedbackParams(w=0.5, d=1), 0.0, 10, 200, seed=3
        )
        assert mean == 1.0
        assert se == 0.0

    def test_matches_closed_form_at_delay_one(self):
        model = ExponentialVbrService(1.0)
        fb = FeedbackParams(w=0.5, d=1)
        theta, t, n = 1.0, 20, 100_000
        mean, se = empirical_equivalent_mgf(model, fb, theta, t, n, seed=5)
        exact = model.censored_mgf(-theta, fb.w) ** t
        assert abs(mean - exact) <= 3 * se

    def test_horizon_guard(self):
        with pytest.raises(ValueError, match="t <= 200"):
            empirical_equivalent_mgf(
                ExponentialVbrService(1.0), FeedbackParams(w=0.5, d=1), 1.0, 500, 10, seed=1
            )


class TestBacklogQuantile:
    def test_single_run_quantile_matches_pooled_for_one_replication(self):
        config = small_config(total_slots=150_000, warmup_slots=1_000)
        run = run_flow_control(config)
        assert run.backlog_quantile(1e-3) == backlog_quantile(config, 1e-3)
        with pytest.raises(ValueError):
            run.backlog_quantile(0.0)

    def test_zero_arrivals_give_zero_backlog(self):
        config = small_config(
            arrivals=DeterministicService(0.0),
            total_slots=20_000,
            warmup_slots=100,
        )
        assert backlog_quantile(config, 0.01) == 0.0

    def test_estimability_guard(self):
        with pytest.raises(ValueError, match="estimable"):
            backlog_quantile(small_config(total_slots=500, warmup_slots=10), 1e-6)

    def test_quantile_below_analytic_bound(self):
        config = small_config(
            arrivals=ExponentialArrivals(0.05),
            total_slots=200_000,
            warmup_slots=2_000,
            replications=2,
        )
        quantile = backlog_quantile(config, 1e-3)
        bound = backlog_bound(
            ExponentialArrivals(0.05),
            per_slot_curve(ExponentialVbrService(1.0), config.feedback),
            1e-3,
            ThetaGrid.logspace(),
            4096,
        )
        assert quantile <= bound

    def test_overload_detected_and_quantile_grows(self):
        heavy = dict(arrivals=ExponentialArrivals(0.5), warmup_slots=100)
        short = small_config(total_slots=20_000, **heavy)
        longer = small_config(total_slots=80_000, **heavy)
        q_short = backlog_quantile(short, 0.01)
        q_long = backlog_quantile(longer, 0.01)
        assert q_long > 2.0 * q_short
        run = run_flow_control(longer)
        assert run.backlog_drift() > 2.0


class TestConfigValidation:
    def test_rejects_bad_protocol(self):
        with pytest.raises(ValueError):
            small_config(total_slots=100, warmup_slots=100)
        with pytest.raises(ValueError):
            small_config(replications=0)
        with pytest.raises(ValueError):
            small_config(total_slots=0, warmup_slots=0)
