import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cleval.metrics import (
    EvalRecord,
    MetricState,
    acc_final,
    oracle_wf_wp,
    wc_acc,
)

traces = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=120)


def feed(trace, window_sizes=(10,), minacc_range="post_learned"):
    state = MetricState(window_sizes=window_sizes, minacc_range=minacc_range)
    state.add_task(1)
    for i, acc in enumerate(trace, start=1):
        state.update(EvalRecord(t=i, task=1, accuracy=float(acc), n_samples=1))
    return state


def pair_scan(trace, w):
    """Literal all-pairs reference, independent of oracle_wf_wp's slicing."""
    wf = wp = 0.0
    for m in range(len(trace)):
        for n in range(m + 1, min(len(trace), m + w)):
            wf = max(wf, trace[m] - trace[n])
            wp = max(wp, trace[n] - trace[m])
    return wf, wp


class TestWindowedUpdate:
    def test_constant_trace_has_no_drop_or_rise(self):
        state = feed([0.8, 0.8, 0.8], window_sizes=(3,))
        assert state.aggregate_wf_wp(3) == (0.0, 0.0)

    def test_frozen_window3_example(self):
        # brute force over pairs (m, n), n - m <= 2: drop 0.8->0.2, rise 0.4->0.8
        trace = [0.9, 0.4, 0.6, 0.8, 0.2]
        assert pair_scan(trace, 3) == (pytest.approx(0.6), pytest.approx(0.4))
        state = feed(trace, window_sizes=(3,))
        wf, wp = state.aggregate_wf_wp(3)
        assert wf == pytest.approx(0.6, abs=1e-15)
        assert wp == pytest.approx(0.4, abs=1e-15)

    def test_full_window_equals_max_drawdown(self):
        rng = np.random.default_rng(0)
        trace = rng.random(80)
        w = len(trace)
        state = feed(trace, window_sizes=(w,))
        assert state.aggregate_wf_wp(w) == pair_scan(trace, w)

    def test_non_increasing_t_rejected(self):
        state = MetricState(window_sizes=(5,))
        state.add_task(1)
        state.update(EvalRecord(t=5, task=1, accuracy=0.5, n_samples=1))
        with pytest.raises(ValueError, match="strictly increasing"):
            state.update(EvalRecord(t=5, task=1, accuracy=0.6, n_samples=1))

    def test_queue_length_bounded_by_w_minus_1(self):
        w = 7
        state = feed(np.random.default_rng(1).random(200), window_sizes=(w,))
        lens = state.trackers[1].queue_lengths(w)
        assert max(lens) <= w - 1

    @given(trace=traces, w=st.sampled_from([2, 3, 10, 50]))
    @settings(max_examples=150, deadline=None)
    def test_streaming_equals_oracle(self, trace, w):
        state = feed(trace, window_sizes=(w,))
        streamed = state.aggregate_wf_wp(w)
        expected = oracle_wf_wp(trace, w)
        assert streamed[0] == pytest.approx(expected[0], abs=1e-12)
        assert streamed[1] == pytest.approx(expected[1], abs=1e-12)

    @given(trace=traces, w=st.sampled_from([2, 5, 20]))
    @settings(max_examples=80, deadline=None)
    def test_wf_wp_nondecreasing_over_time(self, trace, w):
        state = MetricState(window_sizes=(w,))
        state.add_task(1)
        prev = (0.0, 0.0)
        for i, acc in enumerate(trace, start=1):
            state.update(EvalRecord(t=i, task=1, accuracy=float(acc), n_samples=1))
            cur = state.aggregate_wf_wp(w)
            assert cur[0] >= prev[0] and cur[1] >= prev[1]
            prev = cur

    @given(trace=traces)
    @settings(max_examples=80, deadline=None)
    def test_values_stay_in_unit_interval(self, trace):
        state = feed(trace, window_sizes=(4,))
        wf, wp = state.aggregate_wf_wp(4)
        assert 0.0 <= wf <= 1.0 and 0.0 <= wp <= 1.0


class TestOracle:
    def test_strictly_increasing_trace_has_zero_wf(self):
        wf, wp = oracle_wf_wp([0.1, 0.2, 0.5, 0.9], 4)
        assert wf == 0.0 and wp == pytest.approx(0.8)

    @given(trace=traces, w=st.sampled_from([2, 4, 30]))
    @settings(max_examples=100, deadline=None)
    def test_reversal_symmetry(self, trace, w):
        wf, wp = oracle_wf_wp(trace, w)
        rwf, rwp = oracle_wf_wp(trace[::-1], w)
        assert wp == pytest.approx(rwf, abs=1e-15)
        assert wf == pytest.approx(rwp, abs=1e-15)

    @given(trace=traces, w1=st.integers(2, 20), w2=st.integers(2, 20))
    @settings(max_examples=100, deadline=None)
    def test_window_monotonicity(self, trace, w1, w2):
        if w1 > w2:
            w1, w2 = w2, w1
        wf1, wp1 = oracle_wf_wp(trace, w1)
        wf2, wp2 = oracle_wf_wp(trace, w2)
        assert wf1 <= wf2 + 1e-15 and wp1 <= wp2 + 1e-15

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            oracle_wf_wp([], 3)


class TestMinAcc:
    def build(self, minacc_range="post_learned"):
        state = MetricState(window_sizes=(10,), minacc_range=minacc_range)
        return state

    def test_frozen_two_task_example(self):
        # E1 post-learning 0.9, 0.5, 0.7 and E2 post-learning 0.8, 0.6 -> 0.55
        state = self.build()
        state.add_task(1, prev_boundary=0)
        state.update(EvalRecord(t=10, task=1, accuracy=0.95, n_samples=1))
        state.mark_learned(1, t=10, accuracy=0.95)
        t = 10
        for acc in (0.9, 0.5, 0.7):
            t += 1
            state.update(EvalRecord(t=t, task=1, accuracy=acc, n_samples=1))
        state.add_task(2, prev_boundary=10)
        state.update(EvalRecord(t=20, task=2, accuracy=0.85, n_samples=1))
        state.mark_learned(2, t=20, accuracy=0.85)
        t = 20
        for acc in (0.8, 0.6):
            t += 1
            state.update(EvalRecord(t=t, task=2, accuracy=acc, n_samples=1))
        assert state.min_acc(3) == pytest.approx((0.5 + 0.6) / 2)

    def test_absent_for_first_task(self):
        state = self.build()
        state.add_task(1)
        state.update(EvalRecord(t=1, task=1, accuracy=0.4, n_samples=1))
        assert state.min_acc(1) is None

    def test_nondecreasing_post_learning_trace_gives_first_value(self):
        state = self.build()
        state.add_task(1)
        state.mark_learned(1, t=5, accuracy=0.6)
        for i, acc in enumerate((0.6, 0.7, 0.9), start=6):
            state.update(EvalRecord(t=i, task=1, accuracy=acc, n_samples=1))
        assert state.min_acc(2) == pytest.approx(0.6)

    def test_boundary_record_excluded_under_post_learned_range(self):
        # the accuracy measured exactly at |T_1| starts the range, it is not in it
        state = self.build()
        state.add_task(1)
        state.update(EvalRecord(t=5, task=1, accuracy=0.2, n_samples=1))
        state.mark_learned(1, t=5, accuracy=0.2)
        state.update(EvalRecord(t=6, task=1, accuracy=0.9, n_samples=1))
        assert state.min_acc(2) == pytest.approx(0.9)

    def test_eq2_literal_range_includes_own_training(self):
        state = self.build(minacc_range="eq2_literal")
        state.add_task(1, prev_boundary=0)
        state.update(EvalRecord(t=2, task=1, accuracy=0.1, n_samples=1))  # during training
        state.update(EvalRecord(t=5, task=1, accuracy=0.8, n_samples=1))
        state.mark_learned(1, t=5, accuracy=0.8)
        assert state.min_acc(2) == pytest.approx(0.1)

    def test_running_min_is_nonincreasing(self):
        state = self.build()
        state.add_task(1)
        state.mark_learned(1, t=1, accuracy=0.9)
        prev = 1.0
        rng = np.random.default_rng(2)
        for i, acc in enumerate(rng.random(50), start=2):
            state.update(EvalRecord(t=i, task=1, accuracy=float(acc), n_samples=1))
            cur = state.trackers[1].running_min
            assert cur <= prev
            prev = cur


class TestAggregates:
    def test_wc_acc_examples(self):
        assert wc_acc(0.6, 0.3, 3) == pytest.approx(0.4)
        assert wc_acc(0.75, None, 1) == pytest.approx(0.75)
        for k in (1, 2, 5):
            assert wc_acc(0.37, 0.37 if k > 1 else None, k) == pytest.approx(0.37)

    def test_wc_acc_requires_min_acc_for_later_tasks(self):
        with pytest.raises(ValueError):
            wc_acc(0.5, None, 2)

    def test_acc_final(self):
        assert acc_final({1: 0.9, 2: 0.7}, 2) == pytest.approx(0.8)
        assert acc_final({1: 0.42}, 1) == pytest.approx(0.42)
        with pytest.raises(ValueError, match="missing"):
            acc_final({1: 0.9}, 2)

    def test_forg_examples(self):
        state = MetricState(window_sizes=(10,))
        state.add_task(1)
        state.update(EvalRecord(t=1, task=1, accuracy=0.9, n_samples=1))
        state.mark_learned(1, t=1, accuracy=0.9)
        assert state.forg(2, {1: 0.7}) == pytest.approx(0.2)
        assert state.forg(2, {1: 0.9}) == pytest.approx(0.0)
        assert state.forg(1, {}) is None

    def test_negative_forg_means_transfer(self):
        state = MetricState(window_sizes=(10,))
        state.add_task(1)
        state.update(EvalRecord(t=1, task=1, accuracy=0.6, n_samples=1))
        state.mark_learned(1, t=1, accuracy=0.6)
        assert state.forg(2, {1: 0.8}) == pytest.approx(-0.2)

    def test_aggregate_mean_and_dilution(self):
        state = MetricState(window_sizes=(3,))
        state.add_task(1)
        for i, acc in enumerate((0.9, 0.3), start=1):  # drop 0.6
            state.update(EvalRecord(t=i, task=1, accuracy=acc, n_samples=1))
        assert state.aggregate_wf_wp(3)[0] == pytest.approx(0.6)
        state.add_task(2)
        state.update(EvalRecord(t=3, task=2, accuracy=0.5, n_samples=1))
        assert state.aggregate_wf_wp(3)[0] == pytest.approx(0.3)

    def test_single_task_aggregate_equals_per_task(self):
        state = feed([0.9, 0.2, 0.4], window_sizes=(3,))
        assert state.aggregate_wf_wp(3)[0] == state.trackers[1].wf(3)


class TestRecordValidation:
    def test_accuracy_range(self):
        with pytest.raises(ValueError):
            EvalRecord(t=1, task=1, accuracy=1.5, n_samples=1)

    def test_positive_sample_count(self):
        with pytest.raises(ValueError):
            EvalRecord(t=1, task=1, accuracy=0.5, n_samples=0)

    def test_duplicate_task_registration(self):
        state = MetricState()
        state.add_task(1)
        with pytest.raises(ValueError):
            state.add_task(1)
