"""Tests for the solvers: the exact DP, pruning and the OP baseline."""

from __future__ import annotations

import math

import numpy as np
import pytest

from svp import (
    BiPoint,
    Candidate,
    ConfigError,
    CostModel,
    EngineConfig,
    InfeasiblePartitionError,
    TimeSeries,
    ValidityTest,
    cost,
    dp_step,
    lex_min,
    op_pelt_run,
    prune_candidates,
    segmentation_is_valid,
    svp_run,
)

from oracles import brute_force_op, brute_force_svp


def gaussian_config(test, **kwargs):
    return EngineConfig(cost=CostModel("gaussian"), test=test, **kwargs)


def random_series(rng, n, changes=0, jump=2.0):
    values = rng.normal(size=n)
    for c in range(changes):
        at = int((c + 1) * n / (changes + 1))
        values[at:] += jump * (1 if c % 2 == 0 else -1)
    return values


class TestSvpRunExamples:
    def test_toy_step_series(self):
        ts = TimeSeries.from_values([0.0, 0.0, 10.0, 10.0])
        result = svp_run(ts, gaussian_config(ValidityTest("range", gamma=1.0)))
        assert result.table.r[-1] == BiPoint(2, 0.0)
        assert result.segmentation.boundaries == (0, 2, 4)

    @pytest.mark.parametrize("n", [1, 2, 7, 30])
    @pytest.mark.parametrize(
        "test",
        [
            ValidityTest("range", gamma=0.0),
            ValidityTest("glr_gaussian_focus", gamma=0.0, sticky=True),
            ValidityTest("mood", gamma=0.0),
        ],
    )
    def test_constant_series_single_segment(self, n, test):
        ts = TimeSeries.from_values([4.5] * n)
        result = svp_run(ts, gaussian_config(test))
        assert result.table.r[-1] == BiPoint(1, 0.0)
        assert result.segmentation.boundaries == (0, n)

    @pytest.mark.parametrize("n", [2, 7, 30])
    def test_constant_series_wilcoxon_tie_convention(self, n):
        # ties count as <=, so a constant window scores u*(n-u)/2; the
        # single-segment answer needs gamma at least n^2/8
        ts = TimeSeries.from_values([4.5] * n)
        roomy = svp_run(ts, gaussian_config(ValidityTest("wilcoxon", gamma=n * n / 8.0)))
        assert roomy.segmentation.boundaries == (0, n)
        if n >= 7:
            tight = svp_run(ts, gaussian_config(ValidityTest("wilcoxon", gamma=1.0)))
            assert tight.segmentation.k > 1

    def test_small_gaussian_against_enumeration(self):
        # 50 seeds at the scale threshold 2 log 10, all 2^9 partitions
        rng = np.random.default_rng(123)
        gamma = 2.0 * math.log(10)
        test = ValidityTest("glr_gaussian_focus", gamma=gamma, sticky=True)
        for _ in range(50):
            values = rng.normal(size=10)
            ts = TimeSeries.from_values(values)
            result = svp_run(ts, gaussian_config(test))
            (k, q), _ = brute_force_svp(values.tolist(), "gaussian", test.kind, gamma, True)
            r_n = result.table.r[-1]
            assert r_n.k == k
            assert r_n.q == pytest.approx(q, rel=1e-9, abs=1e-12)

    def test_infeasible_with_negative_gamma(self):
        ts = TimeSeries.from_values([1.0, 2.0])
        with pytest.raises(InfeasiblePartitionError):
            svp_run(ts, gaussian_config(ValidityTest("range", gamma=-1.0)))

    def test_min_seg_len_respected(self):
        rng = np.random.default_rng(5)
        values = random_series(rng, 24, changes=1)
        ts = TimeSeries.from_values(values)
        test = ValidityTest("glr_gaussian_focus", gamma=4.0, sticky=True)
        for min_len in (1, 2, 4):
            result = svp_run(ts, gaussian_config(test, min_seg_len=min_len))
            assert all(b - a >= min_len for a, b in result.segmentation.segments())

    def test_min_seg_len_matches_enumeration(self):
        rng = np.random.default_rng(6)
        gamma = 4.5
        test = ValidityTest("range", gamma=gamma)
        feasible = infeasible = 0
        for _ in range(12):
            values = np.round(random_series(rng, 9, changes=1), 3)
            ts = TimeSeries.from_values(values)
            (k, q), _ = brute_force_svp(
                values.tolist(), "gaussian", "range", gamma, False, min_seg_len=3
            )
            try:
                result = svp_run(ts, gaussian_config(test, min_seg_len=3))
            except InfeasiblePartitionError:
                assert k == math.inf
                infeasible += 1
                continue
            feasible += 1
            assert result.table.r[-1].k == k
            assert result.table.r[-1].q == pytest.approx(q, rel=1e-9, abs=1e-12)
        assert feasible > 0

    def test_every_returned_segment_valid(self):
        rng = np.random.default_rng(7)
        for kind, sticky, gamma in [
            ("range", False, 2.0),
            ("glr_gaussian_focus", True, 3.0),
            ("wilcoxon", True, 6.0),
            ("mood", False, 5.0),
        ]:
            values = random_series(rng, 60, changes=2)
            ts = TimeSeries.from_values(values)
            test = ValidityTest(kind, gamma=gamma, sticky=sticky)
            result = svp_run(ts, gaussian_config(test))
            assert segmentation_is_valid(ts, result.segmentation, test)

    def test_stat_trace_reports_evaluations(self):
        rng = np.random.default_rng(8)
        ts = TimeSeries.from_values(random_series(rng, 30, changes=1))
        records = []
        test = ValidityTest("glr_gaussian_focus", gamma=3.0, sticky=True)
        svp_run(ts, gaussian_config(test), stat_trace=lambda s, t, v: records.append((s, t, v)))
        assert records
        assert all(0 <= s < t <= 30 for s, t, _ in records)


class TestDpStep:
    def _candidate(self, s, k, q, test, series, t, valid=True):
        c = Candidate(s, BiPoint(k, q), test.new_state(s))
        for i in range(s, t):
            c.state.feed(float(series.values[i]))
        if not valid:
            assert not c.state.is_valid
        return c

    def test_lower_group_wins_regardless_of_cost(self):
        ts = TimeSeries.from_values([0.0, 0.0, 0.0])
        test = ValidityTest("range", gamma=10.0)
        config = gaussian_config(test)
        candidates = [
            self._candidate(0, 0, 0.0, test, ts, 3),
            self._candidate(1, 1, -5.0, test, ts, 3),
        ]
        r, s = dp_step(3, candidates, ts, config)
        assert r.k == 1 and s == 0

    def test_q_minimum_within_group_skips_invalid(self):
        # candidate 0 invalid; candidates 1 and 2 share the group
        ts = TimeSeries.from_values([0.0, 9.0, 9.2, 9.1])
        test = ValidityTest("range", gamma=1.0)
        config = gaussian_config(test)
        candidates = [
            self._candidate(0, 1, 0.0, test, ts, 4, valid=False),
            self._candidate(1, 1, 7.0, test, ts, 4),
            self._candidate(2, 1, 3.0, test, ts, 4),
        ]
        r, s = dp_step(4, candidates, ts, config)
        assert s == 2
        assert r.k == 2
        assert r.q == pytest.approx(3.0 + cost(ts, 2, 4, config.cost))

    def test_tie_breaks_to_latest_start(self):
        ts = TimeSeries.from_values([1.0, 1.0, 1.0, 1.0])
        test = ValidityTest("range", gamma=5.0)
        config = gaussian_config(test)
        candidates = [
            self._candidate(1, 1, 2.0, test, ts, 4),
            self._candidate(2, 1, 2.0, test, ts, 4),
        ]
        r, s = dp_step(4, candidates, ts, config)
        assert s == 2

    def test_agrees_with_ungrouped_lex_min(self):
        rng = np.random.default_rng(9)
        test = ValidityTest("range", gamma=2.2)
        config = gaussian_config(test)
        for _ in range(30):
            n = int(rng.integers(4, 16))
            values = random_series(rng, n, changes=int(rng.integers(0, 2)))
            ts = TimeSeries.from_values(values)
            t = n
            candidates = []
            for s in range(t):
                k = int(rng.integers(0, 3))
                q = round(float(rng.uniform(0, 4)), 3)
                candidates.append(self._candidate(s, k, q, test, ts, t))
            got_r, got_s = dp_step(t, candidates, ts, config)
            pool = [
                c.r_s.extend(cost(ts, c.s, t, config.cost))
                for c in candidates
                if c.state.is_valid
            ]
            assert got_r == lex_min(pool)

    def test_empty_candidate_set_returns_infinite(self):
        ts = TimeSeries.from_values([1.0, 2.0])
        config = gaussian_config(ValidityTest("range", gamma=1.0))
        r, _ = dp_step(2, [], ts, config)
        assert not r.is_finite


class TestPruneCandidates:
    def test_tripped_candidate_removed(self):
        ts = TimeSeries.from_values([0.0, 10.0, 0.0])
        test = ValidityTest("glr_gaussian_focus", gamma=1.0, sticky=True)
        config = gaussian_config(test)
        c = Candidate(0, BiPoint(0, 0.0), test.new_state(0))
        for v in ts.values:
            c.state.feed(float(v))
        assert c.state.tripped
        kept = prune_candidates([c], 3, BiPoint(2, 1.0), ts, config)
        assert kept == []

    def test_pelt_inequality_removes_dominated(self):
        ts = TimeSeries.from_values([0.0, 0.0, 5.0, 5.0])
        test = ValidityTest("range", gamma=20.0)
        config = gaussian_config(test, pruning=frozenset({"sticky_validity", "pelt_rule"}))
        dominated = Candidate(1, BiPoint(2, 15.0 - cost(ts, 1, 4, config.cost)), test.new_state(1))
        survivor = Candidate(2, BiPoint(2, 1.0), test.new_state(2))
        for c in (dominated, survivor):
            for i in range(c.s, 4):
                c.state.feed(float(ts.values[i]))
        kept = prune_candidates([dominated, survivor], 4, BiPoint(2, 12.0), ts, config)
        assert kept == [survivor]

    def test_pelt_rule_requires_qualifying_cost(self):
        with pytest.raises(ConfigError):
            EngineConfig(
                cost=CostModel("quantile", x=0.0),
                test=ValidityTest("range", gamma=1.0),
                pruning=frozenset({"pelt_rule"}),
            )

    @pytest.mark.parametrize("sticky", [False, True])
    def test_pelt_rule_requires_left_extension_stability(self, sticky):
        # sticky wrapping is not enough: a pruned start can become the
        # optimum later once the start that dominated it trips
        with pytest.raises(ConfigError):
            EngineConfig(
                cost=CostModel("gaussian"),
                test=ValidityTest("glr_gaussian_focus", gamma=1.0, sticky=sticky),
                pruning=frozenset({"pelt_rule"}),
            )


class TestPruningDifferential:
    @pytest.mark.parametrize(
        "kind,sticky,gamma,cost_kind,rules",
        [
            ("range", False, 2.5, "gaussian", ("sticky_validity", "pelt_rule")),
            ("range", False, 3.5, "mad", ("sticky_validity", "pelt_rule")),
            ("glr_gaussian_focus", True, 4.0, "gaussian", ("sticky_validity",)),
            ("wilcoxon", True, 8.0, "mad", ("sticky_validity",)),
        ],
    )
    def test_maximal_pruning_matches_reference(self, kind, sticky, gamma, cost_kind, rules):
        rng = np.random.default_rng(11)
        test = ValidityTest(kind, gamma=gamma, sticky=sticky)
        for _ in range(12):
            n = int(rng.integers(20, 60))
            values = random_series(rng, n, changes=int(rng.integers(0, 3)))
            ts = TimeSeries.from_values(values)
            pruned = svp_run(
                ts,
                EngineConfig(cost=CostModel(cost_kind), test=test, pruning=frozenset(rules)),
            )
            reference = svp_run(
                ts, EngineConfig(cost=CostModel(cost_kind), test=test, pruning=frozenset())
            )
            assert pruned.segmentation == reference.segmentation
            assert pruned.table.r == reference.table.r
            assert pruned.table.s == reference.table.s

    def test_pelt_rule_with_sticky_glr_changes_outputs(self):
        # the concrete reason the combination is rejected: replaying it via
        # the internal runner on random step data eventually disagrees with
        # the reference, because the rule's proof needs left-extension
        # stability that sticky wrapping lacks
        from types import SimpleNamespace

        from svp.engine import _run_lazy

        rng = np.random.default_rng(99)
        test = ValidityTest("glr_gaussian_focus", gamma=4.0, sticky=True)
        disagreements = 0
        for index in range(60):
            n = int(rng.integers(30, 201))
            values = rng.normal(size=n)
            if index % 3 != 0:
                values[n // 2 :] += 2.5
            ts = TimeSeries.from_values(values)
            forced = SimpleNamespace(
                cost=CostModel("mad"),
                test=test,
                min_seg_len=1,
                pruning=frozenset({"sticky_validity", "pelt_rule"}),
            )
            r_forced, _ = _run_lazy(ts, forced, None)
            reference = svp_run(
                ts, EngineConfig(cost=CostModel("mad"), test=test, pruning=frozenset())
            )
            if tuple(r_forced) != reference.table.r:
                disagreements += 1
        assert disagreements > 0


class TestMonotonicity:
    def test_k_non_decreasing_for_stable_tests(self):
        rng = np.random.default_rng(12)
        for kind, sticky in [("range", False), ("glr_gaussian_focus", True), ("wilcoxon", True)]:
            for _ in range(6):
                values = random_series(rng, 80, changes=2)
                ts = TimeSeries.from_values(values)
                test = ValidityTest(kind, gamma=3.0 if kind != "wilcoxon" else 20.0, sticky=sticky)
                table, _ = svp_run(ts, gaussian_config(test))
                ks = [bp.k for bp in table.r]
                assert all(a <= b for a, b in zip(ks, ks[1:]))

    def test_gamma_monotonicity(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            values = random_series(rng, 60, changes=1)
            ts = TimeSeries.from_values(values)
            ks = []
            for gamma in (0.8, 2.0, 5.0, 12.0):
                test = ValidityTest("glr_gaussian_focus", gamma=gamma, sticky=True)
                ks.append(svp_run(ts, gaussian_config(test)).segmentation.k)
            assert all(a >= b for a, b in zip(ks, ks[1:]))


class TestOpPelt:
    def test_constant_series_one_segment(self):
        ts = TimeSeries.from_values([2.0] * 25)
        total, seg = op_pelt_run(ts, CostModel("gaussian"), penalty=1.0)
        assert seg.boundaries == (0, 25)
        assert total == pytest.approx(1.0)

    def test_step_series_finds_the_change(self):
        ts = TimeSeries.from_values([0.0] * 20 + [5.0] * 20)
        penalty = 2.0 * math.log(40)
        total, seg = op_pelt_run(ts, CostModel("gaussian"), penalty)
        assert seg.boundaries == (0, 20, 40)
        unpruned_total, unpruned_seg = op_pelt_run(ts, CostModel("gaussian"), penalty, prune=False)
        assert seg == unpruned_seg
        assert total == unpruned_total

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            n = int(rng.integers(5, 12))
            values = np.round(random_series(rng, n, changes=int(rng.integers(0, 2))), 3)
            ts = TimeSeries.from_values(values)
            penalty = float(rng.uniform(0.5, 4.0))
            total, seg = op_pelt_run(ts, CostModel("gaussian"), penalty)
            want_total, _ = brute_force_op(values.tolist(), "gaussian", penalty)
            assert total == pytest.approx(want_total, rel=1e-9, abs=1e-12)
            recomputed = sum(cost(ts, a, b, CostModel("gaussian")) for a, b in seg.segments())
            assert total == pytest.approx(recomputed + penalty * seg.k, rel=1e-9, abs=1e-9)

    def test_pruned_equals_unpruned_on_random_series(self):
        rng = np.random.default_rng(15)
        for _ in range(10):
            values = random_series(rng, 120, changes=int(rng.integers(0, 4)))
            ts = TimeSeries.from_values(values)
            penalty = 2.0 * math.log(120)
            pruned = op_pelt_run(ts, CostModel("gaussian"), penalty)
            unpruned = op_pelt_run(ts, CostModel("gaussian"), penalty, prune=False)
            assert pruned == unpruned

    def test_svp_never_uses_more_segments_prop2(self):
        rng = np.random.default_rng(16)
        for _ in range(15):
            n = 120
            values = random_series(rng, n, changes=int(rng.integers(0, 3)))
            ts = TimeSeries.from_values(values)
            gamma = 2.0 * math.log(n)
            test = ValidityTest("glr_gaussian_focus", gamma=gamma, sticky=False)
            k_svp = svp_run(ts, gaussian_config(test)).segmentation.k
            k_op = op_pelt_run(ts, CostModel("gaussian"), gamma)[1].k
            assert k_svp <= k_op
