import math

import numpy as np
import pytest

import techswitch as ts
from techswitch.diffusion import NormalBuffer
from techswitch.strategy import (ABSORBED, HORIZON_REACHED, IMPULSE_CAP_HIT,
                                 ContinueUntil, ImpulseNow)


class TestNextAction:
    def test_no_impulse_continues_forever(self, bounded_spec):
        act = ts.next_action(ts.NoImpulse(), (0, 0.0), 3.0, bounded_spec)
        assert isinstance(act, ContinueUntil)
        assert act.time == math.inf

    def test_cadence_waits_until_next_multiple(self, bounded_spec):
        strat = ts.FixedCadence(1.0, 0.2)
        act = ts.next_action(strat, (0, 0.0), 0.5, bounded_spec)
        assert isinstance(act, ContinueUntil)
        assert act.time == pytest.approx(1.0)

    def test_cadence_fires_on_the_multiple(self, bounded_spec):
        strat = ts.FixedCadence(1.0, 0.2)
        act = ts.next_action(strat, (0, 0.7), 2.0, bounded_spec)
        assert isinstance(act, ImpulseNow)
        assert act.target == 1       # swap row is degenerate
        assert act.mean == 0.2

    def test_cadence_does_not_fire_at_time_zero(self, bounded_spec):
        act = ts.next_action(ts.FixedCadence(1.0, 0.2), (0, 0.0), 0.0,
                             bounded_spec)
        assert isinstance(act, ContinueUntil)

    def test_hitting_with_empty_region_continues(self, bounded_spec,
                                                 small_solution):
        fields, _ = small_solution
        empty = ts.Region(((), ()), 1e-6, fields.grid.x_lo, fields.grid.x_hi)
        strat = ts.OptimalHitting(empty, fields)
        act = ts.next_action(strat, (0, 0.0), 0.0, bounded_spec)
        assert isinstance(act, ContinueUntil)
        assert act.time == math.inf

    def test_hitting_inside_region_impulses_now(self, bounded_spec,
                                                small_solution):
        fields, region = small_solution
        lo, hi = region.intervals[0][0]
        x = 0.5 * (lo + hi)
        strat = ts.OptimalHitting(region, fields)
        act = ts.next_action(strat, (0, x), 1.0, bounded_spec)
        assert isinstance(act, ImpulseNow)
        k = fields.grid.nearest_index(x)
        assert act.target == int(fields.argmax_j[0, k])
        assert act.mean == float(fields.argmax_m[0, k])

    def test_hitting_in_continuation_waits_for_region(self, bounded_spec,
                                                      small_solution):
        fields, region = small_solution
        hi = region.intervals[0][0][1]
        strat = ts.OptimalHitting(region, fields)
        act = ts.next_action(strat, (0, hi + 0.5), 1.0, bounded_spec)
        assert isinstance(act, ContinueUntil)
        assert act.region is region

    def test_state_outside_grid_rejected(self, bounded_spec, small_solution):
        fields, region = small_solution
        strat = ts.OptimalHitting(region, fields)
        with pytest.raises(ts.StateOutOfGrid):
            ts.next_action(strat, (0, fields.grid.x_hi + 1.0), 0.0,
                           bounded_spec)


class TestApplyImpulse:
    def test_dirac_leaves_state_and_stream_untouched(self, bounded_spec):
        buf = NormalBuffer(ts.RngStream(5, 5))
        state = ts.apply_impulse((0, 0.4), 0, 0.0, buf, bounded_spec,
                                 dirac=True)
        assert state == (0, 0.4)
        assert buf.one() == ts.RngStream(5, 5).generator().standard_normal(1)[0]
        assert ts.eval_cost(bounded_spec, 0, 0.4, *state) == 0.0

    def test_gaussian_jump_formula(self, bounded_spec):
        z = ts.RngStream(8, 1).generator().standard_normal(1)[0]
        j, y = ts.apply_impulse((0, 0.0), 1, 2.0, ts.RngStream(8, 1),
                                bounded_spec)
        assert j == 1
        assert y == pytest.approx(2.0 + z, abs=1e-15)

    def test_unreachable_regime_rejected(self, bounded_spec):
        with pytest.raises(ts.UnreachableRegime):
            ts.apply_impulse((0, 0.0), 0, 0.0, ts.RngStream(1, 1),
                             bounded_spec)

    def test_jump_mean_law_of_large_numbers(self, bounded_spec):
        n = 100_000
        buf = NormalBuffer(ts.RngStream(123, 0))
        ys = np.array([ts.apply_impulse((0, 0.0), 1, 0.7, buf,
                                        bounded_spec)[1] for _ in range(n)])
        assert abs(ys.mean() - 0.7) <= 3.0 / math.sqrt(n)


class TestRunEpisode:
    def test_no_impulse_trace(self, bounded_spec):
        tr = ts.run_episode(ts.NoImpulse(), (0, 0.0), 5.0, 0.01,
                            ts.RngStream(4, 0), bounded_spec)
        assert tr.impulses == []
        assert tr.total_cost == 0.0
        assert tr.gain == tr.total_profit
        assert tr.stopped_reason == HORIZON_REACHED

    def test_dirac_impulses_match_no_impulse_pathwise(self, bounded_spec):
        for pid in range(5):
            a = ts.run_episode(ts.NoImpulse(), (0, 0.0), 10.0, 0.01,
                               ts.RngStream(9, pid), bounded_spec)
            b = ts.run_episode(ts.FixedCadence(1.0, 0.0, dirac=True),
                               (0, 0.0), 10.0, 0.01, ts.RngStream(9, pid),
                               bounded_spec)
            assert b.total_cost == 0.0
            assert b.gain == pytest.approx(a.gain, abs=1e-10)
            assert b.final_state[1] == pytest.approx(a.final_state[1],
                                                     abs=1e-12)

    def test_gain_accounting_identity(self, bounded_spec, small_solution):
        fields, region = small_solution
        strategies = [
            ts.NoImpulse(),
            ts.FixedCadence(0.7, 0.3),
            ts.OptimalHitting(region, fields),
        ]
        for strat in strategies:
            tr = ts.run_episode(strat, (0, 0.2), 8.0, 0.01,
                                ts.RngStream(31, 2), bounded_spec)
            assert tr.gain == tr.total_profit - tr.total_cost
            assert tr.total_cost >= 0.0

    def test_impulse_times_strictly_increase_and_respect_cap(self,
                                                             bounded_spec,
                                                             small_solution):
        fields, region = small_solution
        strat = ts.OptimalHitting(region, fields, max_impulses=3)
        lo, hi = region.intervals[0][0]
        tr = ts.run_episode(strat, (0, lo + 0.1), 20.0, 0.01,
                            ts.RngStream(17, 5), bounded_spec)
        taus = [imp.tau for imp in tr.impulses]
        assert all(b > a for a, b in zip(taus, taus[1:]))
        assert tr.n_impulses <= 3
        if tr.n_impulses == 3 and tr.stopped_reason != ABSORBED:
            assert tr.stopped_reason == IMPULSE_CAP_HIT

    def test_cadence_cap(self, bounded_spec):
        strat = ts.FixedCadence(1.0, 0.3, max_impulses=4)
        tr = ts.run_episode(strat, (0, 0.0), 20.0, 0.01,
                            ts.RngStream(2, 0), bounded_spec)
        assert tr.n_impulses == 4
        assert tr.stopped_reason == IMPULSE_CAP_HIT

    def test_cadence_impulses_on_multiples(self, bounded_spec):
        tr = ts.run_episode(ts.FixedCadence(1.0, 0.3), (0, 0.0), 5.5, 0.01,
                            ts.RngStream(2, 1), bounded_spec)
        taus = [imp.tau for imp in tr.impulses]
        np.testing.assert_allclose(taus, [1, 2, 3, 4, 5], atol=1e-9)

    def test_hitting_impulses_start_inside_region(self, bounded_spec,
                                                  small_solution):
        fields, region = small_solution
        strat = ts.OptimalHitting(region, fields)
        tr = ts.run_episode(strat, (0, 1.5), 30.0, 0.01,
                            ts.RngStream(13, 3), bounded_spec,
                            keep_segments=True)
        for imp in tr.impulses:
            i, x = imp.from_state
            assert region.contains(i, x)
        # inter-impulse segments stay in the continuation set except the
        # final (crossing) point
        for seg in tr.segments:
            if seg.exit.kind == "region_hit":
                body = seg.values[1:-1]
                inside = region.contains_many(seg.regime, body)
                assert not inside.any()
                assert region.contains(seg.regime, seg.values[-1])
                assert not region.contains(seg.regime, seg.exit.x_before)

    def test_start_inside_region_impulses_immediately(self, bounded_spec,
                                                      small_solution):
        fields, region = small_solution
        lo, hi = region.intervals[0][0]
        strat = ts.OptimalHitting(region, fields)
        tr = ts.run_episode(strat, (0, 0.5 * (lo + hi)), 10.0, 0.01,
                            ts.RngStream(19, 7), bounded_spec)
        assert tr.n_impulses >= 1
        assert tr.impulses[0].tau == 0.0

    def test_two_consecutive_landings_inside_region_absorb(self,
                                                           bounded_spec,
                                                           small_solution):
        fields, region = small_solution
        strat = ts.OptimalHitting(region, fields)
        lo, _ = region.intervals[0][0]
        absorbed = []
        for pid in range(40):
            tr = ts.run_episode(strat, (0, lo + 0.2), 10.0, 0.02,
                                ts.RngStream(23, pid), bounded_spec)
            if tr.stopped_reason == ABSORBED:
                absorbed.append(tr)
        assert absorbed, "deep starts should absorb for some paths"
        assert all(tr.n_impulses >= 1 for tr in absorbed)
        # absorption by repeat landings: both final jumps land inside the
        # impulse set, exactly one monitoring step apart, nothing after
        repeats = [tr for tr in absorbed if tr.n_impulses >= 2
                   and region.contains(*tr.impulses[-1].to_state)
                   and region.contains(*tr.impulses[-2].to_state)]
        assert repeats, "some absorptions should come from repeat landings"
        for tr in repeats:
            gap = tr.impulses[-1].tau - tr.impulses[-2].tau
            assert gap == pytest.approx(0.02, abs=1e-9)


class TestEstimateGainBasics:
    def test_insufficient_paths(self, bounded_spec):
        with pytest.raises(ts.InsufficientPaths):
            ts.estimate_gain(ts.NoImpulse(), (0, 0.0), 1, 1.0, 0.01, 0,
                             bounded_spec)

    def test_zero_profit_zero_gain(self):
        spec = ts.ProblemSpec(
            2, ts.DynamicsSpec.constant([0.1, 0.15], [0.2, 0.3]),
            ts.ProfitSpec("exp_scaled", eta=0.0),
            ts.CostSpec("inverse_quadratic"), 1.0,
            ts.KernelFamily.swap(-1.0, 1.0))
        ni = ts.estimate_gain(ts.NoImpulse(), (0, 0.0), 100, 5.0, 0.05, 0,
                              spec)
        assert ni.mean == 0.0
        cad = ts.estimate_gain(ts.FixedCadence(1.0, 0.0), (0, 0.0), 100, 5.0,
                               0.05, 0, spec)
        assert cad.mean <= 0.0

    def test_lockstep_matches_per_episode_runner(self, bounded_spec):
        from techswitch.montecarlo import _lockstep_episodes
        strat = ts.FixedCadence(1.0, 0.3)
        fast = _lockstep_episodes(strat, (0, 0.1), range(6), 7.3, 0.01, 77,
                                  bounded_spec, True)
        for pid, tr_fast in enumerate(fast):
            tr = ts.run_episode(strat, (0, 0.1), 7.3, 0.01,
                                ts.RngStream(77, pid), bounded_spec)
            assert tr_fast.gain == tr.gain
            assert tr_fast.total_profit == tr.total_profit
            assert [i.tau for i in tr_fast.impulses] == \
                [i.tau for i in tr.impulses]
            assert tr_fast.impulses[-1].to_state == tr.impulses[-1].to_state

    def test_stderr_scaling_with_paths(self, bounded_spec):
        a = ts.estimate_gain(ts.FixedCadence(1.0, 0.3), (0, 0.0), 4000, 10.0,
                             0.02, 5, bounded_spec)
        b = ts.estimate_gain(ts.FixedCadence(1.0, 0.3), (0, 0.0), 8000, 10.0,
                             0.02, 5, bounded_spec)
        ratio = b.stderr / a.stderr
        assert ratio == pytest.approx(1.0 / math.sqrt(2.0), rel=0.20)
