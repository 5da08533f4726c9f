import numpy as np
import pytest

from rehearsal import rng
from rehearsal.benchmarks import get_benchmark
from rehearsal.evaluator import (
    TABLE_BENCHMARKS,
    EpisodeResult,
    aggregate,
    auf_probability,
    consistency_curve,
    reproduce_table,
    run_episode,
    surrogate_gap_curve,
)
from rehearsal.region import PolytopeRegion

REGION = PolytopeRegion.from_bounds([0.0], [1.0])


def episode(seed, ctx, successes, method="nested", bench="b", m=10):
    return EpisodeResult(bench, method, seed, ctx, (0.0,), (0.0,), successes, m)


class TestAufProbability:
    def test_examples(self):
        assert auf_probability(np.full((5, 1), 0.5), REGION) == 1.0
        assert auf_probability(np.full((5, 1), 3.0), REGION) == 0.0
        Y = np.r_[np.full((50, 1), 0.5), np.full((50, 1), 2.0)]
        assert auf_probability(Y, REGION) == 0.5

    def test_needs_draws(self):
        with pytest.raises(ValueError):
            auf_probability(np.zeros((0, 1)), REGION)


class TestEpisodes:
    def test_probability_is_exact_ratio(self):
        e = episode(0, 0, 7, m=30)
        assert e.auf_probability == 7 / 30
        assert e.to_dict()["auf_probability"] == 7 / 30

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            run_episode(get_benchmark("non_syn1"), "oracle")

    def test_deterministic_and_shared_contexts(self):
        o = get_benchmark("non_syn1")
        a = run_episode(o, "nested", seed=3, contexts_per_seed=3, mc_trials=20, n=80)
        b = run_episode(o, "nested", seed=3, contexts_per_seed=3, mc_trials=20, n=80)
        c = run_episode(o, "none", seed=3, contexts_per_seed=3, mc_trials=20, n=80)
        assert [e.to_dict() for e in a] == [e.to_dict() for e in b]
        assert [e.context for e in a] == [e.context for e in c]
        assert all(o.box.contains(e.action) for e in a)
        assert all(e.action is None and e.j_star is None for e in c)

    def test_none_matches_direct_baseline(self):
        o = get_benchmark("bank_exp")
        eps = run_episode(o, "none", seed=5, contexts_per_seed=4, mc_trials=50)
        for c, e in enumerate(eps):
            x = o.sample_context(rng.derive_seed(5, rng.CONTEXT, c))
            Y = o.sample_baseline(x, 50, rng.derive_seed(5, rng.SCORING, c))
            assert e.successes == int(o.region.contains(Y).sum())


class TestAggregate:
    def test_seed_level_statistics(self):
        eps = [episode(0, 0, 2), episode(0, 1, 4), episode(1, 0, 8), episode(1, 1, 8)]
        (row,) = aggregate(eps)
        # per-seed means 0.3 and 0.8
        assert row.mean == pytest.approx(0.55)
        assert row.std == pytest.approx(0.25)
        assert row.context_std == pytest.approx(np.std([0.2, 0.4, 0.8, 0.8]))
        assert (row.seeds, row.episodes) == (2, 4)

    def test_groups(self):
        eps = [episode(0, 0, 1, "none"), episode(0, 0, 2, "nested"), episode(0, 0, 3, "nested", "c")]
        assert {(r.benchmark, r.method) for r in aggregate(eps)} == {("b", "none"), ("b", "nested"),
                                                                     ("c", "nested")}


class TestTable:
    def test_shape(self):
        rows, eps = reproduce_table(seeds=[0], contexts_per_seed=1, mc_trials=5, n=60)
        assert len(rows) == 2 * len(TABLE_BENCHMARKS)
        assert {r.method for r in rows} == {"none", "nested"}
        assert len(eps) == 2 * len(TABLE_BENCHMARKS)


class TestChecks:
    def test_gap_curve_inputs(self):
        with pytest.raises(ValueError):
            surrogate_gap_curve([10, 5])
        with pytest.raises(ValueError):
            surrogate_gap_curve([0, 5])

    def test_gap_curve_shape(self):
        curve = surrogate_gap_curve([5, 10])
        assert [e for e, _ in curve] == [5.0, 10.0]
        assert all(g >= 0 for _, g in curve)

    def test_consistency_small(self):
        kw = dict(ns=(50, 100), probes=3, seed=1, oracle_draws=2000)
        a = consistency_curve(**kw)
        assert a == consistency_curve(**kw)
        assert [n for n, _ in a] == [50, 100] and all(e >= 0 for _, e in a)
        with pytest.raises(ValueError):
            consistency_curve(ns=(100, 50))
        with pytest.raises(ValueError):
            consistency_curve(ns=(20, 100))
