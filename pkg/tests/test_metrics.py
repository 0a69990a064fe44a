import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtmd import metrics as mx
from mtmd.errors import ContractError

from oracles import pearson_direct, precision_top_n_naive, spearman_enumerated


class TestIc:
    def test_identical_vectors(self):
        v = np.array([0.1, 0.5, -0.3])
        assert mx.ic(v, v) == pytest.approx(1.0)

    def test_negated_vector(self):
        v = np.array([0.1, 0.5, -0.3])
        assert mx.ic(v, -v) == pytest.approx(-1.0)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=100), rng.normal(size=100)
        assert abs(mx.ic(a, b) - pearson_direct(a, b)) < 1e-12

    def test_degenerate_variance_skipped(self):
        assert mx.ic(np.array([1.0, 1.0]), np.array([0.0, 1.0])) is None
        assert mx.ic(np.array([0.0, 1.0]), np.array([2.0, 2.0])) is None

    def test_affine_invariance(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=30), rng.normal(size=30)
        assert mx.ic(3.0 * a + 0.7, b) == pytest.approx(mx.ic(a, b), abs=1e-12)


class TestRankIc:
    def test_monotone_transform_gives_one(self):
        rng = np.random.default_rng(2)
        truth = rng.normal(size=25)
        pred = np.exp(truth) + truth ** 3
        assert mx.rank_ic(pred, truth) == pytest.approx(1.0)

    def test_reversed_order(self):
        assert mx.rank_ic(np.array([1.0, 2.0, 3.0]), np.array([3.0, 2.0, 1.0])) == pytest.approx(-1.0)

    def test_tie_case_matches_enumeration_oracle(self):
        pred = np.array([1.0, 1.0, 2.0])
        truth = np.array([1.0, 2.0, 3.0])
        expected = spearman_enumerated(pred, truth)
        assert abs(mx.rank_ic(pred, truth) - expected) < 1e-12
        assert expected == pytest.approx(0.8660254037844387)

    @given(st.integers(0, 100_000))
    @settings(max_examples=150, deadline=None)
    def test_random_with_ties_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 20))
        # coarse grid forces frequent ties
        pred = rng.integers(-3, 4, size=n).astype(float)
        truth = rng.integers(-3, 4, size=n).astype(float)
        ours = mx.rank_ic(pred, truth)
        oracle_ranks_degenerate = (np.unique(pred).size == 1 or np.unique(truth).size == 1)
        if oracle_ranks_degenerate:
            assert ours is None
        else:
            assert abs(ours - spearman_enumerated(pred, truth)) < 1e-12


class TestAverageRanks:
    def test_plain_ordering(self):
        assert mx.average_ranks(np.array([10.0, 30.0, 20.0])).tolist() == [1.0, 3.0, 2.0]

    def test_ties_share_mean_position(self):
        assert mx.average_ranks(np.array([1.0, 1.0, 2.0])).tolist() == [1.5, 1.5, 3.0]

    @given(st.integers(0, 100_000))
    @settings(max_examples=100, deadline=None)
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.integers(0, 5, size=int(rng.integers(1, 15))).astype(float)
        from oracles import average_ranks_enumerated
        assert np.allclose(mx.average_ranks(x), average_ranks_enumerated(x), atol=0.0)


class TestPrecisionAtN:
    def test_all_positive(self):
        assert mx.precision_at_n(np.array([1.0, 2.0]), np.array([True, True]), 2) == 100.0

    def test_two_of_three(self):
        got = mx.precision_at_n(np.array([3.0, 2.0, 1.0]), np.array([True, False, True]), 3)
        assert got == pytest.approx(200.0 / 3.0)

    def test_n_clamped_to_size(self):
        got = mx.precision_at_n(np.array([1.0, -1.0]), np.array([True, False]), 10)
        assert got == 50.0

    def test_ties_take_lower_index(self):
        got = mx.precision_at_n(np.array([1.0, 1.0]), np.array([False, True]), 1)
        assert got == 0.0

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        pred = rng.normal(size=12)
        pos = rng.random(12) < 0.5
        a = mx.precision_at_n(pred, pos, 5)
        b = mx.precision_at_n(2.5 * pred + 1.0, pos, 5)
        assert a == b

    def test_bad_n_rejected(self):
        with pytest.raises(ContractError):
            mx.precision_at_n(np.array([1.0]), np.array([True]), 0)

    @given(st.integers(0, 100_000))
    @settings(max_examples=100, deadline=None)
    def test_matches_naive_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        n_stocks = int(rng.integers(1, 12))
        pred = rng.integers(-2, 3, size=n_stocks).astype(float)
        pos = rng.random(n_stocks) < 0.5
        n = int(rng.integers(1, 15))
        assert mx.precision_at_n(pred, pos, n) == precision_top_n_naive(pred, pos, n)


class TestAggregate:
    def _score(self, date, ic_v, rk_v, p=50.0):
        return mx.DailyScore(date=date, ic=ic_v, rank_ic=rk_v,
                             precision={n: p for n in mx.PRECISION_LEVELS})

    def test_single_day(self):
        rep = mx.aggregate([self._score("d1", 0.2, 0.1)])
        assert rep.ic_mean == pytest.approx(0.2)
        assert rep.ic_std == 0.0

    def test_two_days_population_std(self):
        rep = mx.aggregate([self._score("d1", 0.1, 0.0), self._score("d2", 0.3, 0.0)])
        assert rep.ic_mean == pytest.approx(0.2)
        assert rep.ic_std == pytest.approx(0.1)

    def test_degenerate_days_excluded_from_ic(self):
        rep = mx.aggregate([self._score("d1", 0.4, 0.4), self._score("d2", None, None)])
        assert rep.ic_mean == pytest.approx(0.4)
        assert rep.skipped_dates == ["d2"]

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            mx.aggregate([])

    def test_csv_and_table_render(self, tmp_path):
        rep = mx.aggregate([self._score("d1", 0.1, 0.2), self._score("d2", None, None)])
        out = tmp_path / "report.csv"
        rep.to_csv(str(out))
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "date,ic,rank_ic,p3,p5,p10,p30"
        assert lines[1].startswith("d1,0.1,0.2,")
        assert lines[2].startswith("d2,,,")
        table = rep.summary_table()
        assert "IC" in table and "P@30" in table
