import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtmd import data as md
from mtmd.errors import DataError, ParseError


class TestChangeRate:
    def test_ten_percent_gain(self):
        assert md.change_rate(100.0, 110.0) == pytest.approx(0.1)

    def test_flat(self):
        assert md.change_rate(50.0, 50.0) == 0.0

    def test_quarter_loss(self):
        assert md.change_rate(200.0, 150.0) == pytest.approx(-0.25)

    @pytest.mark.parametrize("bad", [0.0, -5.0])
    def test_non_positive_base_rejected(self, bad):
        with pytest.raises(DataError, match="positive"):
            md.change_rate(bad, 100.0)


class TestNormalizeLabels:
    def test_two_point_case(self):
        out = md.normalize_labels_per_date(np.array([1.0, -1.0]))
        assert np.allclose(out, [1.0, -1.0], atol=1e-15)

    def test_degenerate_std_gives_zeros(self):
        out = md.normalize_labels_per_date(np.array([5.0, 5.0, 5.0]))
        assert np.array_equal(out, np.zeros(3))

    def test_singleton_gives_zero(self):
        assert np.array_equal(md.normalize_labels_per_date(np.array([3.0])), [0.0])

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=40), st.integers(0, 10_000))
    @settings(max_examples=80)
    def test_zero_mean_unit_std(self, xs, seed):
        jitter = np.random.default_rng(seed).normal(size=len(xs))
        raw = np.array(xs) + jitter  # jitter avoids degenerate cross-sections
        out = md.normalize_labels_per_date(raw)
        assert abs(out.mean()) < 1e-9
        assert abs(out.std() - 1.0) < 1e-6


class TestGenerateSynthetic:
    def test_deterministic_per_seed(self):
        spec = md.SyntheticSpec(n_stocks=4, n_concepts=2, n_dates=70, seed=7)
        p1, g1, t1 = md.generate_synthetic(spec)
        p2, g2, t2 = md.generate_synthetic(spec)
        assert p1.dates == p2.dates
        for a, b in zip(p1.slices, p2.slices):
            assert np.array_equal(a.features, b.features)
            assert np.array_equal(a.prices, b.prices)
        assert g1.static_links == g2.static_links
        assert np.array_equal(t1.factors, t2.factors)

    def test_usable_date_trim(self):
        spec = md.SyntheticSpec(n_stocks=3, n_concepts=2, n_dates=300, seed=7)
        panel, _, _ = md.generate_synthetic(spec)
        assert len(panel.usable_dates) == 300 - 61
        assert len(panel.dates) == 300 - 60

    def test_zero_noise_single_concept_shares_return_path(self):
        spec = md.SyntheticSpec(n_stocks=5, n_concepts=1, n_dates=70,
                                membership_density=1.0, noise_sigma=0.0, seed=3)
        panel, _, truth = md.generate_synthetic(spec)
        for s in panel.usable_slices:
            assert np.allclose(s.raw_labels, s.raw_labels[0], atol=0.0)
        spread = truth.returns[1:].max(axis=1) - truth.returns[1:].min(axis=1)
        assert np.all(spread == 0.0)

    def test_zero_noise_returns_equal_mean_factor(self):
        spec = md.SyntheticSpec(n_stocks=6, n_concepts=3, n_dates=70,
                                noise_sigma=0.0, seed=11)
        _, _, truth = md.generate_synthetic(spec)
        exposure = truth.membership / truth.membership.sum(axis=1, keepdims=True)
        expected = truth.factors @ exposure.T
        assert np.max(np.abs(truth.returns - expected)) == 0.0

    def test_every_stock_has_a_concept(self):
        spec = md.SyntheticSpec(n_stocks=30, n_concepts=3, n_dates=70,
                                membership_density=0.05, seed=5)
        _, graph, truth = md.generate_synthetic(spec)
        assert truth.membership.any(axis=1).all()
        linked = {s for s, _ in graph.static_links}
        assert linked == set(truth.stock_ids)

    def test_too_few_dates_rejected(self):
        with pytest.raises(DataError, match="usable"):
            md.generate_synthetic(md.SyntheticSpec(n_dates=61))

    def test_link_indices_in_range(self):
        spec = md.SyntheticSpec(n_stocks=7, n_concepts=4, n_dates=70, seed=2)
        panel, graph, _ = md.generate_synthetic(spec)
        mask = graph.mask_for(panel.dates[0], panel.slices[0].stock_ids)
        assert mask.shape == (7, 4)
        assert mask.any()


class TestRoundTrip:
    def test_generate_write_load_reproduces_panel(self, tmp_path):
        spec = md.SyntheticSpec(n_stocks=3, n_concepts=2, n_dates=66, seed=13)
        panel, graph, _ = md.generate_synthetic(spec)
        ppath, cpath = str(tmp_path / "panel.csv"), str(tmp_path / "concepts.csv")
        md.write_panel_csv(panel, ppath)
        md.write_concepts_csv(graph, cpath)
        loaded, lgraph = md.load_panel(ppath, cpath)
        assert loaded.dates == panel.dates
        assert lgraph.static_links == graph.static_links
        assert lgraph.concept_ids == graph.concept_ids
        for a, b in zip(panel.slices, loaded.slices):
            assert a.stock_ids == b.stock_ids
            assert np.array_equal(a.features, b.features)
            assert np.array_equal(a.market_caps, b.market_caps)
            assert np.array_equal(a.prices, b.prices)
            if a.labels is None:
                assert b.labels is None
            else:
                assert np.allclose(a.raw_labels, b.raw_labels, atol=1e-12)
                assert np.allclose(a.labels, b.labels, atol=1e-9)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def tiny_panel_text(rows):
    header = ",".join(list(md.PANEL_BASE_COLUMNS) + list(md.FEATURE_COLUMNS))
    feats = ",".join(["0.0"] * md.FEATURE_WIDTH)
    return header + "\n" + "\n".join(f"{r},{feats}" for r in rows) + "\n"


class TestLoadPanelValidation:
    def test_two_date_two_stock_fixture(self, tmp_path):
        text = tiny_panel_text([
            "2020-01-01,A,1.0,100.0",
            "2020-01-01,B,2.0,50.0",
            "2020-01-02,A,1.0,110.0",
            "2020-01-02,B,2.0,45.0",
        ])
        ppath = _write(tmp_path / "p.csv", text)
        cpath = _write(tmp_path / "c.csv", "concept_id,stock_id\nC1,A\n")
        panel, graph = md.load_panel(ppath, cpath)
        assert panel.dates == ["2020-01-01", "2020-01-02"]
        assert panel.usable_dates == ["2020-01-01"]
        first = panel.slices[0]
        assert first.n_stocks == 2
        assert first.raw_labels == pytest.approx([0.1, -0.1])
        assert graph.n_concepts == 1

    def test_empty_concept_file_gives_zero_concepts(self, tmp_path):
        ppath = _write(tmp_path / "p.csv", tiny_panel_text(["2020-01-01,A,1.0,100.0"]))
        cpath = _write(tmp_path / "c.csv", "concept_id,stock_id\n")
        _, graph = md.load_panel(ppath, cpath)
        assert graph.n_concepts == 0

    def test_duplicate_row_named(self, tmp_path):
        text = tiny_panel_text([
            "2020-01-01,A,1.0,100.0",
            "2020-01-01,A,1.0,100.0",
        ])
        ppath = _write(tmp_path / "p.csv", text)
        with pytest.raises(ParseError, match=r"p\.csv:3.*duplicate.*2020-01-01, A"):
            md.load_panel(ppath, _write(tmp_path / "c.csv", "concept_id,stock_id\n"))

    def test_non_numeric_cell_reports_line(self, tmp_path):
        ppath = _write(tmp_path / "p.csv", tiny_panel_text(["2020-01-01,A,oops,100.0"]))
        with pytest.raises(ParseError, match=r"p\.csv:2.*market_cap"):
            md.load_panel(ppath, _write(tmp_path / "c.csv", "concept_id,stock_id\n"))

    def test_missing_column_rejected(self, tmp_path):
        ppath = _write(tmp_path / "p.csv", "date,stock_id,market_cap\n2020-01-01,A,1.0\n")
        with pytest.raises(ParseError, match=r"p\.csv:1.*header"):
            md.load_panel(ppath, _write(tmp_path / "c.csv", "concept_id,stock_id\n"))

    def test_unknown_stock_in_concept_file(self, tmp_path):
        ppath = _write(tmp_path / "p.csv", tiny_panel_text(["2020-01-01,A,1.0,100.0"]))
        cpath = _write(tmp_path / "c.csv", "concept_id,stock_id\nC1,ZZZ\n")
        with pytest.raises(ParseError, match=r"c\.csv:2.*ZZZ"):
            md.load_panel(ppath, cpath)

    def test_non_iso_date_rejected(self, tmp_path):
        ppath = _write(tmp_path / "p.csv", tiny_panel_text(["01/02/2020,A,1.0,100.0"]))
        with pytest.raises(ParseError, match="ISO-8601"):
            md.load_panel(ppath, _write(tmp_path / "c.csv", "concept_id,stock_id\n"))

    def test_universe_mismatch_rejected(self, tmp_path):
        text = tiny_panel_text([
            "2020-01-01,A,1.0,100.0",
            "2020-01-02,B,1.0,100.0",
        ])
        ppath = _write(tmp_path / "p.csv", text)
        with pytest.raises(ParseError, match="universe"):
            md.load_panel(ppath, _write(tmp_path / "c.csv", "concept_id,stock_id\n"))

    def test_dated_concept_links(self, tmp_path):
        text = tiny_panel_text([
            "2020-01-01,A,1.0,100.0",
            "2020-01-02,A,1.0,101.0",
        ])
        ppath = _write(tmp_path / "p.csv", text)
        cpath = _write(tmp_path / "c.csv",
                       "concept_id,stock_id,date\nC1,A,2020-01-01\nC2,A,\n")
        _, graph = md.load_panel(ppath, cpath)
        m1 = graph.mask_for("2020-01-01", ["A"])
        m2 = graph.mask_for("2020-01-02", ["A"])
        assert m1.tolist() == [[True, True]]
        assert m2.tolist() == [[False, True]]
