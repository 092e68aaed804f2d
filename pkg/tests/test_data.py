import json

import numpy as np
import pytest

from portqubo import (
    AssetUniverse,
    DataFormatError,
    PortfolioInstance,
    PricePanel,
    SyntheticSpec,
    compute_stats,
    generate_synthetic,
    load_instance,
    load_prices_csv,
    load_universe,
    save_instance,
    save_universe,
)
from portqubo.data import scale_returns


def _write(tmp_path, text, name="prices.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadPrices:
    def test_minimal_valid_panel(self, tmp_path):
        panel = load_prices_csv(_write(tmp_path, "date,AAA\n2020-Q1,100\n2020-Q2,100\n"))
        assert panel.symbols == ("AAA",)
        assert len(panel.dates) == 2

    def test_nonpositive_price(self, tmp_path):
        path = _write(tmp_path, "date,AAA\n2020-Q1,100\n2020-Q2,0\n")
        with pytest.raises(DataFormatError, match="nonpositive price"):
            load_prices_csv(path)

    def test_ragged_row(self, tmp_path):
        path = _write(tmp_path, "date,AAA,BBB\n2020-Q1,100,200\n2020-Q2,100\n")
        with pytest.raises(DataFormatError, match="ragged row"):
            load_prices_csv(path)

    def test_duplicate_symbol(self, tmp_path):
        path = _write(tmp_path, "date,AAA,AAA\n2020-Q1,1,2\n2020-Q2,1,2\n")
        with pytest.raises(DataFormatError, match="duplicate symbol"):
            load_prices_csv(path)

    def test_too_few_periods(self, tmp_path):
        path = _write(tmp_path, "date,AAA\n2020-Q1,100\n")
        with pytest.raises(DataFormatError, match="fewer than 2"):
            load_prices_csv(path)

    def test_missing_value(self, tmp_path):
        path = _write(tmp_path, "date,AAA,BBB\n2020-Q1,1,2\n2020-Q2,1,\n")
        with pytest.raises(DataFormatError, match="missing price"):
            load_prices_csv(path)

    def test_large_generated_panel(self, tmp_path, rng):
        periods, assets = 21, 225
        header = "date," + ",".join(f"S{i:03d}" for i in range(assets))
        rows = [header]
        prices = rng.uniform(50, 150, (periods, assets))
        for t in range(periods):
            rows.append(f"p{t}," + ",".join(f"{v:.4f}" for v in prices[t]))
        panel = load_prices_csv(_write(tmp_path, "\n".join(rows) + "\n"))
        assert len(panel.dates) == 21
        assert len(panel.symbols) == 225


class TestComputeStats:
    def test_constant_prices(self):
        panel = PricePanel(("a", "b", "c"), ("X", "Y"), np.full((3, 2), 50.0))
        universe = compute_stats(panel)
        assert universe.mu.tolist() == [0.0, 0.0]
        assert np.all(universe.sigma == 0.0)

    def test_doubling_price_is_100_percent(self):
        panel = PricePanel(("a", "b", "c"), ("X",), np.array([[100.0], [150.0], [200.0]]))
        universe = compute_stats(panel)
        assert universe.mu[0] == pytest.approx(100.0)

    def test_identical_series_are_perfectly_correlated(self):
        prices = np.array([[100.0, 100.0], [110.0, 110.0], [99.0, 99.0], [120.0, 120.0]])
        universe = compute_stats(PricePanel(("a", "b", "c", "d"), ("X", "Y"), prices))
        assert universe.sigma[0, 1] == pytest.approx(universe.sigma[0, 0])

    def test_needs_three_periods(self):
        panel = PricePanel(("a", "b"), ("X",), np.array([[1.0], [2.0]]))
        with pytest.raises(DataFormatError, match="at least 3"):
            compute_stats(panel)

    def test_scale_equivariance(self, rng):
        prices = rng.uniform(50, 150, (10, 4))
        base = compute_stats(PricePanel(tuple("abcdefghij"), ("A", "B", "C", "D"), prices))
        scaled_prices = prices.copy()
        scaled_prices[:, 2] *= 7.5
        scaled = compute_stats(
            PricePanel(tuple("abcdefghij"), ("A", "B", "C", "D"), scaled_prices)
        )
        assert scaled.mu == pytest.approx(base.mu, rel=1e-12)
        assert scaled.sigma == pytest.approx(base.sigma, rel=1e-9)

    def test_log_return_mode(self):
        panel = PricePanel(("a", "b", "c"), ("X",), np.array([[100.0], [150.0], [200.0]]))
        universe = compute_stats(panel, log_returns=True)
        assert universe.mu[0] == pytest.approx(np.log(2.0) * 100)


class TestSynthetic:
    def test_deterministic(self):
        spec = SyntheticSpec(n_assets=10, n_factors=3, seed=99)
        a = generate_synthetic(spec)
        b = generate_synthetic(spec)
        assert a.symbols == b.symbols
        assert np.array_equal(a.mu, b.mu)
        assert np.array_equal(a.sigma, b.sigma)

    def test_positive_definite_with_floor(self, rng):
        for seed in range(5):
            spec = SyntheticSpec(n_assets=12, n_factors=2, idiosyncratic_floor=1.0, seed=seed)
            universe = generate_synthetic(spec)
            eigmin = np.linalg.eigvalsh(universe.sigma)[0]
            assert eigmin >= spec.idiosyncratic_floor - 1e-9

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SyntheticSpec(n_assets=5, n_factors=0)
        with pytest.raises(ValueError):
            SyntheticSpec(n_assets=5, n_factors=6)
        with pytest.raises(ValueError):
            SyntheticSpec(n_assets=5, return_range=(3.0, 1.0))

    def test_returns_within_range(self):
        universe = generate_synthetic(
            SyntheticSpec(n_assets=30, return_range=(10.0, 20.0), seed=1)
        )
        assert universe.mu.min() >= 10.0
        assert universe.mu.max() <= 20.0


class TestInstanceIo:
    def _instance(self, seed=5):
        universe = generate_synthetic(SyntheticSpec(n_assets=6, seed=seed))
        return PortfolioInstance(universe, n=2, r_star=100.0, return_mode="at_least")

    def test_round_trip_bit_identical(self, tmp_path):
        inst = self._instance()
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        back = load_instance(path)
        assert back.universe.symbols == inst.universe.symbols
        assert np.array_equal(back.universe.mu, inst.universe.mu)
        assert np.array_equal(back.universe.sigma, inst.universe.sigma)
        assert (back.n, back.r_star, back.return_mode) == (
            inst.n,
            inst.r_star,
            inst.return_mode,
        )

    def test_missing_n_named(self, tmp_path):
        inst = self._instance()
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        doc = json.loads(path.read_text())
        del doc["n"]
        path.write_text(json.dumps(doc))
        with pytest.raises(DataFormatError, match="'n'"):
            load_instance(path)

    def test_sd_correlation_variant(self, tmp_path):
        sd = [2.0, 3.0]
        rho = [[1.0, 0.5], [0.5, 1.0]]
        doc = {
            "symbols": ["A", "B"],
            "mu": [10.0, 20.0],
            "sd": sd,
            "correlation": [v for row in rho for v in row],
            "n": 1,
            "r_star": 0.0,
            "return_mode": "none",
        }
        path = tmp_path / "inst.json"
        path.write_text(json.dumps(doc))
        inst = load_instance(path)
        expected = np.array([[4.0, 3.0], [3.0, 9.0]])
        assert np.array_equal(inst.universe.sigma, expected)

    def test_universe_round_trip(self, tmp_path):
        universe = generate_synthetic(SyntheticSpec(n_assets=4, seed=3))
        path = tmp_path / "u.json"
        save_universe(universe, path)
        back = load_universe(path)
        assert np.array_equal(back.sigma, universe.sigma)
        assert np.array_equal(back.mu, universe.mu)

    def test_invalid_mode_named(self, tmp_path):
        path = tmp_path / "inst.json"
        path.write_text(json.dumps({"symbols": ["A"], "mu": [1.0], "sigma": [1.0],
                                    "n": 1, "return_mode": "sometimes"}))
        with pytest.raises(DataFormatError, match="return_mode"):
            load_instance(path)


def test_scale_returns():
    universe = AssetUniverse(("A", "B"), [10.0, 20.0], np.eye(2))
    scaled = scale_returns(universe, 0.1)
    assert scaled.mu.tolist() == [1.0, 2.0]
    assert np.array_equal(scaled.sigma, universe.sigma)
    with pytest.raises(ValueError):
        scale_returns(universe, 0.0)
