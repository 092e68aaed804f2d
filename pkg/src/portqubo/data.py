"""Universe construction: historical price CSV ingestion, synthetic factor
universes, and JSON (de)serialization of instances.

Prices CSV layout: header ``date,SYM1,SYM2,...``, one row per period. Returns
are simple percent returns per period; the horizon return is the total
percent change from first to last price.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .model import RETURN_MODES, AssetUniverse, PortfolioInstance


class DataFormatError(ValueError):
    """Raised for malformed price or instance files."""


@dataclass(frozen=True)
class PricePanel:
    dates: tuple[str, ...]
    symbols: tuple[str, ...]
    prices: np.ndarray  # periods x assets, strictly positive

    def __post_init__(self):
        prices = np.array(self.prices, dtype=np.float64)
        if prices.shape != (len(self.dates), len(self.symbols)):
            raise DataFormatError(
                f"price matrix shape {prices.shape} does not match "
                f"{len(self.dates)} periods x {len(self.symbols)} symbols"
            )
        if len(self.dates) < 2:
            raise DataFormatError("price panel needs at least 2 periods")
        if not (prices > 0).all():
            raise DataFormatError("nonpositive price in panel")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "symbols", tuple(self.symbols))


@dataclass(frozen=True)
class SyntheticSpec:
    n_assets: int
    n_factors: int = 3
    idiosyncratic_floor: float = 1.0
    return_range: tuple[float, float] = (0.0, 200.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_assets < 1:
            raise ValueError("n_assets must be positive")
        if not 1 <= self.n_factors <= self.n_assets:
            raise ValueError("n_factors must be in [1, n_assets]")
        if self.idiosyncratic_floor <= 0:
            raise ValueError("idiosyncratic_floor must be positive")
        low, high = self.return_range
        if not low < high:
            raise ValueError("return_range must satisfy low < high")


def load_prices_csv(path) -> PricePanel:
    """Parse a prices CSV; every data problem is a distinct named error."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if len(header) < 2:
            raise DataFormatError(f"{path}: header must name at least one symbol")
        symbols = [s.strip() for s in header[1:]]
        seen = set()
        for sym in symbols:
            if sym in seen:
                raise DataFormatError(f"{path}: duplicate symbol {sym!r}")
            seen.add(sym)
        dates = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}:{lineno}: ragged row with {len(row)} fields, expected {len(header)}"
                )
            dates.append(row[0].strip())
            values = []
            for sym, cell in zip(symbols, row[1:]):
                cell = cell.strip()
                if not cell:
                    raise DataFormatError(f"{path}:{lineno}: missing price for {sym!r}")
                try:
                    value = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}:{lineno}: unparseable price {cell!r} for {sym!r}"
                    ) from None
                if not value > 0 or not math.isfinite(value):
                    raise DataFormatError(
                        f"{path}:{lineno}: nonpositive price {value:g} for {sym!r}"
                    )
                values.append(value)
            rows.append(values)
        if len(rows) < 2:
            raise DataFormatError(f"{path}: fewer than 2 price periods")
    return PricePanel(dates=tuple(dates), symbols=tuple(symbols), prices=np.array(rows))


def compute_stats(panel: PricePanel, log_returns: bool = False) -> AssetUniverse:
    """Horizon return vector (percent) and sample covariance of the per-period
    percent returns (divisor T-1)."""
    if len(panel.dates) < 3:
        raise DataFormatError("need at least 3 periods to estimate a covariance")
    prices = panel.prices
    if log_returns:
        period = np.log(prices[1:] / prices[:-1]) * 100.0
        mu = np.log(prices[-1] / prices[0]) * 100.0
    else:
        period = (prices[1:] - prices[:-1]) / prices[:-1] * 100.0
        mu = (prices[-1] - prices[0]) / prices[0] * 100.0
    sigma = np.cov(period, rowvar=False, ddof=1)
    sigma = np.atleast_2d(sigma)
    sigma = (sigma + sigma.T) / 2.0  # exact symmetry despite fp accumulation
    return AssetUniverse(symbols=panel.symbols, mu=mu, sigma=sigma)


def generate_synthetic(spec: SyntheticSpec) -> AssetUniverse:
    """Factor-model covariance F F' + D with D >= idiosyncratic_floor, so the
    result is strictly positive definite; fully determined by the seed."""
    rng = np.random.default_rng(spec.seed)
    factors = rng.standard_normal((spec.n_assets, spec.n_factors))
    idio = spec.idiosyncratic_floor * (1.0 + rng.random(spec.n_assets))
    sigma = factors @ factors.T + np.diag(idio)
    sigma = (sigma + sigma.T) / 2.0
    low, high = spec.return_range
    mu = rng.uniform(low, high, size=spec.n_assets)
    symbols = tuple(f"SYN{i:03d}" for i in range(spec.n_assets))
    return AssetUniverse(symbols=symbols, mu=mu, sigma=sigma)


def _universe_to_dict(universe: AssetUniverse) -> dict:
    return {
        "symbols": list(universe.symbols),
        "mu": universe.mu.tolist(),
        "sigma": universe.sigma.flatten().tolist(),
    }


def _universe_from_dict(doc: dict, source: str) -> AssetUniverse:
    for key in ("symbols", "mu"):
        if key not in doc:
            raise DataFormatError(f"{source}: missing field {key!r}")
    symbols = doc["symbols"]
    mu = np.array(doc["mu"], dtype=np.float64)
    n = len(symbols)
    if "sigma" in doc:
        sigma = np.array(doc["sigma"], dtype=np.float64).reshape(n, n)
    elif "sd" in doc and "correlation" in doc:
        sd = np.array(doc["sd"], dtype=np.float64)
        rho = np.array(doc["correlation"], dtype=np.float64).reshape(n, n)
        sigma = rho * np.outer(sd, sd)
    else:
        raise DataFormatError(
            f"{source}: missing field 'sigma' (or the 'sd' + 'correlation' pair)"
        )
    try:
        return AssetUniverse(symbols=tuple(symbols), mu=mu, sigma=sigma)
    except ValueError as exc:
        raise DataFormatError(f"{source}: {exc}") from exc


def save_universe(universe: AssetUniverse, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_universe_to_dict(universe), fh, indent=2)
        fh.write("\n")


def load_universe(path) -> AssetUniverse:
    with open(path) as fh:
        doc = json.load(fh)
    return _universe_from_dict(doc, str(path))


def save_instance(instance: PortfolioInstance, path) -> None:
    doc = _universe_to_dict(instance.universe)
    doc.update(
        {
            "n": instance.n,
            "r_star": instance.r_star,
            "return_mode": instance.return_mode,
        }
    )
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_instance(path) -> PortfolioInstance:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("n", "return_mode"):
        if key not in doc:
            raise DataFormatError(f"{path}: missing field {key!r}")
    if doc["return_mode"] not in RETURN_MODES:
        raise DataFormatError(
            f"{path}: return_mode must be one of {RETURN_MODES}, got {doc['return_mode']!r}"
        )
    if doc["return_mode"] != "none" and "r_star" not in doc:
        raise DataFormatError(f"{path}: missing field 'r_star'")
    universe = _universe_from_dict(doc, str(path))
    try:
        return PortfolioInstance(
            universe=universe,
            n=int(doc["n"]),
            r_star=float(doc.get("r_star", 0.0)),
            return_mode=doc["return_mode"],
        )
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def scale_returns(universe: AssetUniverse, factor: float) -> AssetUniverse:
    """Rescale mu by a positive factor (covariance untouched); used to shrink
    the slack-bit count of the inequality encoding."""
    if factor <= 0:
        raise ValueError("scale factor must be positive")
    return AssetUniverse(
        symbols=universe.symbols,
        mu=universe.mu * factor,
        sigma=universe.sigma,
    )
