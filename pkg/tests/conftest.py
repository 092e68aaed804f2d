import itertools

import numpy as np
import pytest

from portqubo import AssetUniverse, PortfolioInstance, QuboMatrix


def naive_qubo_energy(q: QuboMatrix, bits) -> float:
    """Independent QUBO energy evaluation: plain dict loop, no numpy."""
    total = q.offset
    for (i, j), v in q.coeffs.items():
        total += v * bits[i] * bits[j]
    return total


def naive_bruteforce(q: QuboMatrix):
    """Second, independently coded exhaustive QUBO enumerator."""
    best = None
    for bits in itertools.product((0, 1), repeat=q.dim):
        e = naive_qubo_energy(q, bits)
        if best is None or e < best[1] or (e == best[1] and bits < best[0]):
            best = (bits, e)
    return best


def naive_risk(sigma, x) -> float:
    """Direct double-loop quadratic form."""
    n = len(x)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += sigma[i][j] * x[i] * x[j]
    return total


def random_psd(rng: np.random.Generator, n: int) -> np.ndarray:
    f = rng.standard_normal((n, max(1, n // 2)))
    sigma = f @ f.T + np.diag(rng.uniform(0.5, 2.0, n))
    return (sigma + sigma.T) / 2.0


def random_instance(
    rng: np.random.Generator,
    n_assets: int,
    mode: str = "none",
    mu_range=(1.0, 3.0),
) -> PortfolioInstance:
    sigma = random_psd(rng, n_assets)
    mu = rng.uniform(*mu_range, n_assets)
    universe = AssetUniverse(
        tuple(f"A{i}" for i in range(n_assets)), mu, sigma
    )
    n = int(rng.integers(1, n_assets + 1))
    if mode == "none":
        r_star = 0.0
    else:
        # a target comfortably inside the achievable range
        r_star = float(np.sort(mu)[-n:].sum() * rng.uniform(0.3, 0.7))
    return PortfolioInstance(universe=universe, n=n, r_star=r_star, return_mode=mode)


def random_qubo(rng: np.random.Generator, dim: int, density: float = 1.0) -> QuboMatrix:
    coeffs = {}
    for i in range(dim):
        for j in range(i, dim):
            if rng.random() <= density:
                coeffs[(i, j)] = float(rng.uniform(-10, 10))
    return QuboMatrix(dim=dim, coeffs=coeffs, offset=float(rng.uniform(-5, 5)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
