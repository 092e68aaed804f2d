"""QUBO compilation of portfolio instances, QUBO<->Ising conversion, energy
evaluation, solution decoding, and the chain-strength diagnostic bound.

The equality encoding penalizes both constraints quadratically:

    lambda0 * x'Sx + lambda1 * (sum x - n)^2 + lambda2 * (mu'x - R)^2

The inequality encoding appends slack bits y_k with power-of-two weights so a
return surplus can cancel inside the squared residual:

    ... + lambda2 * (mu'x - R - sum_k w_k y_k)^2
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ContractViolation,
    PortfolioInstance,
    Solution,
    solution_from_bits,
)


@dataclass(frozen=True)
class PenaltyParams:
    """Weights tying the risk objective to the two constraint penalties."""

    lambda0: float = 1.0
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be nonnegative")


@dataclass(frozen=True)
class VariableLayout:
    """Split of the QUBO variables into asset bits and slack bits."""

    n_assets: int
    n_slack: int
    slack_weights: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.slack_weights) != self.n_slack:
            raise ValueError("slack_weights length must equal n_slack")

    @property
    def dim(self) -> int:
        return self.n_assets + self.n_slack


@dataclass(frozen=True)
class QuboMatrix:
    """Upper-triangular quadratic coefficient map with a constant offset.

    The offset carries the constant terms dropped from the quadratic
    expansion so energies stay comparable across encodings.
    """

    dim: int
    coeffs: dict[tuple[int, int], float]
    offset: float = 0.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        clean = {}
        for (i, j), v in self.coeffs.items():
            if not (0 <= i <= j < self.dim):
                raise ValueError(f"coefficient index ({i}, {j}) out of range for dim {self.dim}")
            v = float(v)
            if v != 0.0:
                clean[(int(i), int(j))] = v
        object.__setattr__(self, "coeffs", clean)
        object.__setattr__(self, "offset", float(self.offset))

    def to_dense(self) -> np.ndarray:
        """Dense upper-triangular matrix (diagonal included), offset excluded."""
        q = np.zeros((self.dim, self.dim))
        for (i, j), v in self.coeffs.items():
            q[i, j] = v
        return q

    def to_symmetric_parts(self) -> tuple[np.ndarray, np.ndarray]:
        """(diagonal vector, symmetric zero-diagonal coupling matrix)."""
        d = np.zeros(self.dim)
        w = np.zeros((self.dim, self.dim))
        for (i, j), v in self.coeffs.items():
            if i == j:
                d[i] = v
            else:
                w[i, j] = v
                w[j, i] = v
        return d, w


@dataclass(frozen=True)
class IsingModel:
    """Spin formulation with linear fields h and strictly upper couplings J."""

    dim: int
    h: np.ndarray
    j: dict[tuple[int, int], float]
    offset: float = 0.0

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64)
        if h.shape != (self.dim,):
            raise ValueError(f"h has shape {h.shape}, expected ({self.dim},)")
        clean = {}
        for (a, b), v in self.j.items():
            if not (0 <= a < b < self.dim):
                raise ValueError(f"coupling index ({a}, {b}) must satisfy 0 <= i < j < dim")
            v = float(v)
            if v != 0.0:
                clean[(int(a), int(b))] = v
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "j", clean)
        object.__setattr__(self, "offset", float(self.offset))


def slack_count(mu) -> int:
    """Number of slack bits K = floor(log2(sum mu)) for the inequality encoding."""
    total = float(np.sum(np.asarray(mu, dtype=np.float64)))
    if total <= 0:
        raise ValueError("slack encoding requires positive total return")
    if total < 2:
        return 0
    k = int(math.floor(math.log2(total)))
    # guard against log2 rounding at exact powers of two
    while 2.0 ** (k + 1) <= total:
        k += 1
    while 2.0**k > total:
        k -= 1
    return k


def _accumulate(coeffs: dict, i: int, j: int, value: float) -> None:
    if i > j:
        i, j = j, i
    key = (i, j)
    coeffs[key] = coeffs.get(key, 0.0) + value


def _add_risk_and_cardinality(
    coeffs: dict, instance: PortfolioInstance, params: PenaltyParams
) -> float:
    """Adds lambda0*x'Sx and lambda1*(sum x - n)^2; returns the constant term."""
    sigma = instance.universe.sigma
    n_assets = instance.n_assets
    l0, l1 = params.lambda0, params.lambda1
    for i in range(n_assets):
        _accumulate(coeffs, i, i, l0 * sigma[i, i] + l1 * (1.0 - 2.0 * instance.n))
        for j in range(i + 1, n_assets):
            _accumulate(coeffs, i, j, l0 * (sigma[i, j] + sigma[j, i]) + 2.0 * l1)
    return l1 * instance.n * instance.n


def _add_squared_linear(coeffs: dict, a: np.ndarray, constant: float, weight: float) -> float:
    """Adds weight*(a'z + constant)^2 over binary z; returns the constant term."""
    if weight == 0.0:
        return 0.0
    dim = a.size
    for i in range(dim):
        if a[i] == 0.0:
            continue
        _accumulate(coeffs, i, i, weight * (a[i] * a[i] + 2.0 * constant * a[i]))
        for j in range(i + 1, dim):
            if a[j] != 0.0:
                _accumulate(coeffs, i, j, 2.0 * weight * a[i] * a[j])
    return weight * constant * constant


def build_qubo_equality(
    instance: PortfolioInstance, params: PenaltyParams
) -> tuple[QuboMatrix, VariableLayout]:
    """Compile with the return constraint (if any) as an exact equality penalty."""
    if instance.return_mode == "at_least":
        raise ValueError("at_least instances need the slack encoding; use build_qubo_inequality")
    if instance.return_mode == "none" and params.lambda2 > 0:
        raise ValueError("lambda2 > 0 is meaningless when return_mode is 'none'")
    coeffs: dict[tuple[int, int], float] = {}
    offset = _add_risk_and_cardinality(coeffs, instance, params)
    if instance.return_mode == "equality":
        offset += _add_squared_linear(
            coeffs, np.array(instance.universe.mu), -instance.r_star, params.lambda2
        )
    layout = VariableLayout(n_assets=instance.n_assets, n_slack=0)
    return QuboMatrix(dim=instance.n_assets, coeffs=coeffs, offset=offset), layout


def build_qubo_inequality(
    instance: PortfolioInstance,
    params: PenaltyParams,
    literal_weights: bool = False,
) -> tuple[QuboMatrix, VariableLayout]:
    """Compile an at-least-return instance with power-of-two slack bits.

    ``literal_weights`` switches the slack weights from 2^0..2^(K-1) to
    2^1..2^K for comparison; the latter cannot cancel odd surpluses.
    """
    if instance.return_mode != "at_least":
        raise ValueError("slack encoding applies only to return_mode 'at_least'")
    mu = np.array(instance.universe.mu)
    total_mu = float(mu.sum())
    if total_mu <= instance.r_star:
        raise ValueError("return target exceeds total available return")
    k = slack_count(mu)
    if literal_weights:
        weights = tuple(2**p for p in range(1, k + 1))
    else:
        weights = tuple(2**p for p in range(k))
    max_surplus = total_mu - instance.r_star
    representable = sum(weights)
    if max_surplus > representable:
        warnings.warn(
            f"slack bits represent surpluses up to {representable}; the maximum "
            f"feasible surplus {max_surplus:g} exceeds that, so the return "
            "residual is only bounded, not exactly cancelable",
            stacklevel=2,
        )
    n_assets = instance.n_assets
    dim = n_assets + k
    coeffs: dict[tuple[int, int], float] = {}
    offset = _add_risk_and_cardinality(coeffs, instance, params)
    a = np.zeros(dim)
    a[:n_assets] = mu
    a[n_assets:] = [-w for w in weights]
    offset += _add_squared_linear(coeffs, a, -instance.r_star, params.lambda2)
    layout = VariableLayout(n_assets=n_assets, n_slack=k, slack_weights=weights)
    return QuboMatrix(dim=dim, coeffs=coeffs, offset=offset), layout


def build_qubo(
    instance: PortfolioInstance, params: PenaltyParams, **kwargs
) -> tuple[QuboMatrix, VariableLayout]:
    """Dispatch to the equality or slack encoding based on return_mode."""
    if instance.return_mode == "at_least":
        return build_qubo_inequality(instance, params, **kwargs)
    return build_qubo_equality(instance, params)


def qubo_energy(q: QuboMatrix, x) -> float:
    """offset + sum of Q_ij x_i x_j (diagonal terms use x_i since x_i^2 = x_i)."""
    bits = np.asarray(x)
    if bits.shape != (q.dim,):
        raise ContractViolation(
            f"bit vector length {bits.size} does not match QUBO dim {q.dim}"
        )
    if not np.isin(bits, (0, 1)).all():
        raise ContractViolation("bit vector entries must be 0 or 1")
    total = q.offset
    for (i, j), v in q.coeffs.items():
        if bits[i] and bits[j]:
            total += v
    return float(total)


def to_ising(q: QuboMatrix) -> IsingModel:
    """Exact energy-preserving conversion under the spin map s = 2x - 1."""
    h = np.zeros(q.dim)
    j: dict[tuple[int, int], float] = {}
    offset = q.offset
    for (a, b), v in q.coeffs.items():
        if a == b:
            h[a] += v / 2.0
            offset += v / 2.0
        else:
            j[(a, b)] = j.get((a, b), 0.0) + v / 4.0
            h[a] += v / 4.0
            h[b] += v / 4.0
            offset += v / 4.0
    return IsingModel(dim=q.dim, h=h, j=j, offset=offset)


def ising_energy(m: IsingModel, s) -> float:
    """offset + h's + sum of J_ij s_i s_j over spin assignments."""
    spins = np.asarray(s, dtype=np.float64)
    if spins.shape != (m.dim,):
        raise ContractViolation(
            f"spin vector length {spins.size} does not match Ising dim {m.dim}"
        )
    if not np.isin(spins, (-1, 1)).all():
        raise ContractViolation("spin entries must be -1 or +1")
    total = m.offset + float(m.h @ spins)
    for (a, b), v in m.j.items():
        total += v * spins[a] * spins[b]
    return float(total)


def chain_strength_bound(q: QuboMatrix) -> float:
    """Sum of absolute coefficient values; a sufficient chain-strength bound."""
    return float(sum(abs(v) for v in q.coeffs.values()))


def decode(
    instance: PortfolioInstance,
    layout: VariableLayout,
    bits,
    energy: float | None = None,
    **provenance,
) -> Solution:
    """Split QUBO bits into asset and slack parts and rebuild all metrics."""
    arr = np.asarray(bits)
    if arr.shape != (layout.dim,):
        raise ContractViolation(
            f"bit vector length {arr.size} does not match layout dim {layout.dim}"
        )
    x = arr[: layout.n_assets]
    y = arr[layout.n_assets :]
    surplus = float(np.dot(y, layout.slack_weights)) if layout.n_slack else 0.0
    notes = dict(provenance)
    if layout.n_slack:
        notes["slack_surplus"] = surplus
        notes["slack_bits"] = tuple(int(b) for b in y)
    return solution_from_bits(instance, x, energy=energy, **notes)


def write_qubo(q: QuboMatrix, path) -> None:
    """Write the text QUBO format: `p qubo <dim> <nnz> <offset>` then `i j value`."""
    lines = [f"p qubo {q.dim} {len(q.coeffs)} {q.offset:.17g}"]
    for (i, j), v in sorted(q.coeffs.items()):
        lines.append(f"{i} {j} {v:.17g}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_qubo(path) -> QuboMatrix:
    """Read the text QUBO format written by :func:`write_qubo`."""
    dim = None
    offset = 0.0
    coeffs: dict[tuple[int, int], float] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("c"):
                continue
            parts = line.split()
            if parts[0] == "p":
                if len(parts) != 5 or parts[1] != "qubo":
                    raise ValueError(f"{path}:{lineno}: malformed problem line {line!r}")
                dim = int(parts[2])
                offset = float(parts[4])
                continue
            if dim is None:
                raise ValueError(f"{path}:{lineno}: coefficient before problem line")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: malformed coefficient line {line!r}")
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            coeffs[(i, j)] = v
    if dim is None:
        raise ValueError(f"{path}: no problem line found")
    return QuboMatrix(dim=dim, coeffs=coeffs, offset=offset)
