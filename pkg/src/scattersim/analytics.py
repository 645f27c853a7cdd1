"""Closed-form effort predictors and the latency model for profiling runtime."""

from __future__ import annotations

import math
from dataclasses import dataclass

_I64_MAX = 2**63 - 1


@dataclass(frozen=True)
class LatencyModel:
    """Costs in seconds: cache hit, cache miss, one flush, one victim computation."""

    t_hit: float = 9.5e-9
    t_miss: float = 50e-9
    t_flush: float = 3.6e-3
    t_victim: float = 0.5e-3

    def __post_init__(self):
        if min(self.t_hit, self.t_miss, self.t_flush, self.t_victim) < 0:
            raise ValueError("latencies must be non-negative")
        if self.t_miss < self.t_hit:
            raise ValueError("t_miss must be >= t_hit")


@dataclass(frozen=True)
class Prediction:
    name: str
    value: float
    formula: str

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"{self.name}: prediction must be finite and non-negative")


def av_original(n_ways: int, b_indices: int, t: int) -> int:
    """Victim accesses for one-address-at-a-time profiling: n_ways^2 * 2^b * t."""
    if n_ways < 1 or b_indices < 0 or t < 0:
        raise ValueError("need n_ways >= 1, b_indices >= 0, t >= 0")
    v = n_ways * n_ways * (1 << b_indices) * t
    if v > _I64_MAX:
        raise OverflowError(f"av_original({n_ways}, {b_indices}, {t}) exceeds 64 bits")
    return v


def av_expected(n_ways: int, b_indices: int, k_prime: float, t: float) -> float:
    """Victim accesses with a pruned set of k' lines: t / p with p = k' / N."""
    if k_prime <= 0:
        raise ValueError("k_prime must be positive")
    return n_ways * 2.0**b_indices * t / k_prime


def aa_upper(m_pr: float, k: float, t: float, p: float) -> float:
    """Upper bound on attacker accesses, flushing excluded: (m_pr + 2) k t / p."""
    if not 0 < p <= 1:
        raise ValueError("p must be in (0, 1]")
    return (m_pr + 2) * k * t / p


def coupon_coverage(n_slots: int, k: float) -> float:
    """Expected distinct slots hit by k uniform fills: N (1 - (1 - 1/N)^k)."""
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    return n_slots * -math.expm1(k * math.log1p(-1.0 / n_slots)) if n_slots > 1 else float(k > 0)


def c_bound(n_ways: int, p: float) -> float:
    """Upper bound on the iteration blow-up when the victim line is not flushed."""
    if not 0 < p <= 1:
        raise ValueError("p must be in (0, 1]")
    return min(float(n_ways), 1.0 / p)


def runtime(model: LatencyModel, A_v: float, A_a: float, a_miss: float,
            flushing: bool = True) -> float:
    """Modeled profiling time.

    Each victim access costs one victim run, plus one flush when flushing
    between iterations; attacker accesses cost a hit or a miss according to
    the attacker miss rate.
    """
    if A_v < 0 or A_a < 0 or not 0 <= a_miss <= 1:
        raise ValueError("need A_v, A_a >= 0 and a_miss in [0, 1]")
    per_victim = model.t_victim + (model.t_flush if flushing else 0.0)
    per_attacker = a_miss * model.t_miss + (1 - a_miss) * model.t_hit
    return A_v * per_victim + A_a * per_attacker


def flush_survival(n_slots: int, flush_accesses: int) -> float:
    """Probability that a given cached line survives ``flush_accesses`` fresh fills."""
    return (1 - 1 / n_slots) ** flush_accesses
