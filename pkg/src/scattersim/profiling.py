"""Prime+Prune+Probe eviction-set profiling against a single victim line."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .cache import (ATTACKER_SDID, VICTIM_SDID, Cache, Domain, default_flush_accesses,
                    flush_lines, touch_batch)
from .idf import _fill_rows


class PruneDidNotConverge(RuntimeError):
    pass


class IterationBudgetExceeded(RuntimeError):
    pass


class ProceedNormally:
    """Inter-iteration mode that leaves the cache untouched."""

    def __repr__(self):
        return "ProceedNormally()"

    def __eq__(self, other):
        return isinstance(other, ProceedNormally)


@dataclass(frozen=True)
class Flush:
    flush_accesses: Optional[int] = None  # None: scaled default for the geometry

    def __post_init__(self):
        if self.flush_accesses is not None and self.flush_accesses < 1:
            raise ValueError("flush_accesses must be >= 1 in Flush mode")


@dataclass(frozen=True)
class ProfilingConfig:
    k: int
    t: int = 1
    inter_iteration_mode: Flush | ProceedNormally = field(default_factory=Flush)
    max_prune_passes: int = 64
    max_iterations: int = 10_000_000
    reuse_candidates: bool = False

    def __post_init__(self):
        if self.k < 1 or self.t < 1:
            raise ValueError("k and t must be >= 1")

    def flush_accesses(self, cache: Cache) -> int:
        mode = self.inter_iteration_mode
        if isinstance(mode, ProceedNormally):
            return 0
        return mode.flush_accesses or default_flush_accesses(cache.geometry)


@dataclass(frozen=True)
class VictimModel:
    sdid: int = VICTIM_SDID
    target: int = 0


@dataclass(frozen=True)
class PrunedSet:
    addresses: np.ndarray
    m_pr: int

    @property
    def k_prime(self) -> int:
        return len(self.addresses)


@dataclass
class ProfilingReport:
    """Statistics of one profiling run.

    ``m_pr`` and ``k_prime`` are means over iterations; ``p_hat`` is the
    fraction of iterations whose probe caught an eviction. The raw sums are
    kept so runs can be pooled. ``bound_tight`` counts iterations whose
    attacker accesses reached ``(passes + 2) * k`` exactly.
    """

    collision_addresses: np.ndarray
    iterations: int
    A_v: int
    A_a: int
    attacker_misses: int
    prune_passes_total: int
    k_prime_total: int
    successes: int
    victim_misses: int
    bound_ok: bool
    bound_tight: int = 0

    @property
    def m_pr(self) -> float:
        return self.prune_passes_total / self.iterations

    @property
    def k_prime(self) -> float:
        return self.k_prime_total / self.iterations

    @property
    def p_hat(self) -> float:
        return self.successes / self.iterations

    @property
    def a_miss(self) -> float:
        return self.attacker_misses / self.A_a if self.A_a else 0.0


@njit(cache=True)
def _prime_prune(st, rng, sdid, addrs, rows, max_passes, alive, hits):
    """Prime ``addrs``, then re-access the survivors until a pass is clean.

    A missing address is dropped from the set; its refill still happens and
    may displace a survivor, hence the repeated passes. Every re-access pass
    is counted, the final clean one included. A single candidate cannot be
    displaced by its own set, so it gets no pass.

    Returns (k', passes, accesses, misses); k' = -1 if the cap was hit.
    """
    k = addrs.shape[0]
    for r in range(k):
        alive[r] = r
    misses, accesses = touch_batch(st, rng, sdid, addrs, rows, alive, k, hits, False)
    n = k
    passes = 0
    if k > 1:
        while True:
            if passes >= max_passes:
                return -1, passes, accesses, misses
            passes += 1
            pm, _ = touch_batch(st, rng, sdid, addrs, rows, alive, n, hits, False)
            accesses += n
            misses += pm
            if pm == 0:
                break
            kept = 0
            for j in range(n):
                if hits[j]:
                    alive[kept] = alive[j]
                    kept += 1
            n = kept
    return n, passes, accesses, misses


@njit(cache=True)
def _profile(st, rng, k0, k1, n_ways, b_indices, att_sdid, next_addr,
             vic_sdid, vic_addr, vic_row, k, t, flush_n, max_passes, max_iter,
             reuse, found, stats):
    # stats: iterations, passes, k', successes, accesses, misses, bound violations,
    #        victim misses, next_addr, status, iterations exactly at the bound
    addrs = np.empty(k, dtype=np.uint64)
    rows = np.empty((k, n_ways), dtype=np.int64)
    alive = np.empty(k, dtype=np.int64)
    hits = np.empty(k, dtype=np.bool_)
    vic_a = np.array([vic_addr])
    vic_rows = vic_row.reshape(1, n_ways)
    vic_order = np.zeros(1, dtype=np.int64)
    vic_hit = np.empty(1, dtype=np.bool_)
    n_found = 0
    carried = 0
    status = 0
    while n_found < t:
        if stats[0] >= max_iter:
            status = 2
            break
        if flush_n > 0:
            flush_lines(st, rng, flush_n)
        for r in range(carried, k):
            addrs[r] = next_addr
            next_addr += 1
        _fill_rows(k0, k1, att_sdid, addrs[carried:], n_ways, b_indices, rows[carried:])

        n, passes, acc, miss = _prime_prune(st, rng, att_sdid, addrs, rows, max_passes,
                                            alive, hits)
        if n < 0:
            status = 1
            break
        vm, _ = touch_batch(st, rng, vic_sdid, vic_a, vic_rows, vic_order, 1, vic_hit, False)
        stats[7] += vm
        # one victim access displaces at most one line: stop at the first miss
        pm, probed = touch_batch(st, rng, att_sdid, addrs, rows, alive, n, hits, True)
        acc += probed
        miss += pm
        hit_at = probed - 1 if pm else -1
        if pm:
            found[n_found] = addrs[alive[hit_at]]
            n_found += 1
            stats[3] += 1
        stats[0] += 1
        stats[1] += passes
        stats[2] += n
        stats[4] += acc
        stats[5] += miss
        if acc > (passes + 2) * k:
            stats[6] += 1
        elif acc == (passes + 2) * k:
            stats[10] += 1
        carried = 0
        if reuse:
            for j in range(n):
                if j != hit_at:
                    r = alive[j]
                    addrs[carried] = addrs[r]
                    rows[carried, :] = rows[r, :]
                    carried += 1
    stats[8] = next_addr
    stats[9] = status
    return n_found


def prime_and_prune(cache: Cache, attacker: Domain | int, candidates=None, k: int | None = None,
                    max_prune_passes: int = 64) -> PrunedSet:
    """Load ``candidates`` and prune them until they are mutually resident."""
    if isinstance(attacker, int):
        attacker = Domain(attacker, "attacker")
    if candidates is None:
        if k is None:
            raise ValueError("need candidates or k")
        candidates = attacker.fresh(k)
    addrs = np.ascontiguousarray(candidates, dtype=np.uint64)
    if len(np.unique(addrs)) != len(addrs):
        raise ValueError("candidates must be pairwise distinct")
    rows = cache.idf.rows(attacker.sdid, addrs)
    alive = np.empty(len(addrs), dtype=np.int64)
    hits = np.empty(len(addrs), dtype=np.bool_)
    n, passes, _, _ = _prime_prune(cache.state, cache.rng, np.uint64(attacker.sdid), addrs,
                                   rows, max_prune_passes, alive, hits)
    if n < 0:
        raise PruneDidNotConverge(f"no clean pass within {max_prune_passes} passes")
    return PrunedSet(addrs[alive[:n]].copy(), passes)


def profile_eviction_set(cache: Cache, config: ProfilingConfig,
                         attacker: Domain | int = ATTACKER_SDID,
                         victim: VictimModel = VictimModel()) -> ProfilingReport:
    """Collect ``config.t`` attacker addresses that collide with the victim line.

    Each iteration optionally flushes, primes and prunes ``k`` candidates,
    lets the victim load its target once and probes the pruned set.
    """
    if isinstance(attacker, int):
        attacker = Domain(attacker, "attacker")
    g = cache.geometry
    idf = cache.idf
    found = np.zeros(config.t, dtype=np.uint64)
    stats = np.zeros(11, dtype=np.int64)
    _profile(cache.state, cache.rng, idf._k0, idf._k1, g.n_ways, g.b_indices,
             np.uint64(attacker.sdid), np.uint64(attacker.next_addr),
             np.uint64(victim.sdid), np.uint64(victim.target),
             idf.indices(victim.sdid, victim.target),
             config.k, config.t, config.flush_accesses(cache), config.max_prune_passes,
             config.max_iterations, config.reuse_candidates, found, stats)
    attacker.next_addr = int(stats[8])
    if stats[9] == 1:
        raise PruneDidNotConverge(f"no clean pass within {config.max_prune_passes} passes")
    if stats[9] == 2:
        raise IterationBudgetExceeded(
            f"{stats[3]} of {config.t} collisions after {config.max_iterations} iterations")
    return ProfilingReport(
        collision_addresses=found,
        iterations=int(stats[0]),
        A_v=int(stats[0]),
        A_a=int(stats[4]),
        attacker_misses=int(stats[5]),
        prune_passes_total=int(stats[1]),
        k_prime_total=int(stats[2]),
        successes=int(stats[3]),
        victim_misses=int(stats[7]),
        bound_ok=bool(stats[6] == 0),
        bound_tight=int(stats[10]),
    )


@njit(cache=True)
def _exploit(st, rng, att_sdid, addrs, rows, vic_sdid, vic_addr, vic_row, trials, flush_n):
    order = np.arange(addrs.shape[0])
    hits = np.empty(addrs.shape[0], dtype=np.bool_)
    vic_a = np.array([vic_addr])
    vic_rows = vic_row.reshape(1, vic_row.shape[0])
    vic_order = np.zeros(1, dtype=np.int64)
    vic_hit = np.empty(1, dtype=np.bool_)
    evictions = 0
    for _ in range(trials):
        flush_lines(st, rng, flush_n)
        touch_batch(st, rng, vic_sdid, vic_a, vic_rows, vic_order, 1, vic_hit, False)
        touch_batch(st, rng, att_sdid, addrs, rows, order, addrs.shape[0], hits, False)
        evictions += touch_batch(st, rng, vic_sdid, vic_a, vic_rows, vic_order, 1, vic_hit,
                                 False)[0]
    return evictions


def exploit_evict_probability(cache: Cache, collision_addresses, attacker: Domain | int = ATTACKER_SDID,
                              victim: VictimModel = VictimModel(), trials: int = 10_000,
                              flush_accesses: int | None = None) -> float:
    """Fraction of trials in which one pass over the eviction set evicts the victim line."""
    sdid = attacker.sdid if isinstance(attacker, Domain) else attacker
    addrs = np.ascontiguousarray(collision_addresses, dtype=np.uint64).reshape(-1)
    rows = cache.idf.rows(sdid, addrs)
    if flush_accesses is None:
        flush_accesses = default_flush_accesses(cache.geometry)
    ev = _exploit(cache.state, cache.rng, np.uint64(sdid), addrs, rows, np.uint64(victim.sdid),
                  np.uint64(victim.target), cache.idf.indices(victim.sdid, victim.target),
                  trials, flush_accesses)
    return ev / trials
