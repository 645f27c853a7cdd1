"""Collaborative covert channel: mutual collision profiling and binned transmission."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .analytics import LatencyModel
from .cache import (RECEIVER_SDID, TRANSMITTER_SDID, Cache, Domain, default_flush_accesses,
                    flush_lines, touch_batch)
from .profiling import PruneDidNotConverge, _prime_prune


class RoundBudgetExceeded(RuntimeError):
    pass


class DegenerateChannel(RuntimeError):
    pass


@dataclass(frozen=True)
class CovertProfileConfig:
    batch_size: int = 8000
    f: float = 0.05
    max_rounds: int = 64
    transmitter_prunes: bool = True
    max_prune_passes: int = 64

    def __post_init__(self):
        if not 0 < self.f < 1:
            raise ValueError("f must be in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def target(self, cache: Cache) -> int:
        return math.ceil(self.f * cache.geometry.total_slots())


@dataclass
class ChannelEndpoints:
    t_R: np.ndarray
    t_T: np.ndarray
    s: int
    sdid_T: int = TRANSMITTER_SDID
    sdid_R: int = RECEIVER_SDID
    rounds: int = 0

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("s must be >= 1")

    @property
    def bin_size(self) -> int:
        return len(self.t_T) // self.s

    @property
    def bins(self) -> np.ndarray:
        """``(s, bin_size)`` array; the ``len(t_T) % s`` trailing addresses are held out."""
        b = self.bin_size
        return self.t_T[: b * self.s].reshape(self.s, b)

    def with_bins(self, s: int) -> "ChannelEndpoints":
        return ChannelEndpoints(self.t_R, self.t_T, s, self.sdid_T, self.sdid_R, self.rounds)


@dataclass(frozen=True)
class TransmissionConfig:
    s: int = 64
    d: int = 0
    flush_accesses: int | None = None
    settle_passes: int = 32

    def __post_init__(self):
        if self.s < 1 or self.d < 0:
            raise ValueError("need s >= 1 and d >= 0")


@dataclass
class TransmissionReport:
    sent: np.ndarray
    received: np.ndarray
    miss_counts: np.ndarray
    hits: int
    misses: int
    sequences: int
    modeled_time: float

    @property
    def bits_sent(self) -> int:
        return len(self.sent)

    @property
    def bit_errors(self) -> int:
        return int(np.count_nonzero(self.sent != self.received))

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_sent if self.bits_sent else 0.0

    @property
    def bandwidth(self) -> float:
        """Bits per modeled second."""
        return self.bits_sent / self.modeled_time if self.modeled_time else math.inf

    def miss_count_histograms(self) -> dict[int, np.ndarray]:
        top = int(self.miss_counts.max(initial=0)) + 1
        return {b: np.bincount(self.miss_counts[self.sent == b], minlength=top) for b in (0, 1)}

    def mean_miss_count(self, bit: int) -> float:
        sel = self.miss_counts[self.sent == bit]
        return float(sel.mean()) if len(sel) else math.nan


def _load_set(cache: Cache, domain: Domain, batch: int, prune: bool, max_passes: int):
    addrs = domain.fresh(batch)
    rows = cache.idf.rows(domain.sdid, addrs)
    alive = np.empty(batch, dtype=np.int64)
    hits = np.empty(batch, dtype=np.bool_)
    sdid = np.uint64(domain.sdid)
    if prune:
        n, *_ = _prime_prune(cache.state, cache.rng, sdid, addrs, rows, max_passes, alive, hits)
        if n < 0:
            raise PruneDidNotConverge(f"no clean pass within {max_passes} passes")
    else:
        alive[:] = np.arange(batch)
        touch_batch(cache.state, cache.rng, sdid, addrs, rows, alive, batch, hits, False)
        n = batch
    return addrs, rows, alive[:n].copy()


def _reaccess_misses(cache: Cache, sdid: int, addrs, rows, order) -> np.ndarray:
    hits = np.empty(len(order), dtype=np.bool_)
    touch_batch(cache.state, cache.rng, np.uint64(sdid), addrs, rows, order, len(order), hits,
                False)
    return addrs[order[~hits]]


def covert_profile(cache: Cache, config: CovertProfileConfig = CovertProfileConfig(),
                   transmitter: Domain | int = TRANSMITTER_SDID,
                   receiver: Domain | int = RECEIVER_SDID, s: int = 64) -> ChannelEndpoints:
    """Collect addresses of each party that collide with the other party's lines.

    Per round the receiver primes and prunes a fresh batch, the transmitter
    loads its own batch, then each side re-accesses its set and keeps the
    slow addresses. Rounds repeat until both hold ``ceil(f * N)`` addresses.
    """
    if isinstance(transmitter, int):
        transmitter = Domain(transmitter, "transmitter")
    if isinstance(receiver, int):
        receiver = Domain(receiver, "receiver")
    target = config.target(cache)
    got_R: list[np.ndarray] = []
    got_T: list[np.ndarray] = []
    n_R = n_T = 0
    rounds = 0
    while n_R < target or n_T < target:
        if rounds >= config.max_rounds:
            raise RoundBudgetExceeded(
                f"{n_R}/{n_T} of {target} collision addresses after {rounds} rounds")
        rounds += 1
        r_addrs, r_rows, r_set = _load_set(cache, receiver, config.batch_size, True,
                                           config.max_prune_passes)
        t_addrs, t_rows, t_set = _load_set(cache, transmitter, config.batch_size,
                                           config.transmitter_prunes, config.max_prune_passes)
        new_R = _reaccess_misses(cache, receiver.sdid, r_addrs, r_rows, r_set)
        new_T = _reaccess_misses(cache, transmitter.sdid, t_addrs, t_rows, t_set)
        got_R.append(new_R)
        got_T.append(new_T)
        n_R += len(new_R)
        n_T += len(new_T)
    return ChannelEndpoints(np.concatenate(got_R), np.concatenate(got_T), s,
                            transmitter.sdid, receiver.sdid, rounds)


@njit(cache=True)
def _transmit(st, rng, sd_R, r_addrs, r_rows, sd_T, bins, bin_rows, bits, flush_n,
              settle_passes, counts, stats):
    # stats: hits, misses, sequences
    s = bins.shape[0]
    b = bins.shape[1]
    n_r = r_addrs.shape[0]
    r_order = np.arange(n_r)
    r_hits = np.empty(n_r, dtype=np.bool_)
    b_order = np.arange(b)
    b_hits = np.empty(b, dtype=np.bool_)
    for i in range(bits.shape[0]):
        j = i % s
        if j == 0:
            flush_lines(st, rng, flush_n)
            stats[2] += 1
        # receiver listens on every channel: load until its set is resident
        for _ in range(settle_passes):
            m, acc = touch_batch(st, rng, sd_R, r_addrs, r_rows, r_order, n_r, r_hits, False)
            stats[0] += acc - m
            stats[1] += m
            if m == 0:
                break
        if bits[i]:
            m, acc = touch_batch(st, rng, sd_T, bins[j], bin_rows[j], b_order, b, b_hits, False)
            stats[0] += acc - m
            stats[1] += m
        m, acc = touch_batch(st, rng, sd_R, r_addrs, r_rows, r_order, n_r, r_hits, False)
        stats[0] += acc - m
        stats[1] += m
        counts[i] = m


def _as_bits(message) -> np.ndarray:
    if isinstance(message, str):
        if set(message) - {"0", "1"}:
            raise ValueError("bit strings may contain only '0' and '1'")
        return np.frombuffer(message.encode(), dtype=np.uint8) - ord("0")
    return np.asarray(message, dtype=np.uint8).reshape(-1)


def transmit(cache: Cache, endpoints: ChannelEndpoints, config: TransmissionConfig,
             message, latency: LatencyModel = LatencyModel()) -> TransmissionReport:
    """Send ``message`` (bit string or 0/1 array), ``config.s`` bits per flushed sequence."""
    bits = _as_bits(message)
    ep = endpoints if endpoints.s == config.s else endpoints.with_bins(config.s)
    if ep.bin_size < 1:
        raise ValueError(f"{len(ep.t_T)} transmitter addresses cannot fill {config.s} bins")
    g = cache.geometry
    bins = np.ascontiguousarray(ep.bins)
    bin_rows = cache.idf.rows(ep.sdid_T, bins.reshape(-1)).reshape(ep.s, ep.bin_size, g.n_ways)
    r_addrs = np.ascontiguousarray(ep.t_R, dtype=np.uint64)
    r_rows = cache.idf.rows(ep.sdid_R, r_addrs)
    flush_n = config.flush_accesses or default_flush_accesses(g)
    counts = np.zeros(len(bits), dtype=np.int64)
    stats = np.zeros(3, dtype=np.int64)
    _transmit(cache.state, cache.rng, np.uint64(ep.sdid_R), r_addrs, r_rows,
              np.uint64(ep.sdid_T), bins, bin_rows, bits, flush_n, config.settle_passes,
              counts, stats)
    hits, misses, seqs = (int(x) for x in stats)
    time = hits * latency.t_hit + misses * latency.t_miss + seqs * latency.t_flush
    received = (counts > config.d).astype(np.uint8)
    return TransmissionReport(bits, received, counts, hits, misses, seqs, time)


def best_threshold(zero_counts, one_counts) -> int:
    """Threshold minimizing pilot errors (decode 1 iff count > d); ties go to the smaller d."""
    zero_counts = np.asarray(zero_counts)
    one_counts = np.asarray(one_counts)
    if np.array_equal(np.sort(zero_counts), np.sort(one_counts)):
        raise DegenerateChannel("miss counts do not depend on the sent bit")
    top = int(max(zero_counts.max(initial=0), one_counts.max(initial=0)))
    best_d, best_err = 0, None
    for d in range(top + 1):
        err = np.count_nonzero(zero_counts > d) + np.count_nonzero(one_counts <= d)
        if best_err is None or err < best_err:
            best_d, best_err = d, err
    return best_d


def calibrate_threshold(cache: Cache, endpoints: ChannelEndpoints, s: int = 64,
                        pilot_bits: int | None = None, flush_accesses: int | None = None) -> int:
    """Send an alternating pilot and pick the decision threshold from its miss counts."""
    pilot_bits = 4 * s if pilot_bits is None else pilot_bits
    if pilot_bits < 2 * s:
        raise ValueError("pilot needs at least 2*s bits")
    pilot = np.arange(pilot_bits, dtype=np.uint8) % 2
    report = transmit(cache, endpoints, TransmissionConfig(s=s, d=0, flush_accesses=flush_accesses),
                      pilot)
    return best_threshold(report.miss_counts[pilot == 0], report.miss_counts[pilot == 1])
