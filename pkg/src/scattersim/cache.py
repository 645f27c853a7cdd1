"""Behavioral model of a randomized skewed cache (hashing-variant IDF).

Every way is indexed separately through the keyed IDF, so a line can live in
``n_ways`` different slots and logical sets are composed on the fly. On a
miss the victim way is drawn uniformly from all ways, empty or not.

Only hit/miss is observable by attack code. ``Cache.access`` additionally
returns the displaced line as simulator ground truth for tests; attack
kernels go through :func:`touch_batch`, which returns the hit flag alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

import numpy as np
from numba import njit

from .idf import CacheGeometry, Idf

ATTACKER_SDID = 0xA77A
VICTIM_SDID = 0x51C7
FLUSHER_SDID = 0xF105
TRANSMITTER_SDID = 0x7E57
RECEIVER_SDID = 0x4EC5

# slot state layout: (sdid, addr, full, live, pos, meta)
# meta = [n_ways, n_indices, live_count, hits, misses]
_N_WAYS, _N_IDX, _LIVE, _HITS, _MISSES = range(5)


@dataclass
class Domain:
    """A security domain with its own namespace of never-reused line addresses."""

    sdid: int
    name: str = ""
    next_addr: int = 0

    def fresh(self, count: int) -> np.ndarray:
        start = self.next_addr
        self.next_addr += int(count)
        return np.arange(start, start + count, dtype=np.uint64)


class AccessOutcome(NamedTuple):
    hit: bool
    way: int
    index: int
    evicted: Optional[tuple[int, int]] = None


@njit(cache=True, inline="always")
def _live_add(live, pos, meta, s):
    n = meta[_LIVE]
    live[n] = s
    pos[s] = n
    meta[_LIVE] = n + 1


@njit(cache=True, inline="always")
def _live_drop(full, live, pos, meta, s):
    p = pos[s]
    n = meta[_LIVE] - 1
    last = live[n]
    live[p] = last
    pos[last] = p
    pos[s] = -1
    full[s] = 0
    meta[_LIVE] = n


@njit(cache=True, inline="always")
def _access(st, rng, sdid, addr, row):
    """Full access. Returns (hit, slot, had_occupant, old_sdid, old_addr)."""
    sd, ad, full, live, pos, meta = st
    n_ways = meta[_N_WAYS]
    n_idx = meta[_N_IDX]
    for w in range(n_ways):
        s = w * n_idx + row[w]
        if full[s] and sd[s] == sdid and ad[s] == addr:
            meta[_HITS] += 1
            return True, s, False, np.uint64(0), np.uint64(0)
    w = int(rng.random() * n_ways)
    s = w * n_idx + row[w]
    had = full[s] != 0
    old_sd = sd[s]
    old_ad = ad[s]
    if not had:
        full[s] = 1
        _live_add(live, pos, meta, s)
    sd[s] = sdid
    ad[s] = addr
    meta[_MISSES] += 1
    return False, s, had, old_sd, old_ad


@njit(cache=True)
def touch_batch(st, rng, sdid, addrs, rows, order, n, hits, stop_at_miss):
    """Observable accesses to ``addrs[order[:n]]`` in order.

    Writes per-access hit flags into ``hits`` and returns
    ``(misses, accesses)``. With ``stop_at_miss`` the batch ends right after
    the first miss.
    """
    sd, ad, full, live, pos, meta = st
    n_ways = meta[_N_WAYS]
    n_idx = meta[_N_IDX]
    misses = 0
    done = 0
    for j in range(n):
        r = order[j]
        a = addrs[r]
        hit = False
        for w in range(n_ways):
            s = w * n_idx + rows[r, w]
            if full[s] and sd[s] == sdid and ad[s] == a:
                hit = True
                break
        done += 1
        hits[j] = hit
        if hit:
            continue
        misses += 1
        s = int(rng.random() * n_ways) * n_idx
        s += rows[r, (s // n_idx)]
        if not full[s]:
            full[s] = 1
            n_live = meta[_LIVE]
            live[n_live] = s
            pos[s] = n_live
            meta[_LIVE] = n_live + 1
        sd[s] = sdid
        ad[s] = a
        if stop_at_miss:
            break
    meta[_HITS] += done - misses
    meta[_MISSES] += misses
    return misses, done


@njit(cache=True)
def touch_all(st, rng, sdid, addrs, rows, hits):
    order = np.arange(addrs.shape[0])
    return touch_batch(st, rng, sdid, addrs, rows, order, addrs.shape[0], hits, False)[0]


@njit(cache=True)
def flush_lines(st, rng, n_access):
    """Effect of ``n_access`` fills by fresh, never re-used lines.

    Each such fill lands on a uniformly random slot. Flusher lines are never
    accessed again, so under pure random replacement they behave exactly like
    empty slots; only tracked lines need resolving. The number of fills that
    land on tracked slots is binomial, and each lands uniformly among them.
    """
    sd, ad, full, live, pos, meta = st
    m = meta[_LIVE]
    meta[_MISSES] += n_access
    if m == 0 or n_access <= 0:
        return
    total = meta[_N_WAYS] * meta[_N_IDX]
    c = rng.binomial(n_access, m / total)
    picks = np.empty(c, dtype=np.int64)
    for j in range(c):
        picks[j] = live[int(rng.random() * m)]
    for j in range(c):
        s = picks[j]
        if full[s]:
            _live_drop(full, live, pos, meta, s)


def default_flush_accesses(geometry: CacheGeometry) -> int:
    """72 000 fills for a 16384-slot cache, scaled with the slot count."""
    return -(-72_000 * geometry.total_slots() // 16_384)


class Cache:
    def __init__(self, geometry: CacheGeometry, idf: Idf | None = None,
                 rng: np.random.Generator | int | None = None):
        self.geometry = geometry
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.idf = idf if idf is not None else Idf.random(geometry, self.rng)
        if self.idf.geometry != geometry:
            raise ValueError("IDF geometry does not match cache geometry")
        self.flusher = Domain(FLUSHER_SDID, "flusher")
        n = geometry.total_slots()
        self._sd = np.zeros(n, dtype=np.uint64)
        self._ad = np.zeros(n, dtype=np.uint64)
        self._full = np.zeros(n, dtype=np.uint8)
        self._live = np.zeros(n, dtype=np.int64)
        self._pos = np.full(n, -1, dtype=np.int64)
        self._meta = np.array([geometry.n_ways, geometry.n_indices, 0, 0, 0], dtype=np.int64)
        self.state = (self._sd, self._ad, self._full, self._live, self._pos, self._meta)

    @property
    def hits(self) -> int:
        return int(self._meta[_HITS])

    @property
    def misses(self) -> int:
        return int(self._meta[_MISSES])

    def reset_counters(self):
        self._meta[_HITS] = 0
        self._meta[_MISSES] = 0

    def occupancy(self) -> int:
        """Number of occupied slots (flush fills are not tracked, see ``flush``)."""
        return int(self._meta[_LIVE])

    def access(self, sdid: int, addr: int) -> AccessOutcome:
        row = self.idf.indices(sdid, addr)
        hit, s, had, old_sd, old_ad = _access(self.state, self.rng, np.uint64(sdid),
                                              np.uint64(addr), row)
        way, index = divmod(int(s), self.geometry.n_indices)
        evicted = (int(old_sd), int(old_ad)) if had else None
        return AccessOutcome(bool(hit), way, index, evicted)

    def access_many(self, sdid: int, addrs) -> np.ndarray:
        """Access ``addrs`` in order; returns the per-access hit flags."""
        addrs = np.ascontiguousarray(addrs, dtype=np.uint64).reshape(-1)
        hits = np.empty(addrs.shape[0], dtype=np.bool_)
        touch_all(self.state, self.rng, np.uint64(sdid), addrs,
                  self.idf.rows(sdid, addrs), hits)
        return hits

    def flush(self, excluded: Iterable = (), flush_accesses: int | None = None,
              exact: bool = False):
        """Access ``flush_accesses`` fresh addresses under the flusher domain.

        Fresh addresses never coincide with attack addresses, so ``excluded``
        lines are only displaced by chance collisions. The default path
        resolves the fills statistically (see :func:`flush_lines`) and leaves
        the flusher's own lines untracked; ``exact=True`` performs every
        access through the IDF.
        """
        if flush_accesses is None:
            flush_accesses = default_flush_accesses(self.geometry)
        if flush_accesses < 0:
            raise ValueError("flush_accesses must be >= 0")
        if exact:
            if flush_accesses:
                self.access_many(self.flusher.sdid, self.flusher.fresh(flush_accesses))
        else:
            flush_lines(self.state, self.rng, int(flush_accesses))

    def reset(self):
        self._full[:] = 0
        self._sd[:] = 0
        self._ad[:] = 0
        self._pos[:] = -1
        self._meta[_LIVE:] = 0

    # ground truth helpers, for tests and oracles only

    def resident_slot(self, sdid: int, addr: int) -> Optional[tuple[int, int]]:
        row = self.idf.indices(sdid, addr)
        n_idx = self.geometry.n_indices
        for w, i in enumerate(row):
            s = w * n_idx + int(i)
            if self._full[s] and self._sd[s] == sdid and self._ad[s] == addr:
                return w, int(i)
        return None

    def contents(self) -> dict[tuple[int, int], tuple[int, int]]:
        n_idx = self.geometry.n_indices
        out = {}
        for s in np.flatnonzero(self._full):
            out[divmod(int(s), n_idx)] = (int(self._sd[s]), int(self._ad[s]))
        return out
