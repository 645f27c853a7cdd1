"""
A randomized cache in a few lines
=================================

Every address gets one pseudorandom index per way, keyed and
domain-separated. Misses replace a uniformly random way.
"""

import numpy as np

from scattersim.analytics import coupon_coverage, flush_survival
from scattersim.cache import ATTACKER_SDID, VICTIM_SDID, Cache, default_flush_accesses
from scattersim.idf import CacheGeometry

geom = CacheGeometry(n_ways=8, b_indices=11)
cache = Cache(geom, rng=1)
print(geom, "slots:", geom.total_slots())

# the same address maps differently in another security domain
print("attacker 42 ->", cache.idf.indices(ATTACKER_SDID, 42))
print("victim   42 ->", cache.idf.indices(VICTIM_SDID, 42))

# first access misses, second hits
print(cache.access(ATTACKER_SDID, 42))
print(cache.access(ATTACKER_SDID, 42))

# loading k fresh lines leaves about N(1 - (1 - 1/N)^k) of them resident
for k in (200, 2000, 8000):
    cache.reset()
    cache.access_many(ATTACKER_SDID, np.arange(k, dtype=np.uint64))
    resident = cache.occupancy()
    print(f"k={k:5d}  resident~{resident:5d}  coupon bound {coupon_coverage(geom.total_slots(), k):7.1f}")

# the default flush leaves a line behind with probability ~e^-4.4
cache.reset()
cache.access(VICTIM_SDID, 0)
survived = 0
for _ in range(2000):
    cache.access(VICTIM_SDID, 0)
    cache.flush()
    survived += cache.resident_slot(VICTIM_SDID, 0) is not None
print("flush survival", survived / 2000, "model", round(flush_survival(geom.total_slots(), default_flush_accesses(geom)), 4))
