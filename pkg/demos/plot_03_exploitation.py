"""
From a few hundred collisions to a reliable eviction set
========================================================

275 addresses that each collide with the victim line in one way evict it
with probability close to 0.99 after a flush.
"""

from scattersim import analytics as an
from scattersim.cache import Cache
from scattersim.idf import CacheGeometry
from scattersim.profiling import ProfilingConfig, exploit_evict_probability, profile_eviction_set

geom = CacheGeometry(8, 11)
cache = Cache(geom, rng=11)

rep = profile_eviction_set(cache, ProfilingConfig(k=8000, t=275))
p = exploit_evict_probability(cache, rep.collision_addresses, trials=10_000)
print("victim accesses spent:", rep.A_v)
print("eviction probability:", p)

# costs against the classic k = 1 approach
model = an.LatencyModel()
av_o = an.av_original(8, 11, 275)
print("original victim accesses", av_o, "modeled hours", an.runtime(model, av_o, 2 * av_o, 0.0) / 3600)
print("this run, modeled seconds", an.runtime(model, rep.A_v, rep.A_a, rep.a_miss))
