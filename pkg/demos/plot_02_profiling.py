"""
Profiling a colliding address with Prime+Prune+Probe
====================================================

Prime k candidates, prune the ones that evict each other, let the victim
run once, probe. A probe miss is a collision with the victim line.
"""

from scattersim.cache import ATTACKER_SDID, Cache
from scattersim.harness import ExperimentSpec, emit_report, run
from scattersim.idf import CacheGeometry
from scattersim.profiling import ProfilingConfig, VictimModel, prime_and_prune, profile_eviction_set

geom = CacheGeometry(4, 10)
cache = Cache(geom, rng=3)

# one prune: the survivors never evict each other
pruned = prime_and_prune(cache, ATTACKER_SDID, k=2000)
print("k'", pruned.k_prime, "passes", pruned.m_pr)
print("re-access all hit:", cache.access_many(ATTACKER_SDID, pruned.addresses).all())

# collect ten colliding addresses
victim = VictimModel(target=7)
rep = profile_eviction_set(cache, ProfilingConfig(k=2000, t=10), victim=victim)
print("victim accesses", rep.A_v, "p_hat", round(rep.p_hat, 3), "a_miss", round(rep.a_miss, 3))

# each one shares a slot index with the victim line in some way
target = cache.idf.indices(victim.sdid, victim.target)
print((cache.idf.rows(ATTACKER_SDID, rep.collision_addresses) == target).any(axis=1))

# a small sweep over two reference cells through the harness
spec = ExperimentSpec(kind="profile", cells=((4, 10, 200), (4, 10, 2000)), trials=200)
print(emit_report(run(spec, write=False)))
