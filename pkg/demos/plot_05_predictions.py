"""
Closed-form predictions next to the simulator
=============================================

Expected victim accesses, the coupon-collector bound on k', the attacker
access bound and modeled runtimes.
"""

from scattersim import analytics as an
from scattersim.harness import ExperimentSpec, emit_report, run
from scattersim.reference import REFERENCE_ROWS

model = an.LatencyModel()
for r in REFERENCE_ROWS:
    N = r.n_ways << r.b_indices
    t = an.runtime(model, r.A_v, r.A_v * r.Aa_per_Av, r.a_miss)
    print(f"({r.n_ways},{r.b_indices},{r.k:5d})  coverage {an.coupon_coverage(N, r.k):8.1f}"
          f"  k' {r.k_prime:5}  runtime {t:8.4g} s  printed {r.time_s:8.4g} s")

# the harness ties the formulas to a short simulated run
print(emit_report(run(ExperimentSpec(kind="predict", cells=((8, 11, 8000),), t=(275,), trials=5),
                      write=False)))
