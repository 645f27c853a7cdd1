"""Published profiling statistics that the simulator is checked against.

One row per (n_ways, b_indices, k). For k = 1 the attacker miss rate is only
given as approximately zero. ``time_s`` is the modeled profiling time for a
single colliding address.
"""

from typing import NamedTuple


class ReferenceRow(NamedTuple):
    n_ways: int
    b_indices: int
    k: int
    m_pr: float
    k_prime: float
    p: float
    A_v: float
    Aa_per_Av: float
    a_miss: float
    time_s: float


REFERENCE_ROWS = (
    ReferenceRow(4, 10, 1, 0.0, 1, 2.44e-4, 4098, 2, 0.0, 17),
    ReferenceRow(4, 10, 200, 2.07, 194, 0.047, 21, 800, 0.25, 86e-3),
    ReferenceRow(4, 10, 2000, 4.63, 1306, 0.333, 3, 10e3, 0.27, 13e-3),
    ReferenceRow(4, 11, 1, 0.0, 1, 1.20e-4, 8354, 2, 0.0, 34),
    ReferenceRow(4, 11, 200, 1.94, 197, 0.024, 42, 780, 0.26, 173e-3),
    ReferenceRow(4, 11, 4000, 4.83, 2610, 0.317, 3, 21e3, 0.26, 14e-3),
    ReferenceRow(8, 10, 1, 0.0, 1, 1.23e-4, 8130, 2, 0.0, 33),
    ReferenceRow(8, 10, 200, 1.93, 197, 0.024, 42, 780, 0.26, 172e-3),
    ReferenceRow(8, 10, 4000, 5.12, 2653, 0.33, 3, 22e3, 0.25, 14e-3),
    ReferenceRow(8, 11, 1, 0.0, 1, 6.03e-5, 16584, 2, 0.0, 68),
    ReferenceRow(8, 11, 200, 1.71, 199, 0.012, 83, 740, 0.27, 341e-3),
    ReferenceRow(8, 11, 8000, 5.52, 5305, 0.33, 3, 46e3, 0.23, 15e-3),
)

# exploitation with 275 colliding addresses in an (8, 11) cache
EVICTION_SET_SIZE = 275
EVICTION_PROBABILITY = 0.99
