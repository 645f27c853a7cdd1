"""
A binned covert channel between two cooperating domains
=======================================================

Both sides keep the addresses that got evicted by the other side. The
transmitter's set is split into s bins, one bin per bit; the receiver counts
its misses after each step.
"""

import numpy as np

from scattersim.cache import Cache
from scattersim.covert import (CovertProfileConfig, TransmissionConfig, calibrate_threshold,
                               covert_profile, transmit)
from scattersim.idf import CacheGeometry

cache = Cache(CacheGeometry(8, 11), rng=5)
ep = covert_profile(cache, CovertProfileConfig(batch_size=8000, f=0.05), s=64)
print("receiver set", len(ep.t_R), "transmitter set", len(ep.t_T), "bin size", ep.bin_size,
      "rounds", ep.rounds)

d = calibrate_threshold(cache, ep, s=64)
print("threshold d =", d)

msg = np.random.default_rng(0).integers(0, 2, 4096).astype(np.uint8)
rep = transmit(cache, ep, TransmissionConfig(s=64, d=d), msg)
print("BER", rep.ber, "bandwidth bit/s", round(rep.bandwidth))
print("mean misses for 0:", rep.mean_miss_count(0), "for 1:", rep.mean_miss_count(1))

# miss-count histograms per sent bit
for bit, h in rep.miss_count_histograms().items():
    print(bit, h[:8])

# a plain-text payload
text = "hi"
bits = "".join(f"{ord(c):08b}" for c in text)
out = transmit(cache, ep, TransmissionConfig(s=64, d=d), bits)
print(bits, "".join(map(str, out.received)))
