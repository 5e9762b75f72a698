"""
Loss and detector-efficiency scaling
=====================================

The single-photon BB84 link degrades linearly with detector efficiency,
MDI-QKD quadratically, because it needs both photons detected in
coincidence. Fiber loss enters as 10^(-alpha L / 10) per link.
"""
import math

from qkdrelay.acceptance import scenario
from qkdrelay.channel import SECONDS_PER_CENTURY, ChannelModel, SourceModel, expected_detections
from qkdrelay.netsim import sweep
from qkdrelay.relay import RelayMode

# %%
# A 10 GHz single-photon source behind 1000 km of 0.2 dB/km fiber.
n = expected_detections(SourceModel(pulse_rate_hz=10e9), ChannelModel(1000), 1.0, SECONDS_PER_CENTURY)
print(f"detections per century through 1000 km: {n:.3f}")

# %%
etas = [1.0, 0.8, 0.6, 0.4, 0.2]
bb = sweep(scenario(RelayMode.TRUSTED, 40_000), "efficiency", etas)
md = sweep(scenario(RelayMode.UNTRUSTED, 40_000), "efficiency", etas)
print(" eta   BB84 sifted/round   MDI sifted/round")
for eta, b, m in zip(etas, bb, md):
    print(f"{eta:4.1f}   {b.link('Alice->relay').sifted_fraction:17.4f}   {m.links[0].sifted_fraction:16.4f}")

# %%
lengths = [0, 10, 20, 30, 40]
reps = sweep(scenario(RelayMode.TRUSTED, 40_000), "length_km", lengths)
for L, r in zip(lengths, reps):
    f = r.link("Alice->relay").detected_fraction
    print(f"L={L:3d} km  detected {f:.4f}  log10 {math.log10(f):+.3f}  expected {-0.02 * L:+.3f}")
