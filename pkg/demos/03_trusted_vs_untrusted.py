"""
The same star network in both relay modes
=========================================

Runs two users through the relay in trusted mode (BB84 per user, then the
relay announces the parity of their keys) and in untrusted mode (MDI-QKD
through the Bell-state measurement). The trusted relay ends up holding every
key; the untrusted relay holds none.
"""
import dataclasses

from qkdrelay.netsim import RelayConfig, load_config, run_session
from qkdrelay.relay import RelayMode

cfg = load_config(__file__.rsplit("/", 1)[0] + "/configs/untrusted.json")

# %%
for mode in RelayMode:
    relay = dataclasses.replace(cfg.relay, mode=mode)
    report = run_session(dataclasses.replace(cfg, relay=relay))
    print(report.summary())
    print("relay key store:", {u: len(k) for u, k in report.relay.key_store.items()})
    for pair, keys in report.pair_keys.items():
        a, b = pair
        print(f"{a}/{b} share {len(keys[a])} bits, identical: {keys[a] == keys[b]}")
    print()
