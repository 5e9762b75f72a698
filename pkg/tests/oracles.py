"""Independent reference calculations used only by the tests."""
import itertools
import math

import numpy as np

MODES = ("H1", "V1", "H2", "V2")


def permanent(m):
    n = m.shape[0]
    return sum(
        np.prod([m[i, s[i]] for i in range(n)]) for s in itertools.permutations(range(n))
    )


def mode_unitary(bs):
    """4x4 transfer matrix, inputs (aH, aV, bH, bV) -> outputs (H1, V1, H2, V2)."""
    u = np.zeros((4, 4), dtype=complex)
    for port_out in range(2):
        for port_in in range(2):
            for pol in range(2):
                u[2 * port_out + pol, 2 * port_in + pol] = bs[port_out, port_in]
    return u


def two_photon_probabilities(a, b, bs=None):
    """Pattern-string -> probability via permanents of the mode unitary."""
    if bs is None:
        bs = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    u = mode_unitary(bs)
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    out = {}
    for i, j in itertools.combinations_with_replacement(range(4), 2):
        amp = 0j
        for x in range(2):
            for y in range(2):
                sub = u[np.ix_([i, j], [x, 2 + y])]
                amp += a[x] * b[y] * permanent(sub)
        if i == j:
            amp /= math.sqrt(2)
            name = f"2x{MODES[i]}"
        else:
            name = f"{MODES[i]}+{MODES[j]}"
        out[name] = abs(amp) ** 2
    return out


def classical_probabilities(a, b, bs=None):
    """Distinguishable photons routed independently through the same optics."""
    if bs is None:
        bs = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    u = mode_unitary(bs)
    pa = np.abs(u[:, :2] @ np.asarray(a, complex)) ** 2
    pb = np.abs(u[:, 2:] @ np.asarray(b, complex)) ** 2
    out = {}
    for i in range(4):
        for j in range(4):
            lo, hi = min(i, j), max(i, j)
            name = f"2x{MODES[lo]}" if lo == hi else f"{MODES[lo]}+{MODES[hi]}"
            out[name] = out.get(name, 0.0) + pa[i] * pb[j]
    return out
