"""Single- and two-photon linear optics for polarization-encoded QKD.

Output modes of the two-photon Bell-state measurement (BSM) receiver are
indexed ``H1, V1, H2, V2``: port 1/2 of the 50:50 beam splitter, followed by
a polarizing beam splitter on each port.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional, Union

import numpy as np

NORM_TOL = 1e-12

# a† -> (c† + d†)/√2, b† -> (c† - d†)/√2; column k is input port k.
BEAM_SPLITTER = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)

_S = 1.0 / math.sqrt(2.0)


class Basis(enum.Enum):
    RECTILINEAR = "Rectilinear"
    DIAGONAL = "Diagonal"

    @property
    def symbol(self) -> str:
        return "+" if self is Basis.RECTILINEAR else "x"


class PolarizationState(enum.Enum):
    """The four BB84 polarization states."""

    H = "H"  # 0°
    V = "V"  # 90°
    D_MINUS = "D-"  # -45°
    D_PLUS = "D+"  # +45°

    @property
    def jones(self) -> np.ndarray:
        return _NAMED_JONES[self].copy()

    @property
    def basis(self) -> Basis:
        if self in (PolarizationState.H, PolarizationState.V):
            return Basis.RECTILINEAR
        return Basis.DIAGONAL

    @property
    def angle_deg(self) -> float:
        return {"H": 0.0, "V": 90.0, "D-": -45.0, "D+": 45.0}[self.value]


_NAMED_JONES = {
    PolarizationState.H: np.array([1.0, 0.0], dtype=complex),
    PolarizationState.V: np.array([0.0, 1.0], dtype=complex),
    PolarizationState.D_PLUS: np.array([_S, _S], dtype=complex),
    PolarizationState.D_MINUS: np.array([_S, -_S], dtype=complex),
}

StateLike = Union[PolarizationState, np.ndarray, tuple, list]


class DetectorId(enum.IntEnum):
    H1 = 0
    V1 = 1
    H2 = 2
    V2 = 3


ORTHOGONAL_PAIRS = frozenset(
    {
        frozenset({DetectorId.H1, DetectorId.V1}),
        frozenset({DetectorId.H2, DetectorId.V2}),
        frozenset({DetectorId.H1, DetectorId.V2}),
        frozenset({DetectorId.V1, DetectorId.H2}),
    }
)


class BsmOutcome(enum.Enum):
    SINGLET = "Singlet"
    TRIPLET = "Triplet"
    FAILURE = "Failure"

    @property
    def success(self) -> bool:
        return self is not BsmOutcome.FAILURE


@dataclass(frozen=True, order=True)
class DetectionPattern:
    """Photon (or click) count per detector, in ``H1, V1, H2, V2`` order."""

    counts: tuple[int, int, int, int] = (0, 0, 0, 0)

    def __post_init__(self):
        if len(self.counts) != 4 or any(c < 0 for c in self.counts):
            raise ValueError(f"invalid detector counts {self.counts!r}")

    @classmethod
    def from_modes(cls, *modes: int) -> "DetectionPattern":
        counts = [0, 0, 0, 0]
        for m in modes:
            counts[int(m)] += 1
        return cls(tuple(counts))

    @classmethod
    def parse(cls, text: str) -> "DetectionPattern":
        """Inverse of ``str()``: accepts ``"H1+V2"``, ``"2xH1"``, ``"none"``."""
        text = text.strip()
        if text == "none":
            return cls()
        counts = [0, 0, 0, 0]
        for part in text.split("+"):
            n, _, name = part.rpartition("x")
            counts[DetectorId[name]] += int(n) if n else 1
        return cls(tuple(counts))

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def clicked(self) -> frozenset[DetectorId]:
        return frozenset(DetectorId(i) for i, c in enumerate(self.counts) if c)

    @property
    def cross_port(self) -> bool:
        """True when both output ports of the beam splitter registered light."""
        c = self.counts
        return (c[0] + c[1]) > 0 and (c[2] + c[3]) > 0

    def __str__(self) -> str:
        parts = []
        for det in DetectorId:
            n = self.counts[det]
            if n == 1:
                parts.append(det.name)
            elif n > 1:
                parts.append(f"{n}x{det.name}")
        return "+".join(parts) if parts else "none"


@dataclass(frozen=True)
class DetectorModel:
    """Threshold single-photon detector.

    ``efficiency`` is the per-photon detection probability and
    ``dark_count_prob`` the probability that a detector fires spuriously in
    one gate. Photon number is never resolved.
    """

    efficiency: float = 1.0
    dark_count_prob: float = 0.0
    threshold = True  # no photon-number resolution

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must be in [0, 1], got {self.efficiency}")
        if not 0.0 <= self.dark_count_prob < 1.0:
            raise ValueError(
                f"dark_count_prob must be in [0, 1), got {self.dark_count_prob}"
            )


IDEAL_DETECTOR = DetectorModel()


def jones_of(state: StateLike) -> np.ndarray:
    """Unit-norm Jones pair ``(amp_h, amp_v)`` for a named or general state."""
    if isinstance(state, PolarizationState):
        return state.jones
    vec = np.asarray(state, dtype=complex).reshape(2)
    norm = float(np.vdot(vec, vec).real)
    if abs(norm - 1.0) > NORM_TOL:
        raise ValueError(f"Jones pair is not unit norm (|v|^2 = {norm!r})")
    return vec


def rotate(state: StateLike, theta: float) -> np.ndarray:
    """Rotate the polarization by ``theta`` degrees (counter-clockwise)."""
    vec = jones_of(state)
    t = math.radians(theta)
    c, s = math.cos(t), math.sin(t)
    return np.array([c * vec[0] - s * vec[1], s * vec[0] + c * vec[1]])


def same_state(a: StateLike, b: StateLike, tol: float = 1e-9) -> bool:
    """Equality of polarization states up to a global phase."""
    return abs(abs(np.vdot(jones_of(a), jones_of(b))) - 1.0) <= tol


def bb84_measure(
    state: Optional[StateLike],
    rng: np.random.Generator,
    det: DetectorModel = IDEAL_DETECTOR,
    basis: Optional[Basis] = None,
) -> Optional[tuple[Basis, int]]:
    """Passive-basis BB84 receiver with four threshold detectors.

    The basis branch is drawn uniformly unless ``basis`` forces it. In the
    diagonal branch the half-wave plate rotates the photon by +45° so that
    -45° lands on the bit-0 detector. ``state=None`` models a photon lost in
    the channel; dark counts can still fire. Gates with zero or several
    clicks return ``None``.
    """
    if basis is None:
        basis = Basis.RECTILINEAR if rng.random() < 0.5 else Basis.DIAGONAL
    clicks = [False, False, False, False]
    if state is not None and det.efficiency > 0.0:
        if det.efficiency >= 1.0 or rng.random() < det.efficiency:
            vec = jones_of(state)
            if basis is Basis.DIAGONAL:
                vec = rotate(vec, 45.0)
            p0 = abs(vec[0]) ** 2
            bit = 0 if rng.random() < p0 else 1
            clicks[_BRANCH_OFFSET[basis] + bit] = True
    if det.dark_count_prob > 0.0:
        dark = rng.random(4) < det.dark_count_prob
        clicks = [c or bool(d) for c, d in zip(clicks, dark)]
    if sum(clicks) != 1:
        return None
    k = clicks.index(True)
    return (Basis.RECTILINEAR if k < 2 else Basis.DIAGONAL), k % 2


_BRANCH_OFFSET = {Basis.RECTILINEAR: 0, Basis.DIAGONAL: 2}


def output_amplitudes(state: StateLike, port: int, bs: np.ndarray | None = None):
    """Amplitudes over the four output modes for one photon entering ``port``."""
    vec = jones_of(state)
    bs = BEAM_SPLITTER if bs is None else bs
    col = bs[:, port]
    # mode index = 2 * output_port + polarization
    return np.array([col[0] * vec[0], col[0] * vec[1], col[1] * vec[0], col[1] * vec[1]])


@dataclass(frozen=True)
class TwoPhotonDistribution:
    """Probability of each ideal detection pattern for one two-photon round."""

    probs: Mapping[DetectionPattern, float]
    _patterns: tuple = field(init=False, repr=False, compare=False)
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        patterns = tuple(sorted(self.probs))
        p = np.array([self.probs[k] for k in patterns], dtype=float)
        cdf = np.cumsum(p)
        object.__setattr__(self, "_patterns", patterns)
        object.__setattr__(self, "_cdf", cdf)

    def __getitem__(self, pattern: DetectionPattern | str) -> float:
        if isinstance(pattern, str):
            pattern = DetectionPattern.parse(pattern)
        return self.probs.get(pattern, 0.0)

    @property
    def total(self) -> float:
        return float(sum(self.probs.values()))

    def support(self, tol: float = 1e-12) -> dict[DetectionPattern, float]:
        return {k: v for k, v in self.probs.items() if v > tol}

    def outcome_probability(self, outcome: BsmOutcome) -> float:
        return float(sum(p for k, p in self.probs.items() if classify(k) is outcome))

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw ideal patterns. Returns one pattern, or a list when ``size`` is given."""
        if size is None:
            i = int(np.searchsorted(self._cdf, rng.random() * self._cdf[-1], "right"))
            return self._patterns[min(i, len(self._patterns) - 1)]
        idx = np.searchsorted(self._cdf, rng.random(size) * self._cdf[-1], "right")
        idx = np.minimum(idx, len(self._patterns) - 1)
        return [self._patterns[i] for i in idx]


def _key(vec: np.ndarray) -> tuple:
    return tuple(np.round(np.concatenate([vec.real, vec.imag]), 13).tolist())


def bsm_distribution(
    a: StateLike, b: StateLike, visibility: float = 1.0
) -> TwoPhotonDistribution:
    """Ideal-detector pattern distribution at the BSM receiver.

    Alice's photon enters input port 1, Bob's input port 2. With
    ``visibility < 1`` the result is the mixture
    ``v * interfering + (1 - v) * distinguishable``.
    """
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"visibility must be in [0, 1], got {visibility}")
    va, vb = jones_of(a), jones_of(b)
    return _bsm_cached(_key(va), _key(vb), float(visibility), _key(BEAM_SPLITTER.ravel()))


@lru_cache(maxsize=4096)
def _bsm_cached(ka, kb, visibility, kbs) -> TwoPhotonDistribution:
    def unkey(k):
        n = len(k) // 2
        return np.array(k[:n]) + 1j * np.array(k[n:])

    bs = unkey(kbs).real.reshape(2, 2)
    u = output_amplitudes(unkey(ka), 0, bs)
    w = output_amplitudes(unkey(kb), 1, bs)
    probs: dict[DetectionPattern, float] = {}
    if visibility > 0.0:
        for pat, p in fock_probabilities(u, w).items():
            probs[pat] = probs.get(pat, 0.0) + visibility * p
    if visibility < 1.0:
        for pat, p in distinguishable_probabilities(u, w).items():
            probs[pat] = probs.get(pat, 0.0) + (1.0 - visibility) * p
    return TwoPhotonDistribution({k: v for k, v in probs.items() if v > 0.0})


def fock_probabilities(u: np.ndarray, w: np.ndarray) -> dict[DetectionPattern, float]:
    """Expand (Σ u_i x_i†)(Σ w_j x_j†)|0⟩ and square the normalized amplitudes.

    A doubly occupied mode carries the bosonic factor: (x†)²|0⟩ = √2|2⟩.
    """
    coef: dict[tuple[int, int], complex] = {}
    for i in range(4):
        for j in range(4):
            key = (i, j) if i <= j else (j, i)
            coef[key] = coef.get(key, 0.0) + u[i] * w[j]
    out = {}
    for (i, j), c in coef.items():
        p = abs(c) ** 2 * (2.0 if i == j else 1.0)
        if p > 1e-15:
            out[DetectionPattern.from_modes(i, j)] = float(p)
    return out


def distinguishable_probabilities(
    u: np.ndarray, w: np.ndarray
) -> dict[DetectionPattern, float]:
    """Each photon routed independently, with no interference."""
    pu, pw = np.abs(u) ** 2, np.abs(w) ** 2
    out: dict[DetectionPattern, float] = {}
    for i in range(4):
        for j in range(4):
            p = float(pu[i] * pw[j])
            if p > 1e-15:
                pat = DetectionPattern.from_modes(i, j)
                out[pat] = out.get(pat, 0.0) + p
    return out


def route_single(state: StateLike, port: int, rng: np.random.Generator) -> DetectionPattern:
    """Sample the output mode of a lone photon entering the BSM receiver."""
    p = np.abs(output_amplitudes(state, port)) ** 2
    mode = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), "right"))
    return DetectionPattern.from_modes(min(mode, 3))


_CLASSIFY = {
    frozenset({DetectorId.H1, DetectorId.V2}): BsmOutcome.SINGLET,
    frozenset({DetectorId.V1, DetectorId.H2}): BsmOutcome.SINGLET,
    frozenset({DetectorId.H1, DetectorId.V1}): BsmOutcome.TRIPLET,
    frozenset({DetectorId.H2, DetectorId.V2}): BsmOutcome.TRIPLET,
}


def classify(pattern: DetectionPattern) -> BsmOutcome:
    """Partial BSM: only single clicks at two orthogonal detectors succeed."""
    if pattern.total != 2 or max(pattern.counts) != 1:
        return BsmOutcome.FAILURE
    return _CLASSIFY.get(pattern.clicked, BsmOutcome.FAILURE)


def observe(
    pattern: DetectionPattern, det: DetectorModel, rng: np.random.Generator
) -> DetectionPattern:
    """Apply loss, dark counts and threshold collapse to an ideal pattern."""
    eta, d = det.efficiency, det.dark_count_prob
    out = []
    for n in pattern.counts:
        hit = False
        if n:
            if eta >= 1.0:
                hit = True
            elif eta > 0.0:
                hit = bool((rng.random(n) < eta).any())
        if d > 0.0 and rng.random() < d:
            hit = True
        out.append(1 if hit else 0)
    return DetectionPattern(tuple(out))


ALL_STATES = tuple(PolarizationState)
