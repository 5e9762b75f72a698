"""BB84 prepare-measure-sift engine for one user -> relay link."""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional, Sequence

import numpy as np

from .optics import (
    IDEAL_DETECTOR,
    Basis,
    DetectorModel,
    PolarizationState,
    bb84_measure,
)

if TYPE_CHECKING:
    from .channel import ChannelModel, SourceModel


class ProtocolAbort(Exception):
    """Raised when the estimated error rate exceeds the abort threshold."""

    def __init__(self, qber: float, threshold: float):
        super().__init__(f"QBER {qber:.4f} exceeds abort threshold {threshold:.4f}")
        self.qber = qber
        self.threshold = threshold


class InsufficientKeyMaterial(ValueError):
    pass


class KeyRole(enum.Enum):
    RAW = "Raw"
    SIFTED = "Sifted"
    FINAL = "Final"
    PUBLIC = "Public"  # announced parity strings


@dataclass(frozen=True, eq=False)
class KeyMaterial:
    bits: np.ndarray
    role: KeyRole = KeyRole.RAW
    owner: tuple[str, ...] = ()

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        if bits.size and bits.max() > 1:
            raise ValueError("key bits must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_string(cls, text: str, role: KeyRole = KeyRole.RAW, owner=()) -> "KeyMaterial":
        return cls(np.array([int(c) for c in text], dtype=np.uint8), role, tuple(owner))

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, KeyMaterial):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def __xor__(self, other: "KeyMaterial") -> "KeyMaterial":
        if len(self) != len(other):
            raise ValueError(f"cannot XOR keys of length {len(self)} and {len(other)}")
        return KeyMaterial(self.bits ^ other.bits, KeyRole.PUBLIC, self.owner + other.owner)

    def truncated(self, n: int) -> "KeyMaterial":
        return KeyMaterial(self.bits[:n], self.role, self.owner)

    def segment(self, start: int, stop: int) -> "KeyMaterial":
        return KeyMaterial(self.bits[start:stop], self.role, self.owner)

    def with_role(self, role: KeyRole, owner: Optional[Sequence[str]] = None) -> "KeyMaterial":
        return KeyMaterial(self.bits, role, self.owner if owner is None else tuple(owner))


_ENCODING = {
    (Basis.RECTILINEAR, 0): PolarizationState.H,
    (Basis.RECTILINEAR, 1): PolarizationState.V,
    (Basis.DIAGONAL, 0): PolarizationState.D_MINUS,
    (Basis.DIAGONAL, 1): PolarizationState.D_PLUS,
}
_DECODING = {v: k for k, v in _ENCODING.items()}


def prepare(basis: Basis, bit: int) -> PolarizationState:
    """Encode ``bit`` in ``basis``: H/V for 0/1, and -45°/+45° for 0/1."""
    return _ENCODING[basis, int(bit)]


def decode(state: PolarizationState) -> tuple[Basis, int]:
    return _DECODING[state]


@dataclass(slots=True)
class Bb84RoundRecord:
    round_index: int
    alice_basis: Basis
    alice_bit: int
    charlie_basis: Basis
    detected: bool
    charlie_bit: Optional[int] = None
    photons: int = 1

    def __post_init__(self):
        if self.detected != (self.charlie_bit is not None):
            raise ValueError("charlie_bit must be present iff the round was detected")


def bases_from_codes(codes: np.ndarray) -> list[Basis]:
    return [Basis.RECTILINEAR if c == 0 else Basis.DIAGONAL for c in codes]


def run_rounds(
    n: int,
    channel: "ChannelModel",
    det: DetectorModel,
    rng: np.random.Generator,
    source: "SourceModel | None" = None,
    forced: Optional[tuple[Basis, int]] = None,
    measure_basis: Optional[Basis] = None,
) -> list[Bb84RoundRecord]:
    """Simulate ``n`` BB84 pulses from a user to the relay receiver.

    ``forced`` fixes the user's (basis, bit) on every round and
    ``measure_basis`` fixes the receiver branch; both exist for testing.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if forced is None:
        a_bases = bases_from_codes(rng.integers(0, 2, n))
        a_bits = rng.integers(0, 2, n).tolist()
    else:
        a_bases = [forced[0]] * n
        a_bits = [int(forced[1])] * n
    photons = [1] * n if source is None else source.photon_counts(rng, n).tolist()
    branch_draws = rng.random(n) if measure_basis is None else None

    records = []
    for i in range(n):
        state = prepare(a_bases[i], a_bits[i])
        arrived = channel.transmit(state, rng, photons=photons[i])
        if measure_basis is not None:
            branch = measure_basis
        else:
            branch = Basis.RECTILINEAR if branch_draws[i] < 0.5 else Basis.DIAGONAL
        result = bb84_measure(arrived, rng, det, basis=branch)
        if result is None:
            records.append(
                Bb84RoundRecord(i, a_bases[i], a_bits[i], branch, False, None, photons[i])
            )
        else:
            records.append(
                Bb84RoundRecord(i, a_bases[i], a_bits[i], result[0], True, result[1], photons[i])
            )
    return records


def sift(
    records: Sequence[Bb84RoundRecord], owners: tuple[str, str] = ("Alice", "Charlie")
) -> tuple[KeyMaterial, KeyMaterial]:
    """Keep detected rounds whose preparation and measurement bases agree."""
    kept = [r for r in records if r.detected and r.alice_basis is r.charlie_basis]
    a = np.array([r.alice_bit for r in kept], dtype=np.uint8)
    c = np.array([r.charlie_bit for r in kept], dtype=np.uint8)
    return (
        KeyMaterial(a, KeyRole.SIFTED, (owners[0],)),
        KeyMaterial(c, KeyRole.SIFTED, (owners[1],)),
    )


def estimate_qber(
    k1: KeyMaterial, k2: KeyMaterial, sample_fraction: float, rng: np.random.Generator
) -> tuple[float, KeyMaterial, KeyMaterial]:
    """Publicly compare a random sample of positions and discard them.

    Returns the sample mismatch fraction and the two unrevealed remainders.
    """
    if len(k1) != len(k2):
        raise ValueError("keys must have equal length")
    if not 0.0 < sample_fraction <= 1.0:
        raise ValueError("sample_fraction must be in (0, 1]")
    n = len(k1)
    if n == 0:
        raise InsufficientKeyMaterial("no sifted bits to estimate the error rate")
    m = min(n, max(1, math.ceil(sample_fraction * n)))
    revealed = np.zeros(n, dtype=bool)
    revealed[rng.choice(n, size=m, replace=False)] = True
    qber = float(np.mean(k1.bits[revealed] != k2.bits[revealed]))
    keep = ~revealed
    return (
        qber,
        KeyMaterial(k1.bits[keep], k1.role, k1.owner),
        KeyMaterial(k2.bits[keep], k2.role, k2.owner),
    )


@dataclass
class DistillParams:
    compression_ratio: float = 0.0
    abort_threshold: float = 0.11
    sample_fraction: float = 0.1
    # Optional qber -> compressed fraction; overrides compression_ratio.
    compression: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.compression_ratio <= 1.0:
            raise ValueError("compression_ratio must be in [0, 1]")
        if not 0.0 <= self.abort_threshold <= 1.0:
            raise ValueError("abort_threshold must be in [0, 1]")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ValueError("sample_fraction must be in (0, 1]")

    def compressed_fraction(self, qber: float) -> float:
        if self.compression is not None:
            return float(self.compression(qber))
        return self.compression_ratio


def distill(
    k1: KeyMaterial, k2: KeyMaterial, qber: float, params: DistillParams = DistillParams()
) -> tuple[KeyMaterial, KeyMaterial]:
    """Idealized error correction followed by length-only privacy amplification.

    The simulator knows both keys, so correction simply copies ``k1`` onto
    ``k2``; amplification keeps ``ceil((1 - c) * len)`` bits.
    """
    if len(k1) != len(k2):
        raise ValueError("keys must have equal length")
    if qber > params.abort_threshold:
        raise ProtocolAbort(qber, params.abort_threshold)
    c = params.compressed_fraction(qber)
    n = math.ceil((1.0 - c) * len(k1) - 1e-9)
    final = k1.bits[:n]
    return (
        KeyMaterial(final, KeyRole.FINAL, k1.owner),
        KeyMaterial(final.copy(), KeyRole.FINAL, k2.owner),
    )


CSV_COLUMNS = ("round", "alice_basis", "alice_bit", "charlie_basis", "detected", "charlie_bit")


def records_to_csv(records: Sequence[Bb84RoundRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(
            (
                r.round_index,
                r.alice_basis.value,
                r.alice_bit,
                r.charlie_basis.value,
                int(r.detected),
                "" if r.charlie_bit is None else r.charlie_bit,
            )
        )
    return buf.getvalue()
