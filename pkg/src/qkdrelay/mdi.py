"""MDI-QKD rounds through the untrusted relay's partial Bell-state measurement."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple, Optional, Sequence

import numpy as np

from .bb84 import KeyMaterial, KeyRole, bases_from_codes, prepare
from .optics import (
    Basis,
    BsmOutcome,
    DetectionPattern,
    DetectorModel,
    bsm_distribution,
    classify,
    observe,
    route_single,
)

if TYPE_CHECKING:
    from .channel import ChannelModel, SourceModel


@dataclass(slots=True)
class MdiRoundRecord:
    round_index: int
    alice_basis: Basis
    alice_bit: int
    bob_basis: Basis
    bob_bit: int
    announced: BsmOutcome
    pattern: DetectionPattern = DetectionPattern()
    multi_photon: bool = False


class SiftedBit(NamedTuple):
    alice_bit: int
    bob_bit: int
    basis: Basis
    outcome: BsmOutcome


def run_rounds(
    n: int,
    channel_a: "ChannelModel",
    channel_b: "ChannelModel",
    det: DetectorModel,
    visibility: float,
    rng: np.random.Generator,
    source_a: "SourceModel | None" = None,
    source_b: "SourceModel | None" = None,
    forced_a: Optional[tuple[Basis, int]] = None,
    forced_b: Optional[tuple[Basis, int]] = None,
) -> list[MdiRoundRecord]:
    """Simulate ``n`` simultaneous Alice/Bob pulses and the relay's announcements.

    Multi-photon pulses are traced as a single photon and tagged.
    """
    if n < 1:
        raise ValueError("n must be >= 1")

    def draw(forced):
        if forced is None:
            return bases_from_codes(rng.integers(0, 2, n)), rng.integers(0, 2, n).tolist()
        return [forced[0]] * n, [int(forced[1])] * n

    a_bases, a_bits = draw(forced_a)
    b_bases, b_bits = draw(forced_b)
    ka = [1] * n if source_a is None else source_a.photon_counts(rng, n).tolist()
    kb = [1] * n if source_b is None else source_b.photon_counts(rng, n).tolist()

    dists: dict[bytes, object] = {}
    records = []
    for i in range(n):
        ja = channel_a.transmit(prepare(a_bases[i], a_bits[i]), rng, photons=ka[i])
        jb = channel_b.transmit(prepare(b_bases[i], b_bits[i]), rng, photons=kb[i])
        if ja is not None and jb is not None:
            key = ja.tobytes() + jb.tobytes()
            dist = dists.get(key)
            if dist is None:
                dist = dists[key] = bsm_distribution(ja, jb, visibility)
            ideal = dist.sample(rng)
        elif ja is not None:
            ideal = route_single(ja, 0, rng)
        elif jb is not None:
            ideal = route_single(jb, 1, rng)
        else:
            ideal = DetectionPattern()
        seen = observe(ideal, det, rng)
        records.append(
            MdiRoundRecord(
                i,
                a_bases[i],
                a_bits[i],
                b_bases[i],
                b_bits[i],
                classify(seen),
                seen,
                ka[i] > 1 or kb[i] > 1,
            )
        )
    return records


def sift(records: Sequence[MdiRoundRecord]) -> list[SiftedBit]:
    """Keep successful BSM rounds in which both users picked the same basis."""
    return [
        SiftedBit(r.alice_bit, r.bob_bit, r.alice_basis, r.announced)
        for r in records
        if r.announced.success and r.alice_basis is r.bob_basis
    ]


def needs_flip(basis: Basis, outcome: BsmOutcome) -> bool:
    """Bob flips unless the basis is diagonal and the relay saw a triplet."""
    return not (basis is Basis.DIAGONAL and outcome is BsmOutcome.TRIPLET)


def apply_flip_rules(
    sifted: Sequence[SiftedBit], owners: tuple[str, str] = ("Alice", "Bob")
) -> tuple[KeyMaterial, KeyMaterial]:
    a = np.array([s.alice_bit for s in sifted], dtype=np.uint8)
    b = np.array(
        [s.bob_bit ^ needs_flip(s.basis, s.outcome) for s in sifted], dtype=np.uint8
    )
    return (
        KeyMaterial(a, KeyRole.SIFTED, (owners[0],)),
        KeyMaterial(b, KeyRole.SIFTED, (owners[1],)),
    )


def qber_by_basis(
    alice_key: KeyMaterial, bob_key: KeyMaterial, bases: Sequence[Basis]
) -> dict[Basis, float]:
    if not len(alice_key) == len(bob_key) == len(bases):
        raise ValueError("keys and basis labels must have equal length")
    labels = np.array([b is Basis.RECTILINEAR for b in bases], dtype=bool)
    diff = alice_key.bits != bob_key.bits
    out = {}
    for basis, mask in ((Basis.RECTILINEAR, labels), (Basis.DIAGONAL, ~labels)):
        if mask.any():
            out[basis] = float(diff[mask].mean())
    return out


CSV_COLUMNS = ("round", "a_basis", "a_bit", "b_basis", "b_bit", "outcome")


def records_to_csv(records: Sequence[MdiRoundRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(
            (
                r.round_index,
                r.alice_basis.value,
                r.alice_bit,
                r.bob_basis.value,
                r.bob_bit,
                r.announced.value,
            )
        )
    return buf.getvalue()
