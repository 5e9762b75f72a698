"""Fiber channels, photon sources and the intercept-resend adversary."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bb84 import prepare
from .optics import IDEAL_DETECTOR, StateLike, bb84_measure, jones_of, rotate

# Julian century, used to turn "photons per century" into a rate.
SECONDS_PER_CENTURY = 100 * 365.25 * 86400.0


@dataclass(frozen=True)
class EveConfig:
    """Intercept-resend attack: measure in a random basis, re-prepare, forward."""

    kind: str = "intercept_resend"

    def __post_init__(self):
        if self.kind != "intercept_resend":
            raise ValueError(f"unsupported adversary kind {self.kind!r}")


def intercept_resend(state: StateLike, rng: np.random.Generator) -> np.ndarray:
    basis, bit = bb84_measure(state, rng, IDEAL_DETECTOR)
    return prepare(basis, bit).jones


@dataclass(frozen=True)
class ChannelModel:
    length_km: float = 0.0
    attenuation_db_per_km: float = 0.2
    misalignment_deg: float = 0.0
    eve: Optional[EveConfig] = None

    def __post_init__(self):
        if self.length_km < 0:
            raise ValueError(f"length_km must be >= 0, got {self.length_km}")
        if self.attenuation_db_per_km < 0:
            raise ValueError(
                f"attenuation_db_per_km must be >= 0, got {self.attenuation_db_per_km}"
            )

    @property
    def loss_db(self) -> float:
        return self.attenuation_db_per_km * self.length_km

    @property
    def transmittance(self) -> float:
        return 10.0 ** (-self.loss_db / 10.0)

    def transmit(self, state, rng, photons: int = 1):
        return transmit(state, self, rng, photons)


def transmit(
    state: StateLike, ch: ChannelModel, rng: np.random.Generator, photons: int = 1
) -> Optional[np.ndarray]:
    """Send one pulse down the fiber.

    A pulse of ``photons`` photons arrives if any photon survives; the
    survivor is traced as a single photon. Returns ``None`` when lost.
    """
    if photons <= 0:
        return None
    t = ch.transmittance
    if t < 1.0:
        survive = -math.expm1(photons * math.log1p(-t)) if t > 0 else 0.0
        if rng.random() >= survive:
            return None
    vec = jones_of(state)
    if ch.misalignment_deg:
        vec = rotate(vec, ch.misalignment_deg)
    if ch.eve is not None:
        vec = intercept_resend(vec, rng)
    return vec


class SourceKind(enum.Enum):
    IDEAL_SINGLE_PHOTON = "IdealSinglePhoton"
    WEAK_COHERENT = "WeakCoherent"


@dataclass(frozen=True)
class SourceModel:
    kind: SourceKind = SourceKind.IDEAL_SINGLE_PHOTON
    mean_photon_number: Optional[float] = None
    pulse_rate_hz: float = 1e9

    def __post_init__(self):
        if self.kind is SourceKind.WEAK_COHERENT:
            if self.mean_photon_number is None or self.mean_photon_number <= 0:
                raise ValueError("WeakCoherent source needs mean_photon_number > 0")
        if self.pulse_rate_hz <= 0:
            raise ValueError("pulse_rate_hz must be > 0")

    @property
    def mean_photons(self) -> float:
        if self.kind is SourceKind.IDEAL_SINGLE_PHOTON:
            return 1.0
        return float(self.mean_photon_number)

    @property
    def multi_photon_probability(self) -> float:
        """P(k >= 2); these pulses are exposed to photon-number splitting."""
        if self.kind is SourceKind.IDEAL_SINGLE_PHOTON:
            return 0.0
        mu = self.mean_photons
        return 1.0 - math.exp(-mu) * (1.0 + mu)

    def photon_counts(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind is SourceKind.IDEAL_SINGLE_PHOTON:
            return np.ones(n, dtype=np.int64)
        return rng.poisson(self.mean_photons, n)


def expected_detections(
    source: SourceModel, ch: ChannelModel, efficiency: float, duration_s: float
) -> float:
    """Mean number of detected photons: rate x photons/pulse x T x eta x time."""
    if duration_s < 0:
        raise ValueError("duration_s must be >= 0")
    return source.pulse_rate_hz * source.mean_photons * ch.transmittance * efficiency * duration_s
