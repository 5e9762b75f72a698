"""The reconfigurable relay node: receiver mode, switch schedule and parity relay."""
from __future__ import annotations

import csv
import enum
import io
import itertools
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .bb84 import KeyMaterial, KeyRole
from .optics import BsmOutcome, DetectorModel

logger = logging.getLogger(__name__)


class RelayError(RuntimeError):
    pass


class RelayMode(enum.Enum):
    TRUSTED = "Trusted"
    UNTRUSTED = "Untrusted"


@dataclass(frozen=True)
class ReceiverConfig:
    inputs: int
    diagonal_branch: bool  # half-wave plate present

    @classmethod
    def for_mode(cls, mode: RelayMode) -> "ReceiverConfig":
        if mode is RelayMode.TRUSTED:
            return cls(inputs=1, diagonal_branch=True)
        return cls(inputs=2, diagonal_branch=False)


@dataclass(frozen=True)
class Announcement:
    slot: int
    mode: RelayMode
    content: str  # BSM outcome name or a public parity string


@dataclass
class RelayNode:
    mode: RelayMode = RelayMode.TRUSTED
    detector: DetectorModel = field(default_factory=DetectorModel)
    visibility: float = 1.0
    key_store: dict[str, KeyMaterial] = field(default_factory=dict)
    announcement_log: list[Announcement] = field(default_factory=list)
    reconfigurations: list[tuple[RelayMode, RelayMode]] = field(default_factory=list)
    _in_session: bool = field(default=False, repr=False)
    _slot: int = field(default=0, repr=False)

    @property
    def receiver(self) -> ReceiverConfig:
        return ReceiverConfig.for_mode(self.mode)

    @property
    def in_session(self) -> bool:
        return self._in_session

    def set_mode(self, mode: RelayMode) -> "RelayNode":
        if mode is self.mode:
            return self
        if self._in_session:
            raise RelayError("cannot reconfigure the relay while a session is running")
        logger.info("relay reconfigured %s -> %s", self.mode.value, mode.value)
        self.reconfigurations.append((self.mode, mode))
        self.mode = mode
        if mode is RelayMode.UNTRUSTED:
            self.key_store.clear()
        return self

    @contextmanager
    def session(self) -> Iterator[int]:
        """Occupy one switch slot; yields the slot number."""
        if self._in_session:
            raise RelayError("a session is already running")
        self._in_session = True
        try:
            yield self._slot
        finally:
            self._in_session = False
            self._slot += 1

    def store_key(self, user: str, key: KeyMaterial) -> None:
        if self.mode is not RelayMode.TRUSTED:
            raise RelayError("an untrusted relay never holds user keys")
        self.key_store[user] = key

    def purge(self, user: str | None = None) -> None:
        if user is None:
            self.key_store.clear()
        else:
            self.key_store.pop(user, None)

    def announce_outcomes(self, slot: int, outcomes: Iterable[BsmOutcome]) -> None:
        if self.mode is not RelayMode.UNTRUSTED:
            raise RelayError("BSM announcements require untrusted mode")
        self.announcement_log.extend(Announcement(slot, self.mode, o.value) for o in outcomes)

    def relay_parity(self, slot: int, ka: KeyMaterial, kb: KeyMaterial) -> KeyMaterial:
        """Announce K_A xor K_B for two key segments taken from the store."""
        if self.mode is not RelayMode.TRUSTED:
            raise RelayError("parity relaying requires trusted mode")
        kc = xor_relay(ka, kb)
        self.announcement_log.append(Announcement(slot, self.mode, str(kc)))
        return kc


def xor_relay(ka: KeyMaterial, kb: KeyMaterial) -> KeyMaterial:
    """Public parity string K_C = K_A xor K_B."""
    if len(ka) != len(kb):
        raise ValueError(f"key length mismatch: {len(ka)} != {len(kb)}")
    return KeyMaterial(ka.bits ^ kb.bits, KeyRole.PUBLIC, ka.owner + kb.owner)


def infer_peer_key(own: KeyMaterial, kc: KeyMaterial) -> KeyMaterial:
    if len(own) != len(kc):
        raise ValueError(f"key length mismatch: {len(own)} != {len(kc)}")
    return KeyMaterial(own.bits ^ kc.bits, KeyRole.FINAL, own.owner)


@dataclass(frozen=True)
class SwitchSchedule:
    mode: RelayMode
    slots: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        need = 1 if self.mode is RelayMode.TRUSTED else 2
        for slot in self.slots:
            if len(slot) != need or len(set(slot)) != need:
                raise ValueError(f"slot {slot!r} invalid for {self.mode.value} mode")

    def __iter__(self):
        return iter(self.slots)

    def __len__(self):
        return len(self.slots)


def schedule(
    users: Sequence[str],
    mode: RelayMode,
    pairing: Sequence[tuple[str, str]] = (),
    cycles: int = 1,
) -> SwitchSchedule:
    """Optical-switch schedule.

    Trusted mode admits one user per slot, round-robin; untrusted mode
    admits each requested pair together.
    """
    if len(users) < 2:
        raise ValueError("a relay network needs at least two users")
    known = set(users)
    for a, b in pairing:
        if a == b:
            raise ValueError(f"pair ({a}, {b}) repeats a user")
        if a not in known or b not in known:
            raise ValueError(f"pair ({a}, {b}) names an unknown user")
    if mode is RelayMode.TRUSTED:
        slots = [(u,) for u in itertools.chain.from_iterable([users] * cycles)]
    else:
        slots = [tuple(p) for p in pairing] * cycles
    return SwitchSchedule(mode, tuple(slots))


def announcements_to_csv(log: Sequence[Announcement]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("slot", "announcement", "mode"))
    for a in log:
        w.writerow((a.slot, a.content, a.mode.value))
    return buf.getvalue()
