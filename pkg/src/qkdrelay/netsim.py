"""Scenario configuration, end-to-end sessions and parameter sweeps on a star network."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import bb84, mdi
from .bb84 import DistillParams, InsufficientKeyMaterial, KeyMaterial, ProtocolAbort
from .channel import ChannelModel, EveConfig, SourceKind, SourceModel
from .optics import Basis, DetectorModel
from .relay import RelayMode, RelayNode, announcements_to_csv, infer_peer_key, schedule


class ConfigError(ValueError):
    """Invalid scenario configuration; the message starts with the field path."""


@dataclass(frozen=True)
class UserConfig:
    name: str
    source: SourceModel = SourceModel()


@dataclass(frozen=True)
class RelayConfig:
    mode: RelayMode = RelayMode.TRUSTED
    detector: DetectorModel = DetectorModel()
    visibility: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    users: tuple[UserConfig, ...]
    channels: dict[str, ChannelModel]
    relay: RelayConfig = RelayConfig()
    rounds: int = 10_000
    seed: int = 0
    pairing: tuple[tuple[str, str], ...] = ()
    distill: DistillParams = field(default_factory=DistillParams)

    def __post_init__(self):
        names = [u.name for u in self.users]
        if len(names) < 2:
            raise ConfigError("users: at least two users are required")
        if len(set(names)) != len(names):
            raise ConfigError("users: duplicate user names")
        if set(self.channels) != set(names):
            raise ConfigError("channels: every user needs exactly one channel to the relay")
        if self.rounds < 1:
            raise ConfigError("rounds: must be >= 1")
        if not 0.0 <= self.relay.visibility <= 1.0:
            raise ConfigError("relay.visibility: must be in [0, 1]")
        for a, b in self.pairing:
            if a == b:
                raise ConfigError(f"pairing: pair ({a}, {b}) repeats a user")
            if a not in names or b not in names:
                raise ConfigError(f"pairing: pair ({a}, {b}) names an unknown user")
        if self.relay.mode is RelayMode.UNTRUSTED:
            for name, ch in self.channels.items():
                if ch.eve is not None:
                    raise ConfigError(
                        f"channels.{name}.eve: the adversary model only attacks BB84 links"
                    )

    @property
    def user_names(self) -> tuple[str, ...]:
        return tuple(u.name for u in self.users)

    @property
    def pairs(self) -> tuple[tuple[str, str], ...]:
        if self.pairing:
            return self.pairing
        return tuple(itertools.combinations(self.user_names, 2))

    def source(self, user: str) -> SourceModel:
        return next(u.source for u in self.users if u.name == user)


# --- JSON configuration -----------------------------------------------------


def _fields(obj: Any, path: str, allowed: dict[str, type | tuple], required=()) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{_join(path, key)}: unknown field")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{_join(path, key)}: missing required field")
    for key, value in obj.items():
        types = allowed[key]
        if value is None and type(None) in (types if isinstance(types, tuple) else (types,)):
            continue
        if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
            raise ConfigError(f"{_join(path, key)}: wrong type {type(value).__name__}")
        if not isinstance(value, types):
            raise ConfigError(f"{_join(path, key)}: wrong type {type(value).__name__}")
    return obj


def _join(path: str, key: Any) -> str:
    return f"{path}.{key}" if path else str(key)


_NUM = (int, float)


def _build(path: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        field_name = msg.split(" ", 1)[0]
        where = _join(path, field_name) if field_name in kwargs else path
        raise ConfigError(f"{where}: {msg}") from None


def _enum(enum_cls, value: str, path: str):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"{path}: {value!r} is not one of {choices}") from None


def config_from_dict(data: dict) -> ScenarioConfig:
    _fields(
        data,
        "",
        {
            "users": list,
            "channels": dict,
            "relay": dict,
            "rounds": int,
            "seed": int,
            "pairing": list,
            "distill": dict,
        },
        required=("users", "channels"),
    )
    users = []
    for i, u in enumerate(data["users"]):
        path = f"users[{i}]"
        _fields(u, path, {"name": str, "source": dict}, required=("name",))
        src = u.get("source", {})
        spath = path + ".source"
        _fields(src, spath, {"kind": str, "mean_photon_number": _NUM + (type(None),), "pulse_rate_hz": _NUM})
        kind = _enum(SourceKind, src.get("kind", "IdealSinglePhoton"), spath + ".kind")
        source = _build(
            spath,
            SourceModel,
            kind=kind,
            mean_photon_number=src.get("mean_photon_number"),
            pulse_rate_hz=float(src.get("pulse_rate_hz", 1e9)),
        )
        users.append(UserConfig(u["name"], source))

    channels = {}
    for name, ch in data["channels"].items():
        path = f"channels.{name}"
        _fields(
            ch,
            path,
            {
                "length_km": _NUM,
                "attenuation_db_per_km": _NUM,
                "misalignment_deg": _NUM,
                "eve": (dict, type(None)),
            },
        )
        eve = None
        if ch.get("eve") is not None:
            _fields(ch["eve"], path + ".eve", {"kind": str})
            eve = _build(path + ".eve", EveConfig, **ch["eve"])
        channels[name] = _build(
            path,
            ChannelModel,
            length_km=float(ch.get("length_km", 0.0)),
            attenuation_db_per_km=float(ch.get("attenuation_db_per_km", 0.2)),
            misalignment_deg=float(ch.get("misalignment_deg", 0.0)),
            eve=eve,
        )

    r = data.get("relay", {})
    _fields(r, "relay", {"mode": str, "detector": dict, "visibility": _NUM})
    d = r.get("detector", {})
    _fields(d, "relay.detector", {"efficiency": _NUM, "dark_count_prob": _NUM})
    detector = _build(
        "relay.detector",
        DetectorModel,
        efficiency=float(d.get("efficiency", 1.0)),
        dark_count_prob=float(d.get("dark_count_prob", 0.0)),
    )
    relay = RelayConfig(
        _enum(RelayMode, r.get("mode", "Trusted"), "relay.mode"),
        detector,
        float(r.get("visibility", 1.0)),
    )

    pairing = []
    for i, p in enumerate(data.get("pairing", [])):
        if not (isinstance(p, list) and len(p) == 2 and all(isinstance(x, str) for x in p)):
            raise ConfigError(f"pairing[{i}]: expected a pair of user names")
        pairing.append((p[0], p[1]))

    dd = data.get("distill", {})
    _fields(dd, "distill", {"compression_ratio": _NUM, "abort_threshold": _NUM, "sample_fraction": _NUM})
    distill = _build("distill", DistillParams, **{k: float(v) for k, v in dd.items()})

    return ScenarioConfig(
        users=tuple(users),
        channels=channels,
        relay=relay,
        rounds=data.get("rounds", 10_000),
        seed=data.get("seed", 0),
        pairing=tuple(pairing),
        distill=distill,
    )


def config_to_dict(cfg: ScenarioConfig) -> dict:
    def source(s: SourceModel):
        out = {"kind": s.kind.value, "pulse_rate_hz": s.pulse_rate_hz}
        if s.mean_photon_number is not None:
            out["mean_photon_number"] = s.mean_photon_number
        return out

    return {
        "users": [{"name": u.name, "source": source(u.source)} for u in cfg.users],
        "channels": {
            name: {
                "length_km": ch.length_km,
                "attenuation_db_per_km": ch.attenuation_db_per_km,
                "misalignment_deg": ch.misalignment_deg,
                "eve": None if ch.eve is None else {"kind": ch.eve.kind},
            }
            for name, ch in cfg.channels.items()
        },
        "relay": {
            "mode": cfg.relay.mode.value,
            "detector": {
                "efficiency": cfg.relay.detector.efficiency,
                "dark_count_prob": cfg.relay.detector.dark_count_prob,
            },
            "visibility": cfg.relay.visibility,
        },
        "rounds": cfg.rounds,
        "seed": cfg.seed,
        "pairing": [list(p) for p in cfg.pairing],
        "distill": {
            "compression_ratio": cfg.distill.compression_ratio,
            "abort_threshold": cfg.distill.abort_threshold,
            "sample_fraction": cfg.distill.sample_fraction,
        },
    }


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<root>: not valid JSON ({exc})") from None
    return config_from_dict(data)


# --- Reports ------------------------------------------------------------------


@dataclass
class LinkReport:
    kind: str  # "bb84", "mdi" or "parity"
    link: str
    rounds: int = 0
    detected: int = 0
    sifted: int = 0
    qber: Optional[float] = None  # sampled estimate used for the abort decision
    qber_full: Optional[float] = None  # simulator-side comparison of all sifted bits
    qber_rect: Optional[float] = None
    qber_diag: Optional[float] = None
    final_length: int = 0
    announced_success: Optional[int] = None
    multi_photon_fraction: float = 0.0
    keys_agree: Optional[bool] = None
    aborted: bool = False
    abort_reason: str = ""

    @property
    def detected_fraction(self) -> float:
        return self.detected / self.rounds if self.rounds else 0.0

    @property
    def sifted_fraction(self) -> float:
        return self.sifted / self.rounds if self.rounds else 0.0


REPORT_COLUMNS = tuple(f.name for f in dataclasses.fields(LinkReport))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


@dataclass
class SessionReport:
    mode: RelayMode
    links: list[LinkReport] = field(default_factory=list)
    wall_time_s: float = 0.0
    # Simulator-side artifacts, not part of the CSV report.
    user_keys: dict[str, KeyMaterial] = field(default_factory=dict, repr=False)
    pair_keys: dict[tuple[str, str], dict[str, KeyMaterial]] = field(default_factory=dict, repr=False)
    records: dict[str, list] = field(default_factory=dict, repr=False)
    relay: Optional[RelayNode] = field(default=None, repr=False)

    @property
    def aborted(self) -> bool:
        return any(link.aborted for link in self.links)

    def link(self, name: str) -> LinkReport:
        return next(l for l in self.links if l.link == name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("mode",) + REPORT_COLUMNS)
        for link in self.links:
            w.writerow([self.mode.value] + [_cell(getattr(link, c)) for c in REPORT_COLUMNS])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"mode={self.mode.value} links={len(self.links)} wall_time={self.wall_time_s:.3f}s"]
        for l in self.links:
            if l.kind == "parity":
                lines.append(
                    f"  {l.link:<16} parity_length={l.final_length} keys_agree={l.keys_agree}"
                )
                continue
            q = "n/a" if l.qber is None else f"{l.qber:.4f}"
            line = (
                f"  {l.link:<16} rounds={l.rounds} detected={l.detected} sifted={l.sifted}"
                f" qber={q} final_length={l.final_length}"
            )
            if l.announced_success is not None:
                line += f" bsm_success={l.announced_success}"
            if l.multi_photon_fraction > 0:
                line += f" multi_photon={l.multi_photon_fraction:.4f} (PNS-vulnerable)"
            if l.aborted:
                line += f" ABORTED: {l.abort_reason}"
            lines.append(line)
        lines.append(
            "  note: error correction is oracle-ideal and the compression ratio and abort"
            " threshold are configured values, not derived key-rate bounds"
        )
        return "\n".join(lines)

    def csv_artifacts(self) -> dict[str, str]:
        """File suffix -> CSV text for every exportable table."""
        out = {"report.csv": self.to_csv()}
        for name, recs in self.records.items():
            tag = name.replace("<->", "-").replace("->", "-")
            if self.mode is RelayMode.TRUSTED:
                out[f"{tag}.rounds.csv"] = bb84.records_to_csv(recs)
            else:
                out[f"{tag}.rounds.csv"] = mdi.records_to_csv(recs)
        if self.relay is not None:
            out["announcements.csv"] = announcements_to_csv(self.relay.announcement_log)
        return out

    def write_csv(self, directory: str | Path, stem: str) -> list[Path]:
        directory = Path(directory)
        paths = []
        for suffix, text in self.csv_artifacts().items():
            p = directory / f"{stem}.{suffix}"
            p.write_text(text)
            paths.append(p)
        return paths


# --- Sessions -------------------------------------------------------------------


def _post_process(
    link: LinkReport,
    k1: KeyMaterial,
    k2: KeyMaterial,
    params: DistillParams,
    rng: np.random.Generator,
) -> Optional[tuple[KeyMaterial, KeyMaterial]]:
    link.sifted = len(k1)
    if len(k1):
        link.qber_full = float(np.mean(k1.bits != k2.bits))
    try:
        qber, r1, r2 = bb84.estimate_qber(k1, k2, params.sample_fraction, rng)
        link.qber = qber
        f1, f2 = bb84.distill(r1, r2, qber, params)
    except (ProtocolAbort, InsufficientKeyMaterial) as exc:
        link.aborted = True
        link.abort_reason = str(exc)
        return None
    link.final_length = len(f1)
    link.keys_agree = f1 == f2
    return f1, f2


def _run_trusted(cfg: ScenarioConfig, rng, report: SessionReport) -> None:
    relay = report.relay
    det = cfg.relay.detector
    for (user,) in schedule(cfg.user_names, RelayMode.TRUSTED):
        name = f"{user}->relay"
        with relay.session():
            records = bb84.run_rounds(cfg.rounds, cfg.channels[user], det, rng, cfg.source(user))
        report.records[name] = records
        link = LinkReport(
            "bb84",
            name,
            rounds=len(records),
            detected=sum(r.detected for r in records),
            multi_photon_fraction=float(np.mean([r.photons > 1 for r in records])),
        )
        report.links.append(link)
        k_user, k_relay = bb84.sift(records, (user, "relay"))
        finals = _post_process(link, k_user, k_relay, cfg.distill, rng)
        if finals is not None:
            report.user_keys[user] = finals[0]
            relay.store_key(user, finals[1])

    # Each user's final key is split evenly among the pairs it takes part in.
    pairs = [p for p in cfg.pairs if p[0] in relay.key_store and p[1] in relay.key_store]
    share = {u: sum(u in p for p in pairs) for u in cfg.user_names}
    seg = {u: len(relay.key_store[u]) // share[u] for u in relay.key_store if share[u]}
    offset = dict.fromkeys(cfg.user_names, 0)
    for a, b in cfg.pairs:
        link = LinkReport("parity", f"{a}<->{b}")
        report.links.append(link)
        if (a, b) not in pairs:
            link.aborted = True
            link.abort_reason = "missing user-relay key"
            continue
        n = min(seg[a], seg[b])
        with relay.session() as slot:
            ka = relay.key_store[a].segment(offset[a], offset[a] + n)
            kb = relay.key_store[b].segment(offset[b], offset[b] + n)
            kc = relay.relay_parity(slot, ka, kb)
        own_a = report.user_keys[a].segment(offset[a], offset[a] + n)
        own_b = report.user_keys[b].segment(offset[b], offset[b] + n)
        offset[a] += seg[a]
        offset[b] += seg[b]
        b_view_of_a = infer_peer_key(own_b, kc)
        a_view_of_b = infer_peer_key(own_a, kc)
        link.final_length = n
        link.keys_agree = b_view_of_a == own_a and a_view_of_b == own_b
        report.pair_keys[(a, b)] = {a: own_a, b: b_view_of_a}


def _run_untrusted(cfg: ScenarioConfig, rng, report: SessionReport) -> None:
    relay = report.relay
    for a, b in schedule(cfg.user_names, RelayMode.UNTRUSTED, cfg.pairs):
        name = f"{a}<->{b}"
        with relay.session() as slot:
            records = mdi.run_rounds(
                cfg.rounds,
                cfg.channels[a],
                cfg.channels[b],
                cfg.relay.detector,
                cfg.relay.visibility,
                rng,
                cfg.source(a),
                cfg.source(b),
            )
            relay.announce_outcomes(slot, (r.announced for r in records))
        report.records[name] = records
        sifted = mdi.sift(records)
        ka, kb = mdi.apply_flip_rules(sifted, (a, b))
        link = LinkReport(
            "mdi",
            name,
            rounds=len(records),
            detected=sum(r.pattern.total > 0 for r in records),
            announced_success=sum(r.announced.success for r in records),
            multi_photon_fraction=float(np.mean([r.multi_photon for r in records])),
        )
        per_basis = mdi.qber_by_basis(ka, kb, [s.basis for s in sifted])
        link.qber_rect = per_basis.get(Basis.RECTILINEAR)
        link.qber_diag = per_basis.get(Basis.DIAGONAL)
        report.links.append(link)
        finals = _post_process(link, ka, kb, cfg.distill, rng)
        if finals is not None:
            report.pair_keys[(a, b)] = {a: finals[0], b: finals[1]}
            report.user_keys[name] = finals[0]


def run_session(cfg: ScenarioConfig) -> SessionReport:
    """Run one full scenario: every scheduled slot, then key relaying if trusted."""
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    relay = RelayNode(cfg.relay.mode, cfg.relay.detector, cfg.relay.visibility)
    report = SessionReport(cfg.relay.mode, relay=relay)
    if cfg.relay.mode is RelayMode.TRUSTED:
        _run_trusted(cfg, rng, report)
    else:
        _run_untrusted(cfg, rng, report)
    report.wall_time_s = time.perf_counter() - start
    return report


# --- Sweeps ---------------------------------------------------------------------

SWEEP_PARAMETERS = ("length_km", "efficiency", "dark_count_prob", "visibility", "misalignment_deg")


def derive_seed(base_seed: int, parameter: str, value: Any) -> int:
    digest = hashlib.blake2b(f"{base_seed}|{parameter}|{value!r}".encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "big") >> 1


def with_parameter(cfg: ScenarioConfig, parameter: str, value: float) -> ScenarioConfig:
    """Copy of ``cfg`` with one physical parameter replaced and a derived seed."""
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(
            f"unknown sweep parameter {parameter!r}; choose from {', '.join(SWEEP_PARAMETERS)}"
        )
    channels, relay = cfg.channels, cfg.relay
    if parameter in ("length_km", "misalignment_deg"):
        channels = {n: dataclasses.replace(ch, **{parameter: value}) for n, ch in channels.items()}
    elif parameter == "visibility":
        relay = dataclasses.replace(relay, visibility=value)
    else:
        detector = dataclasses.replace(relay.detector, **{parameter: value})
        relay = dataclasses.replace(relay, detector=detector)
    return dataclasses.replace(
        cfg, channels=channels, relay=relay, seed=derive_seed(cfg.seed, parameter, value)
    )


def sweep(
    cfg: ScenarioConfig,
    parameter: str,
    values: Sequence[float],
    workers: int | None = None,
) -> list[SessionReport]:
    """One report per value; points run in worker processes when ``workers > 1``."""
    configs = [with_parameter(cfg, parameter, v) for v in values]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_session, configs))
    return [run_session(c) for c in configs]


def sweep_to_csv(parameter: str, values: Sequence[float], reports: Sequence[SessionReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((parameter, "mode") + REPORT_COLUMNS)
    for v, rep in zip(values, reports):
        for link in rep.links:
            w.writerow([_cell(float(v)), rep.mode.value] + [_cell(getattr(link, c)) for c in REPORT_COLUMNS])
    return buf.getvalue()
