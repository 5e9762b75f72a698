"""Exit criteria for the simulator, shared by ``qkdrelay selftest`` and the test suite.

Every check runs at its stated tolerance. ``scale`` shrinks round counts for
quick runs; checks with absolute tolerances keep a floor on their round count.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bb84, mdi, optics
from .bb84 import Bb84RoundRecord, DistillParams, KeyMaterial
from .channel import SECONDS_PER_CENTURY, ChannelModel, EveConfig, SourceModel, expected_detections
from .netsim import RelayConfig, ScenarioConfig, UserConfig, run_session, sweep
from .optics import (
    Basis,
    BsmOutcome,
    DetectionPattern,
    DetectorModel,
    PolarizationState as P,
    bsm_distribution,
    classify,
    observe,
)
from .relay import RelayMode, infer_peer_key, xor_relay

SEED = 20240917
ROUND_FLOOR = 50_000


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  [{self.number:2d}] {self.name}: {self.detail}"


def _binomial_ok(count: int, n: int, p: float, k: float = 3.0) -> bool:
    sigma = math.sqrt(p * (1.0 - p) / n)
    return abs(count / n - p) <= k * sigma + 1e-12


def scenario(
    mode: RelayMode,
    rounds: int,
    seed: int = SEED,
    efficiency: float = 1.0,
    dark: float = 0.0,
    visibility: float = 1.0,
    channels: dict[str, ChannelModel] | None = None,
    users=("Alice", "Bob"),
    distill: DistillParams | None = None,
) -> ScenarioConfig:
    channels = channels or {u: ChannelModel() for u in users}
    return ScenarioConfig(
        users=tuple(UserConfig(u) for u in users),
        channels=channels,
        relay=RelayConfig(mode, DetectorModel(efficiency, dark), visibility),
        rounds=rounds,
        seed=seed,
        distill=distill or DistillParams(),
    )


# Expected ideal-interference pattern sets for the
# compatible-basis input pairs. Orthogonal diagonal inputs list H1+H2 and
# V1+V2 too; those only appear with partial distinguishability.
MDI_PATTERN_SUPPORT = {
    (P.H, P.H): {"2xH1", "2xH2"},
    (P.V, P.V): {"2xV1", "2xV2"},
    (P.H, P.V): {"H1+V1", "H2+V2", "H1+V2", "V1+H2"},
    (P.V, P.H): {"H1+V1", "H2+V2", "H1+V2", "V1+H2"},
    (P.D_MINUS, P.D_MINUS): {"2xH1", "2xV1", "H1+V1", "2xH2", "2xV2", "H2+V2"},
    (P.D_PLUS, P.D_PLUS): {"2xH1", "2xV1", "H1+V1", "2xH2", "2xV2", "H2+V2"},
    (P.D_MINUS, P.D_PLUS): {"2xH1", "2xV1", "2xH2", "2xV2", "H1+V2", "V1+H2"},
    (P.D_PLUS, P.D_MINUS): {"2xH1", "2xV1", "2xH2", "2xV2", "H1+V2", "V1+H2"},
}
IMPERFECTION_ONLY = {"H1+H2", "V1+V2"}

# Worked BB84 example: twelve columns, '?' where the bases disagree.
WORKED_EXAMPLE = {
    "alice_bases": "++x+xx+x++xx",
    "alice_bits": "100101010110",
    "charlie_bases": "x+xx+x++x+x+",
    "charlie_bits": "?00??10??11?",
}
WORKED_EXAMPLE_KEPT = "001011"


def _basis(symbol: str) -> Basis:
    return Basis.RECTILINEAR if symbol == "+" else Basis.DIAGONAL


def worked_example_records(rng: np.random.Generator) -> list[Bb84RoundRecord]:
    """Replay the worked example through the ideal receiver with forced bases."""
    records = []
    for i in range(12):
        ab = _basis(WORKED_EXAMPLE["alice_bases"][i])
        bit = int(WORKED_EXAMPLE["alice_bits"][i])
        cb = _basis(WORKED_EXAMPLE["charlie_bases"][i])
        got = optics.bb84_measure(bb84.prepare(ab, bit), rng, basis=cb)
        records.append(Bb84RoundRecord(i, ab, bit, got[0], True, got[1]))
    return records


def oracle_success_fractions() -> tuple[float, float]:
    """(announced success, sifted) fractions for uniform inputs, from the oracle."""
    announced = sifted = 0.0
    for a in P:
        for b in P:
            s = 1.0 - bsm_distribution(a, b).outcome_probability(BsmOutcome.FAILURE)
            announced += s / 16
            if a.basis is b.basis:
                sifted += s / 16
    return announced, sifted


class Acceptance:
    def __init__(self, scale: float = 1.0, seed: int = SEED):
        self.scale = scale
        self.seed = seed

    def n(self, spec_rounds: int, floor: int = 0) -> int:
        return max(int(spec_rounds * self.scale), min(spec_rounds, floor), 100)

    def rng(self, offset: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, offset])

    # 1
    def loss_arithmetic(self) -> CriterionResult:
        src = SourceModel(pulse_rate_hz=10e9)
        ch = ChannelModel(length_km=1000.0, attenuation_db_per_km=0.2)
        got = expected_detections(src, ch, 1.0, SECONDS_PER_CENTURY)
        ok = 0.26 <= got <= 0.37
        return CriterionResult(1, "Loss arithmetic", ok, f"{got:.4f} photons per century in [0.26, 0.37]")

    # 2
    def bsm_oracle_vs_monte_carlo(self) -> CriterionResult:
        n = self.n(100_000)
        rng = self.rng(2)
        bad = []
        for a in P:
            for b in P:
                dist = bsm_distribution(a, b, 1.0)
                if abs(dist.total - 1.0) > 1e-12:
                    bad.append(f"{a.value},{b.value} not normalized")
                counts = Counter(dist.sample(rng, n))
                for pat in set(counts) | set(dist.probs):
                    p = dist[pat]
                    if p == 0.0 and counts[pat]:
                        bad.append(f"{a.value},{b.value} {pat} sampled but p=0")
                    elif p > 0.0 and not _binomial_ok(counts[pat], n, p):
                        bad.append(f"{a.value},{b.value} {pat} {counts[pat] / n:.5f} vs {p:.5f}")
                want = MDI_PATTERN_SUPPORT.get((a, b))
                if want is not None:
                    got = {str(k) for k in dist.support()}
                    if got != want:
                        bad.append(f"{a.value},{b.value} support {sorted(got)} != {sorted(want)}")
        for a, b in ((P.D_PLUS, P.D_MINUS), (P.D_MINUS, P.D_PLUS)):
            partial = {str(k) for k in bsm_distribution(a, b, 0.5).support()}
            if not IMPERFECTION_ONLY <= partial:
                bad.append(f"{a.value},{b.value} v=0.5 lacks H1+H2/V1+V2")
        detail = f"16 input pairs x {n} samples within 3 sigma; ideal pattern sets match"
        return CriterionResult(2, "BSM oracle vs Monte Carlo", not bad, "; ".join(bad[:4]) or detail)

    # 3
    def hom_bunching(self) -> CriterionResult:
        n = self.n(100_000)
        rng = self.rng(3)
        det = DetectorModel()
        worst_p, observed = 0.0, 0
        for s in P:
            dist = bsm_distribution(s, s, 1.0)
            worst_p = max(worst_p, sum(p for k, p in dist.probs.items() if k.cross_port))
            observed += sum(observe(k, det, rng).cross_port for k in dist.sample(rng, n))
        ok = worst_p == 0.0 and observed == 0
        return CriterionResult(
            3, "HOM bunching", ok, f"cross-port probability {worst_p}, observed {observed} in {4 * n} samples"
        )

    # 4
    def bb84_end_to_end(self) -> CriterionResult:
        n = self.n(10_000)
        rep = run_session(scenario(RelayMode.TRUSTED, n, seed=self.seed + 4))
        bad = []
        for user in ("Alice", "Bob"):
            link = rep.link(f"{user}->relay")
            sift_n = link.sifted
            if not _binomial_ok(sift_n, n, 0.5):
                bad.append(f"{user} sifted fraction {sift_n / n:.4f}")
            if link.qber != 0.0 or link.qber_full != 0.0:
                bad.append(f"{user} QBER {link.qber_full}")
            if not (rep.user_keys[user] == rep.relay.key_store[user] and len(rep.user_keys[user]) > 0):
                bad.append(f"{user} key differs from relay copy")
        if not rep.link("Alice<->Bob").keys_agree:
            bad.append("relayed keys disagree")
        recs = worked_example_records(self.rng(41))
        ka, kc = bb84.sift(recs)
        if str(ka) != WORKED_EXAMPLE_KEPT or str(kc) != WORKED_EXAMPLE_KEPT:
            bad.append(f"worked example kept {ka}/{kc}, expected {WORKED_EXAMPLE_KEPT}")
        detail = f"{n} rounds/link, QBER 0, keys identical; worked example keeps {WORKED_EXAMPLE_KEPT}"
        return CriterionResult(4, "BB84 end-to-end", not bad, "; ".join(bad) or detail)

    # 5
    def mdi_end_to_end(self) -> CriterionResult:
        n = self.n(10_000)
        _, expected = oracle_success_fractions()
        rep = run_session(scenario(RelayMode.UNTRUSTED, n, seed=self.seed + 5))
        link = rep.link("Alice<->Bob")
        keys = rep.pair_keys.get(("Alice", "Bob"), {})
        rec = rep.records["Alice<->Bob"]
        ka, kb = mdi.apply_flip_rules(mdi.sift(rec))
        bad = []
        if not (ka == kb and len(ka) > 0):
            bad.append("sifted keys disagree after flips")
        if link.qber_full != 0.0:
            bad.append(f"QBER {link.qber_full}")
        if not keys or keys["Alice"] != keys["Bob"]:
            bad.append("final keys disagree")
        if rep.relay.key_store:
            bad.append("relay key store not empty")
        if abs(expected - 0.25) > 1e-12:
            bad.append(f"oracle sifted fraction {expected}")
        if not _binomial_ok(link.sifted, n, expected):
            bad.append(f"sifted fraction {link.sifted / n:.4f} vs {expected}")
        detail = f"{n} rounds, keys identical, relay store empty, sifted {link.sifted / n:.4f} vs {expected:.4f}"
        return CriterionResult(5, "MDI key agreement", not bad, "; ".join(bad) or detail)

    # 6
    def efficiency_scaling(self) -> CriterionResult:
        n = self.n(100_000, ROUND_FLOOR)
        m = sweep(scenario(RelayMode.UNTRUSTED, n, seed=self.seed + 6), "efficiency", [0.8, 0.4])
        t = sweep(scenario(RelayMode.TRUSTED, n, seed=self.seed + 6), "efficiency", [0.8, 0.4])
        mdi_ratio = m[0].links[0].sifted / m[1].links[0].sifted
        bb_ratio = t[0].link("Alice->relay").detected / t[1].link("Alice->relay").detected
        ok = abs(mdi_ratio - 4.0) <= 0.4 and abs(bb_ratio - 2.0) <= 0.2
        return CriterionResult(
            6, "Quadratic vs linear efficiency", ok, f"MDI ratio {mdi_ratio:.3f} (4 +/- 10%), BB84 ratio {bb_ratio:.3f} (2 +/- 10%)"
        )

    # 7
    def xor_algebra(self) -> CriterionResult:
        rng = self.rng(7)
        lengths = (0, 1, 8, 256, 4097)
        bad = 0
        for i in range(max(1000, int(1000 * self.scale))):
            L = lengths[i % len(lengths)]
            ka = KeyMaterial(rng.integers(0, 2, L))
            kb = KeyMaterial(rng.integers(0, 2, L))
            kc = xor_relay(ka, kb)
            bad += infer_peer_key(ka, kc) != kb or infer_peer_key(kb, kc) != ka
        trials = self.n(10_000)
        a = rng.integers(0, 256, trials, dtype=np.uint16)
        b = rng.integers(0, 256, trials, dtype=np.uint16)
        freq = np.bincount(a ^ b, minlength=256)
        expected = trials / 256
        chi2 = float(((freq - expected) ** 2 / expected).sum())
        limit = 255 + 3 * math.sqrt(2 * 255)
        ok = bad == 0 and chi2 <= limit
        return CriterionResult(
            7, "XOR relay algebra", ok, f"{bad} round-trip failures; parity chi2 {chi2:.1f} <= {limit:.1f}"
        )

    # 8
    def adversary_and_noise(self) -> CriterionResult:
        n = self.n(100_000, ROUND_FLOOR)
        channels = {"Alice": ChannelModel(eve=EveConfig()), "Bob": ChannelModel()}
        rep = run_session(scenario(RelayMode.TRUSTED, n, seed=self.seed + 8, channels=channels))
        eve = rep.link("Alice->relay")
        recs = bb84.run_rounds(n, ChannelModel(misalignment_deg=10.0), DetectorModel(), self.rng(81))
        ka, kc = bb84.sift(recs)
        mis_qber, _, _ = bb84.estimate_qber(ka, kc, 1.0, self.rng(82))
        target = math.sin(math.radians(10.0)) ** 2
        ok = (
            abs(eve.qber_full - 0.25) <= 0.02
            and eve.aborted
            and abs(mis_qber - target) <= 0.005
        )
        return CriterionResult(
            8,
            "Adversary and noise oracles",
            ok,
            f"Eve QBER {eve.qber_full:.4f} aborted={eve.aborted}; misalignment QBER {mis_qber:.4f} vs {target:.4f}",
        )

    # 9
    def relay_blindness(self) -> CriterionResult:
        n = self.n(100_000)
        recs = mdi.run_rounds(n, ChannelModel(), ChannelModel(), DetectorModel(), 1.0, self.rng(9))
        parts = []
        ok = True
        for outcome in (BsmOutcome.SINGLET, BsmOutcome.TRIPLET):
            bits = [r.alice_bit for r in recs if r.announced is outcome and r.alice_basis is r.bob_basis]
            zeros = bits.count(0)
            ok &= _binomial_ok(zeros, len(bits), 0.5)
            parts.append(f"P(bit=0|{outcome.value})={zeros / len(bits):.4f} (N={len(bits)})")
        return CriterionResult(9, "Relay blindness", ok, ", ".join(parts))

    # 10
    def determinism(self) -> CriterionResult:
        n = self.n(5_000)
        ok = True
        for mode in RelayMode:
            cfg = scenario(mode, n, seed=self.seed + 10, efficiency=0.7, dark=1e-3)
            r1, r2 = run_session(cfg), run_session(cfg)
            ok &= r1.csv_artifacts() == r2.csv_artifacts()
            ok &= all(r1.pair_keys[p][u] == r2.pair_keys[p][u] for p in r1.pair_keys for u in r1.pair_keys[p])
        return CriterionResult(10, "Determinism", ok, "byte-identical CSV and keys on re-run, both modes")

    def checks(self) -> list[Callable[[], CriterionResult]]:
        return [
            self.loss_arithmetic,
            self.bsm_oracle_vs_monte_carlo,
            self.hom_bunching,
            self.bb84_end_to_end,
            self.mdi_end_to_end,
            self.efficiency_scaling,
            self.xor_algebra,
            self.adversary_and_noise,
            self.relay_blindness,
            self.determinism,
        ]


def run_acceptance(scale: float = 1.0, seed: int = SEED, echo: Callable[[str], None] | None = None):
    results = []
    for check in Acceptance(scale, seed).checks():
        res = check()
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
