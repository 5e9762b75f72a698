import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import classical_probabilities, two_photon_probabilities
from qkdrelay import optics
from qkdrelay.optics import (
    Basis,
    BsmOutcome,
    DetectionPattern,
    DetectorModel,
    PolarizationState as P,
    bb84_measure,
    bsm_distribution,
    classify,
    jones_of,
    observe,
    rotate,
    same_state,
)

S = 1 / math.sqrt(2)
PAIRS = [(a, b) for a in P for b in P]


def pat(text):
    return DetectionPattern.parse(text)


@st.composite
def jones_states(draw):
    theta = draw(st.floats(0, math.pi))
    phi = draw(st.floats(0, 2 * math.pi))
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])


# --- states and rotations ---------------------------------------------------


@pytest.mark.parametrize(
    "state, expected",
    [(P.H, (1, 0)), (P.V, (0, 1)), (P.D_PLUS, (S, S)), (P.D_MINUS, (S, -S))],
)
def test_named_jones_pairs(state, expected):
    vec = jones_of(state)
    assert np.allclose(vec, expected, atol=1e-15)
    assert abs(np.vdot(vec, vec) - 1) < 1e-12


def test_jones_of_rejects_unnormalized():
    with pytest.raises(ValueError):
        jones_of([1.0, 1.0])


def test_rotate_examples():
    assert same_state(rotate(P.H, 90), P.V)
    assert same_state(rotate(P.H, 45), P.D_PLUS)
    for s in P:
        assert np.allclose(rotate(s, 0), jones_of(s))
    # DMinus rotated +45°: [[c, -s], [s, c]] @ (1, -1)/√2 = (1, 0)
    c = s = math.cos(math.radians(45))
    by_hand = np.array([[c, -s], [s, c]]) @ np.array([S, -S])
    assert np.allclose(by_hand, [1, 0])
    assert np.allclose(rotate(P.D_MINUS, 45), by_hand)


@given(jones_states(), st.floats(-360, 360))
def test_rotation_preserves_norm(vec, theta):
    out = rotate(vec, theta)
    assert abs(np.vdot(out, out).real - 1) < 1e-12


# --- patterns and classification ----------------------------------------------


@pytest.mark.parametrize("text", ["none", "H1", "H1+V2", "V1+H2", "2xH1", "H1+H2", "2xV2+H1"])
def test_pattern_string_round_trip(text):
    p = pat(text)
    assert DetectionPattern.parse(str(p)) == p


def test_pattern_canonical_order():
    assert str(DetectionPattern.from_modes(3, 0)) == "H1+V2"
    assert str(DetectionPattern.from_modes(2, 1)) == "V1+H2"
    assert str(DetectionPattern.from_modes(0, 0)) == "2xH1"
    assert str(DetectionPattern()) == "none"


@pytest.mark.parametrize(
    "text, outcome",
    [
        ("H1+V1", BsmOutcome.TRIPLET),
        ("H2+V2", BsmOutcome.TRIPLET),
        ("H1+V2", BsmOutcome.SINGLET),
        ("V1+H2", BsmOutcome.SINGLET),
        ("2xH1", BsmOutcome.FAILURE),
        ("H1+H2", BsmOutcome.FAILURE),
        ("V1+V2", BsmOutcome.FAILURE),
        ("H1", BsmOutcome.FAILURE),
        ("none", BsmOutcome.FAILURE),
        ("H1+V1+H2", BsmOutcome.FAILURE),
    ],
)
def test_classify(text, outcome):
    assert classify(pat(text)) is outcome


def test_orthogonal_pairs_are_exactly_the_successes():
    for pair in optics.ORTHOGONAL_PAIRS:
        p = DetectionPattern.from_modes(*pair)
        assert classify(p).success


# --- the two-photon distribution -------------------------------------------------


@pytest.mark.parametrize("a, b", PAIRS)
def test_distribution_matches_permanent_oracle(a, b):
    ref = two_photon_probabilities(jones_of(a), jones_of(b))
    dist = bsm_distribution(a, b)
    for name, p in ref.items():
        assert dist[name] == pytest.approx(p, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(jones_states(), jones_states(), st.floats(0, 1))
def test_random_states_match_oracles(a, b, v):
    dist = bsm_distribution(a, b, v)
    quantum = two_photon_probabilities(a, b)
    classical = classical_probabilities(a, b)
    for name in quantum:
        want = v * quantum[name] + (1 - v) * classical[name]
        assert dist[name] == pytest.approx(want, abs=1e-12)
    assert dist.total == pytest.approx(1.0, abs=1e-12)


def test_example_h_v():
    d = bsm_distribution(P.H, P.V)
    assert {str(k): round(v, 12) for k, v in d.support().items()} == {
        "H1+V1": 0.25,
        "H2+V2": 0.25,
        "H1+V2": 0.25,
        "V1+H2": 0.25,
    }


def test_example_h_h():
    d = bsm_distribution(P.H, P.H)
    assert {str(k): round(v, 12) for k, v in d.support().items()} == {"2xH1": 0.5, "2xH2": 0.5}


def test_example_orthogonal_diagonals():
    d = bsm_distribution(P.D_PLUS, P.D_MINUS)
    got = {str(k): round(v, 12) for k, v in d.support().items()}
    assert got == {
        "2xH1": 0.125,
        "2xV1": 0.125,
        "2xH2": 0.125,
        "2xV2": 0.125,
        "H1+V2": 0.25,
        "V1+H2": 0.25,
    }
    assert d["H1+H2"] == 0 and d["V1+V2"] == 0


def test_example_parallel_diagonals():
    d = bsm_distribution(P.D_PLUS, P.D_PLUS)
    got = {str(k): round(v, 12) for k, v in d.support().items()}
    assert got == {
        "H1+V1": 0.25,
        "H2+V2": 0.25,
        "2xH1": 0.125,
        "2xV1": 0.125,
        "2xH2": 0.125,
        "2xV2": 0.125,
    }


def test_partial_visibility_exposes_parallel_coincidences():
    d = bsm_distribution(P.D_PLUS, P.D_MINUS, 0.5)
    assert d["H1+H2"] > 0 and d["V1+V2"] > 0


@pytest.mark.parametrize("v", [-0.1, 1.5])
def test_visibility_out_of_range(v):
    with pytest.raises(ValueError):
        bsm_distribution(P.H, P.V, v)


@pytest.mark.parametrize("v", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("a, b", PAIRS)
def test_normalization(a, b, v):
    assert bsm_distribution(a, b, v).total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("s", list(P))
def test_hom_bunching(s):
    d = bsm_distribution(s, s, 1.0)
    assert sum(p for k, p in d.probs.items() if k.cross_port) == 0.0


@pytest.mark.parametrize("a, b", PAIRS)
def test_swap_symmetry(a, b):
    ab, ba = bsm_distribution(a, b), bsm_distribution(b, a)
    for o in (BsmOutcome.SINGLET, BsmOutcome.TRIPLET):
        assert ab.outcome_probability(o) == pytest.approx(ba.outcome_probability(o), abs=1e-12)


@pytest.mark.parametrize("a, b", PAIRS)
def test_visibility_is_affine(a, b):
    d0, dh, d1 = (bsm_distribution(a, b, v) for v in (0.0, 0.5, 1.0))
    for k in set(d0.probs) | set(d1.probs):
        assert dh[k] == pytest.approx(0.5 * (d0[k] + d1[k]), abs=1e-12)


def test_sign_convention_does_not_change_probabilities(monkeypatch):
    before = {ab: bsm_distribution(*ab).probs for ab in PAIRS}
    monkeypatch.setattr(optics, "BEAM_SPLITTER", np.array([[1.0, 1.0], [-1.0, 1.0]]) / math.sqrt(2))
    for ab in PAIRS:
        after = bsm_distribution(*ab)
        for k, p in before[ab].items():
            assert after[k] == pytest.approx(p, abs=1e-12)


@pytest.mark.parametrize("a, b", [(P.H, P.V), (P.D_PLUS, P.D_PLUS), (P.H, P.D_MINUS)])
def test_monte_carlo_consistency(a, b, rng):
    n = 100_000
    d = bsm_distribution(a, b)
    counts = Counter(d.sample(rng, n))
    for k, p in d.probs.items():
        sigma = math.sqrt(p * (1 - p) / n)
        assert abs(counts[k] / n - p) <= 3 * sigma
    assert set(counts) <= set(d.probs)


# --- detectors ------------------------------------------------------------------


def test_detector_model_validation():
    with pytest.raises(ValueError):
        DetectorModel(efficiency=1.2)
    with pytest.raises(ValueError):
        DetectorModel(dark_count_prob=1.0)


def test_observe_threshold_collapse(rng):
    assert observe(pat("2xH1"), DetectorModel(), rng) == pat("H1")


def test_observe_zero_efficiency(rng):
    assert observe(pat("H1+V2"), DetectorModel(0.0), rng) == pat("none")


def test_observe_both_clicks_survive_quarter(rng):
    n = 40_000
    det = DetectorModel(0.5)
    hits = sum(observe(pat("H1+V2"), det, rng) == pat("H1+V2") for _ in range(n))
    assert abs(hits / n - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / n)


def test_observe_dark_counts_rate(rng):
    n = 40_000
    det = DetectorModel(1.0, 0.1)
    clicks = np.array([observe(pat("none"), det, rng).counts for _ in range(n)])
    assert clicks.max() == 1
    assert np.all(np.abs(clicks.mean(axis=0) - 0.1) <= 3 * math.sqrt(0.09 / n))


# --- BB84 receiver -----------------------------------------------------------------


def test_bb84_measure_matching_basis_is_exact(rng):
    for s, bit in ((P.H, 0), (P.V, 1), (P.D_MINUS, 0), (P.D_PLUS, 1)):
        for _ in range(2_500):
            assert bb84_measure(s, rng, basis=s.basis) == (s.basis, bit)


def test_bb84_measure_conjugate_basis_is_random(rng):
    n = 20_000
    ones = sum(bb84_measure(P.H, rng, basis=Basis.DIAGONAL)[1] for _ in range(n))
    assert abs(ones / n - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_bb84_measure_zero_efficiency(rng):
    assert all(bb84_measure(P.V, rng, DetectorModel(0.0)) is None for _ in range(1000))


def test_bb84_measure_basis_uniform(rng):
    n = 20_000
    rect = sum(bb84_measure(P.H, rng)[0] is Basis.RECTILINEAR for _ in range(n))
    assert abs(rect / n - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_bb84_dark_count_on_lost_photon(rng):
    # lone dark click: P = 4 d (1-d)^3; multi-click gates are discarded
    n, d = 40_000, 0.05
    det = DetectorModel(1.0, d)
    hits = sum(bb84_measure(None, rng, det) is not None for _ in range(n))
    p = 4 * d * (1 - d) ** 3
    assert abs(hits / n - p) <= 3 * math.sqrt(p * (1 - p) / n)
