import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qkdrelay.acceptance import scenario
from qkdrelay.bb84 import KeyMaterial, KeyRole
from qkdrelay.netsim import run_session
from qkdrelay.relay import (
    RelayError,
    RelayMode,
    RelayNode,
    announcements_to_csv,
    infer_peer_key,
    schedule,
    xor_relay,
)

K = KeyMaterial.from_string


def test_xor_examples():
    kc = xor_relay(K("1010"), K("0110"))
    assert str(kc) == "1100" and kc.role is KeyRole.PUBLIC
    assert str(xor_relay(K("1101"), K("1101"))) == "0000"


def test_infer_examples():
    assert str(infer_peer_key(K("1010"), K("1100"))) == "0110"
    assert str(infer_peer_key(K("0110"), K("1100"))) == "1010"
    assert infer_peer_key(K("0111"), K("0000")) == K("0111")


def test_length_mismatch():
    with pytest.raises(ValueError):
        xor_relay(K("10"), K("1"))
    with pytest.raises(ValueError):
        infer_peer_key(K("10"), K("1"))


@given(st.sampled_from([0, 1, 8, 256, 4097]), st.integers(0, 2**32 - 1))
def test_xor_round_trip(length, seed):
    rng = np.random.default_rng(seed)
    ka, kb = KeyMaterial(rng.integers(0, 2, length)), KeyMaterial(rng.integers(0, 2, length))
    kc = xor_relay(ka, kb)
    assert infer_peer_key(ka, kc) == kb
    assert infer_peer_key(kb, kc) == ka


def test_random_keys_round_trip_256(rng):
    for _ in range(100):
        ka, kb = KeyMaterial(rng.integers(0, 2, 256)), KeyMaterial(rng.integers(0, 2, 256))
        assert infer_peer_key(ka, xor_relay(ka, kb)) == kb


def test_parity_is_uniform(rng):
    trials = 10_000
    ones = 0
    for _ in range(trials):
        ka, kb = KeyMaterial(rng.integers(0, 2, 16)), KeyMaterial(rng.integers(0, 2, 16))
        ones += int(xor_relay(ka, kb).bits.sum())
    n = 16 * trials
    chi2 = (ones - n / 2) ** 2 / (n / 2) + ((n - ones) - n / 2) ** 2 / (n / 2)
    assert math.sqrt(chi2) <= 3


def test_set_mode_clears_keys():
    node = RelayNode(RelayMode.TRUSTED)
    node.store_key("A", K("1011"))
    node.set_mode(RelayMode.UNTRUSTED)
    assert node.key_store == {}
    assert node.receiver.inputs == 2 and not node.receiver.diagonal_branch


def test_set_mode_restores_bb84_receiver():
    node = RelayNode(RelayMode.UNTRUSTED)
    node.set_mode(RelayMode.TRUSTED)
    assert node.receiver.inputs == 1 and node.receiver.diagonal_branch
    assert node.reconfigurations == [(RelayMode.UNTRUSTED, RelayMode.TRUSTED)]


def test_set_mode_same_is_noop():
    node = RelayNode(RelayMode.TRUSTED)
    node.store_key("A", K("1"))
    assert node.set_mode(RelayMode.TRUSTED) is node
    assert node.key_store and node.reconfigurations == []


def test_no_switch_mid_session():
    node = RelayNode(RelayMode.TRUSTED)
    with node.session():
        with pytest.raises(RelayError):
            node.set_mode(RelayMode.UNTRUSTED)
    node.set_mode(RelayMode.UNTRUSTED)
    assert node.mode is RelayMode.UNTRUSTED


def test_untrusted_never_stores_keys():
    node = RelayNode(RelayMode.UNTRUSTED)
    with pytest.raises(RelayError):
        node.store_key("A", K("1"))


def test_purge():
    node = RelayNode()
    node.store_key("A", K("1"))
    node.store_key("B", K("0"))
    node.purge("A")
    assert list(node.key_store) == ["B"]
    node.purge()
    assert node.key_store == {}


def test_schedule_trusted_round_robin():
    s = schedule(["A", "B", "C"], RelayMode.TRUSTED)
    assert list(s) == [("A",), ("B",), ("C",)]
    assert list(schedule(["A", "B", "C"], RelayMode.TRUSTED, cycles=2)) == [("A",), ("B",), ("C",)] * 2


def test_schedule_untrusted_pairs():
    s = schedule(["A", "B", "C"], RelayMode.UNTRUSTED, [("A", "B"), ("B", "C")])
    assert list(s) == [("A", "B"), ("B", "C")]


def test_schedule_rejects_self_pair():
    with pytest.raises(ValueError):
        schedule(["A", "B"], RelayMode.UNTRUSTED, [("A", "A")])
    with pytest.raises(ValueError):
        schedule(["A"], RelayMode.TRUSTED)


def test_trusted_relay_knows_all_keys():
    rep = run_session(scenario(RelayMode.TRUSTED, 2000, users=("A", "B", "C")))
    for u in ("A", "B", "C"):
        assert rep.relay.key_store[u] == rep.user_keys[u] and len(rep.user_keys[u]) > 0
    for (a, b), keys in rep.pair_keys.items():
        assert keys[a] == keys[b]
    assert all(l.keys_agree for l in rep.links if l.kind == "parity")


def test_trusted_pair_segments_do_not_overlap():
    rep = run_session(scenario(RelayMode.TRUSTED, 4000, users=("A", "B", "C")))
    # each user takes part in two pairs, so gets two disjoint halves
    ab, ac = rep.pair_keys[("A", "B")]["A"], rep.pair_keys[("A", "C")]["A"]
    half = len(rep.user_keys["A"]) // 2
    assert ab == rep.user_keys["A"].segment(0, len(ab))
    assert ac == rep.user_keys["A"].segment(half, half + len(ac))


def test_untrusted_relay_blind():
    rep = run_session(scenario(RelayMode.UNTRUSTED, 20_000))
    assert rep.relay.key_store == {}
    outcomes = [a.content for a in rep.relay.announcement_log]
    assert len(outcomes) == 20_000 and set(outcomes) <= {"Singlet", "Triplet", "Failure"}
    recs = rep.records["Alice<->Bob"]
    for outcome in ("Singlet", "Triplet"):
        bits = [r.alice_bit for r in recs if r.announced.value == outcome and r.alice_basis is r.bob_basis]
        n = len(bits)
        assert abs(bits.count(0) / n - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_announcement_csv():
    node = RelayNode()
    with node.session() as slot:
        node.relay_parity(slot, K("10"), K("11"))
    assert announcements_to_csv(node.announcement_log) == "slot,announcement,mode\n0,01,Trusted\n"
