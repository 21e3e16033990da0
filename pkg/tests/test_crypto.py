import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvsim.crypto import (
    Algorithm,
    CryptoCostModel,
    Direction,
    KeyPhase,
    KeyState,
    boot,
    decrypt_page,
    encrypt_page,
    enter_sleep,
    page_crypto_cycles,
    power_down,
    wake,
)
from nvsim.errors import BadTransition, InvalidParams, KeysUnavailable, Misaligned

M = CryptoCostModel()
ENCRYPTED = [Algorithm.DES, Algorithm.AES, Algorithm.RSA]


@pytest.mark.parametrize("alg,cycles", [
    (Algorithm.NONE, 0), (Algorithm.DES, 4352), (Algorithm.AES, 6912), (Algorithm.RSA, 13824),
])
def test_page_cycles(alg, cycles):
    assert page_crypto_cycles(M, alg, 4096, Direction.ENCRYPT) == cycles


def test_decrypt_factor_and_linearity():
    m = CryptoCostModel(decrypt_factor=1.5)
    assert page_crypto_cycles(m, Algorithm.AES, 4096, Direction.DECRYPT) == 6912 * 1.5
    assert page_crypto_cycles(M, Algorithm.AES, 8192) == 2 * page_crypto_cycles(M, Algorithm.AES, 4096)
    costs = [page_crypto_cycles(M, a) for a in Algorithm]
    assert costs == sorted(costs)


def test_misaligned_page():
    with pytest.raises(Misaligned):
        page_crypto_cycles(M, Algorithm.AES, 4100)


def test_cost_model_validation():
    with pytest.raises(InvalidParams):
        CryptoCostModel(per_word_cycles={Algorithm.NONE: 0, Algorithm.DES: 20, Algorithm.AES: 13.5, Algorithm.RSA: 27}).validate()
    with pytest.raises(InvalidParams):
        CryptoCostModel(word_bytes=0).validate()


# a seed per page keeps hypothesis examples small
pages = st.just(bytes(4096)) | st.integers(0, 2**32).map(lambda n: random.Random(n).randbytes(4096))
keys = st.binary(min_size=16, max_size=16)


@given(pages, keys, st.integers(0, 2**64 - 1), st.sampled_from(ENCRYPTED))
def test_round_trip_and_not_plaintext(p, k, i, alg):
    c = encrypt_page(p, k, i, alg)
    assert len(c) == 4096
    assert c != p
    assert decrypt_page(c, k, i, alg) == p


def test_none_is_identity():
    p = bytes(range(256)) * 16
    assert encrypt_page(p, b"k" * 16, 3, Algorithm.NONE) == p
    assert decrypt_page(p, b"k" * 16, 3, Algorithm.NONE) == p


def test_tweak_key_and_algorithm_separation():
    r = random.Random(0)
    p = r.randbytes(4096)
    k, k2 = r.randbytes(16), r.randbytes(16)
    assert encrypt_page(p, k, 0, Algorithm.AES) != encrypt_page(p, k, 1, Algorithm.AES)
    c = encrypt_page(p, k, 7, Algorithm.AES)
    assert decrypt_page(c, k2, 7, Algorithm.AES) != p
    assert decrypt_page(c, k, 7, Algorithm.RSA) != p


def test_missing_key():
    with pytest.raises(KeysUnavailable):
        encrypt_page(bytes(4096), None, 0, Algorithm.AES)


def test_boot_examples():
    s = boot(KeyState(), random.Random(1), num_banks=4)
    assert s.phase is KeyPhase.ACTIVE and len(s.bank_keys) == 4 and s.session_id == 1
    s2 = boot(power_down(s), random.Random(2), num_banks=4)
    assert s2.session_id == 2
    assert not set(s.bank_keys) & set(s2.bank_keys)
    with pytest.raises(BadTransition):
        boot(s2, random.Random(3))


def test_sleep_wake_power_down():
    s = boot(KeyState(), random.Random(1))
    sl = enter_sleep(s)
    assert sl.phase is KeyPhase.SLEEPING and sl.bank_keys == s.bank_keys
    w = wake(sl)
    assert w.phase is KeyPhase.ACTIVE and w.bank_keys == s.bank_keys
    d = power_down(w)
    assert d.phase is KeyPhase.POWERED_DOWN and d.bank_keys == ()
    with pytest.raises(KeysUnavailable):
        d.key_for(0)
    with pytest.raises(KeysUnavailable):
        sl.key_for(0)
    with pytest.raises(BadTransition):
        enter_sleep(sl)


def test_state_machine_exhaustive():
    ops = {
        "boot": lambda s: boot(s, random.Random(0)),
        "enter_sleep": enter_sleep,
        "wake": wake,
        "power_down": power_down,
    }
    reps = {
        KeyPhase.POWERED_DOWN: KeyState(),
        KeyPhase.ACTIVE: boot(KeyState(), random.Random(0)),
    }
    reps[KeyPhase.SLEEPING] = enter_sleep(reps[KeyPhase.ACTIVE])
    edges = set()
    for (phase, state), (name, op) in itertools.product(reps.items(), ops.items()):
        try:
            out = op(state)
        except BadTransition:
            continue
        edges.add((phase, name, out.phase))
        assert bool(out.bank_keys) == (out.phase is not KeyPhase.POWERED_DOWN)
    P, A, S = KeyPhase.POWERED_DOWN, KeyPhase.ACTIVE, KeyPhase.SLEEPING
    assert edges == {(P, "boot", A), (A, "enter_sleep", S), (S, "wake", A), (A, "power_down", P), (S, "power_down", P)}
