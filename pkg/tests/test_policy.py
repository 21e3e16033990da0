import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvsim.crypto import Algorithm
from nvsim.errors import BadDistribution, ConfigError, InvalidParams, NonMonotonicFraction
from nvsim.policy import (
    EncryptionPolicy,
    PageSecurityMap,
    Phase,
    PhaseSchedule,
    PolicyMode,
    SecurityLevel as L,
    Transition,
    differentiated_schedule,
)

KEEP, SWITCH = Transition.KEEP_STRONGER, Transition.SWITCH_AND_INVALIDATE


def flags(ranges, schedule=None):
    return EncryptionPolicy(4, PolicyMode.FLAGS, page_map=PageSecurityMap(ranges), schedule=schedule)


def test_bank_escalates_to_highest_page():
    p = flags([(0, 0, L.LOW), (4, 4, L.HIGH)])
    p.touch(0)
    assert p.effective_algorithm(0) == Algorithm.DES
    p.touch(4)
    assert p.effective_algorithm(0) == Algorithm.RSA


def test_unprotected_page_skips_encryption():
    p = flags([(0, 0, L.HIGH), (4, 4, L.UNPROTECTED)])
    p.touch(0)
    p.touch(4)
    assert p.effective_algorithm(4) == Algorithm.NONE
    assert p.effective_algorithm(0) == Algorithm.RSA


def test_all_unprotected():
    p = flags([])
    for page in range(16):
        p.touch(page)
        assert p.effective_algorithm(page) == Algorithm.NONE


def test_uniform_mode_respects_explicit_unprotected():
    p = EncryptionPolicy(4, PolicyMode.UNIFORM, Algorithm.AES, PageSecurityMap([(1, 1, L.UNPROTECTED)], default=None))
    assert p.effective_algorithm(1) == Algorithm.NONE
    assert p.effective_algorithm(2) == Algorithm.AES


def test_random_assignment():
    p = EncryptionPolicy(4, PolicyMode.RANDOM)
    assert p.assign_random(random.Random(1), {Algorithm.DES: 1.0}) == [Algorithm.DES] * 4
    a = EncryptionPolicy(8, PolicyMode.RANDOM).assign_random(random.Random(5), {"des": 0.2, "aes": 0.3, "rsa": 0.5})
    b = EncryptionPolicy(8, PolicyMode.RANDOM).assign_random(random.Random(5), {"des": 0.2, "aes": 0.3, "rsa": 0.5})
    assert a == b
    big = EncryptionPolicy(3000, PolicyMode.RANDOM).assign_random(
        random.Random(2), {Algorithm.DES: 1 / 3, Algorithm.AES: 1 / 3, Algorithm.RSA: 1 / 3})
    for alg in (Algorithm.DES, Algorithm.AES, Algorithm.RSA):
        assert abs(big.count(alg) / 3000 - 1 / 3) < 0.05


@pytest.mark.parametrize("dist", [{}, {Algorithm.DES: 0.5}, {Algorithm.NONE: 1.0}, {Algorithm.DES: -0.5, Algorithm.AES: 1.5}])
def test_bad_distribution(dist):
    with pytest.raises(BadDistribution):
        EncryptionPolicy(4).assign_random(random.Random(0), dist)


def test_schedule_validation_and_lookup():
    s = differentiated_schedule()
    assert [p.level for p in s.phases] == [L.LOW, L.MEDIUM, L.HIGH]
    assert s.boundaries == pytest.approx([0.15, 0.75])
    assert [s.phase_at(f) for f in (0.0, 0.149, 0.15, 0.5, 0.75, 1.0)] == [0, 0, 1, 1, 2, 2]
    with pytest.raises(InvalidParams):
        PhaseSchedule([Phase(0.5, L.LOW)])
    with pytest.raises(InvalidParams):
        PhaseSchedule([])
    with pytest.raises(ConfigError):
        EncryptionPolicy(4, PolicyMode.UNIFORM, schedule=s)


def high_then_low(transition):
    return PhaseSchedule([Phase(0.5, L.HIGH), Phase(0.5, L.LOW)], transition)


def test_keep_stronger_no_switch():
    p = flags([], high_then_low(KEEP))
    p.touch(0)
    assert p.current_alg[0] == Algorithm.RSA
    c = p.advance_phase(0.6, stored_alg={0: Algorithm.RSA})
    assert (len(c.algorithm_switches), c.invalidated) == (0, 0)
    assert p.effective_algorithm(0) == Algorithm.RSA


def test_switch_and_invalidate():
    p = flags([], high_then_low(SWITCH))
    pages = [4 * k for k in range(10)]
    for page in pages:
        p.touch(page)
    quiesced = []
    c = p.advance_phase(0.5, {pg: Algorithm.RSA for pg in pages}, quiesce=quiesced.append)
    assert quiesced == [0]
    assert len(c.algorithm_switches) == 1 and c.invalidated == 10
    assert p.current_alg[0] == Algorithm.DES
    assert not p.is_valid(4)
    out = p.access_invalid_page(4)
    assert out.penalty_cycles == 1_000_000 and out.algorithm == Algorithm.DES
    assert p.is_valid(4)


def test_single_phase_never_changes():
    p = flags([], PhaseSchedule([Phase(1.0, L.MEDIUM)]))
    p.touch(0)
    for f in (0.0, 0.3, 0.9, 1.0):
        c = p.advance_phase(f, {0: Algorithm.AES})
        assert not c.algorithm_switches and c.invalidated == 0


def test_fraction_must_not_decrease():
    p = flags([], differentiated_schedule())
    p.advance_phase(0.5)
    with pytest.raises(NonMonotonicFraction):
        p.advance_phase(0.4)
    with pytest.raises(NonMonotonicFraction):
        p.advance_phase(1.5)


def test_sidecar_parse():
    m = PageSecurityMap.parse_sidecar("# flags\n0x0 0x1fff high\n0x1000 0x1fff unprotected\n\n0x10000 0x10fff low\n")
    assert m.flag(0) == L.HIGH and m.flag(1) == L.UNPROTECTED and m.flag(16) == L.LOW and m.flag(2) == L.UNPROTECTED
    for bad in ("0x0 high\n", "0x10 0x0 low\n", "0x0 0x10 secret\n", "zz 0x10 low\n"):
        with pytest.raises(ConfigError):
            PageSecurityMap.parse_sidecar(bad)


levels = st.sampled_from(list(L))


@given(st.lists(st.tuples(st.integers(0, 31), levels), max_size=30),
       st.lists(st.integers(0, 31), max_size=40),
       st.lists(st.integers(0, 31), max_size=8))
def test_bank_demand_matches_brute_force(flagged, touched, invalid):
    p = flags([(pg, pg, lv) for pg, lv in flagged])
    for pg in invalid:
        p.touch(pg)
        p.invalidate(pg)
    for pg in touched:
        p.touch(pg)
    for b in range(4):
        valid = [pg for pg in p._touched if pg % 4 == b and p.is_valid(pg)]
        want = max((p.page_map.flag(pg) for pg in valid), default=L.UNPROTECTED).algorithm
        assert p.bank_demand(b) == want
        # the bank never runs below what any valid page demands
        assert p.current_alg[b] >= want
