"""Acceptance criteria, one test each.

Every test prints a single ``CRITERION n PASS|FAIL ...`` line; the lines
are repeated in the pytest terminal summary.  Run standalone with
``python tests/test_acceptance.py``.
"""

import random
import time
from dataclasses import replace

import pytest

from nvsim.analytic import analytic_total
from nvsim.cli import main as cli_main
from nvsim.config import PolicySpec, SimConfig
from nvsim.crypto import Algorithm, KeyState, boot, decrypt_page, encrypt_page, enter_sleep, power_down, wake
from nvsim.engine import Simulator, compare, filter_rate, reference_replay, run
from nvsim.errors import KeysUnavailable
from nvsim.policy import Phase, PhaseSchedule, PolicyMode, SecurityLevel as L, Transition, differentiated_schedule
from nvsim.presets import preset
from nvsim.trace import AccessRecord, Op, SyntheticParams, Trace, generate_synthetic, write_trace

RESULTS = []
ALGS = list(Algorithm)


def verdict(n, title, ok, detail=""):
    line = f"CRITERION {n:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    RESULTS.append(line)
    print(line)
    assert ok, line


def uniform(alg, **kw):
    return replace(SimConfig().with_algorithm(alg), **kw)


def random_params(r):
    return SyntheticParams(
        num_requests=r.randint(1, 400),
        footprint_pages=r.randint(1, 300),
        locality_alpha=r.choice([0.0, 0.5, 1.0, 1.5]),
        write_fraction=r.random(),
        mean_gap_cycles=r.choice([0, 10, 500, 20000]),
        seed=r.randrange(2**32),
    )


_PRESET_CACHE = {}


def preset_runs(name):
    """none/des/aes/rsa/differentiated on one preset, DRAM off and on."""
    if name in _PRESET_CACHE:
        return _PRESET_CACHE[name]
    trace = generate_synthetic(preset(name))
    base = SimConfig(track_data=False)
    diff = PolicySpec(PolicyMode.FLAGS, schedule=differentiated_schedule())
    out = {}
    for dram in (False, True):
        b = base.with_dram(dram)
        for a in ALGS:
            out[dram, a] = run(trace, b.with_algorithm(a))
        out[dram, "diff"] = run(trace, replace(b, policy=diff))
    _PRESET_CACHE[name] = out
    return out


# 1 -------------------------------------------------------------------------
def test_c1_zero_extra_writes():
    t0 = time.time()
    r = random.Random(101)
    cases = bad = 0
    for _ in range(100):
        trace = generate_synthetic(random_params(r))
        wb = r.choice([0, 1, 8])
        for dram in (False, True):
            seen = set()
            for a in ALGS:
                sim = Simulator(trace, uniform(a, write_buffer_pages=wb, track_data=False).with_dram(dram))
                st = sim.run()
                seen.add((st.pcm_page_writes, tuple(sorted(sim.pcm.endurance.items()))))
            cases += 1
            bad += len(seen) != 1
    elapsed = time.time() - t0
    verdict(1, "zero extra writes across algorithms", bad == 0 and elapsed < 60,
            f"{cases} trace/config cases, {bad} mismatches, {elapsed:.1f}s")


# 2 -------------------------------------------------------------------------
def test_c2_oracle_equivalence():
    t0 = time.time()
    r = random.Random(202)
    bad = 0
    for _ in range(1000):
        bank = r.randrange(4)
        pages = [bank + 4 * r.randrange(64) for _ in range(r.randint(1, 8))]
        recs = [
            AccessRecord(Op.WRITE if r.random() < 0.4 else Op.READ,
                         r.choice(pages) * 4096 + r.randrange(64) * 64,
                         r.choice([0, 0, 3, 40, 900, 15000]))
            for _ in range(r.randint(0, 100))
        ]
        trace = Trace.from_records(recs)
        c = uniform(r.choice(ALGS), write_buffer_pages=r.choice([0, 1, 2, 8]), track_data=False)
        bad += run(trace, c).exec_cycles != analytic_total(trace, c)
    elapsed = time.time() - t0
    verdict(2, "engine equals analytic oracle", bad == 0 and elapsed < 60,
            f"1000 traces, {bad} mismatches, {elapsed:.1f}s")


# 3 -------------------------------------------------------------------------
def test_c3_crypto_soundness(tmp_path, monkeypatch):
    r = random.Random(303)
    bad = 0
    for _ in range(120):
        page = r.randbytes(4096)
        key, idx, alg = r.randbytes(16), r.randrange(2**64), r.choice(ALGS[1:])
        c = encrypt_page(page, key, idx, alg)
        bad += c == page or decrypt_page(c, key, idx, alg) != page

    monkeypatch.chdir(tmp_path)
    write_trace(generate_synthetic(preset("mcf-like", num_requests=1500)), "w.trace")
    (tmp_path / "aes.ini").write_text("[policy]\nalgorithm = aes\n")
    (tmp_path / "none.ini").write_text("[policy]\nalgorithm = none\n")
    cli_main(["--config", "aes.ini", "run", "w.trace", "--out", "a.json", "--snapshot", "a.npz"])
    cli_main(["--config", "none.ini", "run", "w.trace", "--out", "n.json", "--snapshot", "n.npz"])
    protected = cli_main(["dump-nvm", "a.npz", "--check-plaintext", "w.trace", "--out", "a.txt"])
    unprotected = cli_main(["dump-nvm", "n.npz", "--check-plaintext", "w.trace", "--out", "n.txt"])
    ok = bad == 0 and protected == 0 and unprotected != 0
    verdict(3, "cipher round trip and ciphertext at rest", ok,
            f"120 tuples, {bad} failures; check-plaintext exit AES={protected} none={unprotected}")


# 4 -------------------------------------------------------------------------
def test_c4_decrypt_once_and_combining():
    outcomes = []
    for k in (1, 2, 64):
        t = Trace.from_records([AccessRecord(Op.READ, 0x5000 + (i % 64) * 64, 0) for i in range(k)])
        st = run(t, uniform(Algorithm.AES))
        outcomes.append(("reads", k, st.total_decrypts, st.total_encrypts, st.pcm_page_writes))
    for n in (1, 2, 64):
        t = Trace.from_records([AccessRecord(Op.WRITE, 0x5000 + (i % 64) * 64, 0) for i in range(n)])
        st = run(t, uniform(Algorithm.AES))
        outcomes.append(("writes", n, st.total_decrypts, st.total_encrypts, st.pcm_page_writes))
    ok = all(o[2:] == (1, 0, 0) for o in outcomes[:3]) and all(o[3:] == (1, 1) for o in outcomes[3:])
    verdict(4, "decrypt once per row fill, one encrypt+write per buffered page", ok,
            "; ".join(f"{kind} x{n}: dec={d} enc={e} writes={w}" for kind, n, d, e, w in outcomes))


# 5 -------------------------------------------------------------------------
def test_c5_overhead_ordering():
    runs = preset_runs("mcf-like")
    base = runs[False, Algorithm.NONE]
    o = {a: compare(runs[False, a], base) for a in ALGS}
    perf = [o[a].perf_pct for a in ALGS]
    energy = [o[a].energy_pct for a in ALGS]
    ok = perf[0] == 0 and energy[0] == 0 and perf[0] < perf[1] < perf[2] < perf[3] and energy[0] < energy[1] < energy[2] < energy[3]
    verdict(5, "mcf-like overhead ordering none < DES < AES < RSA", ok,
            "perf% " + "/".join(f"{p:.2f}" for p in perf) + "; energy% " + "/".join(f"{e:.1f}" for e in energy))


# 6 -------------------------------------------------------------------------
def test_c6_dram_cache_trends():
    t0 = time.time()
    details, ok = [], True
    for name, target, lo, hi, expect_lower in (
        ("mcf-like", 0.63, 0.60, 0.68, True),
        ("milc-like", 0.15, 0.10, 0.20, False),
    ):
        runs = preset_runs(name)
        fr = filter_rate(runs[True, Algorithm.NONE], runs[False, Algorithm.NONE])
        off = compare(runs[False, Algorithm.RSA], runs[False, Algorithm.NONE]).perf_pct
        on = compare(runs[True, Algorithm.RSA], runs[True, Algorithm.NONE]).perf_pct
        trend = on < off if expect_lower else on > off
        ok &= lo <= fr <= hi and abs(fr - target) <= 0.05 and trend
        details.append(f"{name}: filter {fr:.3f}, RSA perf% off {off:.2f} -> on {on:.2f}")
    elapsed = time.time() - t0
    ok &= elapsed < 300
    verdict(6, "DRAM cache helps mcf-like, hurts milc-like under RSA", ok, "; ".join(details) + f"; {elapsed:.1f}s")


# 7 -------------------------------------------------------------------------
def test_c7_differentiated_bound():
    details, ok = [], True
    for name in ("mcf-like", "milc-like"):
        runs = preset_runs(name)
        base = runs[False, Algorithm.NONE]
        des = compare(runs[False, Algorithm.DES], base).perf_pct
        rsa = compare(runs[False, Algorithm.RSA], base).perf_pct
        diff = compare(runs[False, "diff"], base).perf_pct
        ok &= des < diff < rsa
        details.append(f"{name}: DES {des:.2f} < mixed {diff:.2f} < RSA {rsa:.2f}")
    verdict(7, "differentiated overhead strictly between all-DES and all-RSA", ok, "; ".join(details))


# 8 -------------------------------------------------------------------------
def test_c8_key_lifecycle():
    checks = {}
    a = boot(KeyState(), random.Random(1))
    b = boot(power_down(a), random.Random(2))
    checks["fresh keys per boot"] = not set(a.bank_keys) & set(b.bank_keys)
    checks["sleep/wake keeps keys"] = wake(enter_sleep(b)).bank_keys == b.bank_keys

    # reads of a page open before the sleep need a row fill but no refetch
    t = Trace.from_records([AccessRecord(Op.WRITE, 0, 0), AccessRecord(Op.READ, 0, 0), AccessRecord(Op.READ, 0, 0)])
    awake = run(t, uniform(Algorithm.AES))
    slept = Simulator(t, uniform(Algorithm.AES, sleep_at=(2,)))
    st = slept.run()
    checks["row refill after wake"] = st.row_misses == awake.row_misses + 1 and st.total_decrypts == awake.total_decrypts + 1
    checks["no disk refetch"] = st.refaults == 0 and st.disk_evictions == 0
    checks["data survives sleep"] = slept.recovered_memory() == {0: reference_replay(t, 0)[0]}

    dead = slept.keys
    try:
        slept.pcm.access(dead, slept.policy, 0, Op.READ, 0)
        checks["power-down blocks decryption"] = False
    except KeysUnavailable:
        checks["power-down blocks decryption"] = dead.bank_keys == ()
    verdict(8, "key lifecycle across boot, sleep and power-down", all(checks.values()),
            ", ".join(f"{k}={'ok' if v else 'NO'}" for k, v in checks.items()))


# 9 -------------------------------------------------------------------------
def two_phase_trace(first_pages, second_pages, gap=2000):
    recs = [AccessRecord(Op.WRITE, p * 4096, gap) for p in first_pages]
    recs += [AccessRecord(Op.READ, p * 4096 + 64, gap) for p in second_pages]
    return Trace.from_records(recs)


def test_c9_phase_transitions():
    ws = list(range(12))  # spans all four banks
    other = list(range(100, 112))
    # keep-stronger, disjoint ranges: phase 2 revisits phase-1 pages too
    keep = PhaseSchedule([Phase(0.5, L.HIGH, ((0, 11),)), Phase(0.5, L.LOW, ((100, 111),))], Transition.KEEP_STRONGER)
    t_keep = two_phase_trace(ws, (other + ws)[:12])
    st_keep = run(t_keep, replace(SimConfig(), policy=PolicySpec(PolicyMode.FLAGS, schedule=keep)))
    # switch-and-invalidate, same working set in both phases, each page reread twice
    sw = PhaseSchedule([Phase(1 / 3, L.HIGH, ((0, 11),)), Phase(2 / 3, L.LOW, ((0, 11),))], Transition.SWITCH_AND_INVALIDATE)
    t_sw = two_phase_trace(ws, ws + ws)
    sim = Simulator(t_sw, replace(SimConfig(), policy=PolicySpec(PolicyMode.FLAGS, schedule=sw)))
    st_sw = sim.run()
    ok = (st_keep.refaults, st_keep.invalidations) == (0, 0) and st_sw.invalidations == len(ws) and st_sw.refaults == len(ws)
    functional = sim.recovered_memory() == reference_replay(t_sw, 0)
    verdict(9, "keep-stronger never refaults; switch invalidates the working set once", ok and functional,
            f"keep: refaults={st_keep.refaults} invalidations={st_keep.invalidations}; "
            f"switch: invalidations={st_sw.invalidations} refaults={st_sw.refaults} (|W|={len(ws)})")


# 10 ------------------------------------------------------------------------
def config_matrix():
    sched = PhaseSchedule([Phase(0.3, L.HIGH), Phase(0.4, L.LOW), Phase(0.3, L.MEDIUM, ((0, 40),))],
                          Transition.SWITCH_AND_INVALIDATE)
    keep = replace(sched, transition=Transition.KEEP_STRONGER)
    flags = ((3, 9, L.HIGH), (10, 12, L.UNPROTECTED))
    return {
        **{f"{a.name.lower()}": uniform(a) for a in ALGS},
        **{f"{a.name.lower()}+dram": uniform(a).with_dram(True) for a in ALGS},
        "aes/no-buffer": uniform(Algorithm.AES, write_buffer_pages=0),
        "rsa/no-buffer+dram": uniform(Algorithm.RSA, write_buffer_pages=0).with_dram(True),
        "random": replace(SimConfig(), policy=PolicySpec(PolicyMode.RANDOM)),
        "flags": replace(SimConfig(), policy=PolicySpec(PolicyMode.FLAGS, flag_ranges=flags)),
        "switch": replace(SimConfig(), policy=PolicySpec(PolicyMode.FLAGS, flag_ranges=flags, schedule=sched)),
        "keep+dram": replace(SimConfig(), policy=PolicySpec(PolicyMode.FLAGS, schedule=keep)).with_dram(True),
        "differentiated": replace(SimConfig(), policy=PolicySpec(PolicyMode.FLAGS, schedule=differentiated_schedule())),
        "sleep": uniform(Algorithm.AES, sleep_at=(5, 60)),
        "sleep+dram": uniform(Algorithm.DES, sleep_at=(30,)).with_dram(True),
    }


def test_c10_functional_correctness():
    r = random.Random(1010)
    matrix = config_matrix()
    cases = bad = 0
    for i in range(100):
        trace = generate_synthetic(random_params(r))
        for name, c in matrix.items():
            sim = Simulator(trace, replace(c, rng_seed=i))
            sim.run()
            ref = reference_replay(trace, i)
            mem = sim.recovered_memory()
            zero = bytes(4096)
            good = all(mem.get(p) == d for p, d in ref.items()) and all(d == ref.get(p, zero) for p, d in mem.items())
            cases += 1
            bad += not good
    verdict(10, "recovered memory equals flat reference replay", bad == 0,
            f"100 traces x {len(matrix)} configs = {cases} runs, {bad} mismatches")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
