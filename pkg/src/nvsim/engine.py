"""Drive a trace through DRAM cache, write buffer and PCM.

Issue model: one read outstanding at a time.  Record ``i`` issues at
``ready(i-1) + gap_i`` where ``ready`` is the completion of a read and the
issue cycle of a write (buffered writes never stall the stream).  Every
other cost shows up through bank and channel reservations.
"""

import hashlib
import random
import struct
from dataclasses import asdict, dataclass, field, replace

from .config import SimConfig
from .crypto import Algorithm, Direction, KeyState, boot, enter_sleep, power_down, wake
from .dram_cache import DramCache
from .errors import MismatchedBaseline
from .nvm import Channel, PcmDevice
from .policy import EncryptionPolicy, PolicyMode
from .trace import LINE_BYTES, PAGE_BYTES, Op
from .write_buffer import MISSING, WriteBuffer

ALGS = (Algorithm.DES, Algorithm.AES, Algorithm.RSA)


def write_payload(seed, index, address):
    """The 64 bytes written by record ``index`` (deterministic in the seed)."""
    key = (seed & (2**64 - 1)).to_bytes(8, "little")
    return hashlib.blake2b(struct.pack("<QQ", index, address), key=key, digest_size=LINE_BYTES).digest()


@dataclass
class SimStats:
    exec_cycles: int = 0
    records: int = 0
    reads: int = 0
    writes: int = 0
    pcm_requests: int = 0
    pcm_reads: int = 0
    pcm_page_writes: int = 0
    row_hits: int = 0
    row_misses: int = 0
    dram_hits: int = 0
    dram_misses: int = 0
    dram_accesses: int = 0
    dram_dirty_evictions: int = 0
    wb_merges: int = 0
    wb_forced_drains: int = 0
    wb_forwards: int = 0
    encrypt_pages: dict = field(default_factory=dict)
    decrypt_pages: dict = field(default_factory=dict)
    endurance_max: int = 0
    endurance_total: int = 0
    energy: dict = field(default_factory=dict)
    total_energy: float = 0.0
    avg_power: float = 0.0
    invalidations: int = 0
    refaults: int = 0
    disk_evictions: int = 0
    algorithm_switches: int = 0
    sleeps: int = 0
    lost_dirty_pages: int = 0
    trace_digest: str = ""
    config_digest: str = ""
    hardware_digest: str = ""

    @property
    def total_encrypts(self):
        return sum(self.encrypt_pages.values())

    @property
    def total_decrypts(self):
        return sum(self.decrypt_pages.values())

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class Overheads:
    perf_pct: float
    power_pct: float
    energy_pct: float = 0.0


def _pct(value, base):
    if base == 0:
        return 0.0 if value == 0 else float("inf")
    return 100.0 * (value - base) / base


def compare(stats, baseline):
    if stats.trace_digest != baseline.trace_digest:
        raise MismatchedBaseline("runs used different traces")
    if stats.hardware_digest != baseline.hardware_digest:
        raise MismatchedBaseline("runs used different non-crypto configurations")
    return Overheads(
        _pct(stats.exec_cycles, baseline.exec_cycles),
        _pct(stats.avg_power, baseline.avg_power),
        _pct(stats.total_energy, baseline.total_energy),
    )


def filter_rate(stats_enabled, stats_disabled):
    """Fraction of PCM-side requests removed by the DRAM cache."""
    if stats_enabled.trace_digest != stats_disabled.trace_digest:
        raise MismatchedBaseline("runs used different traces")
    if stats_disabled.pcm_requests == 0:
        return 0.0
    return 1.0 - stats_enabled.pcm_requests / stats_disabled.pcm_requests


def build_policy(config):
    spec = config.policy
    num_banks = config.pcm.num_banks
    policy = EncryptionPolicy(
        num_banks,
        spec.mode,
        spec.algorithm,
        spec.page_map(),
        spec.schedule,
        spec.refault_penalty_cycles,
    )
    if spec.mode is PolicyMode.RANDOM:
        policy.assign_random(random.Random(f"nvsim-policy-{config.rng_seed}"), spec.distribution)
    return policy


class Simulator:
    """One simulation's mutable state; call :meth:`run` once."""

    def __init__(self, trace, config=None):
        self.trace = trace
        self.config = (config or SimConfig()).validate()
        cfg = self.config
        pcm_cfg = cfg.pcm
        if pcm_cfg.clock_ghz != cfg.clock_ghz:
            pcm_cfg = replace(pcm_cfg, clock_ghz=cfg.clock_ghz)
        self.channel = Channel()
        self.pcm = PcmDevice(pcm_cfg, cfg.crypto, self.channel, cfg.track_data)
        self.policy = build_policy(cfg)
        self.keys = boot(KeyState(), random.Random(cfg.rng_seed), pcm_cfg.num_banks)
        self.session_keys = None
        self.dram = None
        if cfg.dram is not None:
            self.dram = DramCache(cfg.dram, self.channel, cfg.clock_ghz, self._dram_writeback, cfg.track_data)
        self.wb = None
        if cfg.write_buffer_pages > 0:
            self.wb = WriteBuffer(cfg.write_buffer_pages, self._wb_sink)
        self.invalidations = 0
        self.sleeps = 0
        self.lost_dirty_pages = 0
        self.pcm_requests = 0
        self.residue = None
        self._done = False

    # -- bound callbacks -------------------------------------------------
    def _wb_sink(self, page, lines, now):
        return self.pcm.write_lines(self.keys, self.policy, page, lines, now)

    def _dram_writeback(self, page, data, now):
        if self.wb is not None:
            self.wb.discard(page)
        return self.pcm.write_page(self.keys, self.policy, page, data, now).completion

    def _quiesce(self, now):
        def quiesce(bank):
            nb = self.pcm.config.num_banks
            if self.wb is not None:
                self.wb.drain_matching(lambda p: p % nb == bank, now)
            self.pcm.close_row(bank, self.keys, self.policy, now)

        return quiesce

    # -- helpers ---------------------------------------------------------
    def _busy(self, t):
        t = max(t, self.channel.busy_until, *(b.busy_until for b in self.pcm.banks))
        if self.dram is not None:
            t = max(t, *self.dram.bank_busy)
        return t

    def _quiesce_all(self, now):
        """Push every volatile dirty page into PCM and close every row."""
        t = now
        if self.dram is not None and self.dram.enabled:
            _, t = self.dram.set_enabled(False, now)
        if self.wb is not None:
            t = max(t, self.wb.flush_all(now).completion)
        _, _, done = self.pcm.flush_rows(self.keys, self.policy, now)
        return max(t, done)

    def _sleep(self, now):
        t = self._quiesce_all(now)
        for b in range(self.pcm.config.num_banks):
            self.pcm.close_row(b, self.keys, self.policy, t)
        t = self._busy(t)
        self.keys = wake(enter_sleep(self.keys))
        if self.dram is not None:
            self.dram.set_enabled(True, t)
        self.sleeps += 1
        return t

    def _capture_residue(self):
        """Plaintext still held in volatile structures, keyed by page."""
        res = {}
        for b in self.pcm.banks:
            if b.open_page is not None and b.dirty:
                res[b.open_page] = ("row", bytes(b.row) if b.row is not None else None)
        if self.wb is not None:
            for page, lines in self.wb.entries.items():
                res[page] = ("wb", dict(lines))
        if self.dram is not None:
            for page in self.dram.resident_pages():
                if self.dram.is_dirty(page):
                    d = self.dram.page_data(page)
                    res[page] = ("dram", bytes(d) if d is not None else None)
        return res

    # -- main loop -------------------------------------------------------
    def run(self):
        if self._done:
            raise RuntimeError("a Simulator runs once")
        self._done = True
        cfg = self.config
        pcm, policy, dram, wb = self.pcm, self.policy, self.dram, self.wb
        channel = self.channel
        ops, addrs, gaps = self.trace.columns()
        n = len(ops)
        sleep_at = set(cfg.sleep_at)
        evict_at = {}
        for idx, page in cfg.evict_at:
            evict_at.setdefault(idx, []).append(page)
        scheduled = policy.schedule is not None
        track = cfg.track_data
        fwd = cfg.wb_forward_latency_cycles
        map_address = pcm.map_address
        ready = 0
        last = 0
        reads = 0

        for i in range(n):
            if scheduled:
                change = policy.advance_phase(i / n, pcm.array_alg, self._quiesce(ready))
                self.invalidations += change.invalidated
            if i in sleep_at:
                ready = self._sleep(ready)
            for page in evict_at.get(i, ()):
                pcm.evict_to_disk(self.keys, policy, page, ready)

            op, addr = ops[i], addrs[i]
            now = ready + gaps[i]
            channel.release_before(now)
            m = map_address(addr)
            page, line = m.page_index, m.line_offset
            policy.touch(page)
            is_write = op == Op.WRITE
            data = write_payload(cfg.rng_seed, i, addr) if is_write and track else None

            if dram is not None and dram.enabled:
                res = dram.lookup(page, op, now)
                done = res.completion
                if res.hit:
                    if is_write:
                        dram.write_line(page, line, data)
                else:
                    self.pcm_requests += 1
                    t = done
                    victim = dram.victim_for(page)
                    if victim is not None and victim.dirty:
                        t = self._dram_writeback(victim.page_index, victim.plaintext, t)
                    t, content = pcm.fetch_page(self.keys, policy, page, t)
                    if wb is not None and page in wb and track:
                        content = bytearray(content)
                        for off, chunk in wb.lines(page).items():
                            content[off * LINE_BYTES:(off + 1) * LINE_BYTES] = chunk
                    dram.fill(page, content, t)
                    if is_write:
                        dram.write_line(page, line, data)
                    done = t
            else:
                self.pcm_requests += 1
                if is_write:
                    if wb is not None:
                        wb.enqueue(page, line, data, now)
                    else:
                        pcm.access(self.keys, policy, addr, Op.WRITE, now, data)
                    done = now
                else:
                    hit = wb.lookup(page, line) if wb is not None else MISSING
                    if hit is not MISSING:
                        done = now + fwd
                    else:
                        done = pcm.access(self.keys, policy, addr, Op.READ, now).completion

            if is_write:
                ready = now
            else:
                ready = done
                reads += 1
            last = max(last, done)

        # end of run
        end = max(ready, last)
        if cfg.proper_shutdown:
            if dram is not None and dram.enabled and cfg.flush_dram_at_end:
                _, t = dram.set_enabled(False, end)
                end = max(end, t)
            elif dram is not None:
                self.lost_dirty_pages += sum(dram.is_dirty(p) for p in dram.resident_pages())
            if wb is not None:
                end = max(end, wb.flush_all(end).completion)
            _, _, t = pcm.flush_rows(self.keys, policy, end)
            end = max(end, t)
        else:
            self.residue = self._capture_residue()
            self.lost_dirty_pages += pcm.drop_rows()
            if wb is not None:
                self.lost_dirty_pages += len(wb)
                wb.entries.clear()
            if dram is not None:
                self.lost_dirty_pages += sum(dram.is_dirty(p) for p in dram.resident_pages())
        exec_cycles = self._busy(end) if n else 0
        self.session_keys = self.keys.bank_keys
        self.keys = power_down(self.keys)
        return self._stats(exec_cycles, n, reads)

    def _stats(self, exec_cycles, n, reads):
        cfg, pcm, dram, wb = self.config, self.pcm, self.dram, self.wb
        st = SimStats()
        st.exec_cycles = exec_cycles
        st.records = n
        st.reads = reads
        st.writes = n - reads
        st.pcm_requests = self.pcm_requests
        st.pcm_reads = pcm.array_reads
        st.pcm_page_writes = pcm.array_writes
        st.row_hits = pcm.row_hits
        st.row_misses = pcm.row_misses
        if dram is not None:
            st.dram_hits = dram.hits
            st.dram_misses = dram.misses
            st.dram_accesses = dram.accesses
            st.dram_dirty_evictions = dram.dirty_evictions
        if wb is not None:
            st.wb_merges = wb.merges
            st.wb_forced_drains = wb.forced_drains
            st.wb_forwards = wb.forwards
        st.encrypt_pages = {a.name: pcm.encrypts[a] for a in ALGS}
        st.decrypt_pages = {a.name: pcm.decrypts[a] for a in ALGS}
        st.endurance_max = max(pcm.endurance.values(), default=0)
        st.endurance_total = sum(pcm.endurance.values())
        em, cost = cfg.energy, cfg.crypto
        crypto = sum(
            pcm.encrypts[a] * cost.page_energy(a, PAGE_BYTES, Direction.ENCRYPT)
            + pcm.decrypts[a] * cost.page_energy(a, PAGE_BYTES, Direction.DECRYPT)
            for a in ALGS
        )
        st.energy = {
            "pcm_read": pcm.array_reads * em.pcm_read,
            "pcm_write": pcm.array_writes * em.pcm_write,
            "dram": (dram.accesses if dram is not None else 0) * em.dram_access,
            "crypto": crypto,
            "background": exec_cycles * em.background_per_cycle,
        }
        st.total_energy = sum(st.energy.values())
        st.avg_power = st.total_energy / exec_cycles if exec_cycles else 0.0
        st.invalidations = self.invalidations
        st.refaults = pcm.refaults
        st.disk_evictions = pcm.disk_evictions
        st.algorithm_switches = len(self.policy.switches)
        st.sleeps = self.sleeps
        st.lost_dirty_pages = self.lost_dirty_pages
        st.trace_digest = self.trace.digest()
        st.config_digest = cfg.digest()
        st.hardware_digest = cfg.hardware_digest()
        return st

    # -- post-run views --------------------------------------------------
    def recovered_memory(self):
        """Page contents an owner with the session keys can read back."""
        out = dict(self.pcm.disk)
        out.update(self.pcm.recover(self.session_keys))
        return out


def run(trace, config=None):
    return Simulator(trace, config).run()


def reference_replay(trace, seed):
    """Flat memory after replaying every write in order; page -> bytes."""
    mem = {}
    ops, addrs, _ = trace.columns()
    for i, (op, addr) in enumerate(zip(ops, addrs)):
        if op != Op.WRITE:
            continue
        page, off = divmod(addr, PAGE_BYTES)
        buf = mem.setdefault(page, bytearray(PAGE_BYTES))
        buf[off:off + LINE_BYTES] = write_payload(seed, i, addr)
    return {p: bytes(b) for p, b in mem.items()}
