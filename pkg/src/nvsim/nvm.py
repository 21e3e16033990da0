"""Phase-change main memory: banks, row buffers, array, endurance.

Row buffers hold plaintext.  A page is decrypted once when it is latched
into a row and re-encrypted only when it is written back to the array, so
row hits never touch the crypto engine.  The array itself only ever holds
ciphertext (plaintext for pages whose algorithm is ``NONE``).

Timing is reservation based: each bank and the shared channel keep a
``busy_until`` cycle.  Crypto work occupies the bank only; array reads,
writes and row-hit transfers also occupy the channel.
"""

import bisect
from collections import Counter
from dataclasses import dataclass, field

from .crypto import Algorithm, Direction, decrypt_page, encrypt_page, page_crypto_cycles
from .errors import InvalidParams, KeysUnavailable, OutOfRange, PageAbsent
from .trace import LINE_BYTES, LINES_PER_PAGE, PAGE_BYTES, Op

ZERO_PAGE = bytes(PAGE_BYTES)


def ns_to_cycles(ns, clock_ghz):
    return int(round(ns * clock_ghz))


@dataclass
class PcmConfig:
    capacity_bytes: int = 4 << 30
    num_banks: int = 4
    read_latency_ns: float = 50.0
    write_latency_ns: float = 1000.0
    row_hit_latency_ns: float = 10.0
    clock_ghz: float = 1.0
    page_bytes: int = field(default=PAGE_BYTES, init=False)

    def validate(self):
        if self.num_banks <= 0:
            raise InvalidParams("num_banks must be positive")
        if self.capacity_bytes <= 0 or self.capacity_bytes % (self.page_bytes * self.num_banks):
            raise InvalidParams("capacity must be a whole number of pages per bank")
        if min(self.read_latency_ns, self.write_latency_ns, self.row_hit_latency_ns) <= 0:
            raise InvalidParams("latencies must be positive")
        if self.clock_ghz <= 0:
            raise InvalidParams("clock_ghz must be positive")
        return self

    @property
    def read_cycles(self):
        return ns_to_cycles(self.read_latency_ns, self.clock_ghz)

    @property
    def write_cycles(self):
        return ns_to_cycles(self.write_latency_ns, self.clock_ghz)

    @property
    def hit_cycles(self):
        return ns_to_cycles(self.row_hit_latency_ns, self.clock_ghz)


@dataclass(frozen=True)
class AddressMap:
    page_index: int
    bank_index: int
    line_offset: int


def map_address(config, address):
    if not 0 <= address < config.capacity_bytes:
        raise OutOfRange(f"address {address:#x} outside {config.capacity_bytes:#x} B of PCM")
    page = address // PAGE_BYTES
    return AddressMap(page, page % config.num_banks, (address % PAGE_BYTES) // LINE_BYTES)


class Channel:
    """The single memory channel, shared by PCM and the DRAM cache.

    Reservations may be booked ahead (a writeback reserves the channel
    after its encryption finishes), so the channel keeps a table of busy
    intervals and a later request can use an earlier idle gap.
    """

    def __init__(self):
        self.busy = []  # sorted, disjoint [start, end) pairs
        self.busy_until = 0

    def reserve(self, t, duration):
        """Book the earliest gap of ``duration`` at or after ``t``; returns its end."""
        if duration <= 0:
            return t
        busy = self.busy
        i = bisect.bisect_right(busy, (t, float("inf")))
        s = t
        if i and busy[i - 1][1] > s:
            s = busy[i - 1][1]
        while i < len(busy) and busy[i][0] < s + duration:
            s = max(s, busy[i][1])
            i += 1
        end = s + duration
        # merge with touching neighbours to keep the table short
        if i < len(busy) and busy[i][0] == end:
            end_merged = busy.pop(i)[1]
        else:
            end_merged = end
        if i and busy[i - 1][1] == s:
            busy[i - 1] = (busy[i - 1][0], end_merged)
        else:
            busy.insert(i, (s, end_merged))
        self.busy_until = max(self.busy_until, end)
        return end

    def release_before(self, t):
        """Forget intervals that end by ``t``; callers never book earlier than ``t`` again."""
        busy = self.busy
        k = 0
        while k < len(busy) and busy[k][1] <= t:
            k += 1
        if k:
            del busy[:k]


@dataclass
class Bank:
    open_page: int = None
    row: bytearray = None
    dirty: bool = False
    busy_until: int = 0


@dataclass(frozen=True)
class AccessOutcome:
    latency_cycles: int
    completion: int
    row_hit: bool
    decrypts: int
    encrypts: int
    array_writes: int
    data: bytes = None


@dataclass(frozen=True)
class WriteResult:
    completion: int
    encrypts: int
    pcm_writes: int


@dataclass(frozen=True)
class EvictResult:
    latency_cycles: int
    decrypts: int


class PcmDevice:
    """Mutable PCM state for one simulation.

    ``policy`` arguments are anything with ``effective_algorithm(page)``,
    ``is_valid(page)``, ``mark_valid(page)`` and
    ``access_invalid_page(page)``; see
    :class:`nvsim.policy.EncryptionPolicy`.
    """

    def __init__(self, config=None, cost_model=None, channel=None, track_data=True):
        from .crypto import CryptoCostModel

        self.config = (config or PcmConfig()).validate()
        self.cost = (cost_model or CryptoCostModel()).validate()
        self.channel = channel if channel is not None else Channel()
        self.track_data = track_data
        self.banks = [Bank() for _ in range(self.config.num_banks)]
        self.array = {}
        self.array_alg = {}
        self.endurance = Counter()
        self.disk = {}
        self.row_hits = 0
        self.row_misses = 0
        self.array_reads = 0
        self.array_writes = 0
        self.encrypts = Counter()
        self.decrypts = Counter()
        self.refaults = 0
        self.disk_evictions = 0
        self._read = self.config.read_cycles
        self._write = self.config.write_cycles
        self._hit = self.config.hit_cycles
        self._enc = {a: self._ceil(page_crypto_cycles(self.cost, a, PAGE_BYTES, Direction.ENCRYPT)) for a in Algorithm}
        self._dec = {a: self._ceil(page_crypto_cycles(self.cost, a, PAGE_BYTES, Direction.DECRYPT)) for a in Algorithm}

    @staticmethod
    def _ceil(x):
        n = int(x)
        return n if n == x else n + 1

    def map_address(self, address):
        return map_address(self.config, address)

    def encrypt_cycles(self, alg):
        return self._enc[alg]

    def decrypt_cycles(self, alg):
        return self._dec[alg]

    @property
    def num_encrypts(self):
        return sum(self.encrypts.values())

    @property
    def num_decrypts(self):
        return sum(self.decrypts.values())

    # -- internals -----------------------------------------------------
    def _check_keys(self, keys):
        if not keys.active:
            raise KeysUnavailable(f"PCM access with keys in phase {keys.phase.value}")

    def _store(self, keys, page, plaintext, alg):
        """Encrypt-before-write of one page into the array (no timing)."""
        if alg != Algorithm.NONE:
            self.encrypts[alg] += 1
        if self.track_data:
            key = keys.key_for(page % self.config.num_banks)
            self.array[page] = encrypt_page(plaintext, key, page, alg)
        else:
            self.array[page] = None
        self.array_alg[page] = alg
        self.disk.pop(page, None)
        self.array_writes += 1
        self.endurance[page] += 1

    def _writeback(self, bank_idx, keys, policy, t):
        bank = self.banks[bank_idx]
        page = bank.open_page
        alg = policy.effective_algorithm(page)
        t += self._enc[alg]
        t = self.channel.reserve(t, self._write)
        self._store(keys, page, bytes(bank.row) if self.track_data else None, alg)
        bank.dirty = False
        return t

    def _stored_plaintext(self, keys, page):
        if not self.track_data:
            return None
        if page not in self.array:
            return self.disk.get(page, ZERO_PAGE)
        data = self.array[page]
        key = keys.key_for(page % self.config.num_banks)
        return decrypt_page(data, key, page, self.array_alg[page])

    def _refault(self, keys, policy, page, t):
        outcome = policy.access_invalid_page(page)
        self.refaults += 1
        # the backing-store copy matches the stored page; its rewrite under the
        # current algorithm is hidden under the refetch penalty
        content = self._stored_plaintext(keys, page)
        self._store(keys, page, content, outcome.algorithm)
        return t + outcome.penalty_cycles

    def _open(self, bank_idx, page, keys, policy, t, fill=True):
        """Latch ``page`` into the bank's row buffer, closing the old row."""
        bank = self.banks[bank_idx]
        if bank.open_page is not None and bank.dirty:
            t = self._writeback(bank_idx, keys, policy, t)
        self.row_misses += 1
        if fill:
            if page in self.array_alg and not policy.is_valid(page):
                t = self._refault(keys, policy, page, t)
            t = self.channel.reserve(t, self._read)
            self.array_reads += 1
            alg = self.array_alg.get(page)
            if alg is None:
                alg = policy.effective_algorithm(page)
            if alg != Algorithm.NONE:
                self.decrypts[alg] += 1
            t += self._dec[alg]
            row = bytearray(self._stored_plaintext(keys, page)) if self.track_data else None
        else:
            row = bytearray(PAGE_BYTES) if self.track_data else None
        bank.open_page, bank.row, bank.dirty = page, row, False
        return t

    def _row_hit(self, t):
        self.row_hits += 1
        return self.channel.reserve(t, self._hit)

    def _counts(self):
        return self.num_decrypts, self.num_encrypts, self.array_writes

    # -- operations ----------------------------------------------------
    def access(self, keys, policy, address, op, now, data=None):
        """One line read or write through the row buffer."""
        self._check_keys(keys)
        m = self.map_address(address)
        bank = self.banks[m.bank_index]
        d0, e0, w0 = self._counts()
        t = max(now, bank.busy_until)
        hit = bank.open_page == m.page_index
        if hit:
            t = self._row_hit(t)
        else:
            t = self._open(m.bank_index, m.page_index, keys, policy, t)
        lo = m.line_offset * LINE_BYTES
        out = None
        if Op(op) is Op.WRITE:
            if self.track_data:
                bank.row[lo:lo + LINE_BYTES] = data if data is not None else bytes(LINE_BYTES)
            bank.dirty = True
        elif self.track_data:
            out = bytes(bank.row[lo:lo + LINE_BYTES])
        bank.busy_until = t
        d1, e1, w1 = self._counts()
        return AccessOutcome(t - now, t, hit, d1 - d0, e1 - e0, w1 - w0, out)

    def fetch_page(self, keys, policy, page, now):
        """Read a whole page through the row buffer (DRAM-cache fills)."""
        self._check_keys(keys)
        b = page % self.config.num_banks
        bank = self.banks[b]
        t = max(now, bank.busy_until)
        if bank.open_page == page:
            t = self._row_hit(t)
        else:
            t = self._open(b, page, keys, policy, t)
        bank.busy_until = t
        return t, (bytes(bank.row) if self.track_data else None)

    def write_lines(self, keys, policy, page, lines, now):
        """Merge ``lines`` (offset -> 64 B) into ``page`` and write it back.

        Partial pages are filled from the array first; a full page skips the
        fill.  Either way the page costs one encryption and one array write.
        """
        self._check_keys(keys)
        b = page % self.config.num_banks
        bank = self.banks[b]
        _, e0, w0 = self._counts()
        t = max(now, bank.busy_until)
        if bank.open_page == page:
            t = self._row_hit(t)
        else:
            full = len(lines) == LINES_PER_PAGE
            t = self._open(b, page, keys, policy, t, fill=not full)
            if full and not policy.is_valid(page):
                policy.mark_valid(page)
        if self.track_data:
            for off, chunk in lines.items():
                lo = off * LINE_BYTES
                bank.row[lo:lo + LINE_BYTES] = chunk if chunk is not None else bytes(LINE_BYTES)
        bank.dirty = True
        t = self._writeback(b, keys, policy, t)
        bank.busy_until = t
        _, e1, w1 = self._counts()
        return WriteResult(t, e1 - e0, w1 - w0)

    def write_page(self, keys, policy, page, data, now):
        if self.track_data:
            lines = {i: data[i * LINE_BYTES:(i + 1) * LINE_BYTES] for i in range(LINES_PER_PAGE)}
        else:
            lines = dict.fromkeys(range(LINES_PER_PAGE))
        return self.write_lines(keys, policy, page, lines, now)

    def close_row(self, bank_idx, keys, policy, now):
        """Write back a dirty row if needed and leave the bank precharged."""
        bank = self.banks[bank_idx]
        t = max(now, bank.busy_until)
        if bank.open_page is not None and bank.dirty:
            self._check_keys(keys)
            t = self._writeback(bank_idx, keys, policy, t)
        bank.open_page, bank.row, bank.dirty = None, None, False
        bank.busy_until = t
        return t

    def flush_rows(self, keys, policy, now):
        """Write back every dirty row; returns (array_writes, encrypts, completion)."""
        self._check_keys(keys)
        _, e0, w0 = self._counts()
        done = now
        for b, bank in enumerate(self.banks):
            if bank.open_page is not None and bank.dirty:
                t = self._writeback(b, keys, policy, max(now, bank.busy_until))
                bank.busy_until = t
                done = max(done, t)
        _, e1, w1 = self._counts()
        return w1 - w0, e1 - e0, done

    def drop_rows(self):
        """Abrupt power loss: row latches vanish.  Returns dirty rows lost."""
        lost = 0
        for bank in self.banks:
            lost += bank.open_page is not None and bank.dirty
            bank.open_page, bank.row, bank.dirty = None, None, False
        return lost

    def evict_to_disk(self, keys, policy, page, now):
        """Decrypt a page on its way out to a self-encrypting drive."""
        self._check_keys(keys)
        if page not in self.array_alg:
            raise PageAbsent(f"page {page} is not resident in PCM")
        b = page % self.config.num_banks
        bank = self.banks[b]
        alg = self.array_alg[page]
        if bank.open_page == page:
            content = bytes(bank.row) if self.track_data else None
            bank.open_page, bank.row, bank.dirty = None, None, False
            latency, decrypts = 0, 0
        else:
            content = self._stored_plaintext(keys, page)
            latency, decrypts = self._dec[alg], int(alg != Algorithm.NONE)
            if decrypts:
                self.decrypts[alg] += 1
        t = max(now, bank.busy_until) + latency
        bank.busy_until = t
        self.disk[page] = content
        del self.array[page]
        del self.array_alg[page]
        self.disk_evictions += 1
        return EvictResult(t - now, decrypts)

    def dump_raw(self):
        """What an attacker reads off the powered-down array."""
        return dict(self.array)

    def recover(self, bank_keys):
        """Decrypt the array with a saved session key set."""
        out = {}
        for page, data in self.array.items():
            alg = self.array_alg[page]
            key = bank_keys[page % self.config.num_banks]
            out[page] = decrypt_page(data, key, page, alg) if data is not None else None
        return out
