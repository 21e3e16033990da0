"""Optional DRAM buffer cache in front of PCM.

Page-granularity, set-associative, LRU, write-back and write-allocate.
Resident pages are plaintext, so hits never touch the crypto engine.  The
cache shares the memory channel with PCM.
"""

from collections import OrderedDict
from dataclasses import dataclass

from .errors import AlreadyResident, Disabled, InvalidParams
from .nvm import Channel, ns_to_cycles
from .trace import LINE_BYTES, PAGE_BYTES, Op


@dataclass
class DramConfig:
    capacity_bytes: int = 128 << 20
    num_banks: int = 8
    associativity: int = 16
    access_latency_ns: float = 20.0
    enabled_at_start: bool = True

    @property
    def num_pages(self):
        return self.capacity_bytes // PAGE_BYTES

    @property
    def num_sets(self):
        return self.num_pages // self.associativity

    def validate(self):
        if self.capacity_bytes <= 0 or self.capacity_bytes % PAGE_BYTES:
            raise InvalidParams("DRAM capacity must be a whole number of pages")
        if self.associativity <= 0 or self.num_pages % self.associativity:
            raise InvalidParams("DRAM pages must divide into whole sets")
        if self.num_banks <= 0:
            raise InvalidParams("DRAM num_banks must be positive")
        if self.access_latency_ns <= 0:
            raise InvalidParams("DRAM access latency must be positive")
        return self


@dataclass
class Way:
    data: bytearray
    dirty: bool = False


@dataclass(frozen=True)
class Victim:
    page_index: int
    dirty: bool
    plaintext: bytes


@dataclass(frozen=True)
class LookupResult:
    hit: bool
    latency_cycles: int
    completion: int


class DramCache:
    """State of the DRAM buffer.

    ``writeback(page, plaintext, t) -> completion`` is the encrypt-before-
    write path to PCM used when the cache is disabled with dirty pages.
    """

    def __init__(self, config=None, channel=None, clock_ghz=1.0, writeback=None, track_data=True):
        self.config = (config or DramConfig()).validate()
        self.channel = channel if channel is not None else Channel()
        self.latency = ns_to_cycles(self.config.access_latency_ns, clock_ghz)
        self.writeback = writeback
        self.track_data = track_data
        self.enabled = self.config.enabled_at_start
        self.sets = {}
        self.bank_busy = [0] * self.config.num_banks
        self.hits = 0
        self.misses = 0
        self.fills = 0
        self.evictions = 0
        self.dirty_evictions = 0
        self.accesses = 0

    def set_index(self, page):
        return page % self.config.num_sets

    def bank_index(self, page):
        return page % self.config.num_banks

    def _ways(self, page):
        return self.sets.setdefault(self.set_index(page), OrderedDict())

    def _occupy(self, page, now):
        b = self.bank_index(page)
        t = self.channel.reserve(max(now, self.bank_busy[b]), self.latency)
        self.bank_busy[b] = t
        self.accesses += 1
        return t

    def contains(self, page):
        return page in self.sets.get(self.set_index(page), ())

    def resident_pages(self):
        for ways in self.sets.values():
            yield from ways

    def is_dirty(self, page):
        return self.sets[self.set_index(page)][page].dirty

    def page_data(self, page):
        return self.sets[self.set_index(page)][page].data

    def lookup(self, page, op, now):
        if not self.enabled:
            raise Disabled("DRAM cache is disabled")
        t = self._occupy(page, now)
        ways = self._ways(page)
        if page in ways:
            ways.move_to_end(page)
            if Op(op) is Op.WRITE:
                ways[page].dirty = True
            self.hits += 1
            return LookupResult(True, t - now, t)
        self.misses += 1
        return LookupResult(False, t - now, t)

    def write_line(self, page, line, data):
        way = self.sets[self.set_index(page)][page]
        if self.track_data:
            way.data[line * LINE_BYTES:(line + 1) * LINE_BYTES] = data
        way.dirty = True

    def read_line(self, page, line):
        way = self.sets[self.set_index(page)][page]
        return bytes(way.data[line * LINE_BYTES:(line + 1) * LINE_BYTES]) if self.track_data else None

    def victim_for(self, page):
        """The way a fill of ``page`` would evict, without evicting it."""
        ways = self._ways(page)
        if page in ways or len(ways) < self.config.associativity:
            return None
        vpage, way = next(iter(ways.items()))
        return Victim(vpage, way.dirty, bytes(way.data) if self.track_data else None)

    def fill(self, page, plaintext, now, dirty=False):
        """Insert ``page`` as most recent; returns the LRU victim if evicted."""
        if not self.enabled:
            raise Disabled("DRAM cache is disabled")
        ways = self._ways(page)
        if page in ways:
            raise AlreadyResident(f"page {page} already cached")
        victim = None
        if len(ways) >= self.config.associativity:
            vpage, way = ways.popitem(last=False)
            victim = Victim(vpage, way.dirty, bytes(way.data) if self.track_data else None)
            self.evictions += 1
            self.dirty_evictions += way.dirty
        data = bytearray(plaintext) if self.track_data and plaintext is not None else (
            bytearray(PAGE_BYTES) if self.track_data else None)
        ways[page] = Way(data, dirty)
        self.fills += 1
        self._occupy(page, now)
        return victim

    def set_enabled(self, enable, now=0):
        """Turn the cache on or off; disabling writes dirty pages back.

        Returns ``(flushed_dirty_pages, completion_cycle)``.
        """
        if enable == self.enabled:
            return 0, now
        if enable:
            self.enabled = True
            return 0, now
        flushed, done = 0, now
        for s in sorted(self.sets):
            for page, way in self.sets[s].items():
                if not way.dirty:
                    continue
                t = self._occupy(page, now)
                if self.writeback is not None:
                    t = self.writeback(page, bytes(way.data) if self.track_data else None, t)
                flushed += 1
                done = max(done, t)
        self.sets.clear()
        self.enabled = False
        return flushed, done
