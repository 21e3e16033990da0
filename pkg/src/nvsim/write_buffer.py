"""Page-granularity write-combining buffer on the PCM side.

Line writes to a buffered page merge into its entry; when the entry is
drained the page is encrypted once and written to PCM once, however many
lines were merged.  Allocating past capacity drains the oldest entry.
"""

from collections import OrderedDict
from dataclasses import dataclass

from .errors import InvalidParams, PageAbsent

MISSING = object()


@dataclass(frozen=True)
class DrainResult:
    encrypts: int = 0
    pcm_writes: int = 0
    completion: int = 0

    def __add__(self, other):
        return DrainResult(
            self.encrypts + other.encrypts,
            self.pcm_writes + other.pcm_writes,
            max(self.completion, other.completion),
        )


@dataclass(frozen=True)
class EnqueueResult:
    merged: bool
    forced_drain: int = None
    drain: DrainResult = None


class WriteBuffer:
    """Pending page writes, oldest first.

    ``sink(page, lines, now)`` performs the PCM write and returns an object
    with ``encrypts``, ``pcm_writes`` and ``completion``
    (:meth:`nvsim.nvm.PcmDevice.write_lines` bound to keys and policy).
    """

    def __init__(self, capacity_pages=8, sink=None):
        if capacity_pages <= 0:
            raise InvalidParams("write buffer capacity must be positive")
        self.capacity_pages = capacity_pages
        self.sink = sink
        self.entries = OrderedDict()
        self.merges = 0
        self.forced_drains = 0
        self.drains = 0
        self.forwards = 0

    def __len__(self):
        return len(self.entries)

    def __contains__(self, page):
        return page in self.entries

    def enqueue(self, page, line, data, now):
        entry = self.entries.get(page)
        if entry is not None:
            entry[line] = data
            self.merges += 1
            return EnqueueResult(True)
        forced, result = None, None
        if len(self.entries) >= self.capacity_pages:
            forced = next(iter(self.entries))
            self.forced_drains += 1
            result = self.drain(forced, now)
        self.entries[page] = {line: data}
        return EnqueueResult(False, forced, result)

    def lookup(self, page, line):
        """Buffered data for a line, or ``MISSING``."""
        entry = self.entries.get(page)
        if entry is None or line not in entry:
            return MISSING
        self.forwards += 1
        return entry[line]

    def lines(self, page):
        return self.entries.get(page, {})

    def discard(self, page):
        """Drop an entry superseded by a newer full-page write."""
        self.entries.pop(page, None)

    def drain(self, page, now):
        if page not in self.entries:
            raise PageAbsent(f"page {page} is not in the write buffer")
        lines = self.entries.pop(page)
        self.drains += 1
        r = self.sink(page, lines, now)
        return DrainResult(r.encrypts, r.pcm_writes, r.completion)

    def flush_all(self, now):
        total = DrainResult(completion=now)
        for page in list(self.entries):
            total = total + self.drain(page, now)
        return total

    def drain_matching(self, predicate, now):
        total = DrainResult(completion=now)
        for page in [p for p in self.entries if predicate(p)]:
            total = total + self.drain(page, now)
        return total
