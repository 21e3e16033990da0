"""Post-LLC memory request traces: model, text format, stats, synthesis.

A trace is the stream of 64 B line requests that miss the last-level
cache.  Records are stored column-wise in numpy arrays so multi-hundred
thousand record workloads stay cheap to hold and hash.

Text format (one record per line)::

    # nvmtrace v1
    R 0x1000 0
    W 0x1040 12

Fields are ``OP ADDR GAP``; ``#`` starts a comment line.
"""

import enum
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams, MalformedLine

LINE_BYTES = 64
PAGE_BYTES = 4096
LINES_PER_PAGE = PAGE_BYTES // LINE_BYTES
HEADER = "# nvmtrace v1"
DEFAULT_CAPACITY = 4 << 30


class Op(enum.IntEnum):
    READ = 0
    WRITE = 1


_OP_LETTER = {Op.READ: "R", Op.WRITE: "W"}
_LETTER_OP = {"R": Op.READ, "W": Op.WRITE}


@dataclass(frozen=True)
class AccessRecord:
    op: Op
    address: int
    gap_cycles: int = 0

    def __post_init__(self):
        if self.address < 0 or self.address >= 1 << 64:
            raise InvalidParams(f"address {self.address:#x} is not a 64-bit value")
        if self.address % LINE_BYTES:
            raise InvalidParams(f"address {self.address:#x} is not 64 B aligned")
        if self.gap_cycles < 0:
            raise InvalidParams("gap_cycles must be non-negative")


class Trace:
    """Ordered sequence of line requests.

    Equality and hashing are by content.  ``ops``/``addresses``/``gaps``
    are read-only numpy views.
    """

    line_size = LINE_BYTES

    def __init__(self, ops=(), addresses=(), gaps=()):
        ops = np.asarray(ops, dtype=np.uint8)
        addresses = np.asarray(addresses, dtype=np.uint64)
        gaps = np.asarray(gaps, dtype=np.int64)
        if not (ops.shape == addresses.shape == gaps.shape) or ops.ndim != 1:
            raise InvalidParams("trace columns must be 1-D and equally long")
        if ops.size:
            if int(ops.max()) > 1:
                raise InvalidParams("unknown op code in trace")
            if np.any(addresses % LINE_BYTES):
                raise InvalidParams("trace contains misaligned addresses")
            if int(gaps.min()) < 0:
                raise InvalidParams("trace contains negative gaps")
        for arr in (ops, addresses, gaps):
            arr.setflags(write=False)
        self.ops = ops
        self.addresses = addresses
        self.gaps = gaps

    @classmethod
    def from_records(cls, records):
        records = list(records)
        return cls(
            [int(r.op) for r in records],
            [r.address for r in records],
            [r.gap_cycles for r in records],
        )

    def __len__(self):
        return int(self.ops.size)

    def __iter__(self):
        for op, addr, gap in zip(self.ops.tolist(), self.addresses.tolist(), self.gaps.tolist()):
            yield AccessRecord(Op(op), addr, gap)

    def __getitem__(self, i):
        return AccessRecord(Op(int(self.ops[i])), int(self.addresses[i]), int(self.gaps[i]))

    @property
    def records(self):
        return list(self)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            np.array_equal(self.ops, other.ops)
            and np.array_equal(self.addresses, other.addresses)
            and np.array_equal(self.gaps, other.gaps)
        )

    def __hash__(self):
        return hash(self.digest())

    def __repr__(self):
        return f"Trace({len(self)} records)"

    def columns(self):
        """Plain-Python lists of the three columns, for fast iteration."""
        return self.ops.tolist(), self.addresses.tolist(), self.gaps.tolist()

    def digest(self):
        h = hashlib.sha256()
        h.update(b"nvmtrace-v1")
        h.update(np.ascontiguousarray(self.ops).tobytes())
        h.update(np.ascontiguousarray(self.addresses, dtype="<u8").tobytes())
        h.update(np.ascontiguousarray(self.gaps, dtype="<i8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class TraceStats:
    reads: int
    writes: int
    unique_pages: int
    footprint_bytes: int


def _parse_line(lineno, text):
    fields = text.split()
    if len(fields) != 3:
        raise MalformedLine(lineno, f"expected 3 fields, got {len(fields)}")
    letter, addr_s, gap_s = fields
    op = _LETTER_OP.get(letter)
    if op is None:
        raise MalformedLine(lineno, f"unknown op {letter!r}")
    if not addr_s[:2].lower() == "0x" or not 1 <= len(addr_s) - 2 <= 16:
        raise MalformedLine(lineno, f"bad address {addr_s!r}")
    try:
        addr = int(addr_s[2:], 16)
    except ValueError:
        raise MalformedLine(lineno, f"non-hex address {addr_s!r}") from None
    if addr % LINE_BYTES:
        raise MalformedLine(lineno, f"address {addr_s} not 64 B aligned")
    if not gap_s.isdigit():
        raise MalformedLine(lineno, f"bad gap {gap_s!r}")
    return op, addr, int(gap_s)


def parse_trace(data):
    """Parse trace text (``bytes`` or ``str``) into a :class:`Trace`."""
    if isinstance(data, (bytes, bytearray, memoryview)):
        data = bytes(data).decode("utf-8")
    ops, addrs, gaps = [], [], []
    for lineno, raw in enumerate(data.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        op, addr, gap = _parse_line(lineno, line)
        ops.append(op)
        addrs.append(addr)
        gaps.append(gap)
    return Trace(ops, addrs, gaps)


def read_trace(path):
    with open(path, "rb") as fh:
        return parse_trace(fh.read())


def serialize_trace(trace):
    """Render ``trace`` in the text format, header included."""
    out = [HEADER]
    ops, addrs, gaps = trace.columns()
    for op, addr, gap in zip(ops, addrs, gaps):
        out.append(f"{'W' if op else 'R'} {addr:#x} {gap}")
    return "\n".join(out) + "\n"


def write_trace(trace, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_trace(trace))


def trace_stats(trace):
    writes = int(np.count_nonzero(trace.ops))
    pages = np.unique(trace.addresses // PAGE_BYTES).size if len(trace) else 0
    return TraceStats(len(trace) - writes, writes, int(pages), int(pages) * PAGE_BYTES)


@dataclass(frozen=True)
class SyntheticParams:
    num_requests: int
    footprint_pages: int
    locality_alpha: float = 0.0
    write_fraction: float = 0.3
    mean_gap_cycles: int = 0
    seed: int = 0
    # "zipf": pages drawn i.i.d. by popularity rank; "sequential": lines
    # walked in address order, wrapping at the footprint.
    pattern: str = "zipf"

    def validate(self, capacity_bytes=DEFAULT_CAPACITY):
        if self.num_requests < 0:
            raise InvalidParams("num_requests must be non-negative")
        if self.footprint_pages <= 0:
            raise InvalidParams("footprint_pages must be positive")
        if self.footprint_pages * PAGE_BYTES > capacity_bytes:
            raise InvalidParams(
                f"footprint of {self.footprint_pages} pages exceeds capacity {capacity_bytes} B"
            )
        if not 0.0 <= self.write_fraction <= 1.0:
            raise InvalidParams("write_fraction must lie in [0, 1]")
        if self.locality_alpha < 0:
            raise InvalidParams("locality_alpha must be non-negative")
        if self.mean_gap_cycles < 0:
            raise InvalidParams("mean_gap_cycles must be non-negative")
        if not 0 <= self.seed < 1 << 64:
            raise InvalidParams("seed must be a 64-bit unsigned integer")
        if self.pattern not in ("zipf", "sequential"):
            raise InvalidParams(f"unknown pattern {self.pattern!r}")


def zipf_cdf(n, alpha):
    weights = np.arange(1, n + 1, dtype=np.float64) ** -float(alpha)
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    return cdf


def generate_synthetic(params, capacity_bytes=DEFAULT_CAPACITY):
    """Draw a seeded synthetic trace.

    Popularity ranks are sampled by inverse CDF from one uniform stream, so
    raising ``locality_alpha`` with a fixed seed can only move draws toward
    rank 0.  Ranks map to page slots through a seeded permutation so hot
    pages spread across banks and cache sets.
    """
    params.validate(capacity_bytes)
    n = params.num_requests
    if n == 0:
        return Trace()
    rng = np.random.Generator(np.random.PCG64(params.seed))
    u_page = rng.random(n)
    lines = rng.integers(0, LINES_PER_PAGE, size=n)
    u_op = rng.random(n)
    if params.mean_gap_cycles > 0:
        gaps = rng.geometric(1.0 / (params.mean_gap_cycles + 1.0), size=n) - 1
    else:
        gaps = np.zeros(n, dtype=np.int64)
    slots = rng.permutation(params.footprint_pages)

    if params.pattern == "zipf":
        ranks = np.searchsorted(zipf_cdf(params.footprint_pages, params.locality_alpha), u_page, side="right")
        np.minimum(ranks, params.footprint_pages - 1, out=ranks)
        pages = slots[ranks]
        addresses = pages.astype(np.uint64) * PAGE_BYTES + lines.astype(np.uint64) * LINE_BYTES
    else:
        total_lines = params.footprint_pages * LINES_PER_PAGE
        addresses = (np.arange(n, dtype=np.uint64) % np.uint64(total_lines)) * np.uint64(LINE_BYTES)
    ops = (u_op < params.write_fraction).astype(np.uint8)
    return Trace(ops, addresses, gaps.astype(np.int64))
