"""Closed-form cycle count for small single-bank traces.

An independent check on the engine: it shares no code with ``nvm``,
``write_buffer`` or ``engine``.  With one bank in play the channel is never
busier than the bank, so a single ``free`` cursor captures all contention,
and each record costs one of row-hit, clean-miss or dirty-miss plus the
page crypto terms.
"""

import math

from .crypto import Algorithm
from .errors import UnsupportedShape
from .policy import PolicyMode

MAX_RECORDS = 1000
PAGE = 4096
LINE = 64


def _cycles(ns, ghz):
    return int(round(ns * ghz))


def _check(trace, config):
    if len(trace) > MAX_RECORDS:
        raise UnsupportedShape(f"oracle handles at most {MAX_RECORDS} records")
    if config.dram is not None:
        raise UnsupportedShape("oracle needs the DRAM cache disabled")
    spec = config.policy
    if spec.mode is not PolicyMode.UNIFORM or spec.schedule is not None or spec.flag_ranges:
        raise UnsupportedShape("oracle needs a uniform, unflagged policy")
    if config.sleep_at or config.evict_at or not config.proper_shutdown:
        raise UnsupportedShape("oracle does not model sleep, eviction or abrupt shutdown")
    _, addrs, _ = trace.columns()
    banks = {(a // PAGE) % config.pcm.num_banks for a in addrs}
    if len(banks) > 1:
        raise UnsupportedShape("oracle needs every record on one bank")
    for a in addrs:
        if a >= config.pcm.capacity_bytes:
            raise UnsupportedShape("address outside PCM")


def analytic_total(trace, config):
    _check(trace, config)
    if len(trace) == 0:
        return 0
    ghz = config.clock_ghz
    read, write, hit = (_cycles(x, ghz) for x in (
        config.pcm.read_latency_ns, config.pcm.write_latency_ns, config.pcm.row_hit_latency_ns))
    cost = config.crypto
    alg = config.policy.algorithm
    words = PAGE // cost.word_bytes
    per_word = 0.0 if alg == Algorithm.NONE else cost.per_word_cycles[alg]
    enc = math.ceil(words * per_word)
    dec = math.ceil(words * per_word * cost.decrypt_factor)
    clean_miss = read + dec
    writeback = enc + write
    cap = config.write_buffer_pages
    fwd = config.wb_forward_latency_cycles

    open_page, dirty, free = None, False, 0
    pending = {}  # page -> set of lines, insertion ordered

    def latch(page, t, fill=True):
        # close the open row (dirty-miss pays a writeback) and open ``page``
        nonlocal open_page, dirty
        if open_page == page:
            return t + hit
        if open_page is not None and dirty:
            t += writeback
        open_page, dirty = page, False
        return t + clean_miss if fill else t

    def drain(page, lines, t):
        nonlocal free, dirty
        s = latch(page, max(t, free), fill=len(lines) < PAGE // LINE)
        s += writeback
        dirty = False
        free = s
        return s

    ready = last = 0
    ops, addrs, gaps = trace.columns()
    for op, addr, gap in zip(ops, addrs, gaps):
        now = ready + gap
        page, line = addr // PAGE, (addr % PAGE) // LINE
        if op == 1:
            if cap == 0:
                free = latch(page, max(now, free))
                dirty = True
            elif page in pending:
                pending[page].add(line)
            else:
                if len(pending) >= cap:
                    oldest = next(iter(pending))
                    drain(oldest, pending.pop(oldest), now)
                pending[page] = {line}
            done = ready = now
        else:
            if line in pending.get(page, ()):
                done = now + fwd
            else:
                free = done = latch(page, max(now, free))
            ready = done
        last = max(last, done)

    end = max(ready, last)
    for page in list(pending):
        drain(page, pending.pop(page), end)
    if dirty:
        free = max(end, free) + writeback
        dirty = False
    return max(end, free)
