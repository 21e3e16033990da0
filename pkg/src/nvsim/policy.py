"""Per-bank and per-page encryption policy.

A bank runs one algorithm at a time.  Under flag-driven mode the bank's
algorithm follows the most demanding valid page it holds; pages flagged
``UNPROTECTED`` skip encryption entirely.  Phase schedules re-flag pages as
a run progresses, and a drop in demand is handled by one of two transition
policies: keep the stronger algorithm, or switch down and invalidate pages
the bank can no longer decrypt.

Escalations switch at once and leave already-stored pages valid: those
pages keep the algorithm they were written under until their next natural
writeback re-encrypts them.
"""

import bisect
import enum
from collections import Counter
from dataclasses import dataclass, field

from .crypto import Algorithm
from .errors import BadDistribution, ConfigError, InvalidParams, NonMonotonicFraction

PAGE_BYTES = 4096
DEFAULT_REFAULT_PENALTY = 1_000_000


class SecurityLevel(enum.IntEnum):
    UNPROTECTED = 0
    LOW = 1
    MEDIUM = 2
    HIGH = 3

    @classmethod
    def parse(cls, text):
        try:
            return cls[str(text).strip().upper()]
        except KeyError:
            raise InvalidParams(f"unknown security level {text!r}") from None

    @property
    def algorithm(self):
        return Algorithm(int(self))


class Transition(enum.Enum):
    KEEP_STRONGER = "keep_stronger"
    SWITCH_AND_INVALIDATE = "switch_and_invalidate"

    @classmethod
    def parse(cls, text):
        key = str(text).strip().lower().replace("-", "_")
        for t in cls:
            if t.value == key:
                return t
        raise InvalidParams(f"unknown transition policy {text!r}")


class PolicyMode(enum.Enum):
    UNIFORM = "uniform"
    RANDOM = "random"
    FLAGS = "flags"


@dataclass(frozen=True)
class Phase:
    fraction: float
    level: SecurityLevel
    # inclusive page-index ranges; None covers every page
    page_ranges: tuple = None

    def covers(self, page):
        if self.page_ranges is None:
            return True
        return any(lo <= page <= hi for lo, hi in self.page_ranges)


@dataclass
class PhaseSchedule:
    phases: list
    transition: Transition = Transition.KEEP_STRONGER

    def __post_init__(self):
        if not self.phases:
            raise InvalidParams("a phase schedule needs at least one phase")
        for p in self.phases:
            if not 0.0 < p.fraction <= 1.0:
                raise InvalidParams("phase fractions must lie in (0, 1]")
        if abs(sum(p.fraction for p in self.phases) - 1.0) > 1e-9:
            raise InvalidParams("phase fractions must sum to 1")
        acc, bounds = 0.0, []
        for p in self.phases[:-1]:
            acc += p.fraction
            bounds.append(acc)
        self._bounds = bounds

    @property
    def boundaries(self):
        return list(self._bounds)

    def phase_at(self, completed_fraction):
        return bisect.bisect_right(self._bounds, completed_fraction)


def differentiated_schedule(transition=Transition.KEEP_STRONGER):
    """15% low, 60% medium, 25% high sensitivity, escalating over the run."""
    return PhaseSchedule(
        [
            Phase(0.15, SecurityLevel.LOW),
            Phase(0.60, SecurityLevel.MEDIUM),
            Phase(0.25, SecurityLevel.HIGH),
        ],
        transition,
    )


class PageSecurityMap:
    """OS page map: explicit per-page flags plus a validity bit.

    Flags come from inclusive page ranges; later ranges override earlier
    ones.  Pages without a flag report ``default``.
    """

    def __init__(self, ranges=(), default=SecurityLevel.UNPROTECTED):
        self.ranges = [(int(lo), int(hi), SecurityLevel(lv)) for lo, hi, lv in ranges]
        self.default = default
        self.invalid = set()

    def set_range(self, first_page, last_page, level):
        self.ranges.append((first_page, last_page, SecurityLevel(level)))

    def explicit(self, page):
        for lo, hi, lv in reversed(self.ranges):
            if lo <= page <= hi:
                return lv
        return None

    def flag(self, page):
        lv = self.explicit(page)
        return self.default if lv is None else lv

    def is_valid(self, page):
        return page not in self.invalid

    @classmethod
    def parse_sidecar(cls, text, default=SecurityLevel.UNPROTECTED):
        """Parse ``START_HEX END_HEX LEVEL`` lines (inclusive byte ranges)."""
        if isinstance(text, bytes):
            text = text.decode("utf-8")
        m = cls(default=default)
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ConfigError(f"flags line {lineno}: expected START END LEVEL")
            try:
                lo, hi = int(parts[0], 16), int(parts[1], 16)
                level = SecurityLevel.parse(parts[2])
            except (ValueError, InvalidParams) as exc:
                raise ConfigError(f"flags line {lineno}: {exc}") from None
            if hi < lo:
                raise ConfigError(f"flags line {lineno}: END before START")
            m.set_range(lo // PAGE_BYTES, hi // PAGE_BYTES, level)
        return m


@dataclass(frozen=True)
class AlgorithmSwitch:
    bank: int
    old: Algorithm
    new: Algorithm

    @property
    def escalation(self):
        return self.new > self.old


@dataclass
class PhaseChange:
    algorithm_switches: list = field(default_factory=list)
    invalidated_pages: list = field(default_factory=list)

    @property
    def invalidated(self):
        return len(self.invalidated_pages)


@dataclass(frozen=True)
class RefaultOutcome:
    penalty_cycles: int
    algorithm: Algorithm


class EncryptionPolicy:
    """Decides which algorithm protects each page.

    The simulator registers every page it touches with :meth:`touch`; a
    bank's flag-driven demand is computed over touched, valid pages.
    """

    def __init__(
        self,
        num_banks=4,
        mode=PolicyMode.UNIFORM,
        algorithm=Algorithm.AES,
        page_map=None,
        schedule=None,
        refault_penalty_cycles=DEFAULT_REFAULT_PENALTY,
    ):
        if num_banks <= 0:
            raise InvalidParams("num_banks must be positive")
        if schedule is not None and mode is not PolicyMode.FLAGS:
            raise ConfigError("phase schedules require flag-driven mode")
        if refault_penalty_cycles < 0:
            raise InvalidParams("refault penalty must be non-negative")
        self.num_banks = num_banks
        self.mode = mode
        self.page_map = page_map if page_map is not None else PageSecurityMap()
        self.schedule = schedule
        self.refault_penalty_cycles = int(refault_penalty_cycles)
        start = Algorithm(algorithm) if mode is PolicyMode.UNIFORM else Algorithm.NONE
        self.current_alg = [start] * num_banks
        self.switches = []
        self.refaults = 0
        self.phase_index = 0
        self._last_fraction = 0.0
        self._touched = {}
        self._bank_levels = [Counter() for _ in range(num_banks)]

    @classmethod
    def uniform(cls, algorithm, num_banks=4):
        return cls(num_banks, PolicyMode.UNIFORM, algorithm)

    # -- flags ---------------------------------------------------------
    def _phase(self):
        return self.schedule.phases[self.phase_index] if self.schedule else None

    def level_of(self, page):
        phase = self._phase()
        if phase is not None and phase.covers(page):
            return phase.level
        return self.page_map.flag(page)

    def bank_demand(self, bank):
        levels = self._bank_levels[bank]
        top = max((lv for lv, n in levels.items() if n > 0), default=SecurityLevel.UNPROTECTED)
        return top.algorithm

    def is_valid(self, page):
        return self.page_map.is_valid(page)

    def _count(self, page, delta):
        lv = self._touched.get(page)
        if lv is not None:
            self._bank_levels[page % self.num_banks][lv] += delta

    def invalidate(self, page):
        if page not in self.page_map.invalid:
            self.page_map.invalid.add(page)
            self._count(page, -1)

    def mark_valid(self, page):
        if page in self.page_map.invalid:
            self.page_map.invalid.discard(page)
            self._count(page, +1)
            self._escalate_if_needed(page % self.num_banks)

    def _escalate_if_needed(self, bank):
        if self.mode is not PolicyMode.FLAGS:
            return None
        want = self.bank_demand(bank)
        old = self.current_alg[bank]
        if want > old:
            self.current_alg[bank] = want
            sw = AlgorithmSwitch(bank, old, want)
            self.switches.append(sw)
            return sw
        return None

    def touch(self, page):
        """Register ``page`` as live; returns an escalation switch if any."""
        if self.mode is not PolicyMode.FLAGS or page in self._touched:
            return None
        self._touched[page] = self.level_of(page)
        if self.is_valid(page):
            self._count(page, +1)
        return self._escalate_if_needed(page % self.num_banks)

    def effective_algorithm(self, page):
        bank = page % self.num_banks
        if self.mode is PolicyMode.FLAGS:
            lv = self._touched.get(page)
            if lv is None:
                lv = self.level_of(page)
            if lv is SecurityLevel.UNPROTECTED:
                return Algorithm.NONE
            return max(self.current_alg[bank], lv.algorithm)
        if self.page_map.explicit(page) is SecurityLevel.UNPROTECTED:
            return Algorithm.NONE
        return self.current_alg[bank]

    algorithm_for = effective_algorithm

    # -- random assignment ----------------------------------------------
    def assign_random(self, rng, distribution):
        """Draw each bank's algorithm independently from ``distribution``."""
        dist = {Algorithm(a) if not isinstance(a, str) else Algorithm.parse(a): float(p) for a, p in distribution.items()}
        if not dist or any(a == Algorithm.NONE for a in dist) or any(p < 0 for p in dist.values()):
            raise BadDistribution("distribution must weight DES/AES/RSA with non-negative mass")
        if abs(sum(dist.values()) - 1.0) > 1e-9:
            raise BadDistribution("distribution must sum to 1")
        self.mode = PolicyMode.RANDOM
        algs = sorted(dist)
        for b in range(self.num_banks):
            u, acc, pick = rng.random(), 0.0, algs[-1]
            for a in algs:
                acc += dist[a]
                if u < acc:
                    pick = a
                    break
            self.current_alg[b] = pick
        return list(self.current_alg)

    # -- phases ---------------------------------------------------------
    def advance_phase(self, completed_fraction, stored_alg=None, quiesce=None):
        """Apply any phase boundary crossed by ``completed_fraction``.

        ``stored_alg`` maps page index to the algorithm its NVM copy was
        written under; ``quiesce(bank)`` is called before a bank switches
        down so buffered data lands under the old algorithm first.
        """
        if not 0.0 <= completed_fraction <= 1.0:
            raise NonMonotonicFraction(f"fraction {completed_fraction} outside [0, 1]")
        if completed_fraction < self._last_fraction:
            raise NonMonotonicFraction(f"fraction went back from {self._last_fraction} to {completed_fraction}")
        self._last_fraction = completed_fraction
        change = PhaseChange()
        if self.schedule is None:
            return change
        idx = self.schedule.phase_at(completed_fraction)
        if idx == self.phase_index:
            return change
        self.phase_index = idx

        self._bank_levels = [Counter() for _ in range(self.num_banks)]
        for page in self._touched:
            self._touched[page] = lv = self.level_of(page)
            if self.is_valid(page):
                self._bank_levels[page % self.num_banks][lv] += 1

        stored_alg = stored_alg if stored_alg is not None else {}
        for b in range(self.num_banks):
            old, new = self.current_alg[b], self.bank_demand(b)
            if new == old:
                continue
            if new < old and self.schedule.transition is Transition.KEEP_STRONGER:
                continue
            if new < old:
                if quiesce is not None:
                    quiesce(b)
                for page, alg in stored_alg.items():
                    if page % self.num_banks == b and alg not in (new, Algorithm.NONE) and self.is_valid(page):
                        self.invalidate(page)
                        change.invalidated_pages.append(page)
            self.current_alg[b] = new
            sw = AlgorithmSwitch(b, old, new)
            self.switches.append(sw)
            change.algorithm_switches.append(sw)
        return change

    def access_invalid_page(self, page):
        """Refault an invalidated page: charge the refetch and revalidate."""
        self.refaults += 1
        self.mark_valid(page)
        return RefaultOutcome(self.refault_penalty_cycles, self.effective_algorithm(page))
