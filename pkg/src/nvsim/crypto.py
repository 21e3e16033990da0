"""Encryption algorithms, page crypto costs, page cipher and session keys.

The cost model charges a fixed number of cycles per machine word, so a
page costs ``page_bytes / word_bytes * per_word_cycles``.  The nominal
algorithms differ only in cost; the functional transform is the same
AES-XTS construction for all of them, keyed per algorithm so ciphertext
written under one algorithm does not decrypt under another.
"""

import enum
import hashlib
import random
from dataclasses import dataclass, field, replace
from functools import lru_cache

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import BadTransition, InvalidParams, KeysUnavailable, Misaligned

PAGE_BYTES = 4096
KEY_BYTES = 16


class Algorithm(enum.IntEnum):
    """Ordered by strength: NONE < DES < AES < RSA."""

    NONE = 0
    DES = 1
    AES = 2
    RSA = 3

    @classmethod
    def parse(cls, text):
        try:
            return cls[str(text).strip().upper()]
        except KeyError:
            raise InvalidParams(f"unknown algorithm {text!r}") from None


class Direction(enum.Enum):
    ENCRYPT = "encrypt"
    DECRYPT = "decrypt"


def _default_cycles():
    # midpoints of 7-10, 12-15 and 24-30 cycles per word
    return {Algorithm.NONE: 0.0, Algorithm.DES: 8.5, Algorithm.AES: 13.5, Algorithm.RSA: 27.0}


def _default_energy():
    return {Algorithm.NONE: 0.0, Algorithm.DES: 1.0, Algorithm.AES: 2.0, Algorithm.RSA: 8.0}


@dataclass
class CryptoCostModel:
    per_word_cycles: dict = field(default_factory=_default_cycles)
    per_word_energy: dict = field(default_factory=_default_energy)
    word_bytes: int = 8
    decrypt_factor: float = 1.0

    def validate(self):
        for name, table in (("cycles", self.per_word_cycles), ("energy", self.per_word_energy)):
            if set(table) != set(Algorithm):
                raise InvalidParams(f"per_word_{name} must cover every algorithm")
            if any(v < 0 for v in table.values()):
                raise InvalidParams(f"per_word_{name} must be non-negative")
            if table[Algorithm.NONE] != 0:
                raise InvalidParams(f"per_word_{name}[NONE] must be 0")
        c = self.per_word_cycles
        if not c[Algorithm.DES] <= c[Algorithm.AES] <= c[Algorithm.RSA]:
            raise InvalidParams("per_word_cycles must satisfy DES <= AES <= RSA")
        if self.word_bytes <= 0:
            raise InvalidParams("word_bytes must be positive")
        if self.decrypt_factor <= 0:
            raise InvalidParams("decrypt_factor must be positive")
        return self

    def words(self, page_bytes):
        if page_bytes <= 0 or page_bytes % self.word_bytes:
            raise Misaligned(f"{page_bytes} B is not a multiple of the {self.word_bytes} B word")
        return page_bytes // self.word_bytes

    def page_energy(self, alg, page_bytes=PAGE_BYTES, direction=Direction.ENCRYPT):
        factor = 1.0 if direction is Direction.ENCRYPT else self.decrypt_factor
        return self.words(page_bytes) * self.per_word_energy[alg] * factor


def page_crypto_cycles(model, alg, page_bytes=PAGE_BYTES, direction=Direction.ENCRYPT):
    factor = 1.0 if direction is Direction.ENCRYPT else model.decrypt_factor
    return model.words(page_bytes) * model.per_word_cycles[alg] * factor


@lru_cache(maxsize=1024)
def _xts_key(key, alg):
    # XTS wants two independent 128-bit halves; derive them per algorithm.
    return hashlib.blake2b(key, digest_size=32, person=b"nvsim-xts", salt=bytes([int(alg)]) * 16).digest()


def _xts(key, page_index, alg, data, encrypt):
    if key is None:
        raise KeysUnavailable("no session key available (keys are not active)")
    if len(key) != KEY_BYTES:
        raise InvalidParams("keys are 128-bit")
    if len(data) != PAGE_BYTES:
        raise InvalidParams(f"pages are exactly {PAGE_BYTES} bytes")
    if alg == Algorithm.NONE:
        return bytes(data)
    tweak = (page_index & ((1 << 128) - 1)).to_bytes(16, "little")
    cipher = Cipher(algorithms.AES(_xts_key(bytes(key), Algorithm(alg))), modes.XTS(tweak))
    ctx = cipher.encryptor() if encrypt else cipher.decryptor()
    return ctx.update(bytes(data)) + ctx.finalize()


def encrypt_page(plaintext, key, page_index, alg):
    """Encrypt one 4 KB page, tweaked by its page index."""
    return _xts(key, page_index, alg, plaintext, True)


def decrypt_page(ciphertext, key, page_index, alg):
    return _xts(key, page_index, alg, ciphertext, False)


class KeyPhase(enum.Enum):
    POWERED_DOWN = "powered_down"
    ACTIVE = "active"
    SLEEPING = "sleeping"


@dataclass(frozen=True)
class KeyState:
    phase: KeyPhase = KeyPhase.POWERED_DOWN
    bank_keys: tuple = ()
    session_id: int = 0

    def key_for(self, bank):
        """Key of ``bank``; only the active session may use keys."""
        if self.phase is not KeyPhase.ACTIVE:
            raise KeysUnavailable(f"keys unavailable in phase {self.phase.value}")
        return self.bank_keys[bank]

    @property
    def active(self):
        return self.phase is KeyPhase.ACTIVE


def _require(state, *phases):
    if state.phase not in phases:
        raise BadTransition(f"illegal transition from {state.phase.value}")


def boot(state, rng=None, num_banks=4):
    """Power on: draw a fresh 128-bit key per bank from ``rng``.

    ``rng`` is a :class:`random.Random`; ``None`` uses OS entropy.
    """
    _require(state, KeyPhase.POWERED_DOWN)
    if num_banks <= 0:
        raise InvalidParams("num_banks must be positive")
    rng = rng if rng is not None else random.SystemRandom()
    keys = tuple(rng.getrandbits(128).to_bytes(KEY_BYTES, "little") for _ in range(num_banks))
    return KeyState(KeyPhase.ACTIVE, keys, state.session_id + 1)


def enter_sleep(state):
    # keys move into kernel state; the registers themselves are cleared
    _require(state, KeyPhase.ACTIVE)
    return replace(state, phase=KeyPhase.SLEEPING)


def wake(state):
    _require(state, KeyPhase.SLEEPING)
    return replace(state, phase=KeyPhase.ACTIVE)


def power_down(state):
    _require(state, KeyPhase.ACTIVE, KeyPhase.SLEEPING)
    return KeyState(KeyPhase.POWERED_DOWN, (), state.session_id)
