"""Simulation configuration and its INI file form.

The file is a plain ``configparser`` document.  Sections and keys are
fixed (see ``DEFAULTS``) plus any number of ``[phase.N]`` sections, which
are ordered by ``N``.  Units live in key names.  See ``docs/config.md``.
"""

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field, replace

from .crypto import Algorithm, CryptoCostModel
from .dram_cache import DramConfig
from .errors import ConfigError, InvalidParams, UnknownKey
from .nvm import PcmConfig
from .policy import (
    DEFAULT_REFAULT_PENALTY,
    PageSecurityMap,
    Phase,
    PhaseSchedule,
    PolicyMode,
    SecurityLevel,
    Transition,
    differentiated_schedule,
)

DEFAULTS = {
    "engine": {
        "clock_ghz": "1.0",
        "seed": "0",
        "track_data": "true",
        "flush_dram_at_end": "true",
        "proper_shutdown": "true",
        "sleep_at": "",
        "evict_at": "",
    },
    "pcm": {
        "capacity_bytes": str(4 << 30),
        "num_banks": "4",
        "read_latency_ns": "50",
        "write_latency_ns": "1000",
        "row_hit_latency_ns": "10",
    },
    "dram": {
        "enabled": "false",
        "capacity_bytes": str(128 << 20),
        "num_banks": "8",
        "associativity": "16",
        "access_latency_ns": "20",
    },
    "write_buffer": {
        "capacity_pages": "8",
        "forward_latency_cycles": "1",
    },
    "crypto": {
        "word_bytes": "8",
        "decrypt_factor": "1.0",
        "des_cycles_per_word": "8.5",
        "aes_cycles_per_word": "13.5",
        "rsa_cycles_per_word": "27.0",
        "des_energy_per_word": "1.0",
        "aes_energy_per_word": "2.0",
        "rsa_energy_per_word": "8.0",
    },
    "energy": {
        "pcm_read": "2.0",
        "pcm_write": "16.0",
        "dram_access": "1.0",
        "background_per_cycle": "0.01",
    },
    "policy": {
        "mode": "uniform",
        "algorithm": "aes",
        "distribution": "des:0.3333333333333333,aes:0.3333333333333333,rsa:0.3333333333333333",
        "flags": "",
        "flags_file": "",
        "transition": "keep_stronger",
        "refault_penalty_cycles": str(DEFAULT_REFAULT_PENALTY),
    },
}
PHASE_KEYS = {"fraction", "level", "ranges"}
SECURITY_SECTIONS = ("crypto", "policy")


@dataclass
class EnergyModel:
    pcm_read: float = 2.0
    pcm_write: float = 16.0
    dram_access: float = 1.0
    background_per_cycle: float = 0.01

    def validate(self):
        if min(self.pcm_read, self.pcm_write, self.dram_access, self.background_per_cycle) < 0:
            raise InvalidParams("energy parameters must be non-negative")
        return self


@dataclass
class PolicySpec:
    mode: PolicyMode = PolicyMode.UNIFORM
    algorithm: Algorithm = Algorithm.AES
    distribution: dict = field(default_factory=lambda: {Algorithm.DES: 1 / 3, Algorithm.AES: 1 / 3, Algorithm.RSA: 1 / 3})
    flag_ranges: tuple = ()
    schedule: PhaseSchedule = None
    refault_penalty_cycles: int = DEFAULT_REFAULT_PENALTY

    def page_map(self):
        default = SecurityLevel.UNPROTECTED if self.mode is PolicyMode.FLAGS else None
        return PageSecurityMap(self.flag_ranges, default=default)


@dataclass
class SimConfig:
    pcm: PcmConfig = field(default_factory=PcmConfig)
    dram: DramConfig = None
    write_buffer_pages: int = 8
    wb_forward_latency_cycles: int = 1
    crypto: CryptoCostModel = field(default_factory=CryptoCostModel)
    energy: EnergyModel = field(default_factory=EnergyModel)
    policy: PolicySpec = field(default_factory=PolicySpec)
    clock_ghz: float = 1.0
    rng_seed: int = 0
    sleep_at: tuple = ()
    evict_at: tuple = ()
    flush_dram_at_end: bool = True
    proper_shutdown: bool = True
    track_data: bool = True

    @classmethod
    def uniform(cls, algorithm, dram=False, **kw):
        cfg = cls(**kw)
        cfg.policy = PolicySpec(PolicyMode.UNIFORM, _alg(algorithm))
        if dram:
            cfg.dram = DramConfig()
        return cfg

    def validate(self):
        replace(self.pcm, clock_ghz=self.clock_ghz).validate()
        if self.dram is not None:
            self.dram.validate()
        self.crypto.validate()
        self.energy.validate()
        if self.write_buffer_pages < 0:
            raise InvalidParams("write buffer capacity must be >= 0")
        if self.wb_forward_latency_cycles < 0:
            raise InvalidParams("forward latency must be >= 0")
        if self.policy.schedule is not None and self.policy.mode is not PolicyMode.FLAGS:
            raise ConfigError("phase schedules require policy mode 'flags'")
        return self

    def with_algorithm(self, algorithm):
        """Copy with a uniform algorithm (``None`` gives the unencrypted baseline)."""
        return replace(self, policy=PolicySpec(PolicyMode.UNIFORM, _alg(algorithm)))

    def with_dram(self, enabled):
        return replace(self, dram=DramConfig() if enabled else None)

    # -- mapping form ---------------------------------------------------
    def to_mapping(self):
        m = {s: dict(v) for s, v in DEFAULTS.items()}
        e = m["engine"]
        e["clock_ghz"] = repr(float(self.clock_ghz))
        e["seed"] = str(self.rng_seed)
        e["track_data"] = _b(self.track_data)
        e["flush_dram_at_end"] = _b(self.flush_dram_at_end)
        e["proper_shutdown"] = _b(self.proper_shutdown)
        e["sleep_at"] = ",".join(str(i) for i in self.sleep_at)
        e["evict_at"] = ",".join(f"{i}:{p:#x}" for i, p in self.evict_at)
        p = m["pcm"]
        p["capacity_bytes"] = str(self.pcm.capacity_bytes)
        p["num_banks"] = str(self.pcm.num_banks)
        p["read_latency_ns"] = repr(float(self.pcm.read_latency_ns))
        p["write_latency_ns"] = repr(float(self.pcm.write_latency_ns))
        p["row_hit_latency_ns"] = repr(float(self.pcm.row_hit_latency_ns))
        d = m["dram"]
        dram = self.dram or DramConfig()
        d["enabled"] = _b(self.dram is not None)
        d["capacity_bytes"] = str(dram.capacity_bytes)
        d["num_banks"] = str(dram.num_banks)
        d["associativity"] = str(dram.associativity)
        d["access_latency_ns"] = repr(float(dram.access_latency_ns))
        w = m["write_buffer"]
        w["capacity_pages"] = str(self.write_buffer_pages)
        w["forward_latency_cycles"] = str(self.wb_forward_latency_cycles)
        c = m["crypto"]
        c["word_bytes"] = str(self.crypto.word_bytes)
        c["decrypt_factor"] = repr(float(self.crypto.decrypt_factor))
        for a in (Algorithm.DES, Algorithm.AES, Algorithm.RSA):
            c[f"{a.name.lower()}_cycles_per_word"] = repr(float(self.crypto.per_word_cycles[a]))
            c[f"{a.name.lower()}_energy_per_word"] = repr(float(self.crypto.per_word_energy[a]))
        en = m["energy"]
        en["pcm_read"] = repr(float(self.energy.pcm_read))
        en["pcm_write"] = repr(float(self.energy.pcm_write))
        en["dram_access"] = repr(float(self.energy.dram_access))
        en["background_per_cycle"] = repr(float(self.energy.background_per_cycle))
        po = m["policy"]
        spec = self.policy
        po["mode"] = spec.mode.value
        po["algorithm"] = spec.algorithm.name.lower()
        po["distribution"] = ",".join(f"{a.name.lower()}:{v!r}" for a, v in sorted(spec.distribution.items()))
        po["flags"] = ",".join(f"{lo:#x}-{hi:#x}:{lv.name.lower()}" for lo, hi, lv in spec.flag_ranges)
        po["flags_file"] = ""
        po["refault_penalty_cycles"] = str(spec.refault_penalty_cycles)
        if spec.schedule is not None:
            po["transition"] = spec.schedule.transition.value
            for i, ph in enumerate(spec.schedule.phases, start=1):
                sec = {"fraction": repr(float(ph.fraction)), "level": ph.level.name.lower()}
                sec["ranges"] = "" if ph.page_ranges is None else ",".join(
                    f"{lo * 4096:#x}-{hi * 4096 + 4095:#x}" for lo, hi in ph.page_ranges)
                m[f"phase.{i}"] = sec
        return m

    @classmethod
    def from_mapping(cls, mapping, base_dir="."):
        m = merge_defaults(mapping)
        e, p, d, w, c, en, po = (m[s] for s in ("engine", "pcm", "dram", "write_buffer", "crypto", "energy", "policy"))
        try:
            cfg = cls(
                pcm=PcmConfig(
                    capacity_bytes=int(p["capacity_bytes"]),
                    num_banks=int(p["num_banks"]),
                    read_latency_ns=float(p["read_latency_ns"]),
                    write_latency_ns=float(p["write_latency_ns"]),
                    row_hit_latency_ns=float(p["row_hit_latency_ns"]),
                    clock_ghz=float(e["clock_ghz"]),
                ),
                dram=DramConfig(
                    capacity_bytes=int(d["capacity_bytes"]),
                    num_banks=int(d["num_banks"]),
                    associativity=int(d["associativity"]),
                    access_latency_ns=float(d["access_latency_ns"]),
                ) if _bool(d["enabled"]) else None,
                write_buffer_pages=int(w["capacity_pages"]),
                wb_forward_latency_cycles=int(w["forward_latency_cycles"]),
                crypto=CryptoCostModel(
                    per_word_cycles={Algorithm.NONE: 0.0, **{
                        a: float(c[f"{a.name.lower()}_cycles_per_word"]) for a in (Algorithm.DES, Algorithm.AES, Algorithm.RSA)}},
                    per_word_energy={Algorithm.NONE: 0.0, **{
                        a: float(c[f"{a.name.lower()}_energy_per_word"]) for a in (Algorithm.DES, Algorithm.AES, Algorithm.RSA)}},
                    word_bytes=int(c["word_bytes"]),
                    decrypt_factor=float(c["decrypt_factor"]),
                ),
                energy=EnergyModel(
                    float(en["pcm_read"]), float(en["pcm_write"]), float(en["dram_access"]), float(en["background_per_cycle"])),
                policy=_policy_from(po, _phases_from(m), base_dir),
                clock_ghz=float(e["clock_ghz"]),
                rng_seed=int(e["seed"], 0),
                sleep_at=tuple(int(x) for x in _list(e["sleep_at"])),
                evict_at=tuple(_evict(x) for x in _list(e["evict_at"])),
                flush_dram_at_end=_bool(e["flush_dram_at_end"]),
                proper_shutdown=_bool(e["proper_shutdown"]),
                track_data=_bool(e["track_data"]),
            )
        except (ValueError, InvalidParams) as exc:
            raise ConfigError(f"bad config value: {exc}") from None
        try:
            return cfg.validate()
        except InvalidParams as exc:
            raise ConfigError(str(exc)) from None

    def digest(self):
        return mapping_digest(self.to_mapping())

    def hardware_digest(self):
        """Digest of everything except the security settings."""
        m = self.to_mapping()
        return mapping_digest({s: v for s, v in m.items() if s not in SECURITY_SECTIONS and not s.startswith("phase.")})


def _alg(a):
    return Algorithm.parse(a) if isinstance(a, str) else Algorithm(a)


def _b(v):
    return "true" if v else "false"


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _list(text):
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _evict(item):
    idx, _, page = item.partition(":")
    return int(idx), int(page, 0)


def _byte_ranges(text):
    out = []
    for item in _list(text):
        lo, sep, hi = item.partition("-")
        if not sep:
            raise ConfigError(f"range {item!r} must be START-END")
        lo, hi = int(lo, 16), int(hi, 16)
        if hi < lo:
            raise ConfigError(f"range {item!r} ends before it starts")
        out.append((lo // 4096, hi // 4096))
    return tuple(out)


def _phases_from(m):
    names = sorted((s for s in m if s.startswith("phase.")), key=lambda s: int(s.split(".", 1)[1]))
    phases = []
    for s in names:
        sec = m[s]
        try:
            ranges = _byte_ranges(sec.get("ranges", ""))
            phases.append(Phase(float(sec["fraction"]), SecurityLevel.parse(sec["level"]), ranges or None))
        except KeyError as exc:
            raise ConfigError(f"[{s}] missing key {exc}") from None
        except InvalidParams as exc:
            raise ConfigError(f"[{s}] {exc}") from None
    return phases


def _policy_from(po, phases, base_dir):
    mode_s = po["mode"].strip().lower()
    alg_s = po["algorithm"].strip().lower()
    transition = Transition.parse(po["transition"])
    schedule = PhaseSchedule(phases, transition) if phases else None
    if alg_s == "differentiated":
        mode_s = "flags"
        alg = Algorithm.NONE
        schedule = schedule or differentiated_schedule(transition)
    else:
        alg = Algorithm.parse(alg_s)
    try:
        mode = PolicyMode(mode_s)
    except ValueError:
        raise ConfigError(f"unknown policy mode {mode_s!r}") from None
    dist = {}
    for item in _list(po["distribution"]):
        name, _, val = item.partition(":")
        dist[Algorithm.parse(name)] = float(val)
    ranges = []
    if po.get("flags_file"):
        path = po["flags_file"]
        path = path if os.path.isabs(path) else os.path.join(base_dir, path)
        try:
            with open(path, encoding="utf-8") as fh:
                ranges.extend(PageSecurityMap.parse_sidecar(fh.read()).ranges)
        except OSError as exc:
            raise ConfigError(f"cannot read flags file {path}: {exc}") from None
    for item in _list(po["flags"]):
        rng, _, level = item.rpartition(":")
        (lo, hi), = _byte_ranges(rng)
        ranges.append((lo, hi, SecurityLevel.parse(level)))
    return PolicySpec(mode, alg, dist, tuple(ranges), schedule, int(po["refault_penalty_cycles"]))


def merge_defaults(mapping):
    out = {s: dict(v) for s, v in DEFAULTS.items()}
    for section, values in mapping.items():
        if section.startswith("phase."):
            bad = set(values) - PHASE_KEYS
            if bad:
                raise UnknownKey(f"unknown key(s) {sorted(bad)} in [{section}]")
            out[section] = dict(values)
            continue
        if section not in DEFAULTS:
            raise UnknownKey(f"unknown section [{section}]")
        for key, val in values.items():
            if key not in DEFAULTS[section]:
                raise UnknownKey(f"unknown key {section}.{key}")
            out[section][key] = str(val)
    return out


def mapping_digest(mapping):
    blob = json.dumps(mapping, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def read_mapping(path):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError:
        raise
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {s: dict(parser[s]) for s in parser.sections()}


def load_config(path):
    try:
        return SimConfig.from_mapping(read_mapping(path), base_dir=os.path.dirname(os.path.abspath(path)))
    except ConfigError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def write_config(config, path):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_dict(config.to_mapping())
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
