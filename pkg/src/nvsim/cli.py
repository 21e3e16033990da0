"""nvsim command line.

    nvsim gen-trace --preset mcf-like --out mcf.trace
    nvsim --config aes.ini run mcf.trace --out aes.json --snapshot aes.npz
    nvsim compare aes.json none.json
    nvsim sweep --workload mcf-like --axis policy.algorithm=none,des,aes,rsa --axis dram.enabled=off,on
    nvsim dump-nvm aes.npz --check-plaintext mcf.trace

Exit status: 0 on success, 1 on bad input (parse, config or validation
errors, missing files, plaintext found), 2 on internal errors.
"""

import argparse
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from . import engine
from .config import SimConfig, load_config, merge_defaults, read_mapping
from .crypto import Algorithm
from .errors import MismatchedBaseline, NvsimError, UnknownKey
from .presets import PRESETS, preset
from .report import (
    counters_csv,
    dump_report,
    load_report,
    load_snapshot,
    make_report,
    report_stats,
    rows_csv,
    save_snapshot,
)
from .trace import SyntheticParams, generate_synthetic, read_trace, trace_stats, write_trace

log = logging.getLogger("nvsim")

AXIS_ALIASES = {"algorithm": "policy.algorithm", "dram": "dram.enabled"}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    # bad arguments are a validation failure (1), not an internal error
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _config(args):
    cfg = load_config(args.config) if args.config else SimConfig()
    if args.seed is not None:
        cfg = replace(cfg, rng_seed=args.seed)
    return cfg


# -- gen-trace --------------------------------------------------------------
def cmd_gen_trace(args):
    if args.preset:
        params = preset(args.preset, seed=args.seed, num_requests=args.requests)
    else:
        if args.requests is None or args.footprint_pages is None:
            raise UsageError("gen-trace needs --preset or both --requests and --footprint-pages")
        params = SyntheticParams(
            args.requests, args.footprint_pages, args.alpha, args.write_fraction,
            args.mean_gap, args.seed or 0, args.pattern)
    trace = generate_synthetic(params)
    if not args.out:
        raise UsageError("gen-trace needs --out")
    write_trace(trace, args.out)
    st = trace_stats(trace)
    print(f"wrote {args.out}: {len(trace)} records, {st.reads} reads, {st.writes} writes, "
          f"{st.unique_pages} pages ({st.footprint_bytes} B)")
    return 0


# -- run --------------------------------------------------------------------
def cmd_run(args):
    cfg = _config(args)
    trace = read_trace(args.trace)
    sim = engine.Simulator(trace, cfg)
    stats = sim.run()
    baseline = None
    if args.baseline:
        baseline = engine.compare(stats, engine.run(trace, cfg.with_algorithm(Algorithm.NONE)))
    _emit(dump_report(make_report(stats, cfg, baseline)), args.out)
    counters = args.counters or (os.path.splitext(args.out)[0] + ".csv" if args.out not in (None, "-") else None)
    if counters:
        _emit(counters_csv(stats), counters)
    if args.snapshot:
        save_snapshot(args.snapshot, sim.pcm, cfg.rng_seed, stats.trace_digest)
    log.info("exec_cycles=%d", stats.exec_cycles)
    return 0


# -- compare ----------------------------------------------------------------
def cmd_compare(args):
    a, b = report_stats(load_report(args.report)), report_stats(load_report(args.baseline))
    o = engine.compare(a, b)
    text = rows_csv(["perf_pct", "power_pct", "energy_pct"], [o.__dict__])
    _emit(text, args.out)
    return 0


# -- sweep ------------------------------------------------------------------
def parse_axis(text):
    key, sep, values = text.partition("=")
    if not sep:
        raise UsageError(f"axis {text!r} must look like section.key=v1,v2")
    key = AXIS_ALIASES.get(key.strip(), key.strip())
    vals = [v.strip() for v in values.split(",") if v.strip()]
    if key != "workload":
        section, dot, name = key.partition(".")
        if not dot:
            raise UnknownKey(f"axis key {key!r} must be section.key")
        merge_defaults({section: {name: vals[0] if vals else ""}})
    if not vals:
        raise UsageError(f"axis {key} has no values")
    return key, vals


def _workload_source(name):
    # presets by name, trace files by absolute path so workers agree
    return name if name in PRESETS else os.path.abspath(name)


def _load_workload(source):
    if source in PRESETS:
        return generate_synthetic(preset(source))
    return read_trace(source)


_TRACE_CACHE = {}  # per process, cleared by each sweep


def _sweep_cell(job):
    source, mapping, base_dir = job
    trace = _TRACE_CACHE.get(source)
    if trace is None:
        trace = _TRACE_CACHE[source] = _load_workload(source)
    cfg = SimConfig.from_mapping(mapping, base_dir)
    return engine.run(trace, cfg).to_dict()


def _baseline_mapping(mapping):
    m = {s: dict(v) for s, v in mapping.items() if not s.startswith("phase.")}
    m["policy"]["mode"] = "uniform"
    m["policy"]["algorithm"] = "none"
    m["policy"]["flags"] = ""
    m["policy"]["flags_file"] = ""
    return m


def _key(workload, mapping):
    return workload, repr(sorted((s, sorted(v.items())) for s, v in mapping.items()))


def cmd_sweep(args):
    base_dir = os.path.dirname(os.path.abspath(args.config)) if args.config else "."
    base = merge_defaults(read_mapping(args.config) if args.config else {})
    if args.seed is not None:
        base["engine"]["seed"] = str(args.seed)
    axes = [parse_axis(a) for a in args.axis]
    workloads = list(args.workload)
    for k, vals in axes:
        if k == "workload":
            workloads = vals
    if not workloads:
        raise UsageError("sweep needs at least one --workload (preset name or trace file)")
    axes = [(k, v) for k, v in axes if k != "workload"]

    cells = []
    for w in workloads:
        for combo in itertools.product(*(vals for _, vals in axes)):
            m = {s: dict(v) for s, v in base.items()}
            for (k, _), val in zip(axes, combo):
                section, _, name = k.partition(".")
                m[section][name] = val
            SimConfig.from_mapping(m, base_dir)  # fail early on bad values
            cells.append((w, combo, m))

    _TRACE_CACHE.clear()
    for w in workloads:
        if w not in PRESETS and not os.path.exists(w):
            raise FileNotFoundError(f"no such workload file: {w}")
    jobs = {}
    for w, _, m in cells:
        for mm in (m, _baseline_mapping(m)):
            jobs.setdefault(_key(w, mm), (_workload_source(w), mm, base_dir))
    keys = list(jobs)
    if args.jobs == 1 or len(keys) == 1:
        results = [_sweep_cell(jobs[k]) for k in keys]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_cell, [jobs[k] for k in keys]))
    by_key = {k: engine.SimStats.from_dict(r) for k, r in zip(keys, results)}

    header = ["workload", *(k for k, _ in axes), "exec_cycles", "total_energy", "avg_power",
              "perf_pct", "power_pct", "energy_pct", "pcm_requests", "pcm_page_writes",
              "encrypt_pages", "decrypt_pages"]
    rows = []
    for w, combo, m in cells:
        st = by_key[_key(w, m)]
        o = engine.compare(st, by_key[_key(w, _baseline_mapping(m))])
        row = {"workload": w, **dict(zip((k for k, _ in axes), combo))}
        row.update(exec_cycles=st.exec_cycles, total_energy=repr(st.total_energy), avg_power=repr(st.avg_power),
                   perf_pct=f"{o.perf_pct:.6f}", power_pct=f"{o.power_pct:.6f}", energy_pct=f"{o.energy_pct:.6f}",
                   pcm_requests=st.pcm_requests, pcm_page_writes=st.pcm_page_writes,
                   encrypt_pages=st.total_encrypts, decrypt_pages=st.total_decrypts)
        rows.append(row)
    _emit(rows_csv(header, rows), args.out)
    return 0


# -- dump-nvm ---------------------------------------------------------------
def cmd_dump_nvm(args):
    snap = load_snapshot(args.snapshot)
    lines = []
    width = args.bytes
    for i, page in enumerate(snap.pages):
        alg = Algorithm(snap.algorithms[i]).name
        data = snap.page_bytes(i)[:width].hex() if snap.tracked else "-"
        lines.append(f"{page:#010x} {alg} {data}\n")
    _emit("".join(lines), args.out)
    if not args.check_plaintext:
        return 0
    if not snap.tracked:
        raise UsageError("snapshot was taken with track_data off; nothing to check")
    trace = read_trace(args.check_plaintext)
    if trace.digest() != snap.trace_digest:
        raise MismatchedBaseline("snapshot was not produced from this trace")
    ref = engine.reference_replay(trace, snap.seed)
    leaks = []
    for i, page in enumerate(snap.pages):
        if args.protected_only and snap.algorithms[i] == Algorithm.NONE:
            continue
        if page in ref and snap.page_bytes(i) == ref[page]:
            leaks.append(page)
    if leaks:
        print(f"plaintext found in {len(leaks)} page(s): " + ", ".join(f"{p:#x}" for p in leaks[:10]),
              file=sys.stderr)
        return 1
    print(f"check-plaintext: no plaintext among {len(snap)} page(s)", file=sys.stderr)
    return 0


# -- entry point ------------------------------------------------------------
def build_parser():
    common = Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed override")
    common.add_argument("--config", default=argparse.SUPPRESS, help="INI configuration file")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output path (default stdout)")

    p = Parser(prog="nvsim", description="Encrypted PCM main-memory simulator.", parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    g = sub.add_parser("gen-trace", parents=[common], help="write a synthetic trace")
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--requests", type=int)
    g.add_argument("--footprint-pages", type=int)
    g.add_argument("--alpha", type=float, default=0.0, help="Zipf locality exponent")
    g.add_argument("--write-fraction", type=float, default=0.3)
    g.add_argument("--mean-gap", type=int, default=0, help="mean gap in cycles")
    g.add_argument("--pattern", choices=["zipf", "sequential"], default="zipf")
    g.set_defaults(func=cmd_gen_trace)

    r = sub.add_parser("run", parents=[common], help="simulate one trace")
    r.add_argument("trace")
    r.add_argument("--counters", help="CSV counters path (default: next to --out)")
    r.add_argument("--snapshot", help="write the powered-down array to this .npz")
    r.add_argument("--baseline", action="store_true", help="also run unencrypted and report overheads")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", parents=[common], help="overheads of one report against a baseline")
    c.add_argument("report")
    c.add_argument("baseline")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep", parents=[common], help="run a grid of configurations")
    s.add_argument("--axis", action="append", default=[], help="section.key=v1,v2 (repeatable)")
    s.add_argument("--workload", action="append", default=[], help="preset name or trace path (repeatable)")
    s.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("dump-nvm", parents=[common], help="hex listing of a snapshot")
    d.add_argument("snapshot")
    d.add_argument("--bytes", type=int, default=32, help="bytes of each page to print")
    d.add_argument("--check-plaintext", metavar="TRACE", help="fail if any page equals its replayed plaintext")
    d.add_argument("--protected-only", action="store_true", help="only check pages stored encrypted")
    d.set_defaults(func=cmd_dump_nvm)
    return p


def main(argv=None):
    level = os.environ.get("NVSIM_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        for name in ("seed", "config", "out"):
            if not hasattr(args, name):
                setattr(args, name, None)
        return args.func(args)
    except (UsageError, NvsimError, OSError) as exc:
        print(f"nvsim: error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        log.exception("internal error")
        return 2


if __name__ == "__main__":
    sys.exit(main())
