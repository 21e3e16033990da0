"""Run reports (JSON), counter tables (CSV) and NVM snapshots (npz).

Nothing here records wall-clock time, so rerunning a command rewrites
byte-identical files.
"""

import csv
import io
import json
import zipfile

import numpy as np

from .engine import Overheads, SimStats
from .errors import ConfigError
from .trace import PAGE_BYTES

FORMAT_VERSION = 1


def make_report(stats, config, overheads=None):
    return {
        "format_version": FORMAT_VERSION,
        "config_digest": stats.config_digest,
        "hardware_digest": stats.hardware_digest,
        "trace_digest": stats.trace_digest,
        "config": config.to_mapping(),
        "stats": stats.to_dict(),
        "overheads": None if overheads is None else overheads.__dict__,
    }


def dump_report(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not a report ({exc})") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported report format {doc.get('format_version')!r}")
    return doc


def report_stats(doc):
    return SimStats.from_dict(doc["stats"])


def report_overheads(doc):
    o = doc.get("overheads")
    return None if o is None else Overheads(**o)


def _flatten(prefix, value, out):
    if isinstance(value, dict):
        for k in sorted(value):
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], out)
    else:
        out.append((prefix, value))


def counters_csv(stats):
    rows = []
    _flatten("", stats.to_dict(), rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["format_version", "counter", "value"])
    for name, value in rows:
        w.writerow([FORMAT_VERSION, name, value])
    return buf.getvalue()


def rows_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["format_version", *header])
    for r in rows:
        w.writerow([FORMAT_VERSION, *(r.get(h, "") for h in header)])
    return buf.getvalue()


# -- snapshots ------------------------------------------------------------
def save_snapshot(path, pcm, seed, trace_digest):
    """Raw array contents after power-down.  Keys are never stored."""
    pages = sorted(pcm.array)
    tracked = all(pcm.array[p] is not None for p in pages)
    data = np.zeros((len(pages), PAGE_BYTES), dtype=np.uint8)
    if tracked:
        for i, p in enumerate(pages):
            data[i] = np.frombuffer(pcm.array[p], dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez_compressed(
            fh,
            format_version=np.int64(FORMAT_VERSION),
            pages=np.asarray(pages, dtype=np.int64),
            algorithms=np.asarray([int(pcm.array_alg[p]) for p in pages], dtype=np.uint8),
            data=data,
            tracked=np.bool_(tracked),
            seed=np.uint64(seed & (2**64 - 1)),
            trace_digest=np.str_(trace_digest),
        )


class Snapshot:
    def __init__(self, pages, algorithms, data, tracked, seed, trace_digest):
        self.pages = pages
        self.algorithms = algorithms
        self.data = data
        self.tracked = tracked
        self.seed = seed
        self.trace_digest = trace_digest

    def __len__(self):
        return len(self.pages)

    def page_bytes(self, i):
        return self.data[i].tobytes()


def load_snapshot(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            if int(z["format_version"]) != FORMAT_VERSION:
                raise ConfigError(f"{path}: unsupported snapshot format")
            return Snapshot(
                [int(p) for p in z["pages"]],
                [int(a) for a in z["algorithms"]],
                z["data"].copy(),
                bool(z["tracked"]),
                int(z["seed"]),
                str(z["trace_digest"]),
            )
    except (KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise ConfigError(f"{path}: not a snapshot ({exc})") from None
