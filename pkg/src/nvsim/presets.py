"""Named synthetic workloads.

The two headline presets are tuned against the simulator's default
configuration (128 MiB DRAM cache, i.e. 32768 pages):

* ``mcf-like``: a footprint that fits in the DRAM cache and is revisited
  several times, so the cache absorbs about 63% of PCM-side requests.
* ``milc-like``: a write-heavy, near-uniform sweep over a footprint about
  six times the cache, so the cache absorbs only about 15%.

Gaps are long (about 10^5 cycles between requests) so encryption adds
single-digit percentages to execution time, as on a real core where most
cycles are spent away from memory.
"""

from .errors import InvalidParams
from .trace import SyntheticParams

PRESETS = {
    "mcf-like": SyntheticParams(
        num_requests=12000, footprint_pages=4800, locality_alpha=0.0,
        write_fraction=0.3, mean_gap_cycles=130000, seed=1),
    "milc-like": SyntheticParams(
        num_requests=150000, footprint_pages=190000, locality_alpha=0.0,
        write_fraction=0.4, mean_gap_cycles=120000, seed=2),
    "uniform": SyntheticParams(
        num_requests=20000, footprint_pages=16384, locality_alpha=0.0,
        write_fraction=0.3, mean_gap_cycles=100000, seed=3),
    "streaming": SyntheticParams(
        num_requests=20000, footprint_pages=1024, write_fraction=0.5,
        mean_gap_cycles=100000, seed=4, pattern="sequential"),
}


def preset(name, seed=None, num_requests=None):
    """Parameters for a named preset, optionally reseeded or resized."""
    from dataclasses import replace

    try:
        params = PRESETS[name]
    except KeyError:
        raise InvalidParams(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    if seed is not None:
        params = replace(params, seed=seed)
    if num_requests is not None:
        params = replace(params, num_requests=num_requests)
    return params
