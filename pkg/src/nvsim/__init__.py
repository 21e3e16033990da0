"""Trace-driven simulator for encrypted phase-change main memory."""

from .config import EnergyModel, PolicySpec, SimConfig, load_config
from .crypto import Algorithm, CryptoCostModel
from .engine import Overheads, SimStats, Simulator, compare, filter_rate, reference_replay, run
from .trace import Op, SyntheticParams, Trace, generate_synthetic, parse_trace, read_trace

__version__ = "0.1.0"
