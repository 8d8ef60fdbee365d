"""Deterministic stabilizing consensus under message adversaries."""

from __future__ import annotations

from .algorithms import MINMAX, MIN_FLOOD, ONE_MESSAGE_KEEPER, AlgorithmSpec, get_algorithm, safe_minmax
from .model import BINARY, CommGraph, LassoPattern, SyncExecution, ValueSet, kernel, parse_pattern
from .simulator import AsyncExecution, AsyncSchedule, Trace, run_async, run_sync, stabilization_verdict
from .topology import DistanceValue, d_nonuniform, d_uniform, view_distance

__version__ = "0.1.0"
