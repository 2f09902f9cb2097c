"""Simulation and multi-agent learning for a hydrogen-based building multi-energy system."""

from .env import EnvState, ExogenousSlot, RepairedAction, SlotSettlement, SystemParams, settle_slot
from .game import MarkovGame, build_action_grids
from .traces import TraceSet, load_traces, synthesize_traces, trace_stats

__version__ = "0.1.0"
