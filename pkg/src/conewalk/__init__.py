"""Renewal structure of random walks on surface groups and free groups."""

__version__ = "0.1.0"

from .automaton import ConeAutomaton, build_automaton, build_classified, count_paths, in_cone, state_of
from .oracle import bfs_oracle
from .renewal import RenewalConfig, detect_renewals, excursion_stats
from .shortlex import distance, get_engine, mul, normal_form
from .walk import DrivingMeasure, LazyAverageDriver, run_lazy_walk, run_walk
from .words import Presentation, format_word, free_reduce, parse_word

__all__ = [
    "ConeAutomaton",
    "DrivingMeasure",
    "LazyAverageDriver",
    "Presentation",
    "RenewalConfig",
    "bfs_oracle",
    "build_automaton",
    "build_classified",
    "count_paths",
    "detect_renewals",
    "distance",
    "excursion_stats",
    "format_word",
    "free_reduce",
    "get_engine",
    "in_cone",
    "mul",
    "normal_form",
    "parse_word",
    "run_lazy_walk",
    "run_walk",
    "state_of",
]
