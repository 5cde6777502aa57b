"""Correct-by-construction control synthesis for multi-agent linear systems
under bounded-time temporal specifications.

Pipeline: abstract each agent's continuous dynamics over a labeled
rectangular partition into a weighted transition system, cross it with the
automaton of its local formula, synchronize the agents, cross with the team
automaton, search the result for a clock-feasible accepting lasso, and
validate the projected plan by closed-loop simulation plus an independent
satisfaction oracle.
"""

__version__ = "0.1.0"

from .abstraction import (AffineController, LinearAgent, WTS, build_wts,
                          max_transition_time, min_cross_term,
                          synthesize_controller)
from .automata import (GlobalBWTS, LocalBWTS, ProductBWTS, agent_product,
                       global_product, local_product, savings_ratio,
                       state_bound, x2_state_bound)
from .geometry import Partition, Rectangle, Wall, build_partition
from .mitl import Formula, TimedWord, evaluate, holds, parse
from .synthesis import (Plan, TimedRun, find_accepting_run, oracle_search,
                        project, verify_plan)
from .tba import TBA, accepts_finite, compile_formula, load_tba

__all__ = [
    "AffineController", "Formula", "GlobalBWTS", "LinearAgent", "LocalBWTS",
    "Partition", "Plan", "ProductBWTS", "Rectangle", "TBA", "TimedRun",
    "TimedWord", "WTS", "Wall", "accepts_finite", "agent_product",
    "build_partition", "build_wts", "compile_formula", "evaluate",
    "find_accepting_run", "global_product", "holds", "load_tba",
    "local_product", "max_transition_time", "min_cross_term", "oracle_search",
    "parse", "project", "savings_ratio", "state_bound",
    "synthesize_controller", "verify_plan", "x2_state_bound",
]
