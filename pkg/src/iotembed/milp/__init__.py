"""Exact embedding model: compilation, LP export, solving and checking."""

from .checker import CheckReport, FamilyResult, check_solution
from .compiler import Layout, candidate_hosts, compile_instance
from .instance import Constraint, MilpInstance, Variable
from .lpformat import emit_lp
from .solve import InfeasibleError, LimitExceededError, SolveLimits, decode, solve_exact

__all__ = [
    "CheckReport",
    "FamilyResult",
    "check_solution",
    "emit_lp",
    "Constraint",
    "InfeasibleError",
    "Layout",
    "LimitExceededError",
    "MilpInstance",
    "SolveLimits",
    "Variable",
    "candidate_hosts",
    "compile_instance",
    "decode",
    "solve_exact",
]
