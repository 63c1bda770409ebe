"""Solver-agnostic linear model: variables, tagged constraints, objective."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import scipy.sparse as sp

SENSES = ("<=", "=", ">=")
VALID_TAGS = {str(i) for i in range(5, 37)} | {"aux"}


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = "continuous"  # "binary" or "continuous" (lower bound 0)
    upper: Optional[float] = None


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: tuple[tuple[str, float], ...]
    sense: str
    rhs: float
    tag: str


@dataclass
class MilpInstance:
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    big_m: float = 1e8
    # compile-time metadata used to decode solver output; never read by the checker
    context: Any = None
    hints: list[str] = field(default_factory=list)
    _index: dict[str, int] = field(default_factory=dict, repr=False)
    _arrays: Any = field(default=None, repr=False, compare=False)

    def add_var(self, name: str, kind: str = "continuous", upper: Optional[float] = None) -> str:
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        if kind not in ("binary", "continuous"):
            raise ValueError(f"bad variable kind {kind}")
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, kind, upper))
        return name

    def add_con(self, coeffs, sense: str, rhs: float, tag: str, name: Optional[str] = None) -> None:
        if sense not in SENSES:
            raise ValueError(f"bad sense {sense}")
        merged: dict[str, float] = {}
        for var, coef in coeffs:
            merged[var] = merged.get(var, 0.0) + float(coef)
        name = name or f"c{len(self.constraints)}_t{tag}"
        self.constraints.append(
            Constraint(name, tuple((v, c) for v, c in merged.items() if c != 0.0), sense, float(rhs), tag)
        )

    def index(self, name: str) -> int:
        return self._index[name]

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def count_by_tag(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for c in self.constraints:
            out[c.tag] = out.get(c.tag, 0) + 1
        return out

    def constraints_with_tag(self, tag: str) -> list[Constraint]:
        return [c for c in self.constraints if c.tag == tag]

    def validate(self) -> list[str]:
        """Problems with the instance itself (undeclared names, bad tags)."""
        problems = []
        declared = set(self._index)
        for c in self.constraints:
            if c.tag not in VALID_TAGS:
                problems.append(f"{c.name}: invalid provenance tag {c.tag!r}")
            for v, _ in c.coeffs:
                if v not in declared:
                    problems.append(f"{c.name}: undeclared variable {v}")
        for v in self.objective:
            if v not in declared:
                problems.append(f"objective: undeclared variable {v}")
        return problems

    def to_arrays(self, drop_tags: frozenset = frozenset()):
        """(c, A, row_lo, row_hi, lb, ub, integrality) for matrix solvers."""
        key = (frozenset(drop_tags), len(self.variables), len(self.constraints), tuple(sorted(self.objective.items())))
        if self._arrays is not None and self._arrays[0] == key:
            return tuple(a.copy() for a in self._arrays[1])
        out = self._build_arrays(drop_tags)
        self._arrays = (key, out)
        return tuple(a.copy() for a in out)

    def _build_arrays(self, drop_tags):
        n = self.n_vars
        c = np.zeros(n)
        for v, coef in self.objective.items():
            c[self._index[v]] += coef
        rows, cols, vals, lo, hi = [], [], [], [], []
        r = 0
        for con in self.constraints:
            if con.tag in drop_tags:
                continue
            for v, coef in con.coeffs:
                rows.append(r)
                cols.append(self._index[v])
                vals.append(coef)
            lo.append(con.rhs if con.sense in ("=", ">=") else -np.inf)
            hi.append(con.rhs if con.sense in ("=", "<=") else np.inf)
            r += 1
        A = sp.csr_matrix((vals, (rows, cols)), shape=(r, n))
        lb = np.zeros(n)
        ub = np.array(
            [1.0 if v.kind == "binary" else (np.inf if v.upper is None else v.upper) for v in self.variables]
        )
        integrality = np.array([1 if v.kind == "binary" else 0 for v in self.variables])
        return c, A, np.array(lo), np.array(hi), lb, ub, integrality

    def objective_value(self, x: dict[str, float]) -> float:
        return sum(coef * x.get(v, 0.0) for v, coef in self.objective.items())
