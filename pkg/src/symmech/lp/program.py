"""Sparse linear programs with exact rational coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Mapping

from ..model import as_fraction

LE, EQ, GE = "<=", "=", ">="


@dataclass
class Row:
    coeffs: dict[int, Fraction]
    sense: str
    rhs: Fraction
    name: Hashable = None


@dataclass
class LpSolution:
    status: str  # "optimal", "infeasible", "unbounded"
    objective: Fraction | float | None = None
    values: dict[Hashable, Fraction] = field(default_factory=dict)
    exact: bool = True
    method: str = ""
    certified: bool = False

    def __getitem__(self, name):
        return self.values[name]

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class LinearProgram:
    """Maximize ``c.x`` subject to sparse rows and variable bounds.

    Variables are addressed by hashable names; ``None`` bounds mean
    unbounded in that direction.
    """

    def __init__(self, name: str = "lp"):
        self.name = name
        self.names: list[Hashable] = []
        self.index: dict[Hashable, int] = {}
        self.lower: list[Fraction | None] = []
        self.upper: list[Fraction | None] = []
        self.objective: dict[int, Fraction] = {}
        self.rows: list[Row] = []

    def __repr__(self):
        return f"LinearProgram({self.name!r}, vars={self.num_vars}, rows={self.num_rows})"

    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def add_var(self, name: Hashable, lower=Fraction(0), upper=None, obj=0) -> int:
        if name in self.index:
            raise KeyError(f"duplicate variable {name!r}")
        k = len(self.names)
        self.names.append(name)
        self.index[name] = k
        self.lower.append(None if lower is None else as_fraction(lower))
        self.upper.append(None if upper is None else as_fraction(upper))
        if obj:
            self.objective[k] = as_fraction(obj)
        return k

    def set_objective(self, coeffs: Mapping[Hashable, object]):
        self.objective = {}
        for name, c in coeffs.items():
            k = self.index[name]
            c = as_fraction(c)
            if c:
                self.objective[k] = self.objective.get(k, Fraction(0)) + c

    def add_row(self, coeffs: Mapping[Hashable, object] | Iterable[tuple[Hashable, object]],
                sense: str, rhs=0, name: Hashable = None) -> int:
        if sense not in (LE, EQ, GE):
            raise ValueError(f"bad sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        acc: dict[int, Fraction] = {}
        for var, c in items:
            k = self.index[var]
            acc[k] = acc.get(k, Fraction(0)) + as_fraction(c)
        acc = {k: c for k, c in acc.items() if c}
        self.rows.append(Row(acc, sense, as_fraction(rhs), name))
        return len(self.rows) - 1

    def row_names(self, prefix) -> list:
        return [r.name for r in self.rows if isinstance(r.name, tuple) and r.name[0] == prefix]

    def count_vars(self, prefix) -> int:
        return sum(1 for n in self.names if isinstance(n, tuple) and n[0] == prefix)

    def count_rows(self, prefix) -> int:
        return len(self.row_names(prefix))

    # -- evaluation ----------------------------------------------------------------
    def evaluate(self, values: Mapping[Hashable, Fraction]) -> Fraction:
        return sum((c * values[self.names[k]] for k, c in self.objective.items()), Fraction(0))

    def violations(self, values: Mapping[Hashable, Fraction], tol=0) -> list:
        """Rows and bounds the assignment breaks (exact when ``tol == 0``)."""
        bad = []
        for k, name in enumerate(self.names):
            x = values[name]
            if self.lower[k] is not None and x < self.lower[k] - tol:
                bad.append(("lower", name))
            if self.upper[k] is not None and x > self.upper[k] + tol:
                bad.append(("upper", name))
        for r in self.rows:
            act = sum((c * values[self.names[k]] for k, c in r.coeffs.items()), Fraction(0))
            if r.sense == LE and act > r.rhs + tol:
                bad.append(("row", r.name))
            elif r.sense == GE and act < r.rhs - tol:
                bad.append(("row", r.name))
            elif r.sense == EQ and abs(act - r.rhs) > tol:
                bad.append(("row", r.name))
        return bad

    # -- export ---------------------------------------------------------------------
    @property
    def objective_scale(self) -> int:
        """Factor applied to the objective in :meth:`to_cplex_lp`; divide an external optimum by it."""
        return _lcm_den(self.objective.values())

    def to_cplex_lp(self) -> str:
        """CPLEX LP text with integer coefficients.

        Each row (and the objective) is multiplied by the lcm of its
        denominators, so the file is exact.  Fractional bounds become rows.
        Comment lines map the ``x<k>`` columns back to variable names.
        """
        out = [f"\\ {self.name}"]
        for k, name in enumerate(self.names):
            out.append(f"\\ x{k} = {name}")
        oscale = self.objective_scale
        out.append(f"\\ objective scaled by {oscale}")
        out.append("Maximize")
        out.append(" obj: " + (_terms({k: c * oscale for k, c in self.objective.items()}) or "0 x0"))
        out.append("Subject To")
        for r_i, r in enumerate(self.rows):
            s = _lcm_den(list(r.coeffs.values()) + [r.rhs])
            lhs = _terms({k: c * s for k, c in r.coeffs.items()}) or "0 x0"
            out.append(f" c{r_i}: {lhs} {r.sense} {int(r.rhs * s)}")
        bounds = []
        extra = 0
        for k in range(self.num_vars):
            lo, hi = self.lower[k], self.upper[k]
            for val, op in ((lo, ">="), (hi, "<=")):
                if val is not None and val.denominator != 1:
                    out.append(f" b{extra}: {val.denominator} x{k} {op} {val.numerator}")
                    extra += 1
            lo_s = "-inf" if lo is None else (str(int(lo)) if lo.denominator == 1 else "-inf")
            hi_s = "+inf" if hi is None else (str(int(hi)) if hi.denominator == 1 else "+inf")
            if lo_s == "-inf" and hi_s == "+inf":
                bounds.append(f" x{k} free")
            else:
                bounds.append(f" {lo_s} <= x{k} <= {hi_s}")
        out.append("Bounds")
        out.extend(bounds)
        out.append("End")
        return "\n".join(out) + "\n"


def _lcm_den(vals) -> int:
    dens = [Fraction(v).denominator for v in vals]
    return math.lcm(*dens) if dens else 1


def _terms(coeffs: Mapping[int, Fraction]) -> str:
    parts = []
    for k in sorted(coeffs):
        c = int(coeffs[k])
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        parts.append(f"{sign} {abs(c)} x{k}")
    s = " ".join(parts)
    return s[2:] if s.startswith("+ ") else s
