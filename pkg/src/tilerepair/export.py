"""Text exports of a ConstraintProgram for external MILP and MaxSAT solvers.

LP output follows the CPLEX LP dialect. WCNF output is the classic weighted
DIMACS form with a ``p wcnf`` header and a top weight marking hard clauses.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional

from tilerepair.encode import ConstraintProgram, Literal


class UnsupportedConstruct(ValueError):
    pass


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _expr(coeffs: Iterable[tuple[int, float]]) -> str:
    parts = []
    for v, a in coeffs:
        sign = "-" if a < 0 else "+"
        mag = abs(a)
        term = f"x{v}" if mag == 1 else f"{_num(mag)} x{v}"
        parts.append((sign, term))
    if not parts:
        return ""
    first_sign, first = parts[0]
    out = ("-" + " " if first_sign == "-" else "") + first
    return out + "".join(f" {s} {t}" for s, t in parts[1:])


def export_lp(prog: ConstraintProgram) -> str:
    """Minimize / Subject To / Bounds / Generals; row bounds split into one-sided rows."""
    lines = ["Minimize"]
    obj = [(v, c) for v, c in enumerate(prog.weights) if c]
    if not obj and prog.num_vars:
        lines.append(" obj: 0 x0")
    else:
        lines.append(" obj: " + _expr(obj))
    lines.append("Subject To")
    for row in prog.rows:
        expr = _expr(row.coeffs)
        if not expr:
            if row.lo <= 0 <= row.hi:
                continue
            expr = "0 x0" if prog.num_vars else ""
            if not expr:
                raise UnsupportedConstruct("unsatisfiable empty row in a program without variables")
        if math.isfinite(row.lo) and row.lo == row.hi:
            lines.append(f" {expr} = {_num(row.lo)}")
            continue
        if math.isfinite(row.lo):
            lines.append(f" {expr} >= {_num(row.lo)}")
        if math.isfinite(row.hi):
            lines.append(f" {expr} <= {_num(row.hi)}")
    if prog.num_vars:
        lines.append("Bounds")
        lines.extend(f" 0 <= x{v} <= 1" for v in range(prog.num_vars))
        lines.append("Generals")
        lines.append(" " + " ".join(f"x{v}" for v in range(prog.num_vars)))
    lines.append("End")
    return "\n".join(lines) + "\n"


class _Cnf:
    def __init__(self, num_vars: int):
        self.nv = num_vars
        self.hard: list[list[int]] = []
        self.soft: list[tuple[float, list[int]]] = []

    def new(self) -> int:
        self.nv += 1
        return self.nv

    @staticmethod
    def lit(lit: Literal) -> int:
        return lit.var + 1 if lit.positive else -(lit.var + 1)

    def at_most(self, lits: list[int], k: int, relax: Optional[int] = None) -> None:
        """Sequential counter: at most ``k`` of ``lits`` true unless ``relax`` holds."""
        n = len(lits)
        extra = [] if relax is None else [relax]
        if k >= n:
            return
        if k == 0:
            for x in lits:
                self.hard.append([-x] + extra)
            return
        # s[i][j]: at least j+1 of the first i+1 literals are true
        s = [[self.new() for _ in range(k)] for _ in range(n - 1)]
        self.hard.append([-lits[0], s[0][0]] + extra)
        for j in range(1, k):
            self.hard.append([-s[0][j]] + extra)
        for i in range(1, n - 1):
            x = lits[i]
            self.hard.append([-x, s[i][0]] + extra)
            self.hard.append([-s[i - 1][0], s[i][0]] + extra)
            for j in range(1, k):
                self.hard.append([-x, -s[i - 1][j - 1], s[i][j]] + extra)
                self.hard.append([-s[i - 1][j], s[i][j]] + extra)
            self.hard.append([-x, -s[i - 1][k - 1]] + extra)
        self.hard.append([-lits[n - 1], -s[n - 2][k - 1]] + extra)

    def count(self, lits: list[int], a: int, b: int, relax_lo: Optional[int] = None,
              relax_hi: Optional[int] = None) -> None:
        self.at_most(lits, b, relax_hi)
        # at least a true  <=>  at most n - a false
        self.at_most([-x for x in lits], len(lits) - a, relax_lo)


def export_wcnf(prog: ConstraintProgram) -> str:
    """Weighted DIMACS from the mid-level constraint list.

    Variable ``v`` of the program is DIMACS variable ``v + 1``; counter
    registers follow. Soft implications and soft counts keep their weighting
    variables as relaxation literals with a soft unit ``-omega``; a soft count
    over a single literal with bounds 1..1 becomes the soft unit itself.
    """
    if not prog.boolean_view:
        raise UnsupportedConstruct("program holds rows added below the Boolean API; no CNF view")
    cnf = _Cnf(prog.num_vars)
    lit = _Cnf.lit
    for rec in prog.boolean:
        kind = rec[0]
        if kind == "conj":
            _, kappa, lits = rec
            k = lit(kappa)
            for l in lits:
                cnf.hard.append([-k, lit(l)])
            cnf.hard.append([k] + [-lit(l) for l in lits])
        elif kind == "implies":
            _, i, lits, w, omega = rec
            clause = [-lit(i)] + [lit(l) for l in lits]
            if omega is None:
                cnf.hard.append(clause)
            else:
                cnf.hard.append(clause + [omega + 1])
                cnf.soft.append((w, [-(omega + 1)]))
        elif kind == "count":
            _, lits, a, b, w, soft = rec
            xs = [lit(l) for l in lits]
            if soft is None:
                cnf.count(xs, a, b)
            elif len(xs) == 1 and a == b == 1:
                cnf.soft.append((w, [xs[0]]))
            else:
                alpha, beta = soft
                cnf.count(xs, a, b, alpha + 1, beta + 1)
                cnf.soft.append((w, [-(alpha + 1)]))
                cnf.soft.append((w, [-(beta + 1)]))
        else:
            raise UnsupportedConstruct(f"unknown Boolean record {kind!r}")
    top = 1 + sum(w for w, _ in cnf.soft)
    top_s = _num(math.ceil(top) if not float(top).is_integer() else top)
    lines = [f"p wcnf {cnf.nv} {len(cnf.hard) + len(cnf.soft)} {top_s}"]
    lines.extend(f"{top_s} {' '.join(map(str, c))} 0" for c in cnf.hard)
    lines.extend(f"{_num(w)} {' '.join(map(str, c))} 0" for w, c in cnf.soft)
    return "\n".join(lines) + "\n"
