"""Boolean constraint API lowered to a 0-1 MILP, and the level problem builders.

Every Boolean variable ``v`` becomes an integer column ``x_v`` in [0, 1]
with objective weight 0. The three constraint helpers add rows
``lo <= sum(coef * x) <= hi`` exactly as the mid-level API prescribes; soft
variants add weighting columns whose objective weight is the penalty.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from tilerepair.level import Cell, Level, TileKind
from tilerepair.patterns import PatternRules, adjacencies
from tilerepair.reach import MovementTemplate, move_instances

INF = math.inf


class EncodingError(ValueError):
    pass


class EmptyConjunction(EncodingError):
    pass


class EmptyDisjunction(EncodingError):
    pass


class BadBounds(EncodingError):
    pass


class NonPositiveWeight(EncodingError):
    pass


@dataclass(frozen=True)
class Literal:
    var: int
    positive: bool = True

    def __neg__(self) -> "Literal":
        return Literal(self.var, not self.positive)

    def __repr__(self) -> str:
        return f"x{self.var}" if self.positive else f"~x{self.var}"


def polarity_sum(lits: Sequence[Literal]) -> dict[int, int]:
    """P(L) as a sparse linear expression {var: coefficient}."""
    expr: dict[int, int] = {}
    for lit in lits:
        expr[lit.var] = expr.get(lit.var, 0) + (1 if lit.positive else -1)
    return {v: a for v, a in expr.items() if a != 0}


def negativity_count(lits: Sequence[Literal]) -> int:
    return sum(1 for lit in lits if not lit.positive)


@dataclass(frozen=True)
class Row:
    coeffs: tuple[tuple[int, float], ...]
    lo: float
    hi: float

    def activity(self, x: Sequence[int]) -> float:
        return sum(a * x[v] for v, a in self.coeffs)

    def satisfied(self, x: Sequence[int], tol: float = 1e-9) -> bool:
        act = self.activity(x)
        return self.lo - tol <= act <= self.hi + tol


@dataclass
class ConstraintProgram:
    """0-1 MILP ``min c.x  s.t.  lo <= A x <= hi,  x in {0,1}^n``.

    ``boolean`` keeps the mid-level constraint list for CNF export; it is
    cleared (``boolean_view = False``) once a row is added directly.
    """

    num_vars: int = 0
    weights: list[float] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    boolean: list[tuple] = field(default_factory=list)
    boolean_view: bool = True
    var_tags: list[str] = field(default_factory=list)
    varmap: Optional["VarMap"] = None
    block_tag: Optional[str] = None
    row_tags: list[Optional[str]] = field(default_factory=list)

    # -- variables -------------------------------------------------------
    def make_var(self, tag: str = "x") -> int:
        self.num_vars += 1
        self.weights.append(0.0)
        self.var_tags.append(tag)
        return self.num_vars - 1

    def make_lit(self, tag: str = "x") -> Literal:
        return Literal(self.make_var(tag))

    def _check_lits(self, lits: Sequence[Literal]) -> None:
        for lit in lits:
            if not 0 <= lit.var < self.num_vars:
                raise EncodingError(f"literal {lit!r} refers to an unallocated variable")

    def _weighted_var(self, w: float, tag: str) -> int:
        if not w > 0:
            raise NonPositiveWeight(f"soft weight must be positive, got {w}")
        v = self.make_var(tag)
        self.weights[v] = float(w)
        return v

    def add_row(self, expr: dict[int, float], lo: float, hi: float) -> int:
        """Low-level row; drops the Boolean view since it cannot be mirrored."""
        self.boolean_view = False
        return self._row(expr, lo, hi)

    def _row(self, expr: dict[int, float], lo: float, hi: float) -> int:
        coeffs = tuple(sorted((v, a) for v, a in expr.items() if a != 0))
        for v, _ in coeffs:
            if not 0 <= v < self.num_vars:
                raise EncodingError(f"row refers to unallocated variable {v}")
        self.rows.append(Row(coeffs, float(lo), float(hi)))
        self.row_tags.append(self.block_tag)
        return len(self.rows) - 1

    # -- mid-level API ---------------------------------------------------
    def make_conj(self, lits: Sequence[Literal]) -> Literal:
        lits = list(lits)
        if not lits:
            raise EmptyConjunction("conjunction of no literals")
        self._check_lits(lits)
        n, p, neg = len(lits), polarity_sum(lits), negativity_count(lits)
        kappa = self.make_var("conj")
        upper = {v: -a for v, a in p.items()}
        upper[kappa] = upper.get(kappa, 0) + n
        self._row(upper, -INF, neg)
        lower = dict(p)
        lower[kappa] = lower.get(kappa, 0) - n
        self._row(lower, -INF, n - 1 - neg)
        self.boolean.append(("conj", Literal(kappa), tuple(lits)))
        return Literal(kappa)

    def cnstr_implies_disj(self, i: Literal, lits: Sequence[Literal], w: Optional[float] = None) -> Optional[int]:
        """``i -> OR(lits)``; returns the weighting variable when soft."""
        lits = list(lits)
        if not lits:
            raise EmptyDisjunction("implication into an empty disjunction")
        self._check_lits([i] + lits)
        expr = polarity_sum([i])
        for v, a in polarity_sum(lits).items():
            expr[v] = expr.get(v, 0) - a
        rhs = -negativity_count([i]) + negativity_count(lits)
        omega = None
        if w is not None:
            omega = self._weighted_var(w, "soft")
            expr[omega] = expr.get(omega, 0) - 1
        self._row(expr, -INF, rhs)
        self.boolean.append(("implies", i, tuple(lits), w, omega))
        return omega

    def cnstr_count(self, lits: Sequence[Literal], a: int, b: int,
                    w: Optional[float] = None) -> Optional[tuple[int, int]]:
        """Between ``a`` and ``b`` of ``lits`` true; returns (alpha, beta) when soft."""
        lits = list(lits)
        if not 0 <= a <= b <= len(lits):
            raise BadBounds(f"count bounds {a}..{b} invalid for {len(lits)} literals")
        self._check_lits(lits)
        n, p, neg = len(lits), polarity_sum(lits), negativity_count(lits)
        if w is None:
            self._row(p, a - neg, b - neg)
            self.boolean.append(("count", tuple(lits), a, b, None, None))
            return None
        alpha = self._weighted_var(w, "soft")
        beta = self._weighted_var(w, "soft")
        lower = dict(p)
        lower[alpha] = lower.get(alpha, 0) + n
        self._row(lower, a - neg, INF)
        upper = dict(p)
        upper[beta] = upper.get(beta, 0) - n
        self._row(upper, -INF, b - neg)
        self.boolean.append(("count", tuple(lits), a, b, w, (alpha, beta)))
        return alpha, beta

    # -- evaluation ------------------------------------------------------
    def objective(self, x: Sequence[int]) -> float:
        return float(sum(c * x[v] for v, c in enumerate(self.weights) if c))

    def feasible(self, x: Sequence[int], skip_tag: Optional[str] = None) -> bool:
        if len(x) != self.num_vars or any(v not in (0, 1) for v in x):
            return False
        return all(row.satisfied(x) for row, tag in zip(self.rows, self.row_tags)
                   if skip_tag is None or tag != skip_tag)

    def validate(self) -> None:
        if len(self.weights) != self.num_vars or len(self.var_tags) != self.num_vars:
            raise EncodingError("weight vector length does not match variable count")
        for row in self.rows:
            if row.lo > row.hi:
                raise EncodingError(f"row with lo {row.lo} > hi {row.hi}")
            for v, _ in row.coeffs:
                if not 0 <= v < self.num_vars:
                    raise EncodingError(f"row refers to unallocated variable {v}")

    def to_json(self) -> dict:
        def bound(x):
            return None if math.isinf(x) else x
        return {
            "num_vars": self.num_vars,
            "weights": self.weights,
            "tags": self.var_tags,
            "rows": [{"coeffs": [list(c) for c in r.coeffs], "lo": bound(r.lo), "hi": bound(r.hi)}
                     for r in self.rows],
        }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)


def make_var(prog: ConstraintProgram) -> int:
    return prog.make_var()


def make_conj(prog: ConstraintProgram, lits: Sequence[Literal]) -> Literal:
    return prog.make_conj(lits)


def cnstr_implies_disj(prog: ConstraintProgram, i: Literal, lits: Sequence[Literal], w: Optional[float] = None):
    return prog.cnstr_implies_disj(i, lits, w)


def cnstr_count(prog: ConstraintProgram, lits: Sequence[Literal], a: int, b: int, w: Optional[float] = None):
    return prog.cnstr_count(lits, a, b, w)


# ---------------------------------------------------------------------------
# level problems

REACH_BLOCK = "reach"


@dataclass
class VarMap:
    """Bookkeeping between a level grid and program variables.

    ``tile[i][k]`` is the variable for cell index ``i`` (row-major) having
    kind ``k``. ``soft[i]`` is ``(alpha, beta, weight, original_kind)`` for
    repair problems. ``cost[i][k]`` is the objective weight of each tile
    variable, used for value ordering.
    """

    rows: int
    cols: int
    domain: str
    tile: list[list[int]]
    template: MovementTemplate
    soft: Optional[list[tuple[int, int, float, TileKind]]] = None
    preferred: Optional[list[TileKind]] = None
    reach: dict[tuple[Cell, int], int] = field(default_factory=dict)
    conj: list[tuple[int, tuple[Literal, ...]]] = field(default_factory=list)
    mark: dict[Cell, int] = field(default_factory=dict)
    horizon: int = 0
    requires_reach: bool = False
    start: Optional[Cell] = None
    goal: Optional[Cell] = None

    def var(self, cell: Cell, kind: TileKind) -> int:
        return self.tile[cell[0] * self.cols + cell[1]][kind]

    def lit(self, cell: Cell, kind: TileKind, positive: bool = True) -> Literal:
        return Literal(self.var(cell, kind), positive)

    def decode(self, x: Sequence[int]) -> Level:
        cells = []
        for i, kinds in enumerate(self.tile):
            hot = [k for k in TileKind if x[kinds[k]] == 1]
            if len(hot) != 1:
                raise EncodingError(f"cell {divmod(i, self.cols)} decodes to {len(hot)} kinds")
            cells.append(hot[0])
        return Level(self.rows, self.cols, tuple(cells), self.domain)

    def has_layers(self) -> bool:
        return bool(self.reach)

    def fill_layers(self, x: list[int], level: Level) -> None:
        """Set layered reachability and conjunction columns to their true values."""
        dist = _true_distances(level, self.template)
        for (cell, k), v in self.reach.items():
            x[v] = 1 if dist.get(cell, INF) <= k else 0
        for kappa, lits in self.conj:
            x[kappa] = int(all((x[l.var] == 1) == l.positive for l in lits))


def _true_distances(level: Level, template: MovementTemplate) -> dict[Cell, int]:
    moves = move_instances(level.rows, level.cols, template)
    dist = {level.start: 0}
    queue = deque([level.start])
    while queue:
        u = queue.popleft()
        for m in moves[u[0] * level.cols + u[1]]:
            if m.dst in dist:
                continue
            if all(level[o].traversable for o in m.open) and all(level[s] is TileKind.SOLID for s in m.solid):
                dist[m.dst] = dist[u] + 1
                queue.append(m.dst)
    return dist


def _geometric_distances(rows: int, cols: int, template: MovementTemplate, start: Cell) -> dict[Cell, int]:
    """BFS distance ignoring tile requirements; a lower bound on real distance."""
    moves = move_instances(rows, cols, template)
    dist = {start: 0}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for m in moves[u[0] * cols + u[1]]:
            if m.dst not in dist:
                dist[m.dst] = dist[u] + 1
                queue.append(m.dst)
    return dist


def _tile_vars(prog: ConstraintProgram, rows: int, cols: int,
               order: Optional[Sequence[int]] = None) -> list[list[int]]:
    """One variable per (cell, kind) plus the one-hot row, allocated in ``order``."""
    tile: list[list[int]] = [[] for _ in range(rows * cols)]
    for i in (range(rows * cols) if order is None else order):
        kinds = [prog.make_var("tile") for _ in TileKind]
        prog.cnstr_count([Literal(v) for v in kinds], 1, 1)
        tile[i] = kinds
    return tile


def _pattern_constraints(prog: ConstraintProgram, vm: VarMap, rules: PatternRules) -> None:
    for a, b, direction in adjacencies(vm.rows, vm.cols):
        allowed = rules.allowed(direction)
        for ka in TileKind:
            ok = [kb for kb in TileKind if (ka, kb) in allowed]
            if len(ok) == len(TileKind):
                continue
            if ok:
                prog.cnstr_implies_disj(vm.lit(a, ka), [vm.lit(b, kb) for kb in ok])
            else:
                prog.cnstr_count([vm.lit(a, ka)], 0, 0)


def _move_condition(vm: VarMap, move) -> list[Literal]:
    """Literals that together say the move's open/solid requirements hold."""
    return ([vm.lit(o, TileKind.SOLID, False) for o in move.open]
            + [vm.lit(s, TileKind.SOLID) for s in move.solid])


def _layered_reachability(prog: ConstraintProgram, vm: VarMap, horizon: int) -> None:
    rows, cols, start, goal = vm.rows, vm.cols, vm.start, vm.goal
    geo = _geometric_distances(rows, cols, vm.template, start)
    if goal not in geo or geo[goal] > horizon:
        prog.block_tag = REACH_BLOCK
        prog.cnstr_count([vm.lit(goal, TileKind.GOAL)], 0, 0)
        prog.block_tag = None
        return
    moves = move_instances(rows, cols, vm.template)
    incoming: dict[Cell, list] = {}
    for per_cell in moves:
        for m in per_cell:
            incoming.setdefault(m.dst, []).append(m)
    prog.block_tag = REACH_BLOCK
    layer = {start: prog.make_var("reach")}
    vm.reach[(start, 0)] = layer[start]
    prog.cnstr_count([Literal(layer[start])], 1, 1)
    for k in range(1, horizon + 1):
        nxt = {}
        for cell, d in geo.items():
            if d > k:
                continue
            v = prog.make_var("reach")
            vm.reach[(cell, k)] = v
            nxt[cell] = v
            supports = []
            if cell in layer:
                supports.append(Literal(layer[cell]))
            for m in incoming.get(cell, ()):
                if m.src in layer:
                    lits = (Literal(layer[m.src]),) + tuple(_move_condition(vm, m))
                    kappa = prog.make_conj(lits)
                    vm.conj.append((kappa.var, lits))
                    supports.append(kappa)
            if supports:
                prog.cnstr_implies_disj(Literal(v), supports)
                # converse makes the layer exactly "reachable within k"
                for s in supports:
                    prog.cnstr_implies_disj(s, [Literal(v)])
            else:
                prog.cnstr_count([Literal(v)], 0, 0)
        layer = nxt
    prog.cnstr_count([Literal(vm.reach[(goal, horizon)])], 1, 1)
    prog.block_tag = None


def build_repair_problem(level: Level, weights: np.ndarray, template: MovementTemplate,
                         patterns: Optional[PatternRules], layered: bool = True,
                         horizon: Optional[int] = None) -> tuple[ConstraintProgram, VarMap]:
    """Weighted repair: any solvable, pattern-valid level; deviation from
    ``level`` at a cell costs that cell's weight.

    With ``layered=False`` the distance-layered reachability rows are left
    out and the program relies on the solver's lazy reachability oracle.
    """
    weights = np.asarray(weights)
    if weights.shape != level.shape:
        raise EncodingError(f"weights shape {weights.shape} does not match level {level.shape}")
    prog = ConstraintProgram()
    tile = _tile_vars(prog, level.rows, level.cols)
    vm = VarMap(level.rows, level.cols, level.domain, tile, template,
                preferred=list(level.cells), requires_reach=True,
                start=level.start, goal=level.goal)
    prog.varmap = vm
    if patterns is not None:
        _pattern_constraints(prog, vm, patterns)
    for kind, cell in ((TileKind.START, level.start), (TileKind.GOAL, level.goal)):
        prog.cnstr_count([vm.lit(cell, kind)], 1, 1)
        prog.cnstr_count([Literal(t[kind]) for t in tile], 1, 1)
    if layered:
        vm.horizon = level.rows * level.cols if horizon is None else horizon
        _layered_reachability(prog, vm, vm.horizon)
    soft = []
    for i, kind in enumerate(level.cells):
        w = float(weights.flat[i])
        alpha, beta = prog.cnstr_count([Literal(tile[i][kind])], 1, 1, w=w)
        soft.append((alpha, beta, w, kind))
    vm.soft = soft
    return prog, vm


def build_unsolvable_problem(rows: int, cols: int, template: MovementTemplate,
                             patterns: Optional[PatternRules], seed: int,
                             domain: str = "custom", unreachable: bool = True,
                             solid_density: float = 0.35,
                             endpoint_region: Optional[int] = None) -> tuple[ConstraintProgram, VarMap]:
    """Level generation; with ``unreachable`` the goal is provably cut off.

    A seeded random target level gets cost 0 per cell and every other tile
    kind a small seeded random cost, so optima differ between seeds. With
    ``endpoint_region`` the target start lies in the top-left and the target
    goal in the bottom-right square of that size. Tile variables are
    allocated outward from the target start, so input-order search settles
    the start side first and any cut forms around the goal.
    """
    rng = np.random.default_rng(seed)
    n = rows * cols
    target = np.where(rng.random(n) < solid_density, int(TileKind.SOLID), int(TileKind.EMPTY))
    if endpoint_region is not None:
        k = max(1, min(endpoint_region, rows, cols))
        s = int(rng.integers(k)) * cols + int(rng.integers(k))
        g = (rows - 1 - int(rng.integers(k))) * cols + (cols - 1 - int(rng.integers(k)))
        if s == g:
            g = n - 1 if s != n - 1 else 0
        target[s], target[g] = TileKind.START, TileKind.GOAL
    elif n >= 2:
        s, g = rng.choice(n, size=2, replace=False)
        target[s], target[g] = TileKind.START, TileKind.GOAL
    sr, sc = divmod(int(s), cols)
    order = sorted(range(n), key=lambda i: (abs(i // cols - sr) + abs(i % cols - sc), i))
    prog = ConstraintProgram()
    tile = _tile_vars(prog, rows, cols, order)
    vm = VarMap(rows, cols, domain, tile, template,
                preferred=[TileKind(int(k)) for k in target])
    prog.varmap = vm
    for i in range(n):
        for k in TileKind:
            if k != target[i]:
                prog.weights[tile[i][k]] = float(np.round(rng.uniform(0.1, 1.0), 6))
    if patterns is not None:
        _pattern_constraints(prog, vm, patterns)
    for kind in (TileKind.START, TileKind.GOAL):
        prog.cnstr_count([Literal(t[kind]) for t in tile], 1, 1)
    if unreachable:
        moves = move_instances(rows, cols, template)
        for r in range(rows):
            for c in range(cols):
                vm.mark[(r, c)] = prog.make_var("mark")
        for i, t in enumerate(tile):
            cell = divmod(i, cols)
            m = Literal(vm.mark[cell])
            # start forces its mark, goal forbids its mark
            prog.cnstr_implies_disj(Literal(t[TileKind.START]), [m])
            prog.cnstr_implies_disj(Literal(t[TileKind.GOAL]), [-m])
        for per_cell in moves:
            for mv in per_cell:
                blockers = [-lit for lit in _move_condition(vm, mv)]
                prog.cnstr_implies_disj(Literal(vm.mark[mv.src]), blockers + [Literal(vm.mark[mv.dst])])
    return prog, vm
