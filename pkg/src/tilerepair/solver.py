"""Exact depth-first branch-and-bound for 0-1 programs, plus portfolio racing.

The search keeps, for every row, the minimum and maximum activity reachable
given the current partial assignment. A row forces a free column whenever
one of its two values would push the activity past a bound. The objective
bound is the committed weight plus, for level programs, a per-cell
disagreement term and (with the lazy oracle) a shortest-path bound on the
weight that still has to be spent opening a route from start to goal.
"""

from __future__ import annotations

import heapq
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from tilerepair.encode import REACH_BLOCK, ConstraintProgram
from tilerepair.level import TileKind
from tilerepair.reach import check_solvable, move_instances

log = logging.getLogger(__name__)

EPS = 1e-9
BRANCHING = ("lowest-weight-first", "most-constrained-first", "input-order")


class MalformedProgram(ValueError):
    pass


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    TIMEOUT = "Timeout"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SolverConfig:
    branching: str = "lowest-weight-first"
    time_limit: float = 60.0
    seed: int = 0
    use_lazy_oracle: bool = True
    # stop after this many nodes; an incumbent is then reported with Timeout
    node_limit: Optional[int] = None
    # stop at the first feasible point (reported as Timeout: optimality unproven)
    first_solution: bool = False

    def __post_init__(self) -> None:
        if self.branching not in BRANCHING:
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")

    @property
    def config_id(self) -> str:
        lazy = "lazy" if self.use_lazy_oracle else "rows"
        return f"{self.branching}/{lazy}/s{self.seed}"


DEFAULT_CONFIGS = (
    SolverConfig("lowest-weight-first"),
    SolverConfig("most-constrained-first", seed=1),
    SolverConfig("input-order", seed=2),
)


@dataclass
class SolveResult:
    status: Status
    assignment: Optional[list[int]]
    objective: Optional[float]
    nodes_explored: int
    wall_time: float
    config_id: str
    incumbents: list[tuple[int, float]] = field(default_factory=list)

    def csv_row(self) -> str:
        obj = "" if self.objective is None else f"{self.objective:g}"
        return f"{self.config_id},{self.status},{obj},{self.nodes_explored},{self.wall_time:.6f}"


SOLVER_LOG_HEADER = "config_id,status,objective,nodes,wall_time_s"


class _Search:
    def __init__(self, prog: ConstraintProgram, cfg: SolverConfig, cancel: Optional[threading.Event]):
        prog.validate()
        self.prog, self.cfg, self.cancel = prog, cfg, cancel
        vm = prog.varmap
        self.vm = vm
        n = prog.num_vars
        self.n = n
        self.c = [float(w) for w in prog.weights]
        layered = vm is not None and vm.has_layers()
        self.lazy = vm is not None and vm.requires_reach and cfg.use_lazy_oracle
        if vm is not None and vm.requires_reach and not layered and not cfg.use_lazy_oracle:
            raise MalformedProgram("program has no reachability rows; the lazy oracle is required")

        skip_rows = self.lazy and layered
        self.ignored = [False] * n
        if skip_rows:
            for v in vm.reach.values():
                self.ignored[v] = True
            for kappa, _ in vm.conj:
                self.ignored[kappa] = True

        self.rows: list[list[tuple[int, float]]] = []
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.var_rows: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for row, tag in zip(prog.rows, prog.row_tags):
            if skip_rows and tag == REACH_BLOCK:
                continue
            r = len(self.rows)
            self.rows.append(list(row.coeffs))
            self.lo.append(row.lo)
            self.hi.append(row.hi)
            for v, a in row.coeffs:
                self.var_rows[v].append((r, a))
        self.maxabs = [max((abs(a) for _, a in coeffs), default=0.0) for coeffs in self.rows]
        self.minact = [sum(min(0.0, a) for _, a in coeffs) for coeffs in self.rows]
        self.maxact = [sum(max(0.0, a) for _, a in coeffs) for coeffs in self.rows]

        self.val = [-1] * n
        self.trail: list[int] = []
        self.committed = 0.0
        self.neg_free = sum(w for v, w in enumerate(self.c) if w < 0 and not self.ignored[v])

        rng = np.random.default_rng(cfg.seed)
        self.rank = [int(x) for x in rng.permutation(n)] if n else []
        self.tile_var = [False] * n
        self.cells: list[list[int]] = []
        self.cell_terms = False
        if vm is not None:
            self.cells = [list(kinds) for kinds in vm.tile]
            for kinds in self.cells:
                for v in kinds:
                    self.tile_var[v] = True
            self.cell_terms = all(self.c[v] >= 0 for kinds in self.cells for v in kinds)
            if cfg.branching == "input-order":
                self.cell_rank = [min(kinds) for kinds in self.cells]
            else:
                self.cell_rank = [int(x) for x in rng.permutation(len(self.cells))]
            self.soft = vm.soft
            self.preferred = vm.preferred
            if self.cell_terms:
                # tile costs enter the bound through the per-cell term instead
                self.neg_free = sum(w for v, w in enumerate(self.c)
                                    if w < 0 and not self.ignored[v] and not self.tile_var[v])
        # the route bound holds whichever way reachability is enforced
        self.route = vm is not None and vm.requires_reach and vm.start is not None
        self.moves = move_instances(vm.rows, vm.cols, vm.template) if self.route else None

        degree = [len(rs) for rs in self.var_rows]
        others = [v for v in range(n) if not self.ignored[v] and not self.tile_var[v]]
        if cfg.branching == "input-order":
            key = lambda v: v
        elif cfg.branching == "most-constrained-first":
            key = lambda v: (-degree[v], self.rank[v])
        else:
            key = lambda v: (self.c[v], self.rank[v])
        self.order = sorted(others, key=key)

        self.nodes = 0
        self.best: Optional[list[int]] = None
        self.best_obj = float("inf")
        self.incumbents: list[tuple[int, float]] = []
        self.deadline = None

    # -- assignment and propagation ---------------------------------------
    def _assign(self, v: int, value: int, queue: list[int]) -> bool:
        self.val[v] = value
        self.trail.append(v)
        w = self.c[v]
        if w:
            if value:
                self.committed += w
            if w < 0 and not (self.cell_terms and self.tile_var[v]):
                self.neg_free -= w
        ok = True
        minact, maxact, lo, hi = self.minact, self.maxact, self.lo, self.hi
        for r, a in self.var_rows[v]:
            if a > 0:
                if value:
                    minact[r] += a
                else:
                    maxact[r] -= a
            else:
                if value:
                    maxact[r] += a
                else:
                    minact[r] -= a
            if minact[r] > hi[r] + EPS or maxact[r] < lo[r] - EPS:
                ok = False
            queue.append(r)
        return ok

    def _undo(self, length: int) -> None:
        minact, maxact, val, c = self.minact, self.maxact, self.val, self.c
        trail = self.trail
        while len(trail) > length:
            v = trail.pop()
            value = val[v]
            w = c[v]
            if w:
                if value:
                    self.committed -= w
                if w < 0 and not (self.cell_terms and self.tile_var[v]):
                    self.neg_free += w
            for r, a in self.var_rows[v]:
                if a > 0:
                    if value:
                        minact[r] -= a
                    else:
                        maxact[r] += a
                else:
                    if value:
                        maxact[r] -= a
                    else:
                        minact[r] += a
            val[v] = -1

    def _propagate(self, queue: list[int]) -> bool:
        rows, val, minact, maxact, lo, hi, maxabs = (
            self.rows, self.val, self.minact, self.maxact, self.lo, self.hi, self.maxabs)
        while queue:
            r = queue.pop()
            slack_hi = hi[r] - minact[r]
            slack_lo = maxact[r] - lo[r]
            if slack_hi < -EPS or slack_lo < -EPS:
                return False
            if maxabs[r] <= slack_hi + EPS and maxabs[r] <= slack_lo + EPS:
                continue
            for v, a in rows[r]:
                if val[v] != -1:
                    continue
                aa = a if a > 0 else -a
                if aa > slack_hi + EPS:
                    forced = 0 if a > 0 else 1
                elif aa > slack_lo + EPS:
                    forced = 1 if a > 0 else 0
                else:
                    continue
                if not self._assign(v, forced, queue):
                    return False
                slack_hi = hi[r] - minact[r]
                slack_lo = maxact[r] - lo[r]
        return True

    def _apply(self, assignment: Sequence[tuple[int, int]]) -> bool:
        queue: list[int] = []
        for v, value in assignment:
            cur = self.val[v]
            if cur == value:
                continue
            if cur != -1:
                return False
            if not self._assign(v, value, queue):
                return False
        return self._propagate(queue)

    # -- level-aware bounding -------------------------------------------
    def _cell_info(self, i: int):
        """(decided kind or None, possible kinds, cost per possible kind) of cell ``i``."""
        val, c = self.val, self.c
        kinds = self.cells[i]
        decided = None
        possible = []
        for k, v in enumerate(kinds):
            x = val[v]
            if x == 1:
                decided = k
            if x != 0:
                possible.append(k)
        costs = {}
        if decided is None:
            extra_w, orig = 0.0, -1
            if self.soft is not None:
                alpha, _, w, orig = self.soft[i]
                if val[alpha] == -1:
                    extra_w = w
            for k in possible:
                costs[k] = c[kinds[k]] + (extra_w if k != orig else 0.0)
        return decided, possible, costs

    def _cell_state(self):
        return [self._cell_info(i) for i in range(len(self.cells))]

    def _undecided(self) -> list[int]:
        val = self.val
        return [i for i, (a, b, c, d) in enumerate(self.cells)
                if val[a] != 1 and val[b] != 1 and val[c] != 1 and val[d] != 1]

    def _route_bound(self, state):
        """Cheapest extra weight to open some start-goal route, and that route."""
        vm = self.vm
        cols = vm.cols
        can_open, can_solid, open_extra = [], [], []
        for decided, possible, costs in state:
            if decided is not None:
                is_open = decided != TileKind.SOLID
                can_open.append(is_open)
                can_solid.append(not is_open)
                open_extra.append(0.0)
            else:
                opens = [costs[k] for k in possible if k != TileKind.SOLID]
                can_open.append(bool(opens))
                can_solid.append(TileKind.SOLID in possible)
                open_extra.append(min(opens) - min(costs.values()) if opens else 0.0)
        start = vm.start[0] * cols + vm.start[1]
        goal = vm.goal[0] * cols + vm.goal[1]
        dist = {start: 0.0}
        parent = {start: -1}
        heap = [(0.0, start)]
        done = set()
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            if u == goal:
                path = []
                while u != -1:
                    path.append(u)
                    u = parent[u]
                return d, path[::-1]
            done.add(u)
            for m in self.moves[u]:
                dst = m.dst[0] * cols + m.dst[1]
                if dst in done:
                    continue
                if not all(can_open[o[0] * cols + o[1]] for o in m.open):
                    continue
                if not all(can_solid[s[0] * cols + s[1]] for s in m.solid):
                    continue
                nd = d + open_extra[dst]
                if nd < dist.get(dst, float("inf")) - EPS:
                    dist[dst] = nd
                    parent[dst] = u
                    heapq.heappush(heap, (nd, dst))
        return None, None

    # -- branching ---------------------------------------------------------
    def _cell_key(self, i: int, info) -> tuple:
        rule = self.cfg.branching
        if rule == "lowest-weight-first":
            w = self.soft[i][2] if self.soft is not None else 0.0
            return (w, self.cell_rank[i])
        if rule == "most-constrained-first":
            return (len(info(i)[1]), self.cell_rank[i])
        return (self.cell_rank[i],)

    def _kind_order(self, i: int, kinds: list[int], costs: dict) -> list[int]:
        pref = self.preferred[i] if self.preferred is not None else -1
        return sorted(kinds, key=lambda k: (costs[k], k != pref, k))

    def _cell_alternatives(self, i: int, kinds: list[int]) -> list[list[tuple[int, int]]]:
        return [[(self.cells[i][k], 1)] for k in kinds]

    def _branch(self, state, path) -> Optional[list[list[tuple[int, int]]]]:
        if self.cells:
            if state is not None:
                info = state.__getitem__
                undecided = [i for i, (d, _, _) in enumerate(state) if d is None]
            else:
                memo: dict[int, tuple] = {}

                def info(i):
                    if i not in memo:
                        memo[i] = self._cell_info(i)
                    return memo[i]
                undecided = self._undecided()
            if undecided:
                if path is not None:
                    need = []
                    for i in path[1:]:
                        decided, possible, costs = info(i)
                        if decided is None and TileKind.SOLID in costs and len(possible) > 1 \
                                and costs[TileKind.SOLID] == min(costs.values()):
                            need.append(i)
                    if need:
                        if self.cfg.branching == "input-order":
                            i = need[0]
                        else:
                            i = min(need, key=lambda j: self._cell_key(j, info))
                        _, possible, costs = info(i)
                        opens = self._kind_order(i, [k for k in possible if k != TileKind.SOLID], costs)
                        return self._cell_alternatives(i, opens + [TileKind.SOLID])
                i = min(undecided, key=lambda j: self._cell_key(j, info))
                _, possible, costs = info(i)
                alts = self._cell_alternatives(i, self._kind_order(i, possible, costs))
                if self.soft is not None and len(undecided) > 1:
                    # try keeping every remaining cell at its cheapest kind in one step;
                    # the single-cell alternatives after it keep the search complete
                    batch = []
                    for j in undecided:
                        _, pj, cj = info(j)
                        batch.append((self.cells[j][self._kind_order(j, pj, cj)[0]], 1))
                    alts.insert(0, batch)
                return alts
        val, c = self.val, self.c
        free = [v for v in self.order if val[v] == -1]
        if not free:
            return None
        zero = [v for v in free if c[v] == 0]
        if zero:
            v = zero[0]
            return [[(v, 0)], [(v, 1)]]
        batch = [(v, 0 if c[v] > 0 else 1) for v in free]
        v = free[0]
        cheap = 0 if c[v] > 0 else 1
        return [batch, [(v, cheap)], [(v, 1 - cheap)]]

    # -- main loop ---------------------------------------------------------
    def _node(self):
        """Bound and branch at the current node; None alternatives means leaf."""
        lb = self.committed + self.neg_free
        state = path = None
        if self.cells and (self.route or (self.cell_terms and self.best is not None)):
            state = self._cell_state()
            if self.cell_terms:
                lb += sum(min(costs.values()) for d, _, costs in state if d is None)
            if self.route:
                extra, path = self._route_bound(state)
                if extra is None:
                    return "prune", None
                lb += extra
                if self.lazy and all(d is not None for d, _, _ in state):
                    level = self.vm.decode(self.val)
                    if not check_solvable(level, self.vm.template).solvable:
                        return "prune", None
        if lb >= self.best_obj - EPS:
            return "prune", None
        alts = self._branch(state, path)
        if alts is None:
            return "leaf", None
        return "branch", alts

    def _record_leaf(self) -> None:
        x = [max(v, 0) for v in self.val]
        if self.vm is not None and any(self.ignored):
            self.vm.fill_layers(x, self.vm.decode(x))
        obj = self.prog.objective(x)
        if obj < self.best_obj - EPS:
            self.best_obj = obj
            self.best = x
            self.incumbents.append((self.nodes, obj))
            log.debug("incumbent %g at node %d (%s)", obj, self.nodes, self.cfg.config_id)

    def _stopped(self) -> bool:
        if self.cancel is not None and self.cancel.is_set():
            return True
        if self.cfg.node_limit is not None and self.nodes >= self.cfg.node_limit:
            return True
        if self.cfg.first_solution and self.best is not None:
            return True
        return time.monotonic() > self.deadline

    def run(self) -> SolveResult:
        t0 = time.monotonic()
        self.deadline = t0 + self.cfg.time_limit
        queue = list(range(len(self.rows)))
        stopped = False
        if self._propagate(queue):
            stack: list[tuple[int, list, int]] = []
            descend = True
            while True:
                if descend:
                    if self._stopped():
                        stopped = True
                        break
                    self.nodes += 1
                    kind, alts = self._node()
                    if kind == "leaf":
                        self._record_leaf()
                    elif kind == "branch":
                        stack.append((len(self.trail), alts, 0))
                # advance to the next viable alternative
                descend = False
                while stack:
                    mark, alts, idx = stack.pop()
                    self._undo(mark)
                    if idx >= len(alts):
                        continue
                    stack.append((mark, alts, idx + 1))
                    if self._apply(alts[idx]):
                        descend = True
                        break
                if not descend:
                    break
        wall = time.monotonic() - t0
        if stopped:
            status = Status.TIMEOUT
        elif self.best is None:
            status = Status.INFEASIBLE
        else:
            status = Status.OPTIMAL
        return SolveResult(status, self.best, None if self.best is None else self.best_obj,
                           self.nodes, wall, self.cfg.config_id, self.incumbents)


def solve_bb(prog: ConstraintProgram, cfg: SolverConfig = SolverConfig(),
             cancel: Optional[threading.Event] = None) -> SolveResult:
    """Minimise ``c.x`` over the 0-1 points of ``prog``.

    Returns Optimal with a minimiser, Infeasible, or Timeout (carrying the
    best incumbent found, if any). ``cancel`` is polled once per node.
    """
    try:
        search = _Search(prog, cfg, cancel)
    except MalformedProgram:
        raise
    except (ValueError, IndexError) as exc:
        raise MalformedProgram(str(exc)) from exc
    return search.run()


def race(prog: ConstraintProgram, configs: Sequence[SolverConfig],
         time_limit: Optional[float] = None, results: Optional[list] = None) -> SolveResult:
    """Run every configuration concurrently; the first conclusive result wins.

    Losers are cancelled through a shared event. If all configurations time
    out the best incumbent among them is returned with status Timeout.
    Every backend's own result is appended to ``results`` when given.
    """
    if not configs:
        raise ValueError("race needs at least one configuration")
    if time_limit is not None:
        configs = [replace(c, time_limit=time_limit) for c in configs]
    t0 = time.monotonic()
    if len(configs) == 1:
        res = solve_bb(prog, configs[0])
        if results is not None:
            results.append(res)
        return res
    cancel = threading.Event()
    lock = threading.Lock()
    winner: list[SolveResult] = []
    finished: list[SolveResult] = []
    errors: list[BaseException] = []

    def run(cfg: SolverConfig) -> None:
        try:
            res = solve_bb(prog, cfg, cancel)
        except BaseException as exc:  # surfaced after join
            with lock:
                errors.append(exc)
            cancel.set()
            return
        with lock:
            finished.append(res)
            if not winner and res.status is not Status.TIMEOUT:
                winner.append(res)
                cancel.set()

    threads = [threading.Thread(target=run, args=(cfg,), daemon=True) for cfg in configs]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if results is not None:
        results.extend(finished)
    if winner:
        res = winner[0]
    elif errors:
        raise errors[0]
    else:
        with_inc = [r for r in finished if r.assignment is not None]
        res = min(with_inc, key=lambda r: r.objective) if with_inc else finished[0]
        res = replace(res, status=Status.TIMEOUT)
    return replace(res, wall_time=time.monotonic() - t0)
