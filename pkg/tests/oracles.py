"""Independent reference computations used by the test-suite.

Nothing here imports the search or attribution code it is used to check.
"""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np

from tilerepair.level import Level, TileKind


def enumerate_optimum(prog):
    """Exhaustive minimum of c.x over all 0-1 points satisfying every row."""
    best = None
    for bits in itertools.product((0, 1), repeat=prog.num_vars):
        if all(row.lo - 1e-9 <= sum(a * bits[v] for v, a in row.coeffs) <= row.hi + 1e-9
               for row in prog.rows):
            obj = sum(c * bits[v] for v, c in enumerate(prog.weights))
            if best is None or obj < best:
                best = obj
    return best


def dfs_solvable(level: Level, template) -> bool:
    """Recursive-style DFS over rule offsets, written against the raw rule list."""
    rows, cols = level.rows, level.cols
    grid = level.to_array()

    def ok(r, c):
        return 0 <= r < rows and 0 <= c < cols

    seen = {level.start}
    stack = [level.start]
    while stack:
        r, c = stack.pop()
        if (r, c) == level.goal:
            return True
        for rule in template.rules:
            cells_open = [(r + dr, c + dc) for dr, dc in rule.open]
            cells_solid = [(r + dr, c + dc) for dr, dc in rule.solid]
            if not all(ok(*p) for p in cells_open + cells_solid):
                continue
            if any(grid[p] == TileKind.SOLID for p in cells_open):
                continue
            if any(grid[p] != TileKind.SOLID for p in cells_solid):
                continue
            dst = (r + rule.delta[0], c + rule.delta[1])
            if dst not in seen:
                seen.add(dst)
                stack.append(dst)
    return False


def flood_components(binmap: np.ndarray, connectivity: int) -> list[set]:
    """Components of True cells by breadth-first flood fill, in scan order."""
    binmap = np.asarray(binmap, dtype=bool)
    if connectivity == 4:
        nbrs = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        nbrs = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    seen = np.zeros_like(binmap)
    comps = []
    for r, c in zip(*np.nonzero(binmap)):
        if seen[r, c]:
            continue
        comp = set()
        q = deque([(r, c)])
        seen[r, c] = True
        while q:
            y, x = q.popleft()
            comp.add((int(y), int(x)))
            for dy, dx in nbrs:
                yy, xx = y + dy, x + dx
                if 0 <= yy < binmap.shape[0] and 0 <= xx < binmap.shape[1] and binmap[yy, xx] and not seen[yy, xx]:
                    seen[yy, xx] = True
                    q.append((yy, xx))
        comps.append(comp)
    return comps


def random_program(rng, max_vars: int = 6, max_cons: int = 5, soft: bool = True):
    """Random mid-level program over at most ``max_vars`` original variables."""
    from tilerepair.encode import ConstraintProgram, Literal
    prog = ConstraintProgram()
    n = rng.randint(1, max_vars)
    for _ in range(n):
        prog.make_var()
    pool = list(range(n))

    def lits(k):
        return [Literal(rng.choice(pool), rng.random() < 0.5) for _ in range(k)]

    for _ in range(rng.randint(1, max_cons)):
        t = rng.random()
        w = rng.choice([None, None, 1, 2, 3.5]) if soft else None
        if t < 0.3:
            kappa = prog.make_conj(lits(rng.randint(1, 3)))
            pool.append(kappa.var)
        elif t < 0.65:
            prog.cnstr_implies_disj(lits(1)[0], lits(rng.randint(1, 3)), w)
        else:
            L = lits(rng.randint(1, 4))
            a = rng.randint(0, len(L))
            prog.cnstr_count(L, a, rng.randint(a, len(L)), w)
    return prog


def _lit_true(x, lit) -> bool:
    return (x[lit.var] == 1) == lit.positive


def boolean_semantics(prog):
    """Brute force over original variables using the Boolean record list only.

    Returns (satisfying assignments of the original variables, minimal
    weighted violation or None).
    """
    orig = [v for v, tag in enumerate(prog.var_tags) if tag == "x"]
    sat, best = set(), None
    for bits in itertools.product((0, 1), repeat=len(orig)):
        x = [0] * prog.num_vars
        for v, b in zip(orig, bits):
            x[v] = b
        ok, cost = True, 0.0
        for rec in prog.boolean:
            if rec[0] == "conj":
                _, kappa, ls = rec
                x[kappa.var] = int(all(_lit_true(x, l) for l in ls))
            elif rec[0] == "implies":
                _, i, ls, w, _ = rec
                holds = not _lit_true(x, i) or any(_lit_true(x, l) for l in ls)
                if not holds:
                    if w is None:
                        ok = False
                    else:
                        cost += w
            else:
                _, ls, a, b, w, _ = rec
                holds = a <= sum(_lit_true(x, l) for l in ls) <= b
                if not holds:
                    if w is None:
                        ok = False
                    else:
                        cost += w
        if ok:
            sat.add(bits)
            best = cost if best is None or cost < best else best
    return sat, best


def milp_semantics(prog):
    """Feasible 0-1 points of the rows, projected onto original variables, and the minimum."""
    orig = [v for v, tag in enumerate(prog.var_tags) if tag == "x"]
    proj, best = set(), None
    for bits in itertools.product((0, 1), repeat=prog.num_vars):
        if all(row.lo - 1e-9 <= sum(a * bits[v] for v, a in row.coeffs) <= row.hi + 1e-9
               for row in prog.rows):
            proj.add(tuple(bits[v] for v in orig))
            obj = sum(c * bits[v] for v, c in enumerate(prog.weights))
            best = obj if best is None or obj < best else best
    return proj, best


def min_weighted_edit(level: Level, weights, template, rules=None):
    """Exhaustive minimal weighted-edit search over Empty/Solid flips.

    Start and Goal stay put, so every edit toggles one other cell between
    Empty and Solid. Subsets are enumerated by increasing edit count, cells in
    ascending weight order, and cut once their cost reaches the best repair.
    Independent of the encoder and the solver: it only calls the BFS oracle
    and the pattern checker.
    """
    from tilerepair.patterns import check_patterns
    from tilerepair.reach import is_solvable

    def ok(lv):
        return is_solvable(lv, template) and (rules is None or not check_patterns(lv, rules))

    if ok(level):
        return 0.0
    cells = sorted((float(weights[r, c]), (r, c)) for r, c in level.positions()
                   if level[r, c] in (TileKind.EMPTY, TileKind.SOLID))
    flip = {TileKind.EMPTY: TileKind.SOLID, TileKind.SOLID: TileKind.EMPTY}
    best = [float("inf")]

    def dfs(idx, cost, chosen, left):
        for j in range(idx, len(cells)):
            w, cell = cells[j]
            if cost + w >= best[0]:
                break  # ascending weights: later cells cost at least as much
            chosen.append(cell)
            if left == 1:
                if ok(level.with_cells({p: flip[level[p]] for p in chosen})):
                    best[0] = cost + w
            else:
                dfs(j + 1, cost + w, chosen, left - 1)
            chosen.pop()

    # deepen by edit count so the first repair found bounds all deeper sets
    k = 1
    while k <= len(cells) and k * cells[0][0] < best[0]:
        dfs(0, 0.0, [], k)
        k += 1
    return None if best[0] == float("inf") else best[0]
