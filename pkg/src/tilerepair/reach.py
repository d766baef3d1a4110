"""Template-driven traversability and the breadth-first solvability oracle."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional

from tilerepair.level import Cell, Level, TileKind

MAX_RADIUS = 6
Offset = tuple[int, int]


class UnknownDomain(KeyError):
    pass


class TemplateError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class MoveRule:
    delta: Offset
    open: tuple[Offset, ...]
    solid: tuple[Offset, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", tuple(self.delta))
        object.__setattr__(self, "open", tuple(sorted(tuple(o) for o in self.open)))
        object.__setattr__(self, "solid", tuple(sorted(tuple(o) for o in self.solid)))
        if self.delta not in self.open:
            raise TemplateError(f"rule {self.delta} must list its destination as open")
        for dr, dc in (self.delta,) + self.open + self.solid:
            if abs(dr) > MAX_RADIUS or abs(dc) > MAX_RADIUS:
                raise TemplateError(f"offset ({dr}, {dc}) exceeds radius {MAX_RADIUS}")
        if set(self.open) & set(self.solid):
            raise TemplateError(f"rule {self.delta} requires a cell both open and solid")

    def to_json(self) -> dict:
        return {
            "delta": list(self.delta),
            "open": [list(o) for o in self.open],
            "solid": [list(s) for s in self.solid],
        }


@dataclass(frozen=True)
class MovementTemplate:
    name: str
    rules: tuple[MoveRule, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.rules:
            raise TemplateError("template needs at least one rule")
        object.__setattr__(self, "rules", tuple(sorted(set(self.rules))))

    def to_json(self) -> dict:
        return {"name": self.name, "rules": [r.to_json() for r in self.rules]}

    @classmethod
    def from_json(cls, obj: dict) -> "MovementTemplate":
        rules = [
            MoveRule(tuple(r["delta"]), tuple(map(tuple, r.get("open", []))),
                     tuple(map(tuple, r.get("solid", []))))
            for r in obj["rules"]
        ]
        return cls(obj["name"], tuple(rules))


def load_template(path) -> MovementTemplate:
    return MovementTemplate.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def save_template(template: MovementTemplate, path) -> None:
    rules = ",\n".join("  " + json.dumps(r.to_json()) for r in template.rules)
    text = f'{{"name": {json.dumps(template.name)},\n "rules": [\n{rules}\n ]}}\n'
    Path(path).write_text(text, encoding="utf-8")


def _cave_rules() -> list[MoveRule]:
    return [MoveRule(d, (d,)) for d in ((-1, 0), (1, 0), (0, -1), (0, 1))]


def _platformer_rules(jump_height: int, jump_reach: int, wall_climb: bool) -> list[MoveRule]:
    rules = []
    for dc in (-1, 1):
        # walk needs ground under the current cell
        rules.append(MoveRule((0, dc), ((0, dc),), ((1, 0),)))
    rules.append(MoveRule((1, 0), ((1, 0),)))
    for h in range(1, jump_height + 1):
        column = tuple((-i, 0) for i in range(1, h + 1))
        for dc in range(-jump_reach, jump_reach + 1):
            step = 1 if dc > 0 else -1
            across = tuple((-h, step * j) for j in range(1, abs(dc) + 1))
            rules.append(MoveRule((-h, dc), column + across, ((1, 0),)))
    if wall_climb:
        for side in (-1, 1):
            rules.append(MoveRule((-1, 0), ((-1, 0),), ((0, side),)))
    return rules


_BUILTIN_SPECS = {
    "cave": lambda: _cave_rules(),
    "mario": lambda: _platformer_rules(jump_height=4, jump_reach=3, wall_climb=False),
    "supercat": lambda: _platformer_rules(jump_height=3, jump_reach=2, wall_climb=True),
}


@lru_cache(maxsize=None)
def builtin_template(domain: str) -> MovementTemplate:
    """Shipped template for ``cave``, ``mario`` or ``supercat``.

    Loaded from the packaged JSON file; falls back to the embedded
    definition when the data file is unavailable.
    """
    if domain not in _BUILTIN_SPECS:
        raise UnknownDomain(f"no builtin movement template for {domain!r}")
    try:
        text = resources.files("tilerepair.data").joinpath(f"{domain}.template.json").read_text("utf-8")
        return MovementTemplate.from_json(json.loads(text))
    except (FileNotFoundError, ModuleNotFoundError):
        return embedded_template(domain)


def embedded_template(domain: str) -> MovementTemplate:
    if domain not in _BUILTIN_SPECS:
        raise UnknownDomain(f"no builtin movement template for {domain!r}")
    return MovementTemplate(domain, tuple(_BUILTIN_SPECS[domain]()))


@dataclass(frozen=True)
class MoveInstance:
    """A rule anchored at a source cell; all offsets resolved and in bounds."""

    src: Cell
    dst: Cell
    open: tuple[Cell, ...]
    solid: tuple[Cell, ...]


@lru_cache(maxsize=256)
def move_instances(rows: int, cols: int, template: MovementTemplate) -> tuple[tuple[MoveInstance, ...], ...]:
    """Per source cell (row-major index), every rule whose offsets land in bounds."""
    out = []
    for r in range(rows):
        for c in range(cols):
            here = []
            for rule in template.rules:
                cells = [(r + dr, c + dc) for dr, dc in rule.open + rule.solid]
                if all(0 <= rr < rows and 0 <= cc < cols for rr, cc in cells):
                    here.append(MoveInstance(
                        (r, c),
                        (r + rule.delta[0], c + rule.delta[1]),
                        tuple((r + dr, c + dc) for dr, dc in rule.open),
                        tuple((r + dr, c + dc) for dr, dc in rule.solid),
                    ))
            out.append(tuple(here))
    return tuple(out)


def _applicable(level: Level, move: MoveInstance) -> bool:
    return (all(level[o].traversable for o in move.open)
            and all(level[s] is TileKind.SOLID for s in move.solid))


def legal_moves(level: Level, template: MovementTemplate, cell: Cell) -> list[Cell]:
    r, c = cell
    out: list[Cell] = []
    for move in move_instances(level.rows, level.cols, template)[r * level.cols + c]:
        if move.dst not in out and _applicable(level, move):
            out.append(move.dst)
    return out


@dataclass(frozen=True)
class ReachResult:
    solvable: bool
    path: Optional[tuple[Cell, ...]]
    visited_count: int


def check_solvable(level: Level, template: MovementTemplate) -> ReachResult:
    """BFS from the start cell; the returned path is a shortest witness."""
    start, goal = level.start, level.goal
    parent: dict[Cell, Optional[Cell]] = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == goal:
            path = []
            node: Optional[Cell] = cell
            while node is not None:
                path.append(node)
                node = parent[node]
            return ReachResult(True, tuple(reversed(path)), len(parent))
        for nxt in legal_moves(level, template, cell):
            if nxt not in parent:
                parent[nxt] = cell
                queue.append(nxt)
    return ReachResult(False, None, len(parent))


def is_solvable(level: Level, template: MovementTemplate) -> bool:
    return check_solvable(level, template).solvable
