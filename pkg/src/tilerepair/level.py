"""Level grids: the four-tile representation, its text codec and one-hot encoding."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np


class LevelError(ValueError):
    pass


class RaggedLines(LevelError):
    pass


class UnknownCharacter(LevelError):
    pass


class MissingOrDuplicateStartGoal(LevelError):
    pass


class AmbiguousCell(LevelError):
    pass


class DimensionMismatch(LevelError):
    pass


class TileKind(IntEnum):
    """Tile kinds. The integer value is also the one-hot channel index."""

    EMPTY = 0
    SOLID = 1
    START = 2
    GOAL = 3

    @property
    def char(self) -> str:
        return _KIND_TO_CHAR[self]

    @property
    def traversable(self) -> bool:
        return self is not TileKind.SOLID

    @classmethod
    def from_char(cls, ch: str) -> "TileKind":
        try:
            return _CHAR_TO_KIND[ch]
        except KeyError:
            raise UnknownCharacter(f"unknown tile character {ch!r}") from None


_KIND_TO_CHAR = {
    TileKind.EMPTY: "-",
    TileKind.SOLID: "X",
    TileKind.START: "{",
    TileKind.GOAL: "}",
}
_CHAR_TO_KIND = {ch: kind for kind, ch in _KIND_TO_CHAR.items()}

NUM_KINDS = len(TileKind)
DOMAINS = ("cave", "mario", "supercat", "custom")

Cell = tuple[int, int]


@dataclass(frozen=True)
class Level:
    """Immutable rectangular tile grid with exactly one start and one goal.

    ``cells`` is row-major; row 0 is the top line of the text form.
    """

    rows: int
    cols: int
    cells: tuple[TileKind, ...]
    domain: str = "custom"

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1 or self.rows * self.cols < 2:
            raise DimensionMismatch(f"level too small: {self.rows}x{self.cols}")
        if len(self.cells) != self.rows * self.cols:
            raise DimensionMismatch(
                f"expected {self.rows * self.cols} cells, got {len(self.cells)}"
            )
        cells = tuple(TileKind(k) for k in self.cells)
        object.__setattr__(self, "cells", cells)
        n_start = cells.count(TileKind.START)
        n_goal = cells.count(TileKind.GOAL)
        if n_start != 1 or n_goal != 1:
            raise MissingOrDuplicateStartGoal(
                f"need exactly one start and one goal, found {n_start} and {n_goal}"
            )

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[TileKind]], domain: str = "custom") -> "Level":
        n_rows = len(rows)
        n_cols = len(rows[0]) if rows else 0
        cells = [k for row in rows for k in row]
        return cls(n_rows, n_cols, tuple(cells), domain)

    @classmethod
    def from_array(cls, grid: np.ndarray, domain: str = "custom") -> "Level":
        grid = np.asarray(grid, dtype=int)
        return cls(grid.shape[0], grid.shape[1], tuple(TileKind(int(v)) for v in grid.ravel()), domain)

    def __getitem__(self, rc: Cell) -> TileKind:
        r, c = rc
        return self.cells[r * self.cols + c]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def start(self) -> Cell:
        return divmod(self.cells.index(TileKind.START), self.cols)

    @property
    def goal(self) -> Cell:
        return divmod(self.cells.index(TileKind.GOAL), self.cols)

    def in_bounds(self, r: int, c: int) -> bool:
        return 0 <= r < self.rows and 0 <= c < self.cols

    def positions(self) -> Iterable[Cell]:
        for r in range(self.rows):
            for c in range(self.cols):
                yield (r, c)

    def to_array(self) -> np.ndarray:
        return np.array([int(k) for k in self.cells], dtype=np.int8).reshape(self.rows, self.cols)

    def with_cells(self, changes: dict[Cell, TileKind]) -> "Level":
        cells = list(self.cells)
        for (r, c), kind in changes.items():
            cells[r * self.cols + c] = TileKind(kind)
        return Level(self.rows, self.cols, tuple(cells), self.domain)

    def __str__(self) -> str:
        return serialize_level(self)


def parse_level(text: str, domain: str = "custom") -> Level:
    lines = [line.rstrip("\r") for line in text.strip("\n").split("\n")]
    if not lines or not lines[0]:
        raise DimensionMismatch("empty level text")
    width = len(lines[0])
    for i, line in enumerate(lines):
        if len(line) != width:
            raise RaggedLines(f"line {i} has length {len(line)}, expected {width}")
    rows = [[TileKind.from_char(ch) for ch in line] for line in lines]
    return Level.from_rows(rows, domain)


def serialize_level(level: Level) -> str:
    chars = [k.char for k in level.cells]
    return "\n".join("".join(chars[r * level.cols:(r + 1) * level.cols]) for r in range(level.rows))


def to_onehot(level: Level) -> np.ndarray:
    """(rows, cols, 4) float tensor; channel order Empty, Solid, Start, Goal."""
    out = np.zeros((level.rows, level.cols, NUM_KINDS), dtype=np.float64)
    idx = level.to_array()
    out[np.arange(level.rows)[:, None], np.arange(level.cols)[None, :], idx] = 1.0
    return out


def from_onehot(tensor: np.ndarray, domain: str = "custom") -> Level:
    t = np.asarray(tensor, dtype=np.float64)
    if t.ndim != 3 or t.shape[2] != NUM_KINDS:
        raise DimensionMismatch(f"expected (rows, cols, {NUM_KINDS}) tensor, got {t.shape}")
    top = t.max(axis=2, keepdims=True)
    ties = (t == top).sum(axis=2)
    if np.any(ties > 1):
        r, c = np.argwhere(ties > 1)[0]
        raise AmbiguousCell(f"cell ({r}, {c}) has tied channels {t[r, c].tolist()}")
    return Level.from_array(t.argmax(axis=2), domain)


def diff_cells(a: Level, b: Level) -> list[tuple[int, int, TileKind, TileKind]]:
    if a.shape != b.shape:
        raise DimensionMismatch(f"cannot diff {a.shape} against {b.shape}")
    return [
        (i // a.cols, i % a.cols, ka, kb)
        for i, (ka, kb) in enumerate(zip(a.cells, b.cells))
        if ka != kb
    ]


def read_level(path, domain: str = "custom") -> Level:
    with open(path, encoding="utf-8") as fh:
        return parse_level(fh.read(), domain)


def write_level(level: Level, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_level(level) + "\n")
