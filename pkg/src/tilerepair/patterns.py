"""Adjacent-pair validity rules extracted from exemplar levels."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable

from tilerepair.level import Cell, Level, TileKind, parse_level

Pair = tuple[TileKind, TileKind]


@dataclass(frozen=True)
class PatternRules:
    """Allowed (left, right) and (top, bottom) tile-kind pairs."""

    allowed_horizontal: frozenset[Pair]
    allowed_vertical: frozenset[Pair]
    domain: str = "custom"

    def union(self, other: "PatternRules") -> "PatternRules":
        return PatternRules(self.allowed_horizontal | other.allowed_horizontal,
                            self.allowed_vertical | other.allowed_vertical, self.domain)

    def allowed(self, direction: str) -> frozenset[Pair]:
        return self.allowed_horizontal if direction == "h" else self.allowed_vertical

    def to_json(self) -> dict:
        def enc(pairs):
            return sorted(a.char + b.char for a, b in pairs)
        return {"domain": self.domain, "horizontal": enc(self.allowed_horizontal),
                "vertical": enc(self.allowed_vertical)}

    @classmethod
    def from_json(cls, obj: dict) -> "PatternRules":
        def dec(items):
            return frozenset((TileKind.from_char(s[0]), TileKind.from_char(s[1])) for s in items)
        return cls(dec(obj["horizontal"]), dec(obj["vertical"]), obj.get("domain", "custom"))


@dataclass(frozen=True)
class Violation:
    a: Cell
    b: Cell
    direction: str
    pair: Pair


def adjacencies(rows: int, cols: int) -> Iterable[tuple[Cell, Cell, str]]:
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                yield (r, c), (r, c + 1), "h"
            if r + 1 < rows:
                yield (r, c), (r + 1, c), "v"


def extract_patterns(exemplar: Level) -> PatternRules:
    horizontal, vertical = set(), set()
    for a, b, direction in adjacencies(exemplar.rows, exemplar.cols):
        (horizontal if direction == "h" else vertical).add((exemplar[a], exemplar[b]))
    return PatternRules(frozenset(horizontal), frozenset(vertical), exemplar.domain)


def check_patterns(level: Level, rules: PatternRules) -> list[Violation]:
    out = []
    for a, b, direction in adjacencies(level.rows, level.cols):
        pair = (level[a], level[b])
        if pair not in rules.allowed(direction):
            out.append(Violation(a, b, direction, pair))
    return out


def load_patterns(path) -> PatternRules:
    return PatternRules.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def save_patterns(rules: PatternRules, path) -> None:
    Path(path).write_text(json.dumps(rules.to_json(), indent=1) + "\n", encoding="utf-8")


# Several small exemplars per domain; their pair sets are unioned. Start and
# goal cannot share one exemplar's every neighbourhood, hence more than one.
EXEMPLARS = {
    "cave": [
        "XXXXXX\n"
        "X{-X-X\n"
        "X--X}X\n"
        "XX---X\n"
        "XXXXXX",
        "--X---\n"
        "-X{X--\n"
        "--X-X-\n"
        "X-}-X-\n"
        "--X---",
        "----X-\n"
        "-{X-}X\n"
        "-X---X\n"
        "XXX-XX",
    ],
    "mario": [
        "------------------\n"
        "------------------\n"
        "-------XXX--------\n"
        "-X----------------\n"
        "--{-----X-----}---\n"
        "XXXXXX--XXXXXXXXXX\n"
        "XXXXXX--XXXXXXXXXX",
    ],
    "supercat": [
        "--------------\n"
        "-XX-----------\n"
        "X{-X----X-}---\n"
        "XXX--XXX--XX-X\n"
        "XXX--XXX--XXXX",
        "---------\n"
        "-X-{X-}X-\n"
        "--XXX-XX-\n"
        "X-------X",
    ],
}


@lru_cache(maxsize=None)
def builtin_patterns(domain: str) -> PatternRules:
    if domain not in EXEMPLARS:
        raise KeyError(f"no exemplar for domain {domain!r}")
    rules = None
    for text in EXEMPLARS[domain]:
        extracted = extract_patterns(parse_level(text, domain))
        rules = extracted if rules is None else rules.union(extracted)
    return rules
