import json

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import levels, random_level
from oracles import dfs_solvable
from tilerepair.level import Level, TileKind, parse_level
from tilerepair.reach import (MAX_RADIUS, MoveRule, MovementTemplate, TemplateError, UnknownDomain,
                              builtin_template, check_solvable, embedded_template, legal_moves,
                              load_template, save_template)


def test_cave_template_is_four_neighbourhood(cave):
    assert len(cave.rules) == 4
    assert {r.delta for r in cave.rules} == {(-1, 0), (1, 0), (0, -1), (0, 1)}
    assert all(r.open == (r.delta,) and r.solid == () for r in cave.rules)


def test_platformer_templates():
    mario = builtin_template("mario")
    assert any((1, 0) in r.solid for r in mario.rules)
    assert any(r.delta == (1, 0) and not r.solid for r in mario.rules)  # falling
    supercat = builtin_template("supercat")
    assert len(supercat.rules) > 4
    with pytest.raises(UnknownDomain):
        builtin_template("pacman")


@pytest.mark.parametrize("domain", ["cave", "mario", "supercat"])
def test_shipped_files_match_embedded(domain, tmp_path):
    assert builtin_template(domain) == embedded_template(domain)
    save_template(builtin_template(domain), tmp_path / "t.json")
    assert load_template(tmp_path / "t.json") == builtin_template(domain)


def test_rule_invariants():
    with pytest.raises(TemplateError):
        MoveRule((0, 1), ((0, 2),), ())
    with pytest.raises(TemplateError):
        MoveRule((0, MAX_RADIUS + 1), ((0, MAX_RADIUS + 1),), ())
    a = MovementTemplate("t", (MoveRule((0, 1), ((0, 1),), ()), MoveRule((1, 0), ((1, 0),), ())))
    b = MovementTemplate("t", (MoveRule((1, 0), ((1, 0),), ()), MoveRule((0, 1), ((0, 1),), ())))
    assert a == b and hash(a) == hash(b)


def test_legal_moves_cave(cave):
    boxed = parse_level("XXX\nX{X\nXXX\n}XX")
    assert legal_moves(boxed, cave, (1, 1)) == []
    lv = parse_level("{-}\nXXX")
    assert (0, 1) in legal_moves(lv, cave, (0, 0))


def test_mario_walk_needs_support():
    mario = builtin_template("mario")
    floating = parse_level("----\n{--}\n----")
    walks = [r for r in mario.rules if r.delta == (0, 1) and (1, 0) in r.solid]
    assert walks
    assert (1, 1) not in legal_moves(floating, MovementTemplate("walk", tuple(walks)), (1, 0))
    grounded = parse_level("----\n{--}\nXXXX")
    assert (1, 1) in legal_moves(grounded, mario, (1, 0))


def test_corridors(cave):
    ok = check_solvable(Level.from_rows([[TileKind.START, TileKind.EMPTY, TileKind.GOAL]]), cave)
    assert ok.solvable and len(ok.path) == 3
    blocked = check_solvable(Level.from_rows([[TileKind.START, TileKind.SOLID, TileKind.GOAL]]), cave)
    assert not blocked.solvable and blocked.path is None


@pytest.mark.parametrize("domain", ["cave", "mario", "supercat"])
def test_bfs_agrees_with_dfs(domain):
    t = builtin_template(domain)
    rng = np.random.default_rng(11)
    for _ in range(100):
        lv = random_level(rng, 6, 6, density=0.3)
        res = check_solvable(lv, t)
        assert res.solvable == dfs_solvable(lv, t)


@given(levels())
@settings(max_examples=150, deadline=None)
def test_witness_path_is_legal(lv):
    t = builtin_template("cave")
    res = check_solvable(lv, t)
    if res.solvable:
        assert res.path[0] == lv.start and res.path[-1] == lv.goal
        for a, b in zip(res.path, res.path[1:]):
            assert b in legal_moves(lv, t, a)


@given(levels())
@settings(max_examples=150, deadline=None)
def test_opening_cells_is_monotone(lv):
    # cave only: platformer moves need solid support, so opening a cell can remove edges
    t = builtin_template("cave")
    if check_solvable(lv, t).solvable:
        for r, c in lv.positions():
            if lv[r, c] is TileKind.SOLID:
                assert check_solvable(lv.with_cells({(r, c): TileKind.EMPTY}), t).solvable


def test_template_json_format(tmp_path):
    save_template(builtin_template("cave"), tmp_path / "c.json")
    obj = json.loads((tmp_path / "c.json").read_text())
    assert obj["name"] == "cave"
    assert set(obj["rules"][0]) == {"delta", "open", "solid"}
