"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The cave dataset (1000 levels per class), the trained classifier and the
100-level repair benchmark are built once per module and shared.
"""

import csv
import random
import time

import numpy as np
import pytest

from conftest import random_level
from oracles import (boolean_semantics, dfs_solvable, enumerate_optimum, flood_components,
                     milp_semantics, min_weighted_edit, random_program)
from tilerepair.attribution import deeplift_rescale, integrated_gradients, logit_delta
from tilerepair.classifier import MlpModel, TrainConfig, evaluate, grad_input, init_model, logits, train
from tilerepair.cli import main
from tilerepair.encode import build_repair_problem
from tilerepair.level import read_level, to_onehot
from tilerepair.patterns import check_patterns
from tilerepair.pipeline import domain_assets, gen_dataset, generate_unsolvable, run_experiment, to_labeled
from tilerepair.reach import is_solvable
from tilerepair.solver import BRANCHING, SolverConfig, Status, solve_bb
from tilerepair.stats import cumulative_series, lower_median, summarize
from tilerepair.weights import attributions_to_weights, threshold_percentile

METHODS = ["SHAP", "IG", "UNI"]


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def cave_assets():
    return domain_assets("cave")


@pytest.fixture(scope="module")
def cave_data():
    t0 = time.monotonic()
    items = gen_dataset("cave", 1000, "constrained", seed=0)
    return items, time.monotonic() - t0


@pytest.fixture(scope="module")
def cave_model(cave_data):
    items, gen_time = cave_data
    data = to_labeled(items, 0.2, seed=0)
    t0 = time.monotonic()
    model, hist = train(init_model(15, 12, 256, 128, seed=0), data,
                        TrainConfig(learning_rate=1e-2, weight_decay=1e-3, epochs=10, seed=0))
    acc = evaluate(model, data.x[data.test_idx], data.y[data.test_idx])
    return model, acc, gen_time, time.monotonic() - t0


@pytest.fixture(scope="module")
def bench(tmp_path_factory, cave_model, cave_assets):
    model = cave_model[0]
    d = tmp_path_factory.mktemp("acceptance")
    template, rules = cave_assets
    outs = run_experiment("cave", 100, METHODS, model, time_limit=60, seed=0,
                          out_csv=d / "outcomes.csv", level_dir=d / "levels", template=template, rules=rules)
    return d, outs


def test_1_encoding_equivalence(capsys):
    t0 = time.monotonic()
    rng = random.Random(101)
    agree = 0
    for _ in range(500):
        prog = random_program(rng, max_vars=6, max_cons=5)
        sat, best = boolean_semantics(prog)
        proj, mbest = milp_semantics(prog)
        same_min = (best is None and mbest is None) or (
            best is not None and mbest is not None and abs(best - mbest) < 1e-9)
        agree += sat == proj and same_min
    dt = time.monotonic() - t0
    report(capsys, 1, agree == 500 and dt < 60, f"{agree}/500 programs agree, {dt:.1f}s")


def test_2_solver_exactness(capsys):
    t0 = time.monotonic()
    rng = random.Random(202)
    agree = checked = 0
    while checked < 200:
        prog = random_program(rng, max_vars=8, max_cons=6)
        if prog.num_vars > 12:
            continue
        ref = enumerate_optimum(prog)
        res = solve_bb(prog, SolverConfig(BRANCHING[checked % len(BRANCHING)], seed=checked))
        checked += 1
        if ref is None:
            agree += res.status is Status.INFEASIBLE
        else:
            agree += res.status is Status.OPTIMAL and abs(res.objective - ref) < 1e-9
    dt = time.monotonic() - t0
    report(capsys, 2, agree == 200 and dt < 120, f"{agree}/200 match enumeration, {dt:.1f}s")


def test_3_attribution_identities(capsys, cave_model):
    model = cave_model[0]
    t0 = time.monotonic()
    rng = np.random.default_rng(303)
    ig_err, dl_err = [], []
    for _ in range(50):
        lv = random_level(rng, 15, 12)
        delta = logit_delta(model, lv)
        ig_err.append(abs(integrated_gradients(model, lv, 512).total() - delta) / max(abs(delta), 1e-12))
        dl_err.append(abs(deeplift_rescale(model, lv).total() - delta))
    ig_ok = sum(e <= 1e-3 for e in ig_err)
    dl_ok = sum(e <= 1e-6 for e in dl_err)

    d = 15 * 12 * 4
    lin = MlpModel([d, 1], [rng.normal(size=(1, d))], [np.array([0.1])], 0.0, 15, 12, 0)
    lin_gap = max(np.abs(integrated_gradients(lin, lv, 512).values - deeplift_rescale(lin, lv).values).max()
                  for lv in (random_level(rng, 15, 12) for _ in range(10)))

    fd_err = []
    for _ in range(10):
        x = to_onehot(random_level(rng, 15, 12)) + rng.normal(scale=0.05, size=(15, 12, 4))
        g = grad_input(model, x)
        fd = np.zeros_like(x)
        eps = 1e-6
        for idx in np.ndindex(x.shape):
            hi, lo = x.copy(), x.copy()
            hi[idx] += eps
            lo[idx] -= eps
            fd[idx] = (logits(model, hi[None])[0] - logits(model, lo[None])[0]) / (2 * eps)
        # an all-dead ReLU input has zero gradient; both sides are then exactly zero
        fd_err.append(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
    dt = time.monotonic() - t0
    ok = ig_ok == 50 and dl_ok == 50 and lin_gap <= 1e-9 and max(fd_err) <= 1e-4 and dt < 60
    report(capsys, 3, ok, f"IG {ig_ok}/50 within 1e-3 (max rel {max(ig_err):.2e}), "
                          f"DeepLIFT {dl_ok}/50 within 1e-6, linear gap {lin_gap:.1e}, "
                          f"finite-diff max rel {max(fd_err):.1e}, {dt:.1f}s")


def test_4_classifier_accuracy(capsys, cave_model):
    _, acc, gen_time, train_time = cave_model
    report(capsys, 4, acc >= 0.90 and gen_time + train_time < 300,
           f"held-out accuracy {acc:.3f}, generation {gen_time:.0f}s + training {train_time:.0f}s")


def test_5_weight_generation(capsys):
    t0 = time.monotonic()
    rng = np.random.default_rng(505)
    good = 0
    for _ in range(100):
        grid = rng.normal(size=tuple(rng.integers(2, 16, size=2)))
        w = attributions_to_weights(grid)
        comps = flood_components(threshold_percentile(grid, 80), 8)
        biggest = max(comps, key=len)  # first largest in scan order
        ones = {tuple(p) for p in np.argwhere(w == 1)}
        scaled = all(np.array_equal(w, attributions_to_weights(grid * c)) for c in (1e-3, 0.5, 7.0, 1e4))
        good += set(np.unique(w)) <= {1, 10} and ones == biggest and scaled
    dt = time.monotonic() - t0
    report(capsys, 5, good == 100 and dt < 10, f"{good}/100 grids, {dt:.2f}s")


def test_6_repair_soundness(capsys, bench, cave_assets):
    d, outs = bench
    template, rules = cave_assets
    opt = [o for o in outs if o.status == "Optimal"]
    # the pipeline already asserts soundness; recheck the saved levels with the independent DFS
    sound = 0
    for o in opt:
        fixed = read_level(d / "levels" / f"{o.level_id}.{o.method}.repaired.txt")
        sound += dfs_solvable(fixed, template) and not check_patterns(fixed, rules)
    frac = len(opt) / len(outs)
    report(capsys, 6, len(outs) == 300 and frac >= 0.95 and sound == len(opt),
           f"{len(opt)}/{len(outs)} Optimal ({frac:.1%}), {sound}/{len(opt)} pass oracle and patterns")


def test_7_repair_optimality(capsys, cave_assets):
    template, rules = cave_assets
    t0 = time.monotonic()
    rng = np.random.default_rng(707)
    agree = checked = 0
    while checked < 30:
        lv = random_level(rng, 6, 6, density=0.45)
        if is_solvable(lv, template):
            continue
        w = attributions_to_weights(rng.normal(size=(6, 6))) if checked % 2 else np.ones((6, 6))
        ref = min_weighted_edit(lv, w, template, rules)
        prog, _ = build_repair_problem(lv, w, template, rules, layered=False)
        res = solve_bb(prog, SolverConfig())
        checked += 1
        if ref is None:
            agree += res.status is Status.INFEASIBLE
        else:
            agree += res.status is Status.OPTIMAL and abs(res.objective - ref) < 1e-9
    dt = time.monotonic() - t0
    report(capsys, 7, agree == 30 and dt < 300, f"{agree}/30 match exhaustive edit search, {dt:.1f}s")


def test_8_change_statistics(capsys, bench):
    _, outs = bench
    med = {}
    for m in METHODS:
        changes = [o.changes for o in outs if o.method == m and o.status == "Optimal"]
        med[m] = lower_median(changes) if changes else None
    ok = all(v is not None and 1 <= v <= 4 for v in med.values())
    report(capsys, 8, ok, "median changes " + ", ".join(f"{m}={v}" for m, v in med.items()))


def test_9_harness_shape(capsys, bench, tmp_path):
    d, _ = bench
    csv_path = d / "outcomes.csv"
    with capsys.disabled():
        rc_s = main(["summarize", "--csv", str(csv_path), "--out", str(tmp_path / "table.csv")])
        rc_p = main(["plot", "--csv", str(csv_path), "--out", str(tmp_path / "cumulative.svg"),
                     "--data", str(tmp_path / "series.csv"), "--total", "100"])
    head = (tmp_path / "table.csv").read_text().splitlines()
    shape_ok = head[0] == ("method,completed,total,time_mean,time_median,time_std,"
                           "changes_mean,changes_median,changes_std") and len(head) == 1 + len(METHODS)
    series = cumulative_series(csv_path)
    monotone = all([k for _, k in pts] == sorted(k for _, k in pts) and
                   [t for t, _ in pts] == sorted(t for t, _ in pts) for pts in series.values())
    with open(tmp_path / "series.csv") as fh:
        plotted = list(csv.DictReader(fh))
    speed = summarize(csv_path).speedup("UNI")
    direction = ", ".join(f"{m} {'faster' if r and r > 1 else 'not faster'} than UNI (x{r:.2f})"
                          for m, r in speed.items() if r is not None)
    ok = rc_s == 0 and rc_p == 0 and shape_ok and monotone and len(plotted) > 0 and set(speed) == {"SHAP", "IG"}
    report(capsys, 9, ok, f"table and cumulative series well formed; {direction}")


def test_10_unsolvable_generation(capsys, cave_data, cave_assets):
    items, _ = cave_data
    template, rules = cave_assets
    gen = [it.level for it in items if not it.solvable]
    gen += generate_unsolvable("cave", 100, 1, template, rules)
    rejected = sum(not dfs_solvable(lv, template) and not is_solvable(lv, template) for lv in gen)
    report(capsys, 10, rejected == len(gen), f"{rejected}/{len(gen)} constrained levels rejected by the oracle")
