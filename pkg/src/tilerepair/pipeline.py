"""Dataset generation, single-level repair and the repair experiment harness."""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from tilerepair.attribution import attribute, canonical_method
from tilerepair.classifier import LabeledDataset, MlpModel
from tilerepair.encode import build_repair_problem, build_unsolvable_problem
from tilerepair.level import Level, TileKind, diff_cells, parse_level, serialize_level, to_onehot
from tilerepair.patterns import PatternRules, builtin_patterns, check_patterns
from tilerepair.reach import MovementTemplate, builtin_template, is_solvable
from tilerepair.solver import DEFAULT_CONFIGS, SOLVER_LOG_HEADER, SolverConfig, Status, race
from tilerepair.stats import OUTCOME_HEADER
from tilerepair.weights import attributions_to_weights

DOMAIN_SHAPES = {"cave": (15, 12), "mario": (14, 18), "supercat": (20, 20)}

# generator search: settle cells in allocation order and keep the first level found
GEN_SOLVER = SolverConfig("input-order", time_limit=10.0, first_solution=True)


class QuotaUnreachable(RuntimeError):
    pass


class RepairTimeout(RuntimeError):
    pass


class InfeasibleRepair(RuntimeError):
    pass


class UnsoundRepair(AssertionError):
    pass


@dataclass
class DatasetItem:
    level: Level
    solvable: bool
    seed: int

    def to_json(self) -> dict:
        return {"text": serialize_level(self.level), "solvable": self.solvable,
                "domain": self.level.domain, "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetItem":
        return cls(parse_level(obj["text"], obj.get("domain", "custom")), bool(obj["solvable"]),
                   int(obj.get("seed", -1)))


@dataclass
class GenSettings:
    rows: Optional[int] = None
    cols: Optional[int] = None
    # fraction of Solid cells in the random target / sampled level
    solid_density: float = 0.2
    # Start drawn from the top-left, Goal from the bottom-right square of this size
    endpoint_region: Optional[int] = 4
    max_attempts: int = 50_000
    solver: SolverConfig = GEN_SOLVER


def domain_assets(domain: str, template_path=None, patterns_path=None) -> tuple[MovementTemplate, PatternRules]:
    from tilerepair.patterns import load_patterns
    from tilerepair.reach import load_template
    template = load_template(template_path) if template_path else builtin_template(domain)
    rules = load_patterns(patterns_path) if patterns_path else builtin_patterns(domain)
    return template, rules


def _shape(domain: str, settings: GenSettings) -> tuple[int, int]:
    rows, cols = DOMAIN_SHAPES.get(domain, (15, 12))
    return settings.rows or rows, settings.cols or cols


def _sub_seed(seed: int, stream: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, stream, k]).generate_state(1)[0])


def sample_level(rows: int, cols: int, rng: np.random.Generator, rules: Optional[PatternRules],
                 domain: str, density: float, endpoint_region: Optional[int], tries: int = 10_000) -> Level:
    """Seeded random level with rejection until it satisfies the pattern rules."""
    for _ in range(tries):
        grid = np.where(rng.random((rows, cols)) < density, int(TileKind.SOLID), int(TileKind.EMPTY))
        if endpoint_region is None:
            s, g = rng.choice(rows * cols, size=2, replace=False)
            grid.flat[s], grid.flat[g] = TileKind.START, TileKind.GOAL
        else:
            k = max(1, min(endpoint_region, rows, cols))
            grid[rng.integers(k), rng.integers(k)] = TileKind.START
            grid[rows - 1 - rng.integers(k), cols - 1 - rng.integers(k)] = TileKind.GOAL
            if (grid == TileKind.START).sum() != 1:
                continue
        level = Level.from_array(grid, domain)
        if rules is None or not check_patterns(level, rules):
            return level
    raise QuotaUnreachable(f"no pattern-conforming sample within {tries} draws")


def generate_level(domain: str, template: MovementTemplate, rules: Optional[PatternRules], seed: int,
                   unsolvable: bool, settings: GenSettings = GenSettings()) -> Optional[Level]:
    """One constrained-mode level, or None when the builder yields nothing usable."""
    rows, cols = _shape(domain, settings)
    prog, vm = build_unsolvable_problem(rows, cols, template, rules, seed, domain,
                                        unreachable=unsolvable, solid_density=settings.solid_density,
                                        endpoint_region=settings.endpoint_region)
    res = race(prog, [settings.solver])
    if res.assignment is None:
        return None
    level = vm.decode(res.assignment)
    if is_solvable(level, template) == unsolvable:
        return None
    return level


def gen_dataset(domain: str, n_per_class: int, mode: str = "constrained", seed: int = 0,
                settings: GenSettings = GenSettings(), template: Optional[MovementTemplate] = None,
                rules: Optional[PatternRules] = None) -> list[DatasetItem]:
    """``n_per_class`` solvable then ``n_per_class`` unsolvable levels, labels oracle-checked."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if mode not in ("sampled", "constrained"):
        raise ValueError(f"unknown generation mode {mode!r}")
    if template is None or rules is None:
        t, r = domain_assets(domain)
        template, rules = template or t, rules or r
    rows, cols = _shape(domain, settings)
    items: list[DatasetItem] = []
    if mode == "sampled":
        rng = np.random.default_rng(seed)
        quota = {True: [], False: []}
        for k in range(settings.max_attempts):
            level = sample_level(rows, cols, rng, rules, domain, settings.solid_density,
                                 settings.endpoint_region)
            ok = is_solvable(level, template)
            if len(quota[ok]) < n_per_class:
                quota[ok].append(DatasetItem(level, ok, k))
            if all(len(v) == n_per_class for v in quota.values()):
                return quota[True] + quota[False]
        raise QuotaUnreachable(f"class quotas unfilled after {settings.max_attempts} samples")
    for stream, unsolvable in ((0, False), (1, True)):
        found, k = 0, 0
        while found < n_per_class:
            if k >= settings.max_attempts:
                raise QuotaUnreachable(f"{'un' if unsolvable else ''}solvable quota unfilled "
                                       f"after {settings.max_attempts} attempts")
            s = _sub_seed(seed, stream, k)
            k += 1
            level = generate_level(domain, template, rules, s, unsolvable, settings)
            if level is not None:
                items.append(DatasetItem(level, not unsolvable, s))
                found += 1
    return items


def write_dataset(items: Sequence[DatasetItem], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for it in items:
            fh.write(json.dumps(it.to_json()) + "\n")


def read_dataset(path) -> list[DatasetItem]:
    with open(path, encoding="utf-8") as fh:
        return [DatasetItem.from_json(json.loads(line)) for line in fh if line.strip()]


def to_labeled(items: Sequence[DatasetItem], test_fraction: float = 0.2, seed: int = 0) -> LabeledDataset:
    """Label 1 marks an unsolvable level, the class whose logit is attributed."""
    return LabeledDataset.from_items([to_onehot(it.level) for it in items],
                                     [0 if it.solvable else 1 for it in items], test_fraction, seed)


@dataclass
class RepairOutcome:
    level_id: str
    method: str
    status: str
    wall_time_s: float
    attribution_time_s: float
    changes: int
    objective: Optional[float]
    winning_config: str
    changed_cells: list[tuple[int, int]] = field(default_factory=list)

    def csv_fields(self) -> list[str]:
        obj = "" if self.objective is None else f"{self.objective:g}"
        return [self.level_id, self.method, self.status, f"{self.wall_time_s:.6f}",
                f"{self.attribution_time_s:.6f}", str(self.changes), obj, self.winning_config]


def method_weights(method: str, model: Optional[MlpModel], level: Level, steps: int = 128) -> np.ndarray:
    grid = attribute(method, model, level, steps)
    return attributions_to_weights(grid.values)


def repair_level(level: Level, method: str, model: Optional[MlpModel], template: MovementTemplate,
                 rules: Optional[PatternRules], configs: Sequence[SolverConfig] = DEFAULT_CONFIGS,
                 time_limit: Optional[float] = None, level_id: str = "0", steps: int = 128,
                 layered: bool = False, raise_on_failure: bool = False,
                 solver_log: Optional[list] = None) -> tuple[RepairOutcome, Optional[Level]]:
    """Attribute, weight, encode, race, decode and verify one level.

    Wall time covers the whole pipeline, attribution included; UNI spends no
    time on attribution.
    """
    method = canonical_method(method)
    t0 = time.monotonic()
    if is_solvable(level, template):
        return RepairOutcome(level_id, method, str(Status.OPTIMAL), time.monotonic() - t0, 0.0, 0, 0.0, ""), level
    ta = time.monotonic()
    weights = method_weights(method, model, level, steps)
    attr_time = 0.0 if method == "UNI" else time.monotonic() - ta
    use_rows = layered or any(not c.use_lazy_oracle for c in configs)
    prog, vm = build_repair_problem(level, weights, template, rules, layered=use_rows)
    res = race(prog, configs, time_limit, solver_log)
    wall = time.monotonic() - t0
    if res.status is not Status.OPTIMAL:
        if raise_on_failure:
            exc = RepairTimeout if res.status is Status.TIMEOUT else InfeasibleRepair
            raise exc(f"level {level_id} ({method}): {res.status}")
        return RepairOutcome(level_id, method, str(res.status), wall, attr_time, 0, None, res.config_id), None
    repaired = vm.decode(res.assignment)
    if not is_solvable(repaired, template) or (rules is not None and check_patterns(repaired, rules)):
        raise UnsoundRepair(f"level {level_id} ({method}): optimal repair fails verification")
    diff = diff_cells(level, repaired)
    return RepairOutcome(level_id, method, str(res.status), wall, attr_time, len(diff),
                         res.objective, res.config_id, [(r, c) for r, c, _, _ in diff]), repaired


def generate_unsolvable(domain: str, n_levels: int, seed: int, template: MovementTemplate,
                        rules: Optional[PatternRules], settings: GenSettings = GenSettings()) -> list[Level]:
    items = []
    k = 0
    while len(items) < n_levels:
        if k >= settings.max_attempts:
            raise QuotaUnreachable(f"only {len(items)} of {n_levels} unsolvable levels generated")
        # stream 2 keeps experiment levels apart from training data drawn with the same seed
        level = generate_level(domain, template, rules, _sub_seed(seed, 2, k), True, settings)
        k += 1
        if level is not None:
            items.append(level)
    return items


def _repair_job(args):
    level, method, model, template, rules, configs, time_limit, level_id, steps = args
    return repair_level(level, method, model, template, rules, configs, time_limit, level_id, steps)


def write_solver_log(results, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SOLVER_LOG_HEADER + "\n")
        for r in results:
            fh.write(r.csv_row() + "\n")


def write_outcomes(outcomes: Sequence[RepairOutcome], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(OUTCOME_HEADER)
        for o in outcomes:
            w.writerow(o.csv_fields())


def run_experiment(domain: str, n_levels: int, methods: Sequence[str], model: Optional[MlpModel],
                   time_limit: float = 60.0, seed: int = 0, configs: Sequence[SolverConfig] = DEFAULT_CONFIGS,
                   out_csv=None, level_dir=None, settings: GenSettings = GenSettings(),
                   template: Optional[MovementTemplate] = None, rules: Optional[PatternRules] = None,
                   steps: int = 128, workers: int = 1, levels: Optional[Sequence[Level]] = None) -> list[RepairOutcome]:
    """Every method on the same seeded level sequence; one outcome per (level, method).

    ``workers > 1`` repairs levels in separate processes; timings from that
    mode compete for CPU and should not be compared.
    """
    methods = [canonical_method(m) for m in methods]
    if template is None or rules is None:
        t, r = domain_assets(domain)
        template, rules = template or t, rules or r
    if levels is None:
        levels = generate_unsolvable(domain, n_levels, seed, template, rules, settings)
    jobs = [(lv, m, model, template, rules, list(configs), time_limit, str(i), steps)
            for i, lv in enumerate(levels) for m in methods]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_repair_job, jobs))
    else:
        results = [_repair_job(j) for j in jobs]
    outcomes = [o for o, _ in results]
    if level_dir is not None:
        d = Path(level_dir)
        d.mkdir(parents=True, exist_ok=True)
        for i, lv in enumerate(levels):
            (d / f"{i}.txt").write_text(serialize_level(lv), encoding="utf-8")
        for o, repaired in results:
            if repaired is not None:
                (d / f"{o.level_id}.{o.method}.repaired.txt").write_text(serialize_level(repaired), encoding="utf-8")
    if out_csv is not None:
        write_outcomes(outcomes, out_csv)
    return outcomes
