"""Command line entry point: ``tilerepair <subcommand> [options]``.

Every option may also come from a TOML or JSON file given with ``--config``.
Top-level keys apply to all subcommands; a table named after a subcommand
overrides them. Explicit command-line flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from tilerepair.solver import DEFAULT_CONFIGS

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


def load_config(path) -> dict:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".json":
        return json.loads(text)
    return tomllib.loads(text)


def _config_for(cfg: dict, command: str, known: dict[str, set[str]]) -> dict:
    """Options for one subcommand: shared top-level keys, then its own table.

    Top-level keys that another subcommand understands are skipped here; keys
    no subcommand knows, and unknown keys in a subcommand table, are errors.
    """
    norm = lambda d: {k.replace("-", "_"): v for k, v in d.items()}  # noqa: E731
    shared = norm({k: v for k, v in cfg.items() if not isinstance(v, dict)})
    own = norm(cfg.get(command, {}))
    everywhere = set().union(*known.values())
    bad = sorted(set(shared) - everywhere) + sorted(set(own) - known[command])
    bad += sorted(k for k, v in cfg.items() if isinstance(v, dict) and k not in known)
    if bad:
        raise ValueError(f"unknown config keys for {command}: {', '.join(bad)}")
    out = {k: v for k, v in shared.items() if k in known[command]}
    out.update(own)
    return out


def _settings(args):
    from tilerepair.pipeline import GenSettings
    return GenSettings(rows=args.rows, cols=args.cols, solid_density=args.density,
                       endpoint_region=None if args.region <= 0 else args.region,
                       max_attempts=args.max_attempts)


def _configs(args):
    configs = list(DEFAULT_CONFIGS)
    if args.branching:
        configs = [c for c in configs if c.branching in args.branching]
    if args.no_lazy:
        configs = [replace(c, use_lazy_oracle=False) for c in configs]
    return [replace(c, time_limit=args.time_limit) for c in configs]


def _model(args):
    from tilerepair.attribution import canonical_method
    from tilerepair.classifier import load_model
    if canonical_method(args.method) == "UNI" and not args.model:
        return None
    if not args.model:
        raise SystemExit(f"method {args.method} needs --model")
    return load_model(args.model)


def _svg_path(out, suffix=".svg") -> Path:
    return Path(out).with_suffix(suffix)


# -- subcommands -----------------------------------------------------------

def cmd_gen(args) -> int:
    from tilerepair.pipeline import gen_dataset, write_dataset
    items = gen_dataset(args.domain, args.n, args.mode, args.seed, _settings(args))
    write_dataset(items, args.out)
    n_uns = sum(not it.solvable for it in items)
    print(f"wrote {len(items)} levels ({len(items) - n_uns} solvable, {n_uns} unsolvable) to {args.out}")
    return 0


def cmd_train(args) -> int:
    from tilerepair.classifier import TrainConfig, init_model, save_model, train, write_train_log
    from tilerepair.pipeline import read_dataset, to_labeled
    items = read_dataset(args.data)
    data = to_labeled(items, args.test_fraction, args.seed)
    rows, cols = items[0].level.shape
    model = init_model(rows, cols, args.hidden[0], args.hidden[1], args.seed, args.dropout)
    cfg = TrainConfig(learning_rate=args.lr, weight_decay=args.wd, epochs=args.epochs,
                      batch_size=args.batch, seed=args.seed)
    model, history = train(model, data, cfg)
    save_model(model, args.out)
    if args.log:
        write_train_log(history, args.log)
    print("epoch,loss,train_acc,test_acc")
    for h in history:
        print(f"{h.epoch},{h.loss:.6f},{h.train_acc:.4f},{h.test_acc:.4f}")
    return 0


def cmd_attr(args) -> int:
    from tilerepair.attribution import attribute, write_attribution
    from tilerepair.level import read_level
    from tilerepair.plotting import plot_heat_grid
    level = read_level(args.level, args.domain)
    grid = attribute(args.method, _model(args), level, args.steps)
    write_attribution(grid, args.out, _svg_path(args.out, ".json"))
    if not args.no_plot:
        plot_heat_grid(grid.values, _svg_path(args.out), level, f"{grid.method} attribution")
    print(f"wrote {args.out} (sum {grid.total():.6g})")
    return 0


def cmd_weights(args) -> int:
    from tilerepair.attribution import read_attribution
    from tilerepair.plotting import plot_heat_grid
    from tilerepair.weights import attributions_to_weights, write_weights
    grid = read_attribution(args.attr)
    w = attributions_to_weights(grid.values, args.percentile, args.low, args.high)
    write_weights(w, args.out)
    if not args.no_plot:
        plot_heat_grid(w, _svg_path(args.out), None, "repair weights", cmap="cividis_r")
    print(f"wrote {args.out} ({int((w == args.low).sum())} cells at weight {args.low})")
    return 0


def cmd_repair(args) -> int:
    from tilerepair.level import read_level, write_level
    from tilerepair.pipeline import domain_assets, repair_level, write_solver_log
    from tilerepair.plotting import plot_level
    from tilerepair.stats import OUTCOME_HEADER
    level = read_level(args.level, args.domain)
    template, rules = domain_assets(args.domain, args.template, args.patterns)
    log: list = []
    outcome, repaired = repair_level(level, args.method, _model(args), template, rules, _configs(args),
                                     args.time_limit, Path(args.level).stem, args.steps, solver_log=log)
    if args.solver_log:
        write_solver_log(log, args.solver_log)
    print(",".join(OUTCOME_HEADER))
    print(",".join(outcome.csv_fields()))
    if repaired is not None and args.out:
        write_level(repaired, args.out)
        if not args.no_plot:
            plot_level(repaired, _svg_path(args.out), outcome.changed_cells, f"{outcome.method} repair")
    return 0 if outcome.status == "Optimal" else 1


def cmd_bench(args) -> int:
    from tilerepair.classifier import load_model
    from tilerepair.pipeline import domain_assets, run_experiment
    from tilerepair.plotting import plot_cumulative
    from tilerepair.stats import emit_plot_data, render_speedup, render_table, summarize
    template, rules = domain_assets(args.domain, args.template, args.patterns)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    model = load_model(args.model) if args.model else None
    outcomes = run_experiment(args.domain, args.n, methods, model, args.time_limit, args.seed,
                              _configs(args), args.out, args.level_dir, _settings(args),
                              template, rules, args.steps, args.workers)
    rows = [dict(zip(("level_id", "method", "status", "wall_time_s", "attribution_time_s",
                      "changes", "objective", "winning_config"), o.csv_fields())) for o in outcomes]
    try:
        stats = summarize(rows)
    except ValueError as exc:
        print(f"no statistics: {exc}")
        return 1
    print(render_table(stats), end="")
    print(render_speedup(stats), end="")
    if not args.no_plot:
        series = emit_plot_data(rows, _svg_path(args.out, ".series.csv"))
        plot_cumulative(series, _svg_path(args.out), f"{args.domain}: levels repaired", args.n)
    return 0


def cmd_summarize(args) -> int:
    from tilerepair.plotting import plot_cumulative
    from tilerepair.stats import render_speedup, render_table, summarize
    stats = summarize(args.csv)
    table = render_table(stats)
    print(table, end="")
    print(render_speedup(stats, args.baseline), end="")
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
        if not args.no_plot:
            plot_cumulative(stats.series, _svg_path(args.out), "levels repaired")
    return 0


def cmd_plot(args) -> int:
    from tilerepair.plotting import plot_cumulative
    from tilerepair.stats import emit_plot_data
    series = emit_plot_data(args.csv, args.data)
    plot_cumulative(series, args.out, args.title, args.total)
    print("method,time_s,repaired")
    for m, pts in series.items():
        for t, k in pts:
            print(f"{m},{t:.6g},{k}")
    return 0


def cmd_export(args) -> int:
    from tilerepair.encode import build_repair_problem
    from tilerepair.export import export_lp, export_wcnf
    from tilerepair.level import read_level
    from tilerepair.pipeline import domain_assets, method_weights
    from tilerepair.weights import read_weights
    level = read_level(args.level, args.domain)
    template, rules = domain_assets(args.domain, args.template, args.patterns)
    weights = read_weights(args.weights) if args.weights else method_weights(args.method, _model(args), level)
    prog, _ = build_repair_problem(level, weights, template, rules, layered=True, horizon=args.horizon)
    fmt = args.format or Path(args.out).suffix.lstrip(".")
    if fmt == "lp":
        text = export_lp(prog)
    elif fmt == "wcnf":
        text = export_wcnf(prog)
    elif fmt == "json":
        text = json.dumps(prog.to_json())
    else:
        raise SystemExit(f"unknown export format {fmt!r}")
    Path(args.out).write_text(text, encoding="utf-8")
    print(f"wrote {args.out}: {prog.num_vars} variables, {len(prog.rows)} rows")
    return 0


# -- parser ----------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON file with option defaults")
    p.add_argument("--domain", default="cave")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-plot", action="store_true", help="skip SVG figures")


def _gen_opts(p) -> None:
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--density", type=float, default=0.2)
    p.add_argument("--region", type=int, default=4, help="endpoint corner size; 0 places them anywhere")
    p.add_argument("--max-attempts", type=int, default=50_000)


def _solve_opts(p) -> None:
    p.add_argument("--time-limit", type=float, default=60.0)
    p.add_argument("--branching", nargs="*", help="restrict the raced configurations")
    p.add_argument("--no-lazy", action="store_true", help="use layered reachability rows")
    p.add_argument("--template", help="movement template JSON")
    p.add_argument("--patterns", help="pattern rules JSON")


def _model_opts(p) -> None:
    p.add_argument("--method", default="IG", help="SHAP, IG or UNI")
    p.add_argument("--model", help="trained model JSON")
    p.add_argument("--steps", type=int, default=128, help="integrated-gradient steps")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tilerepair", description="Attribution-weighted repair of tile levels")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a labelled dataset (JSONL)")
    _common(p), _gen_opts(p)
    p.add_argument("--n", type=int, default=1000, help="levels per class")
    p.add_argument("--mode", choices=("sampled", "constrained"), default="constrained")
    p.add_argument("--out", default="dataset.jsonl")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the solvability classifier")
    _common(p)
    p.add_argument("--data", default="dataset.jsonl")
    p.add_argument("--out", default="model.json")
    p.add_argument("--log", default="train_log.csv")
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--wd", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--hidden", type=int, nargs=2, default=[256, 128])
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attr", help="attribution grid for one level")
    _common(p), _model_opts(p)
    p.add_argument("--level", required=True)
    p.add_argument("--out", default="attr.csv")
    p.set_defaults(func=cmd_attr)

    p = sub.add_parser("weights", help="attribution grid to repair weights")
    _common(p)
    p.add_argument("--attr", required=True)
    p.add_argument("--percentile", type=float, default=80)
    p.add_argument("--low", type=int, default=1)
    p.add_argument("--high", type=int, default=10)
    p.add_argument("--out", default="weights.csv")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("repair", help="repair one level")
    _common(p), _model_opts(p), _solve_opts(p)
    p.add_argument("--level", required=True)
    p.add_argument("--out", help="write the repaired level here")
    p.add_argument("--solver-log", help="per-configuration solver results CSV")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("bench", help="run every method on generated unsolvable levels")
    _common(p), _gen_opts(p), _solve_opts(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--methods", default="SHAP,IG,UNI")
    p.add_argument("--model", help="trained model JSON (needed for SHAP and IG)")
    p.add_argument("--steps", type=int, default=128)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--level-dir", help="save original and repaired levels here")
    p.add_argument("--out", default="outcomes.csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("summarize", help="mean/median/std table from an outcomes CSV")
    _common(p)
    p.add_argument("--csv", default="outcomes.csv")
    p.add_argument("--baseline", default="UNI")
    p.add_argument("--out", help="write the table (and a cumulative SVG) here")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("plot", help="cumulative repaired-level curves")
    _common(p)
    p.add_argument("--csv", default="outcomes.csv")
    p.add_argument("--out", default="cumulative.svg")
    p.add_argument("--data", help="also write the series as CSV")
    p.add_argument("--title")
    p.add_argument("--total", type=int)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("export", help="write the repair program as LP, WCNF or JSON")
    _common(p), _model_opts(p), _solve_opts(p)
    p.add_argument("--level", required=True)
    p.add_argument("--weights", help="weights CSV; otherwise derived from --method")
    p.add_argument("--horizon", type=int, help="reachability layers (default rows*cols)")
    p.add_argument("--format", choices=("lp", "wcnf", "json"))
    p.add_argument("--out", default="repair.lp")
    p.set_defaults(func=cmd_export)
    return ap


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        subs = ap._subparsers._group_actions[0].choices
        known = {name: {a.dest for a in sp._actions} for name, sp in subs.items()}
        try:
            cfg = _config_for(load_config(args.config), args.command, known)
        except ValueError as exc:
            ap.error(str(exc))
        subs[args.command].set_defaults(**cfg)
        args = ap.parse_args(argv)
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
