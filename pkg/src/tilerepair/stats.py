"""Summary statistics and cumulative series over experiment outcome CSVs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

OUTCOME_HEADER = ["level_id", "method", "status", "wall_time_s", "attribution_time_s",
                  "changes", "objective", "winning_config"]
COMPLETED = "Optimal"


class NoCompletedRows(ValueError):
    pass


def lower_median(values: Sequence[float]) -> float:
    s = sorted(values)
    if not s:
        raise ValueError("median of no values")
    return float(s[(len(s) - 1) // 2])


def pop_std(values: Sequence[float]) -> float:
    n = len(values)
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / n)


@dataclass
class MethodStats:
    method: str
    completed: int
    total: int
    time_mean: float
    time_median: float
    time_std: float
    changes_mean: float
    changes_median: float
    changes_std: float


@dataclass
class ExperimentStats:
    per_method: dict[str, MethodStats]
    series: dict[str, list[tuple[float, int]]] = field(default_factory=dict)

    def speedup(self, baseline: str = "UNI") -> dict[str, Optional[float]]:
        """Median-time ratio baseline / method; above 1 means the method is faster."""
        base = self.per_method.get(baseline)
        out: dict[str, Optional[float]] = {}
        for m, st in self.per_method.items():
            if m == baseline or base is None:
                continue
            out[m] = base.time_median / st.time_median if st.time_median > 0 else None
        return out


def read_outcomes(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _rows(source) -> list[dict]:
    if isinstance(source, (str, Path)):
        return read_outcomes(source)
    return list(source)


def _methods(rows: Iterable[dict]) -> list[str]:
    seen: list[str] = []
    for r in rows:
        if r["method"] not in seen:
            seen.append(r["method"])
    return seen


def cumulative_series(rows) -> dict[str, list[tuple[float, int]]]:
    """Sorted completed times per method paired with the running count."""
    rows = _rows(rows)
    out = {}
    for m in _methods(rows):
        times = sorted(float(r["wall_time_s"]) for r in rows
                       if r["method"] == m and r["status"] == COMPLETED)
        out[m] = [(t, k + 1) for k, t in enumerate(times)]
    return out


def summarize(rows) -> ExperimentStats:
    """Mean, lower-middle median and population std over completed rows only."""
    rows = _rows(rows)
    stats = {}
    for m in _methods(rows):
        mine = [r for r in rows if r["method"] == m]
        done = [r for r in mine if r["status"] == COMPLETED]
        if not done:
            continue
        t = [float(r["wall_time_s"]) for r in done]
        c = [float(r["changes"]) for r in done]
        stats[m] = MethodStats(m, len(done), len(mine),
                               sum(t) / len(t), lower_median(t), pop_std(t),
                               sum(c) / len(c), lower_median(c), pop_std(c))
    if not stats:
        raise NoCompletedRows("no row has status Optimal")
    return ExperimentStats(stats, cumulative_series(rows))


def render_table(stats: ExperimentStats, delimiter: str = ",") -> str:
    """Method rows with time and change statistics, one header line."""
    head = ["method", "completed", "total", "time_mean", "time_median", "time_std",
            "changes_mean", "changes_median", "changes_std"]
    lines = [delimiter.join(head)]
    for st in stats.per_method.values():
        vals = [st.method, str(st.completed), str(st.total)]
        vals += [f"{v:.6g}" for v in (st.time_mean, st.time_median, st.time_std,
                                       st.changes_mean, st.changes_median, st.changes_std)]
        lines.append(delimiter.join(vals))
    return "\n".join(lines) + "\n"


def render_speedup(stats: ExperimentStats, baseline: str = "UNI") -> str:
    lines = ["method,baseline,median_time,baseline_median_time,speedup"]
    base = stats.per_method.get(baseline)
    for m, ratio in stats.speedup(baseline).items():
        lines.append(f"{m},{baseline},{stats.per_method[m].time_median:.6g},"
                     f"{base.time_median:.6g},{'' if ratio is None else f'{ratio:.4g}'}")
    return "\n".join(lines) + "\n"


def emit_plot_data(rows, csv_path=None) -> dict[str, list[tuple[float, int]]]:
    """Cumulative (time, repaired) series; optionally written as long-form CSV."""
    series = cumulative_series(rows)
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "time_s", "repaired"])
            for m, pts in series.items():
                for t, k in pts:
                    w.writerow([m, repr(t), k])
    return series
