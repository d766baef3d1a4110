"""Per-tile attributions of the unsolvable logit.

Both gradient methods attribute the pre-sigmoid logit against the all-zeros
baseline and sum the four channel scores of each cell.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from tilerepair.classifier import DimMismatch, MlpModel, _backward, _flatten, _forward_cache, logits
from tilerepair.level import Level, to_onehot

METHODS = ("SHAP", "IG", "UNI")
_ALIASES = {"shap": "SHAP", "shap-style": "SHAP", "deeplift": "SHAP", "ig": "IG", "uni": "UNI", "uniform": "UNI"}


def canonical_method(name: str) -> str:
    try:
        return _ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown attribution method {name!r}; expected one of {METHODS}") from None


@dataclass
class AttributionGrid:
    values: np.ndarray
    method: str
    raw: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def total(self) -> float:
        return float(self.values.sum())


def zero_baseline(level: Level) -> np.ndarray:
    return np.zeros((level.rows, level.cols, 4))


def _check(model: MlpModel, x: np.ndarray, baseline: np.ndarray) -> None:
    if x.shape != baseline.shape:
        raise DimMismatch(f"baseline shape {baseline.shape} differs from input {x.shape}")
    if x.size != model.input_dim:
        raise DimMismatch(f"input has {x.size} features, model expects {model.input_dim}")


def _grid(raw: np.ndarray, method: str, model: MlpModel, **meta) -> AttributionGrid:
    meta = {"method": method, "baseline": "zeros", "model_hash": model.digest(), **meta}
    return AttributionGrid(raw.sum(axis=2), method, raw, meta)


def integrated_gradients(model: MlpModel, level: Level, steps: int = 128,
                         baseline: Optional[np.ndarray] = None, chunk: int = 256) -> AttributionGrid:
    """Right Riemann sum of the logit gradient along the straight baseline path."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = to_onehot(level)
    base = zero_baseline(level) if baseline is None else np.asarray(baseline, dtype=np.float64)
    _check(model, x, base)
    xf, bf = x.ravel(), base.ravel()
    delta = xf - bf
    total = np.zeros_like(xf)
    alphas = np.arange(1, steps + 1) / steps
    for lo in range(0, steps, chunk):
        a = alphas[lo:lo + chunk, None]
        pts = bf[None, :] + a * delta[None, :]
        pre, acts = _forward_cache(model, pts)
        _, _, g = _backward(model, pre, acts, np.ones(len(a)))
        total += g.sum(axis=0)
    raw = (delta * total / steps).reshape(x.shape)
    return _grid(raw, "IG", model, steps=steps)


def deeplift_rescale(model: MlpModel, level: Level, baseline: Optional[np.ndarray] = None,
                     eps: float = 1e-10) -> AttributionGrid:
    """Rescale-rule multipliers propagated from the logit back to the input."""
    x = to_onehot(level)
    base = zero_baseline(level) if baseline is None else np.asarray(baseline, dtype=np.float64)
    _check(model, x, base)
    pre_x, _ = _forward_cache(model, _flatten(model, x))
    pre_b, _ = _forward_cache(model, _flatten(model, base))
    m = np.ones((1, 1))
    for i in range(len(model.weights) - 1, -1, -1):
        m = m @ model.weights[i]
        if i > 0:
            zx, zb = pre_x[i - 1], pre_b[i - 1]
            dz = zx - zb
            dh = np.maximum(zx, 0.0) - np.maximum(zb, 0.0)
            local = (zx > 0).astype(np.float64)
            safe = np.where(np.abs(dz) > eps, dz, 1.0)
            m = m * np.where(np.abs(dz) > eps, dh / safe, local)
    raw = (m.reshape(x.shape)) * (x - base)
    return _grid(raw, "SHAP", model, rule="rescale")


def uniform_attribution(level: Level) -> AttributionGrid:
    return AttributionGrid(np.ones(level.shape), "UNI", None, {"method": "UNI", "baseline": "none"})


def attribute(method: str, model: Optional[MlpModel], level: Level, steps: int = 128) -> AttributionGrid:
    method = canonical_method(method)
    if method == "UNI":
        return uniform_attribution(level)
    if model is None:
        raise ValueError(f"method {method} needs a trained model")
    if method == "IG":
        return integrated_gradients(model, level, steps)
    return deeplift_rescale(model, level)


def logit_delta(model: MlpModel, level: Level, baseline: Optional[np.ndarray] = None) -> float:
    base = zero_baseline(level) if baseline is None else baseline
    return float(logits(model, to_onehot(level))[0] - logits(model, base)[0])


def write_attribution(grid: AttributionGrid, csv_path, meta_path=None) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for row in grid.values:
            w.writerow([repr(float(v)) for v in row])
    if meta_path is not None:
        Path(meta_path).write_text(json.dumps(grid.meta, indent=1) + "\n", encoding="utf-8")


def read_attribution(csv_path, method: str = "IG") -> AttributionGrid:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        values = np.array([[float(v) for v in row] for row in csv.reader(fh) if row])
    meta_path = Path(str(csv_path)).with_suffix(".json")
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    return AttributionGrid(values, meta.get("method", method), None, meta)
