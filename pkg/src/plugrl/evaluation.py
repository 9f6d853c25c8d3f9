"""Aggregate metrics, stratified bootstrap intervals, profiles and
probability of improvement over run x task score matrices.

Means are computed in exact rational arithmetic and rounded once, so a
metric never depends on the order in which runs or tasks are listed.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import stream


class EvalError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """``R x M`` scores: one row per run, one column per task."""

    scores: np.ndarray
    task_labels: tuple[str, ...] = ()
    run_labels: tuple[str, ...] = ()

    def __init__(self, scores, task_labels=None, run_labels=None):
        arr = np.array(scores, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise EvalError(f"score matrix must be R x M with R, M >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            r, t = np.argwhere(~np.isfinite(arr))[0]
            raise EvalError(f"non-finite score at run {r}, task {t}")
        arr.flags.writeable = False
        R, M = arr.shape
        tasks = tuple(str(t) for t in task_labels) if task_labels is not None else tuple(f"task{j}" for j in range(M))
        runs = tuple(str(r) for r in run_labels) if run_labels is not None else tuple(f"run{i}" for i in range(R))
        if len(tasks) != M:
            raise EvalError(f"{len(tasks)} task labels for {M} columns")
        if len(runs) != R:
            raise EvalError(f"{len(runs)} run labels for {R} rows")
        if len(set(tasks)) != M:
            raise EvalError("task labels must be unique")
        object.__setattr__(self, "scores", arr)
        object.__setattr__(self, "task_labels", tasks)
        object.__setattr__(self, "run_labels", runs)

    @property
    def shape(self):
        return self.scores.shape

    def column(self, task: str) -> np.ndarray:
        return self.scores[:, self.task_labels.index(task)]

    def to_csv(self) -> str:
        """Header row of task labels, then one row per run."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.task_labels)
        for row in self.scores:
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ScoreMatrix":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if not rows:
            raise EvalError("empty score CSV")
        header, body = rows[0], rows[1:]
        data = []
        for k, row in enumerate(body, start=2):
            if len(row) != len(header):
                raise EvalError(f"line {k}: expected {len(header)} fields, got {len(row)}")
            try:
                data.append([float(x) for x in row])
            except ValueError as exc:
                raise EvalError(f"line {k}: {exc}") from None
        if not data:
            raise EvalError("score CSV has no runs")
        return cls(data, header)

    def __eq__(self, other):
        return (
            isinstance(other, ScoreMatrix)
            and self.task_labels == other.task_labels
            and np.array_equal(self.scores, other.scores)
        )


# --------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class OptimalityGap:
    threshold: float = 1.0

    @property
    def name(self):
        return "optimality_gap"


METRICS = ("mean", "median", "iqm", "optimality_gap")


def parse_metric(spec):
    """``'iqm'``, ``'optimality_gap'`` or ``'optimality_gap:0.8'``."""
    if isinstance(spec, OptimalityGap):
        return spec
    name, _, arg = str(spec).strip().lower().partition(":")
    if name == "optimality_gap":
        return OptimalityGap(float(arg) if arg else 1.0)
    if name not in METRICS:
        raise EvalError(f"unknown metric {spec!r}; valid: {', '.join(METRICS)}")
    if arg:
        raise EvalError(f"metric {name!r} takes no argument")
    return name


def metric_name(metric) -> str:
    m = parse_metric(metric)
    return f"optimality_gap:{m.threshold!r}" if isinstance(m, OptimalityGap) else m


def _exact_mean(values) -> float:
    # rational sum, one rounding at the end
    values = list(values)
    return float(sum(map(Fraction, values), Fraction(0)) / len(values))


def _pooled(values) -> np.ndarray:
    if isinstance(values, ScoreMatrix):
        return values.scores.ravel()
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EvalError("cannot aggregate an empty score set")
    return arr


def interquartile_mean(values) -> float:
    x = np.sort(_pooled(values), kind="stable")
    k = len(x) // 4
    return _exact_mean(x[k : len(x) - k].tolist())


def aggregate(m, metric="iqm") -> float:
    """Metric over all ``R*M`` pooled scores."""
    x = _pooled(m)
    metric = parse_metric(metric)
    if isinstance(metric, OptimalityGap):
        gamma = Fraction(metric.threshold)
        return float(sum((max(Fraction(0), gamma - Fraction(v)) for v in x.tolist()), Fraction(0)) / len(x))
    if metric == "mean":
        return _exact_mean(x.tolist())
    if metric == "median":
        s = np.sort(x)
        n = len(s)
        if n % 2:
            return float(s[n // 2])
        return float((Fraction(s[n // 2 - 1]) + Fraction(s[n // 2])) / 2)
    return interquartile_mean(x)


# --------------------------------------------------------------------------
# bootstrap


def bootstrap_replicates(m: ScoreMatrix, metric="iqm", reps: int = 2000, seed: int = 0) -> np.ndarray:
    """Metric on ``reps`` stratified resamples.

    Replicate ``i`` draws from its own stream ``(seed, "bootstrap/i")``; in
    that stream each task, in column order, draws ``R`` run indices with
    replacement.
    """
    metric = parse_metric(metric)
    R, M = m.shape
    out = np.empty(int(reps))
    for i in range(int(reps)):
        rng = stream(seed, f"bootstrap/{i}")
        cols = [m.scores[rng.integers(0, R, size=R), t] for t in range(M)]
        out[i] = aggregate(np.stack(cols, axis=1), metric)
    return out


def bootstrap_ci(m: ScoreMatrix, metric="iqm", reps: int = 2000, confidence: float = 0.95,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile interval of the stratified bootstrap distribution."""
    if not 0.0 < confidence < 1.0:
        raise EvalError(f"confidence must lie in (0, 1), got {confidence}")
    if int(reps) < 100:
        raise EvalError(f"bootstrap needs reps >= 100, got {reps}")
    stats = bootstrap_replicates(m, metric, reps, seed)
    alpha = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha], method="linear")
    return float(lo), float(hi)


# --------------------------------------------------------------------------
# profiles and pairwise comparison


def performance_profile(ms: dict[str, ScoreMatrix], taus) -> dict[str, np.ndarray]:
    """Fraction of pooled scores strictly above each threshold."""
    taus = np.asarray(taus, dtype=np.float64).ravel()
    if taus.size == 0:
        raise EvalError("performance profile needs at least one threshold")
    if np.any(np.diff(taus) < 0):
        raise EvalError("thresholds must be sorted ascending")
    curves = {}
    for name, m in ms.items():
        x = np.sort(m.scores.ravel())
        above = len(x) - np.searchsorted(x, taus, side="right")
        curves[name] = above / len(x)
    return curves


def _poi_fraction(mx: ScoreMatrix, my: ScoreMatrix) -> Fraction:
    sx, sy = set(mx.task_labels), set(my.task_labels)
    if sx != sy:
        only_x = sorted(sx - sy)
        only_y = sorted(sy - sx)
        raise EvalError(f"task sets differ: only in X {only_x}, only in Y {only_y}")
    total = Fraction(0)
    for task in mx.task_labels:
        x = mx.column(task)
        y = np.sort(my.column(task))
        wins = int(np.searchsorted(y, x, side="left").sum())
        ties = int((np.searchsorted(y, x, side="right") - np.searchsorted(y, x, side="left")).sum())
        total += Fraction(2 * wins + ties, 2 * len(x) * len(y))
    return total / len(mx.task_labels)


def prob_improvement(mx: ScoreMatrix, my: ScoreMatrix) -> float:
    """Mean over tasks of P(X > Y) + P(X = Y) / 2 across all run pairs."""
    return float(_poi_fraction(mx, my))


# --------------------------------------------------------------------------
# reports


@dataclass
class MetricRow:
    name: str
    metric: str
    estimate: float
    lo: float
    hi: float


@dataclass
class Report:
    rows: list[MetricRow] = field(default_factory=list)
    profiles: dict[str, np.ndarray] = field(default_factory=dict)
    taus: np.ndarray | None = None
    poi: list[tuple[str, str, float]] = field(default_factory=list)

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "metric", "estimate", "ci_low", "ci_high"])
        for r in self.rows:
            w.writerow([r.name, r.metric, repr(r.estimate), repr(r.lo), repr(r.hi)])
        return buf.getvalue()

    def profile_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "tau", "fraction"])
        for name, curve in self.profiles.items():
            for t, f in zip(self.taus, curve):
                w.writerow([name, repr(float(t)), repr(float(f))])
        return buf.getvalue()

    def poi_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "prob_improvement"])
        for x, y, p in self.poi:
            w.writerow([x, y, repr(p)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "metrics": [r.__dict__ for r in self.rows],
            "profiles": {
                name: {"tau": self.taus.tolist(), "fraction": c.tolist()} for name, c in self.profiles.items()
            },
            "prob_improvement": [{"x": x, "y": y, "value": p} for x, y, p in self.poi],
        }


def default_taus(ms: dict[str, ScoreMatrix], n: int = 51) -> np.ndarray:
    pooled = np.concatenate([m.scores.ravel() for m in ms.values()])
    return np.linspace(pooled.min(), pooled.max(), n)


def report(ms: dict[str, ScoreMatrix], metrics=("mean", "median", "iqm", "optimality_gap"), reps: int = 2000,
           confidence: float = 0.95, seed: int = 0, taus=None, pairwise: bool = False) -> Report:
    """Point estimates with CIs for every (name, metric), plus profiles."""
    out = Report()
    for name, m in ms.items():
        for metric in metrics:
            lo, hi = bootstrap_ci(m, metric, reps, confidence, seed)
            out.rows.append(MetricRow(name, metric_name(metric), aggregate(m, metric), lo, hi))
    out.taus = np.asarray(taus, dtype=np.float64) if taus is not None else default_taus(ms)
    out.profiles = performance_profile(ms, out.taus)
    if pairwise:
        names = list(ms)
        for i, x in enumerate(names):
            for y in names[i + 1 :]:
                out.poi.append((x, y, prob_improvement(ms[x], ms[y])))
    return out


__all__ = [
    "EvalError",
    "METRICS",
    "MetricRow",
    "OptimalityGap",
    "Report",
    "ScoreMatrix",
    "aggregate",
    "bootstrap_ci",
    "bootstrap_replicates",
    "default_taus",
    "interquartile_mean",
    "metric_name",
    "parse_metric",
    "performance_profile",
    "prob_improvement",
    "report",
]
