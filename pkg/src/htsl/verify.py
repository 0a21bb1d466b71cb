"""Monte Carlo diagnostics for the almost-sure limit statements.

An a.s. limit cannot be observed on finite data. The diagnostics here look at
quantile decay of normalized statistics across dyadic levels, a per-path decay
score, tail-exponent regressions, and Borel-Cantelli budgets. Each one is meant
to be run next to a negative control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from .growth import E_E, GrowthFunction
from .processes import prefix_sums
from .slln import SCHEMA_VERSION, SATISFIED, VIOLATED, unit_increments

QUANTILES = (0.1, 0.5, 0.9)
MIN_MESH = 64


@dataclass
class TailFit:
    slope: float
    stderr: float
    r2: float
    intercept: float
    u_grid: list[float] = field(default_factory=list)
    survival: list[float] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class DiagnosticsReport:
    """Per-level quantiles of normalized statistics plus decay scores.

    ``statistics[name]`` maps ``"q10"``, ``"q50"``, ``"q90"``, ``"mean"`` to one
    value per entry of ``levels``. ``decay_scores[name]`` is the fraction of paths
    whose value at the last level is below their value at the first level.
    """

    kind: str
    levels: list[int]
    statistics: dict[str, dict[str, list[float]]]
    decay_scores: dict[str, float]
    primary: str
    n_paths: int
    params: dict[str, Any] = field(default_factory=dict)
    tail_fit: TailFit | None = None

    @property
    def decay_score(self) -> float | None:
        return self.decay_scores.get(self.primary)

    def median(self, statistic: str | None = None) -> np.ndarray:
        return np.asarray(self.statistics[statistic or self.primary]["q50"])

    def to_json(self) -> dict[str, Any]:
        return {"schema_version": SCHEMA_VERSION, "kind": self.kind, "levels": self.levels,
                "statistics": self.statistics, "decay_scores": self.decay_scores,
                "primary": self.primary, "decay_score": self.decay_score, "n_paths": self.n_paths,
                "params": self.params,
                "tail_fit": None if self.tail_fit is None else self.tail_fit.to_json()}

    def tidy_rows(self) -> list[tuple[int, str, str, float]]:
        """(level, statistic, quantity, value) rows for plotting tools."""
        rows = []
        for name, table in self.statistics.items():
            for quantity, values in table.items():
                rows.extend((lvl, name, quantity, v) for lvl, v in zip(self.levels, values))
        return rows


def default_first_level(a: int) -> int:
    """First n with a^n >= e^e, where the log-family normalizers stop being clamped."""
    n = 0
    while a ** n < E_E:
        n += 1
    return n


def _summarize(values: np.ndarray) -> dict[str, list[float]]:
    q = np.quantile(values, QUANTILES, axis=0)
    return {"q10": q[0].tolist(), "q50": q[1].tolist(), "q90": q[2].tolist(),
            "mean": values.mean(axis=0).tolist()}


def _decay(values: np.ndarray) -> float:
    return float(np.mean(values[:, -1] < values[:, 0]))


def decay_diagnostic(source, phi: GrowthFunction, a: int = 2, levels: int = 20,
                     first_level: int | None = None, batch_size: int | None = None) -> DiagnosticsReport:
    """Quantiles of |S_{0,a^n}|/phi(a^n) and M_{a^n,a^n}/phi(a^n) for n = first..levels.

    The decay score of the block maximum M_{a^n,a^n}/phi(a^n) is primary.
    Rows need at least 2 a^levels + 1 increments.
    """
    return decay_diagnostics(source, [phi], a, levels, first_level, batch_size)[0]


def decay_diagnostics(source, phis, a: int = 2, levels: int = 20, first_level: int | None = None,
                      batch_size: int | None = None) -> list[DiagnosticsReport]:
    """:func:`decay_diagnostic` for several normalizers in one pass over ``source``.

    Useful with lazy ensembles, where each pass regenerates the paths.
    """
    first = default_first_level(a) if first_level is None else first_level
    if not 0 <= first < levels:
        raise ValueError("need 0 <= first_level < levels")
    need = 2 * a ** levels + 1
    lv = list(range(first, levels + 1))
    sums, maxima = [], []
    if batch_size is None:
        batch_size = max(1, 2 ** 22 // need)
    for batch in source.iter_batches(batch_size):
        xi = unit_increments(batch)
        if xi.shape[1] < need:
            raise ValueError(f"need {need} increments per path for levels={levels}; got {xi.shape[1]}")
        C = prefix_sums(xi[:, :need])
        s = np.empty((C.shape[0], len(lv)))
        m = np.empty_like(s)
        for j, n in enumerate(lv):
            L = a ** n
            s[:, j] = np.abs(C[:, L + 1])
            # M_{L,L} = max_{k<=L} |C[L+k+1] - C[L]|
            seg = C[:, L + 1:2 * L + 2]
            m[:, j] = np.maximum(seg.max(axis=1) - C[:, L], C[:, L] - seg.min(axis=1))
        sums.append(s)
        maxima.append(m)
    s_raw, m_raw = np.vstack(sums), np.vstack(maxima)
    reports = []
    for phi in phis:
        norm = phi(np.array([float(a) ** n for n in lv]))
        s_all, m_all = s_raw / norm, m_raw / norm
        reports.append(DiagnosticsReport(
            kind="decay", levels=lv,
            statistics={"block_max": _summarize(m_all), "partial_sum": _summarize(s_all)},
            decay_scores={"block_max": _decay(m_all), "partial_sum": _decay(s_all)},
            primary="block_max", n_paths=s_all.shape[0],
            params={"a": a, "phi": phi.to_json(), "levels": levels, "first_level": first}))
    return reports


def bridge_check(source, phi: GrowthFunction, a: int = 2, levels: int = 12, first_level: int = 1,
                 min_mesh: int = MIN_MESH, batch_size: int | None = None) -> DiagnosticsReport:
    """Quantiles of sup_{a^n <= t <= a^(n+1)} |X(t) - X(a^n)| / phi(a^n), n = first..levels.

    The continuous sup is replaced by the grid max; the grid must carry at least
    ``min_mesh`` points per unit time. With phi(x) = x^H (log x)^(1/p + eps) this
    is the normalized oscillation over dyadic blocks.
    """
    if not 0 <= first_level < levels:
        raise ValueError("need 0 <= first_level < levels")
    per_unit = round(1 / source.grid_step)
    if source.kind != "values":
        raise ValueError("bridge_check needs an ensemble of path values")
    if per_unit < min_mesh or not math.isclose(per_unit * source.grid_step, 1.0, rel_tol=1e-9):
        raise ValueError(f"grid too coarse: {1 / source.grid_step:g} points per unit time, need {min_mesh}")
    lv = list(range(first_level, levels + 1))
    norm = phi(np.array([float(a) ** n for n in lv]))
    need = a ** (levels + 1) * per_unit + 1
    out = []
    if batch_size is None:
        batch_size = max(1, 2 ** 22 // need)
    for batch in source.iter_batches(batch_size):
        X = batch.values
        if X.shape[1] < need:
            raise ValueError(f"need paths on [0, {a ** (levels + 1)}]")
        v = np.empty((X.shape[0], len(lv)))
        for j, n in enumerate(lv):
            i0, i1 = a ** n * per_unit, a ** (n + 1) * per_unit
            seg = X[:, i0:i1 + 1]
            v[:, j] = np.maximum(seg.max(axis=1) - X[:, i0], X[:, i0] - seg.min(axis=1))
        out.append(v / norm)
    vals = np.vstack(out)
    return DiagnosticsReport(
        kind="bridge", levels=lv, statistics={"bridge_sup": _summarize(vals)},
        decay_scores={"bridge_sup": _decay(vals)}, primary="bridge_sup", n_paths=vals.shape[0],
        params={"a": a, "phi": phi.to_json(), "levels": levels, "first_level": first_level,
                "points_per_unit": per_unit})


def path_sup(source, horizon: float = 1.0, batch_size: int = 256) -> np.ndarray:
    """Grid max of |X(t) - X(0)| over 0 <= t <= horizon, one value per path."""
    steps = round(horizon / source.grid_step)
    out = []
    for batch in source.iter_batches(batch_size):
        X = batch.values[:, :steps + 1]
        if X.shape[1] < steps + 1:
            raise ValueError("paths are shorter than the horizon")
        out.append(np.abs(X - X[:, :1]).max(axis=1))
    return np.concatenate(out)


def tail_exponent(samples, u_range: tuple[float, float] | None = None, n_grid: int = 12,
                  min_samples: int = 1000) -> TailFit:
    """Least-squares slope of log P(X > u) against log u on a geometric u-grid.

    By default the grid spans the 90th to 99.9th sample percentiles. For a tail
    P(X > u) ~ K u^-alpha the slope estimates -alpha.

    The empirical survivals at nested thresholds are correlated, with
    Cov(log S_i, log S_j) ~ (1/S_i - 1)/n for u_i <= u_j, so the fit is
    generalized least squares under that covariance. ``r2`` is the plain
    coefficient of determination of the fitted line.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {x.size}")
    if u_range is None:
        u_range = tuple(np.quantile(x, [0.9, 0.999]))
    lo, hi = u_range
    if not (lo > 0 and hi > lo):
        raise ValueError("no tail to fit: the u-range is empty or not positive")
    u = np.geomspace(lo, hi, n_grid)
    xs = np.sort(x)
    surv = 1.0 - np.searchsorted(xs, u, side="right") / x.size
    keep = surv > 0
    if keep.sum() < 5:
        raise ValueError("fewer than 5 grid points with nonzero empirical survival")
    lu, ls, s = np.log(u[keep]), np.log(surv[keep]), surv[keep]
    idx = np.arange(s.size)
    cov = (1 / s[np.minimum.outer(idx, idx)] - 1) / x.size
    design = np.column_stack([np.ones_like(lu), lu])
    weights = np.linalg.pinv(cov)
    info = design.T @ weights @ design
    coef = np.linalg.solve(info, design.T @ weights @ ls)
    stderr = math.sqrt(np.linalg.inv(info)[1, 1])
    resid = ls - design @ coef
    ss_tot = float(np.sum((ls - ls.mean()) ** 2))
    r2 = 1 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return TailFit(float(coef[1]), stderr, r2, float(coef[0]), u.tolist(), surv.tolist())


@dataclass
class BudgetReport:
    constant: float
    exponent: float
    bounds: list[float]
    partial_sum: float
    tail_bound: float
    verdict: str

    @property
    def total_bound(self) -> float:
        return self.partial_sum + self.tail_bound

    def to_json(self) -> dict[str, Any]:
        tail = self.tail_bound if math.isfinite(self.tail_bound) else "unbounded"
        return {"schema_version": SCHEMA_VERSION, "kind": "borel-cantelli-budget", "constant": self.constant,
                "exponent": self.exponent, "bounds": self.bounds, "partial_sum": self.partial_sum,
                "tail_bound": tail, "verdict": self.verdict}


def borel_cantelli_budget(constant: float, exponent: float, levels: int) -> BudgetReport:
    """Per-level bounds K n^-e for n = 1..levels, their sum, and the tail K N^(1-e)/(e-1)."""
    if constant < 0:
        raise ValueError("tail constant must be nonnegative")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    n = np.arange(1, levels + 1, dtype=float)
    bounds = constant * n ** -exponent
    partial = float(bounds.sum())
    if constant == 0:
        return BudgetReport(constant, exponent, bounds.tolist(), 0.0, 0.0, SATISFIED)
    if exponent <= 1:
        return BudgetReport(constant, exponent, bounds.tolist(), partial, math.inf, VIOLATED)
    tail = constant * levels ** (1 - exponent) / (exponent - 1)
    return BudgetReport(constant, exponent, bounds.tolist(), partial, tail, SATISFIED)
