"""Computable forms of the SLLN hypotheses: moment series, corollary series,
quasi-stationary series, the maximal-moment recursion and the SSSI moment identity.

Monte Carlo partial sums are reported as evidence only. A verdict of
``"satisfied"`` always rests on an analytic tail bound for the level series
sum_n g(a^n) / phi(a^n)^p, where g bounds sup_k E|S_{k,L}|^p in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from .growth import GrowthFunction, block_base, doubling_bounds
from .processes import GeometricBound, PathEnsemble, QuasiStationarySpec, _kernel_power_integral, prefix_sums
from .stable import Gaussian, StableLaw

SCHEMA_VERSION = 1
SATISFIED, VIOLATED, INCONCLUSIVE = "satisfied", "violated", "inconclusive"
_EXP_TOL = 1e-12
_MOM_BLOCKS = 32


class InfiniteMomentError(ValueError):
    """Requested p-th moment is infinite for the generating law (p >= alpha < 2)."""


def _tail_json(x: float):
    return "unbounded" if not math.isfinite(x) else x


# ----------------------------------------------------------------------------
# analytic moment models and level-series tails


@dataclass(frozen=True)
class PowerMoment:
    """Closed-form bound g(L) = coef * (L + shift)^exponent on sup_k E|S_{k,L}|^p.

    ``shift = 1`` accounts for the L + 1 terms of an inclusive block sum.
    """

    coef: float
    exponent: float
    shift: float = 0.0

    def __post_init__(self):
        if self.coef < 0 or self.shift < 0:
            raise ValueError("coef and shift must be nonnegative")

    def __call__(self, length):
        return self.coef * (np.asarray(length, dtype=float) + self.shift) ** self.exponent

    def log_at_level(self, n, log_a: float):
        """log g(a^n), stable for large n."""
        n = np.asarray(n, dtype=float)
        with np.errstate(divide="ignore"):
            return (math.log(self.coef) if self.coef > 0 else -math.inf) + self.exponent * (
                n * log_a + np.log1p(self.shift * np.exp(-n * log_a)))

    def to_json(self) -> dict[str, float]:
        return {"coef": self.coef, "exponent": self.exponent, "shift": self.shift}


def level_terms(g: PowerMoment, phi: GrowthFunction, p: float, a: int, levels) -> np.ndarray:
    """g(a^n) / phi(a^n)^p for each n in ``levels``."""
    n = np.asarray(levels, dtype=float)
    if g.coef == 0:
        return np.zeros_like(n)
    log_a = math.log(a)
    return np.exp(g.log_at_level(n, log_a) - p * phi.log_eval_at_log(n * log_a))


@dataclass(frozen=True)
class TailBound:
    """Upper bound on sum_{n > start} of a level series, with how it was obtained."""

    start: int
    bound: float
    verdict: str
    method: str
    ratio: float | None = None


def certify_tail(g: PowerMoment, phi: GrowthFunction, p: float, a: int, start: int) -> TailBound:
    """Bound sum_{n > start} g(a^n)/phi(a^n)^p analytically.

    For a^n >= x0 each term is at most K rho^n (nL)^-b (log nL)^-c with L = log a,
    rho = a^(exponent - q p), b = beta p, c = loglog p. A geometric envelope
    (rho < 1) is summed by the ratio test; rho = 1 falls back to the integral
    test, which covers the p-series and Bertrand-type tails that the ratio test
    cannot decide. rho > 1, or rho = 1 with a non-integrable envelope, diverges.
    """
    if g.coef == 0:
        return TailBound(start, 0.0, SATISFIED, "zero")
    log_a = math.log(a)
    rho_exp = g.exponent - phi.q * p
    b, c = phi.beta * p, phi.loglog * p
    term = lambda n: float(level_terms(g, phi, p, a, [n])[0])

    if rho_exp > _EXP_TOL:
        return TailBound(start, math.inf, VIOLATED, "divergent")
    if abs(rho_exp) <= _EXP_TOL and (b < 1 - _EXP_TOL or (abs(b - 1) <= _EXP_TOL and c <= 1 + _EXP_TOL)):
        return TailBound(start, math.inf, VIOLATED, "divergent")

    # first level where phi is unclamped; terms up to there are summed exactly
    m = max(start, 1, math.ceil(math.log(phi.x0) / log_a - 1e-12))
    explicit = sum(term(n) for n in range(start + 1, m + 1))

    def envelope_coef(level):
        shift_factor = (1 + g.shift * a ** -float(level)) ** max(g.exponent, 0.0)
        return g.coef * shift_factor

    def envelope(level):
        x = level * log_a
        out = level * rho_exp * log_a
        if b:
            out -= b * math.log(x)
        if c:
            out -= c * math.log(math.log(x))
        return math.exp(out)

    if rho_exp < -_EXP_TOL:
        rho = math.exp(rho_exp * log_a)

        def ratio_bound(level):
            r = rho
            if b < 0:
                r *= ((level + 1) / level) ** (-b)
            if c < 0:
                r *= (math.log((level + 1) * log_a) / math.log(level * log_a)) ** (-c)
            return r

        for _ in range(1_000_000):
            r = ratio_bound(m)
            if r < 1:
                break
            m += 1
            explicit += term(m)
        else:
            return TailBound(start, math.inf, INCONCLUSIVE, "ratio")
        tail = envelope_coef(m) * envelope(m) * r / (1 - r)
        return TailBound(start, explicit + tail, SATISFIED, "ratio", r)

    # rho == 1: integral test on a decreasing envelope
    while b + c / math.log(m * log_a) <= 0:
        m += 1
        explicit += term(m)
    y0 = m * log_a
    u0 = math.log(y0)
    if b > 1 + _EXP_TOL:
        if c >= 0:
            integral = y0 ** (1 - b) * u0 ** (-c) / (b - 1)
        else:
            s = 1 - c
            integral = (b - 1) ** (-s) * math.gamma(s) * special.gammaincc(s, (b - 1) * u0)
    else:
        integral = u0 ** (1 - c) / (c - 1)
    tail = envelope_coef(m) * integral / log_a
    return TailBound(start, explicit + tail, SATISFIED, "integral")


def _model_for_law(law, p: float, hurst: float | None = None) -> PowerMoment | None:
    if isinstance(law, Gaussian):
        return PowerMoment(law.abs_moment(p), p / 2, 1.0)
    if not law.is_symmetric or law.shift != 0:
        return None
    h = 1 / law.alpha if hurst is None else hurst
    return PowerMoment(law.abs_moment(p), h * p, 1.0)


def check_moment_finite(meta: dict[str, Any], p: float) -> None:
    alpha = float(meta.get("alpha", 2.0))
    if alpha < 2 and p >= alpha:
        raise InfiniteMomentError(f"E|X|^p is infinite for an alpha={alpha} stable law with p={p}")


def analytic_moment_model(meta: dict[str, Any], p: float) -> PowerMoment | None:
    """Closed-form sup_k E|S_{k,L}|^p for the simulators' generating specs, if known."""
    family = meta.get("family")
    if family == "zero":
        return PowerMoment(0.0, 1.0, 0.0)
    if family == "iid":
        if meta.get("law") == "gaussian":
            return _model_for_law(Gaussian(meta["sd"]), p)
        law = StableLaw(meta["alpha"], meta["skew"], meta["scale"], meta["shift"])
        return _model_for_law(Gaussian(law.scale * math.sqrt(2)) if law.is_gaussian else law, p)
    if family == "quasi-stationary" and p == 2 and "long_run_bound" in meta:
        # E S^2 over L+1 terms <= (L+1) * sum_{|m|<=L} |cov(m)| <= (L+1) (f(0) + 2 sum_m f(m))
        return PowerMoment(meta["long_run_bound"], 1.0, 1.0)
    if family in ("stable-levy", "lfsm") and meta.get("skew", 0.0) == 0:
        alpha, hurst = meta["alpha"], meta.get("hurst", 1 / meta["alpha"])
        scale = meta.get("scale", 1.0)
        if family == "lfsm" and not meta.get("passthrough"):
            scale = lfsm_unit_scale(alpha, hurst)
        return _model_for_law(StableLaw(alpha, 0.0, scale), p, hurst)
    if family == "deterministic-power" and meta["hurst"] <= 1:
        # |(k+L+1)^H - k^H| <= (L+1)^H by subadditivity of t^H
        return PowerMoment(meta.get("coef", 1.0) ** p, meta["hurst"] * p, 1.0)
    return None


def lfsm_unit_scale(alpha: float, hurst: float) -> float:
    """Scale of L(1) for unit-scale A: (int |K(1, s)|^alpha ds)^(1/alpha), untruncated."""
    d = hurst - 1 / alpha
    if d == 0:
        return 1.0
    total = 1 / (alpha * d + 1) + _kernel_power_integral(d, alpha, 0.0, math.inf)
    return total ** (1 / alpha)


# ----------------------------------------------------------------------------
# Monte Carlo moment series


@dataclass
class SllnCertificate:
    p: float
    phi: GrowthFunction
    a: int
    block_base: int
    c: float
    c1: float
    c2: float
    levels: list[int]
    moment_terms: list[float]
    window_max_terms: list[float]
    window_se: list[float]
    partial_sum: float
    tail_bound: float
    verdict: str
    estimator: str
    k_window: int
    stationary_reduction: bool
    analytic_terms: list[float] | None = None
    model: PowerMoment | None = None
    tail_method: str | None = None
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "slln-certificate",
            "p": self.p, "phi": self.phi.to_json(), "a": self.a, "block_base": self.block_base,
            "c": self.c, "c1": self.c1, "c2": self.c2,
            "levels": self.levels, "moment_terms": self.moment_terms,
            "window_max_terms": self.window_max_terms, "window_se": self.window_se,
            "partial_sum": self.partial_sum, "tail_bound": _tail_json(self.tail_bound),
            "tail_method": self.tail_method, "verdict": self.verdict, "estimator": self.estimator,
            "k_window": self.k_window, "stationary_reduction": self.stationary_reduction,
            "analytic_terms": self.analytic_terms,
            "model": None if self.model is None else self.model.to_json(),
            "notes": self.notes,
        }


def unit_increments(batch: PathEnsemble) -> np.ndarray:
    """Increments over unit time steps, from either kind of ensemble."""
    if batch.kind == "increments":
        if batch.grid_step != 1:
            raise ValueError("increment ensembles must be on the unit grid")
        return batch.values
    step = round(1 / batch.grid_step)
    if step < 1 or not math.isclose(step * batch.grid_step, 1.0, rel_tol=1e-9):
        raise ValueError("grid_step must divide 1 to recover unit increments")
    return np.diff(batch.values[:, ::step], axis=1)


def _is_power_of(x: int, base: int) -> bool:
    v = base
    while v < x:
        v *= base
    return v == x


def _admissible_constants(phi: GrowthFunction, p: float):
    bounds = doubling_bounds(phi)
    a_star, c = block_base(p, bounds.c1)
    return bounds, a_star, c


def moment_series(source, p: float, phi: GrowthFunction, a: int = 2, levels: int = 8,
                  k_window: int | None = None, model: PowerMoment | str | None = "auto",
                  estimator: str = "auto", batch_size: int | None = None) -> SllnCertificate:
    """Estimate sup_k E|S_{k,a^n} / phi(a^n)|^p for n = 0..levels over k <= k_window.

    ``source`` is a :class:`PathEnsemble` or a lazy ensemble. For stationary
    generating specs the sup over k is the common value, estimated by pooling
    all k in the window; the raw window maximum is reported alongside. Heavy
    tailed inputs with p > alpha/2 use median-of-means over 32 path blocks.
    """
    meta = source.meta
    check_moment_finite(meta, p)
    if a < 2:
        raise ValueError("a must be >= 2")
    K = a ** levels if k_window is None else int(k_window)
    need = K + a ** levels + 1
    alpha = float(meta.get("alpha", 2.0))
    if estimator == "auto":
        estimator = "median-of-means" if alpha < 2 and p > alpha / 2 else "mean"
    n_blocks = _MOM_BLOCKS if estimator == "median-of-means" else 1
    if source.n_paths < n_blocks:
        raise ValueError(f"median-of-means needs at least {n_blocks} paths")
    stationary = bool(meta.get("stationary") or meta.get("stationary_increments"))

    lengths = [a ** n for n in range(levels + 1)]
    sums = np.zeros((n_blocks, levels + 1, K + 1))
    sumsq = np.zeros((levels + 1, K + 1))
    counts = np.zeros(n_blocks)
    P = source.n_paths
    row = 0
    if batch_size is None:
        batch_size = max(1, 2 ** 22 // need)
    for batch in source.iter_batches(batch_size):
        xi = unit_increments(batch)
        if xi.shape[1] < need:
            raise ValueError(f"need {need} increments per path for levels={levels}, k_window={K}; "
                             f"got {xi.shape[1]}")
        C = prefix_sums(xi[:, :need])
        blk = (np.arange(row, row + xi.shape[0]) * n_blocks) // P
        row += xi.shape[0]
        for n, L in enumerate(lengths):
            s = np.abs(C[:, L + 1:L + K + 2] - C[:, :K + 1]) ** p
            sumsq[n] += (s * s).sum(axis=0)
            for b in np.unique(blk):
                sums[b, n] += s[blk == b].sum(axis=0)
        np.add.at(counts, blk, 1)

    per_k_mean = sums.sum(axis=0) / P
    per_k_se = np.sqrt(np.maximum(sumsq / P - per_k_mean ** 2, 0) / max(P - 1, 1))
    if n_blocks > 1:
        block_means = sums / counts[:, None, None]
        per_k = np.median(block_means, axis=0)
        pooled = np.median(block_means.mean(axis=2), axis=0)
    else:
        per_k = per_k_mean
        pooled = per_k_mean.mean(axis=1)
    phi_p = np.exp(p * phi.log_eval(np.asarray(lengths, dtype=float)))
    window_max = per_k.max(axis=1) / phi_p
    terms = pooled / phi_p if stationary else window_max

    bounds, a_star, c = _admissible_constants(phi, p)
    notes = []
    if not stationary:
        notes.append(f"sup over k taken over the finite window k <= {K}; a lower bound on the true sup")
    if model == "auto":
        model = analytic_moment_model(meta, p)
    analytic = None
    tail = TailBound(levels, math.inf, INCONCLUSIVE, "none")
    if model is not None:
        analytic = level_terms(model, phi, p, a, range(levels + 1)).tolist()
        tail = certify_tail(model, phi, p, a, levels)
    verdict = tail.verdict
    if verdict == SATISFIED and not _is_power_of(a_star, a):
        verdict = INCONCLUSIVE
        notes.append(f"admissible block base {a_star} is not a power of the level base {a}")
    elif verdict == SATISFIED and a_star != a:
        notes.append(f"levels a^n with a={a} contain the admissible blocks {a_star}^n as a subsequence")
    return SllnCertificate(
        p=p, phi=phi, a=a, block_base=a_star, c=c, c1=bounds.c1, c2=bounds.c2,
        levels=list(range(levels + 1)), moment_terms=terms.tolist(), window_max_terms=window_max.tolist(),
        window_se=(per_k_se.max(axis=1) / phi_p).tolist(), partial_sum=float(terms.sum()),
        tail_bound=tail.bound, verdict=verdict, estimator=estimator, k_window=K,
        stationary_reduction=stationary, analytic_terms=analytic, model=model,
        tail_method=tail.method, notes=notes)


# ----------------------------------------------------------------------------
# corollary series sum_n g(2^n) / phi(2^n)^p


@dataclass
class SeriesReport:
    terms: list[float]
    partial_sums: list[float]
    tail_bound: float
    verdict: str
    method: str
    ratio: float | None = None

    @property
    def total_bound(self) -> float:
        return self.partial_sums[-1] + self.tail_bound

    def to_json(self) -> dict[str, Any]:
        return {"schema_version": SCHEMA_VERSION, "kind": "series-report", "terms": self.terms,
                "partial_sums": self.partial_sums, "tail_bound": _tail_json(self.tail_bound),
                "verdict": self.verdict, "method": self.method, "ratio": self.ratio}


def corollary_series(g: PowerMoment | Callable[[int], float], phi: GrowthFunction, p: float,
                     levels: int, probe: int = 64) -> SeriesReport:
    """Partial sums of sum_n g(2^n)/phi(2^n)^p for n = 0..levels, with a tail bound.

    ``g`` is either a :class:`PowerMoment` (certified via :func:`certify_tail`) or
    a level map n -> g(2^n). For a plain level map only a ratio probe over the
    next ``probe`` levels is possible: ratios all below r < 1 give the tail
    t_N r/(1-r); nondecreasing terms are reported as divergent; anything else
    is inconclusive.
    """
    if isinstance(g, PowerMoment):
        terms = level_terms(g, phi, p, 2, range(levels + 1))
        tail = certify_tail(g, phi, p, 2, levels)
        return SeriesReport(terms.tolist(), np.cumsum(terms).tolist(), tail.bound, tail.verdict,
                            tail.method, tail.ratio)
    ns = np.arange(levels + probe + 1)
    gv = np.array([float(g(int(n))) for n in ns])
    if np.any(gv < 0):
        raise ValueError("g must be nonnegative")
    terms_all = gv / np.exp(p * phi.log_eval_at_log(ns * math.log(2)))
    terms = terms_all[:levels + 1]
    window = terms_all[levels:]
    partial = np.cumsum(terms).tolist()
    if np.all(window == 0):
        return SeriesReport(terms.tolist(), partial, 0.0, SATISFIED, "ratio-probe", 0.0)
    if np.all(window > 0):
        r = float(np.max(window[1:] / window[:-1]))
        if r < 1:
            return SeriesReport(terms.tolist(), partial, float(window[0] * r / (1 - r)), SATISFIED,
                                "ratio-probe", r)
        if np.all(window[1:] >= window[:-1] * (1 - 1e-12)):
            return SeriesReport(terms.tolist(), partial, math.inf, VIOLATED, "ratio-probe", r)
    return SeriesReport(terms.tolist(), partial, math.inf, INCONCLUSIVE, "ratio-probe")


# ----------------------------------------------------------------------------
# quasi-stationary sequences


@dataclass
class QuasiStationaryReport:
    a: int
    D: float
    D_tail_bound: float
    h_table: list[float]
    weighted_terms: list[float]
    weighted_sum_partial: float
    tail_bound: float
    verdict: str

    def h(self, m: int) -> float:
        return self.h_table[m - 1]

    def to_json(self) -> dict[str, Any]:
        return {"schema_version": SCHEMA_VERSION, "kind": "quasi-stationary-report", "a": self.a,
                "D": self.D, "D_tail_bound": _tail_json(self.D_tail_bound), "h_table": self.h_table,
                "weighted_terms": self.weighted_terms, "weighted_sum_partial": self.weighted_sum_partial,
                "tail_bound": _tail_json(self.tail_bound), "verdict": self.verdict}


def floor_log(m: int, a: int) -> int:
    """floor(log_a m) in exact integer arithmetic."""
    if m < 1:
        raise ValueError("m must be >= 1")
    j, v = 0, a
    while v <= m:
        v *= a
        j += 1
    return j


def quasi_stationary_series(f, phi: GrowthFunction, a: int = 2, m_max: int = 40,
                            support: int | None = None, rel_tol: float = 1e-15,
                            max_levels: int = 4096) -> QuasiStationaryReport:
    """D, h(m) and sum_{m=1}^{m_max} f(m) h(m) with certified tails.

    ``f`` is a :class:`GeometricBound`, a :class:`QuasiStationarySpec`, or a
    table f(0), f(1), ...; for a bare table ``support`` is the largest lag with
    possibly nonzero f (None = unknown, so no tail certificate).
    """
    if isinstance(f, QuasiStationarySpec):
        support = f.support
        f = f.closed_form if f.closed_form is not None else f.covariance_bound(max(m_max, support))
    if isinstance(f, GeometricBound):
        f_vals = f(np.arange(m_max + 1))
        f_tail = lambda m0: f.tail_sum(m0)
    else:
        f_vals = np.asarray(f, dtype=float)
        if f_vals.size < m_max + 1:
            if support is None or support >= f_vals.size:
                raise ValueError("covariance table is shorter than m_max")
            f_vals = np.concatenate([f_vals, np.zeros(m_max + 1 - f_vals.size)])
        f_tail = (lambda m0: 0.0) if support is not None and support <= m_max else None
    if np.any(f_vals < 0):
        raise ValueError("f must be nonnegative")

    g = PowerMoment(1.0, 1.0, 0.0)
    j_max = floor_log(m_max + 1, a)
    # sum levels until the certified remainder is negligible
    n_top = max(j_max, 8)
    tail = certify_tail(g, phi, 2.0, a, n_top)
    if tail.verdict == VIOLATED:
        return QuasiStationaryReport(a, math.inf, math.inf, [], [], math.inf, math.inf, VIOLATED)
    while True:
        terms = level_terms(g, phi, 2.0, a, range(n_top + 1))
        if tail.bound <= rel_tol * terms.sum() or n_top >= max_levels:
            break
        n_top = min(2 * n_top, max_levels)
        tail = certify_tail(g, phi, 2.0, a, n_top)
    suffix = np.cumsum(terms[::-1])[::-1]
    h_table = np.array([suffix[floor_log(m, a)] + tail.bound for m in range(1, m_max + 2)])
    weighted = f_vals[1:m_max + 1] * h_table[:m_max]
    if f_tail is None:
        wtail, verdict = math.inf, INCONCLUSIVE
    else:
        # h is nonincreasing, so the remainder is at most h(m_max+1) * sum_{m > m_max} f(m)
        wtail, verdict = h_table[m_max] * f_tail(m_max + 1), SATISFIED
    return QuasiStationaryReport(a, float(suffix[0]), tail.bound, h_table[:m_max].tolist(),
                                 weighted.tolist(), float(weighted.sum()), float(wtail), verdict)


# ----------------------------------------------------------------------------
# recursion for the maximal moments


@dataclass
class RecursionBound:
    c: float
    initial: float
    bounds: list[float]
    sup_bound: float
    summed_bound: float
    floored: int

    def to_json(self) -> dict[str, Any]:
        return {"schema_version": SCHEMA_VERSION, "kind": "recursion-bound", **self.__dict__}


def recursion_certificate(terms: Sequence[float], c: float, initial: float = 0.0) -> RecursionBound:
    """Bounds F_{n+1} <= c^{n+1} F_0 + sum_{k<=n} c^{n-k} t_k for n = 0..len(terms)-1.

    Accumulated as F_{n+1} = c F_n + t_n. Negative estimated terms are floored at
    zero and counted. ``summed_bound`` bounds sum_n F_n by (F_0 + sum t)/(1 - c).
    """
    if not 0 < c < 1:
        raise ValueError(f"need 0 < c < 1, got {c!r}")
    if initial < 0:
        raise ValueError("F_0 must be nonnegative")
    t = np.asarray(terms, dtype=float)
    floored = int(np.sum(t < 0))
    t = np.maximum(t, 0.0)
    out = np.empty(t.size)
    f = initial
    for n, tn in enumerate(t):
        f = c * f + tn
        out[n] = f
    sup = float(max(initial, out.max(initial=initial)))
    return RecursionBound(c, initial, out.tolist(), sup, float((initial + t.sum()) / (1 - c)), floored)


@dataclass
class RecursionTerms:
    kind: str
    levels: list[int]
    terms: list[float]
    maximal_excess: list[float]


def recursion_terms(source, p: float, phi: GrowthFunction, a: int = 2, levels: int = 6,
                    k_window: int | None = None, batch_size: int = 64) -> RecursionTerms:
    """Monte Carlo estimates of the recursion inputs.

    ``terms[n]`` estimates G_n (p > 1) or H_n (p <= 1) for n = 0..levels-1 with
    the sup over k <= k_window; ``maximal_excess[n]`` estimates
    F_n = sup_k E(M_{k,a^n}^p - |S_{k,a^n}|^p) / phi(a^n)^p for n = 0..levels.
    """
    check_moment_finite(source.meta, p)
    K = a ** levels if k_window is None else int(k_window)
    need = K + 2 * a ** levels + 1
    coef = 2.0 ** (p - 1) if p > 1 else 1.0
    lengths = [a ** n for n in range(levels + 1)]
    # E|S_{k,L}|^p for k in 0..K + a^levels so that shifted blocks are available
    span = K + a ** levels
    mom = np.zeros((levels + 1, span + 1))
    excess = np.zeros((levels + 1, K + 1))
    P = 0
    for batch in source.iter_batches(batch_size):
        xi = unit_increments(batch)
        if xi.shape[1] < need:
            raise ValueError(f"need {need} increments per path")
        C = prefix_sums(xi[:, :need])
        P += xi.shape[0]
        for n, L in enumerate(lengths):
            s = np.abs(C[:, L + 1:L + span + 2] - C[:, :span + 1])
            mom[n] += (s ** p).sum(axis=0)
            win = sliding_window_view(C[:, 1:K + L + 2], L + 1, axis=1)
            mx = np.maximum(win.max(axis=2) - C[:, :K + 1], C[:, :K + 1] - win.min(axis=2))
            excess[n] += (mx ** p - s[:, :K + 1] ** p).sum(axis=0)
    mom /= P
    excess /= P
    phi_l = phi(np.asarray(lengths, dtype=float))
    terms = []
    for n in range(levels):
        L = lengths[n]
        ratio = (phi_l[n] / phi_l[n + 1]) ** p
        k = np.arange(K + 1)
        val = (coef * ratio * (mom[n, k + L] + mom[n, k]) / phi_l[n] ** p
               - mom[n + 1, k] / phi_l[n + 1] ** p)
        terms.append(float(val.max()))
    F = (excess.max(axis=1) / phi_l ** p).tolist()
    return RecursionTerms("G" if p > 1 else "H", list(range(levels)), terms, F)


# ----------------------------------------------------------------------------
# SSSI moment identity


@dataclass
class SssiRatioTable:
    hurst: float
    p: float
    a: int
    form: str
    levels: list[int]
    ratios: list[float]
    moments: list[float]
    moment_x1: float

    def to_json(self) -> dict[str, Any]:
        return {"schema_version": SCHEMA_VERSION, "kind": "sssi-ratio-table", **self.__dict__}


def sssi_moment_identity(ensemble: PathEnsemble, hurst: float, p: float, a: int = 2, levels: int = 8,
                         form: str = "increment") -> SssiRatioTable:
    """r_n = E|D_n|^p / (len_n^{Hp} E|X(1)|^p) along n = 0..levels.

    ``form="increment"`` uses D_n = X(a^n) - X(0) with len_n = a^n, the process
    form of the identity. ``form="inclusive"`` uses the inclusive block sum
    S_{0,a^n} = X(a^n + 1) - X(0) of the unit increments, with len_n = a^n + 1.
    Under H-SSSI both ratios are 1 in expectation.
    """
    check_moment_finite(ensemble.meta, p)
    if form not in ("increment", "inclusive"):
        raise ValueError("form must be 'increment' or 'inclusive'")
    step = round(1 / ensemble.grid_step)
    if not math.isclose(step * ensemble.grid_step, 1.0, rel_tol=1e-9):
        raise ValueError("grid_step must divide 1")
    X = ensemble.path_values[:, ::step]
    extra = 1 if form == "inclusive" else 0
    if X.shape[1] < a ** levels + extra + 1:
        raise ValueError("ensemble too short for the requested levels")
    x1 = float(np.mean(np.abs(X[:, 1] - X[:, 0]) ** p))
    moments, ratios = [], []
    for n in range(levels + 1):
        L = a ** n + extra
        mom = float(np.mean(np.abs(X[:, L] - X[:, 0]) ** p))
        moments.append(mom)
        ratios.append(mom / (L ** (hurst * p) * x1) if x1 > 0 else math.nan)
    return SssiRatioTable(hurst, p, a, form, list(range(levels + 1)), ratios, moments, x1)
