"""Path simulators and the partial-sum primitives.

Partial sums follow the inclusive convention S_{m,n} = xi_m + ... + xi_{m+n}
(n + 1 terms) and M_{m,n} = max_{k <= n} |S_{m,k}|.

Every ensemble row ``i`` is drawn from ``SeedStream(seed, i)``, so rows can be
generated in any order, in parallel, or lazily in batches with identical output.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import integrate, signal

from .stable import Gaussian, SeedStream, StableLaw, draw


def thread_count() -> int:
    """Worker threads for path generation, capped by ``HTSL_THREADS``."""
    cap = os.environ.get("HTSL_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


@dataclass
class PathEnsemble:
    """P sample paths on a common grid.

    ``kind`` is ``"increments"`` (row = xi_0..xi_{N-1}) or ``"values"``
    (row = X(0), X(h), ..., X(Nh) with h = ``grid_step``).
    """

    values: np.ndarray
    grid_step: float = 1.0
    kind: str = "values"
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.kind not in ("values", "increments"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def increments(self) -> np.ndarray:
        if self.kind == "increments":
            return self.values
        return np.diff(self.values, axis=1)

    @property
    def path_values(self) -> np.ndarray:
        if self.kind == "values":
            return self.values
        out = np.zeros((self.n_paths, self.values.shape[1] + 1))
        np.cumsum(self.values, axis=1, out=out[:, 1:])
        return out

    def iter_batches(self, batch_size: int = 64) -> Iterator["PathEnsemble"]:
        for start in range(0, self.n_paths, batch_size):
            yield PathEnsemble(self.values[start:start + batch_size], self.grid_step, self.kind, self.meta)

    def scaled(self, factor: float) -> "PathEnsemble":
        return PathEnsemble(self.values * factor, self.grid_step, self.kind, dict(self.meta))


@dataclass
class LazyEnsemble:
    """Ensemble that generates its rows on demand, batch by batch.

    Used where the full P x N matrix would not fit in memory. Rows are produced
    by ``row_fn(i)``; batches are bit-identical to slices of :meth:`materialize`.
    """

    row_fn: Callable[[int], np.ndarray]
    n_paths: int
    grid_step: float = 1.0
    kind: str = "values"
    meta: dict[str, Any] = field(default_factory=dict)

    def rows(self, start: int, stop: int) -> np.ndarray:
        idx = range(start, min(stop, self.n_paths))
        workers = min(thread_count(), len(idx))
        if workers <= 1:
            return np.vstack([self.row_fn(i) for i in idx])
        with ThreadPoolExecutor(workers) as pool:
            return np.vstack(list(pool.map(self.row_fn, idx)))

    def iter_batches(self, batch_size: int = 16) -> Iterator[PathEnsemble]:
        for start in range(0, self.n_paths, batch_size):
            yield PathEnsemble(self.rows(start, start + batch_size), self.grid_step, self.kind, self.meta)

    def materialize(self) -> PathEnsemble:
        return PathEnsemble(self.rows(0, self.n_paths), self.grid_step, self.kind, self.meta)


def _build(row_fn, paths, grid_step, kind, meta, lazy):
    if paths < 1:
        raise ValueError("paths must be >= 1")
    ens = LazyEnsemble(row_fn, paths, grid_step, kind, meta)
    return ens if lazy else ens.materialize()


def _law_meta(law) -> dict[str, Any]:
    if isinstance(law, Gaussian):
        return {"law": "gaussian", "sd": law.sd, "alpha": 2.0}
    return {"law": "stable", "alpha": law.alpha, "skew": law.skew, "scale": law.scale, "shift": law.shift}


# ----------------------------------------------------------------------------
# i.i.d. sequences


def _iid_row(law, n, seed, i):
    return draw(law, SeedStream(seed, i).generator(), n)


def simulate_iid(law, n: int, paths: int, seed: int, lazy: bool = False):
    """Increments xi_0..xi_{n-1} i.i.d. from ``law`` (StableLaw or Gaussian)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    meta = {"family": "iid", "seed": seed, "stationary": True, **_law_meta(law)}
    return _build(partial(_iid_row, law, n, seed), paths, 1.0, "increments", meta, lazy)


def simulate_zero(n: int, paths: int = 1) -> PathEnsemble:
    """Degenerate all-zero increments."""
    return PathEnsemble(np.zeros((paths, n)), 1.0, "increments",
                        {"family": "zero", "seed": 0, "stationary": True})


# ----------------------------------------------------------------------------
# quasi-stationary (Gaussian moving average) sequences


@dataclass(frozen=True)
class GeometricBound:
    """Closed-form covariance bound f(m) = coef * ratio^m (0 <= ratio < 1)."""

    coef: float
    ratio: float

    def __post_init__(self):
        if self.coef < 0 or not 0 <= self.ratio < 1:
            raise ValueError("need coef >= 0 and 0 <= ratio < 1")

    def __call__(self, m):
        return self.coef * self.ratio ** np.asarray(m, dtype=float)

    def tail_sum(self, m0: int) -> float:
        """sum_{m >= m0} f(m)."""
        return self.coef * self.ratio ** m0 / (1 - self.ratio)


@dataclass(frozen=True)
class QuasiStationarySpec:
    """xi_k = sum_j c_j Z_{k+j} with Z i.i.d. N(0, 1).

    ``closed_form`` optionally carries an analytic covariance bound valid for
    every lag (used for geometric coefficients, whose stored list is truncated).
    """

    ma_coefficients: tuple[float, ...]
    closed_form: GeometricBound | None = None

    def __post_init__(self):
        c = np.asarray(self.ma_coefficients, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("need a non-empty coefficient sequence")
        if not np.all(np.isfinite(c)) or not math.isfinite(float(np.abs(c).sum())):
            raise ValueError("coefficients must be absolutely summable")
        object.__setattr__(self, "ma_coefficients", tuple(float(v) for v in c))

    @classmethod
    def geometric(cls, rho: float, tol: float = 1e-17) -> "QuasiStationarySpec":
        """c_j = rho^j, truncated once |rho|^j < tol; f(m) <= |rho|^m / (1 - rho^2)."""
        if not abs(rho) < 1:
            raise ValueError("geometric coefficients need |rho| < 1 (otherwise the sum diverges)")
        if rho == 0:
            return cls((1.0,), GeometricBound(1.0, 0.0))
        length = max(1, math.ceil(math.log(tol) / math.log(abs(rho))))
        coeffs = tuple(rho ** j for j in range(length))
        return cls(coeffs, GeometricBound(1 / (1 - rho * rho), abs(rho)))

    def covariance(self, m_max: int) -> np.ndarray:
        """Exact E(xi_l xi_{l+m}) = sum_j c_j c_{j+m} for m = 0..m_max."""
        c = np.asarray(self.ma_coefficients)
        out = np.zeros(m_max + 1)
        full = np.correlate(c, c, mode="full")[c.size - 1:]
        k = min(m_max + 1, full.size)
        out[:k] = full[:k]
        return out

    def covariance_bound(self, m_max: int) -> np.ndarray:
        """Table f(0..m_max) bounding |E(xi_l xi_{l+m})|."""
        if self.closed_form is not None:
            return self.closed_form(np.arange(m_max + 1))
        return np.abs(self.covariance(m_max))

    def long_run_bound(self) -> float:
        """f(0) + 2 sum_{m >= 1} f(m), which bounds sum_{|m| <= L} |cov(m)| for every L."""
        if self.closed_form is not None:
            cf = self.closed_form
            return cf.coef + 2 * cf.tail_sum(1)
        f = self.covariance_bound(self.support)
        return float(f[0] + 2 * f[1:].sum())

    @property
    def support(self) -> int | None:
        """Largest lag with possibly nonzero covariance, or None if unbounded."""
        return None if self.closed_form is not None else len(self.ma_coefficients) - 1


def _ma_row(coeffs, n, seed, i):
    c = np.asarray(coeffs)
    z = SeedStream(seed, i).generator().standard_normal(n + c.size - 1)
    if c.size <= 64:
        return np.correlate(z, c, mode="valid")
    return signal.oaconvolve(z, c[::-1], mode="valid")


def simulate_quasi_stationary(spec: QuasiStationarySpec, n: int, paths: int, seed: int,
                              m_max: int = 20, lazy: bool = False):
    """Gaussian moving-average ensemble plus its covariance bound table f(0..m_max)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    meta = {"family": "quasi-stationary", "seed": seed, "stationary": True, "alpha": 2.0,
            "ma_length": len(spec.ma_coefficients), "long_run_bound": spec.long_run_bound()}
    ens = _build(partial(_ma_row, spec.ma_coefficients, n, seed), paths, 1.0, "increments", meta, lazy)
    return ens, spec.covariance_bound(m_max)


# ----------------------------------------------------------------------------
# stable Levy motion


def _levy_row(law, n, seed, i):
    out = np.zeros(n + 1)
    np.cumsum(draw(law, SeedStream(seed, i).generator(), n), out=out[1:])
    return out


def simulate_stable_levy(alpha: float, n: int, grid_step: float, paths: int, seed: int,
                         skew: float = 0.0, scale: float = 1.0, lazy: bool = False):
    """Strictly stable Levy motion X(0) = 0, X(h), ..., X(nh) with h = ``grid_step``.

    X(1) has scale ``scale`` (unit scale per unit time by default); increments
    over a step h have scale ``scale * h^(1/alpha)``. For alpha = 2 that means
    Var X(1) = 2 scale^2, so ``scale = 1/sqrt(2)`` gives standard Brownian motion.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    law = StableLaw(alpha, skew, scale * grid_step ** (1 / alpha))
    meta = {"family": "stable-levy", "seed": seed, "alpha": alpha, "skew": skew, "scale": scale,
            "hurst": 1 / alpha, "stationary_increments": True, "scale_convention": "scale of X(1)"}
    return _build(partial(_levy_row, law, n, seed), paths, grid_step, "values", meta, lazy)


# ----------------------------------------------------------------------------
# linear fractional stable motion


class KernelTruncationError(ValueError):
    """The truncated kernel loses too much of the dispersion of L(n)."""


@dataclass(frozen=True)
class LfsmSpec:
    """L(t) = int [(t-s)_+^d - (-s)_+^d] A(ds), d = hurst - 1/alpha.

    ``kernel_cutoff`` truncates the integral to s >= -T (None means T = 16 n);
    ``mesh`` is the number of Riemann cells per unit time.
    """

    alpha: float
    hurst: float
    mesh: int = 8
    kernel_cutoff: float | None = None
    skew: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        if not 0 < self.hurst < 1:
            raise ValueError("hurst must lie in (0, 1)")
        if self.mesh < 1:
            raise ValueError("mesh must be >= 1")

    @property
    def exponent(self) -> float:
        return self.hurst - 1 / self.alpha

    @property
    def degenerate(self) -> bool:
        return math.isclose(self.hurst, 1 / self.alpha, rel_tol=0, abs_tol=1e-15)


def _kernel_power_integral(d: float, alpha: float, lo: float, hi: float) -> float:
    f = lambda v: abs((1 + v) ** d - v ** d) ** alpha
    pts = [p for p in (1.0, 10.0, 100.0, 1000.0) if lo < p < hi] if math.isfinite(hi) else None
    if math.isfinite(hi):
        return integrate.quad(f, lo, hi, points=pts, limit=400)[0]
    # numeric up to V, then the two-term expansion
    # |(1+v)^d - v^d|^alpha = |d|^alpha v^g (1 + alpha (d-1) / (2v) + O(v^-2)), g = alpha (d-1) < -1
    V = max(lo, 1e4)
    head = _kernel_power_integral(d, alpha, lo, V) if V > lo else 0.0
    g = alpha * (d - 1)
    tail = abs(d) ** alpha * (V ** (g + 1) / -(g + 1) + alpha * (d - 1) / 2 * V ** g / -g)
    return head + tail


def truncation_share(alpha: float, hurst: float, cutoff_ratio: float) -> float:
    """Share of int |K(n, s)|^alpha ds carried by s < -T, where T = cutoff_ratio * n.

    By self-similarity this depends on T/n only. The quantity is the fraction of
    scale(L(n))^alpha that the truncated construction drops.
    """
    d = hurst - 1 / alpha
    if d == 0:
        return 0.0
    inside = 1 / (alpha * d + 1) + _kernel_power_integral(d, alpha, 0.0, cutoff_ratio)
    tail = _kernel_power_integral(d, alpha, cutoff_ratio, math.inf)
    return tail / (inside + tail)


def _lfsm_kernel(d: float, mesh: int, length: int) -> np.ndarray:
    # Riemann cells are centred: t - s_i = (l + 1/2) / mesh for l >= 0
    return ((np.arange(length) + 0.5) / mesh) ** d


def _lfsm_rows(spec: LfsmSpec, n: int, cutoff_steps: int, seed: int, rows: range) -> np.ndarray:
    m = spec.mesh
    g_len = (cutoff_steps + n) * m
    kernel = _lfsm_kernel(spec.exponent, m, g_len)
    law = StableLaw(spec.alpha, spec.skew, (1.0 / m) ** (1 / spec.alpha))
    noise = np.vstack([draw(law, SeedStream(seed, i).generator(), g_len) for i in rows])
    conv = signal.fftconvolve(noise, kernel[None, :], axes=1)
    idx = np.arange(n + 1) * m + cutoff_steps * m - 1
    # L(j) = sum_i [g(j m + T m - 1 - i) - g(T m - 1 - i)] dA_i
    return conv[:, idx] - conv[:, idx[:1]]


def simulate_lfsm(spec: LfsmSpec, n: int, paths: int, seed: int, lazy: bool = False,
                  max_truncation_share: float = 0.1):
    """LFSM at integer times 0..n by a Riemann sum over [-T, n] with cell 1/mesh.

    The kernel is applied by FFT convolution. When hurst = 1/alpha the result is
    exactly :func:`simulate_stable_levy` on the unit grid with the same seed.
    Raises :class:`KernelTruncationError` when the part of the kernel cut off
    below -T carries more than ``max_truncation_share`` of the dispersion of L(n).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if spec.degenerate:
        ens = simulate_stable_levy(spec.alpha, n, 1.0, paths, seed, skew=spec.skew, lazy=lazy)
        ens.meta.update(family="lfsm", hurst=spec.hurst, mesh=spec.mesh, passthrough=True)
        return ens
    cutoff = 16 * n if spec.kernel_cutoff is None else spec.kernel_cutoff
    if cutoff < n:
        raise ValueError("kernel_cutoff must be >= n")
    cutoff_steps = math.ceil(cutoff)
    share = truncation_share(spec.alpha, spec.hurst, cutoff_steps / n)
    if share > max_truncation_share:
        raise KernelTruncationError(
            f"kernel tail below -{cutoff_steps} carries {share:.1%} of the dispersion of L(n); "
            "increase kernel_cutoff")
    meta = {"family": "lfsm", "seed": seed, "alpha": spec.alpha, "hurst": spec.hurst, "skew": spec.skew,
            "mesh": spec.mesh, "kernel_cutoff": cutoff_steps, "truncation_share": share,
            "stationary_increments": True, "passthrough": False}
    row_fn = lambda i: _lfsm_rows(spec, n, cutoff_steps, seed, range(i, i + 1))[0]
    if lazy:
        return LazyEnsemble(row_fn, paths, 1.0, "values", meta)
    batch = max(1, 2 ** 22 // ((cutoff_steps + n) * spec.mesh))
    blocks = [_lfsm_rows(spec, n, cutoff_steps, seed, range(s, min(s + batch, paths)))
              for s in range(0, paths, batch)]
    return PathEnsemble(np.vstack(blocks), 1.0, "values", meta)


# ----------------------------------------------------------------------------
# deterministic paths (degenerate H-SSSI processes)


def deterministic_power_path(hurst: float, horizon: float, grid_step: float = 1.0,
                             paths: int = 1, coef: float = 1.0) -> PathEnsemble:
    """X(t) = coef * t^hurst sampled on [0, horizon]."""
    steps = round(horizon / grid_step)
    t = np.arange(steps + 1) * grid_step
    row = coef * t ** hurst
    return PathEnsemble(np.tile(row, (paths, 1)), grid_step, "values",
                        {"family": "deterministic-power", "hurst": hurst, "seed": 0})


# ----------------------------------------------------------------------------
# partial sums and maxima


def _check_range(xi, m: int, n: int):
    if m < 0 or n < 0 or m + n >= len(xi):
        raise IndexError(f"S_{{{m},{n}}} needs indices {m}..{m + n} within a row of length {len(xi)}")


def partial_sum(xi, m: int, n: int) -> float:
    """S_{m,n} = xi_m + ... + xi_{m+n}."""
    xi = np.asarray(xi, dtype=float)
    _check_range(xi, m, n)
    return float(xi[m:m + n + 1].sum())


def running_max(xi, m: int, n: int) -> float:
    """M_{m,n} = max_{0 <= k <= n} |S_{m,k}|."""
    xi = np.asarray(xi, dtype=float)
    _check_range(xi, m, n)
    return float(np.abs(np.cumsum(xi[m:m + n + 1])).max())


def prefix_sums(xi: np.ndarray) -> np.ndarray:
    """C with C[..., j] = xi_0 + ... + xi_{j-1}; S_{m,n} = C[m+n+1] - C[m]."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(xi.shape[:-1] + (xi.shape[-1] + 1,))
    np.cumsum(xi, axis=-1, out=out[..., 1:])
    return out


def block_split_bound(xi, k: int, n: int) -> tuple[float, float]:
    """(M_{k,2n+1}, max(M_{k,n}, |S_{k,n}| + M_{k+n+1,n})).

    The splitting step of the maximal inequality, for two adjacent blocks of
    n + 1 terms each. The first value never exceeds the second.
    """
    lhs = running_max(xi, k, 2 * n + 1)
    rhs = max(running_max(xi, k, n), abs(partial_sum(xi, k, n)) + running_max(xi, k + n + 1, n))
    return lhs, rhs


def _window_absmax(C: np.ndarray, start: int, count: int, n: int) -> np.ndarray:
    """M_{k,n} for k = start..start+count-1 from prefix sums C (rows = paths)."""
    base = C[:, start:start + count]
    win = sliding_window_view(C[:, start + 1:start + count + n + 1], n + 1, axis=1)
    return np.maximum(win.max(axis=2) - base, base - win.min(axis=2))


def block_split_margins(xi, n: int) -> np.ndarray:
    """rhs - lhs of :func:`block_split_bound` for every admissible k, vectorized.

    ``xi`` is P x L; the result is P x (L - 2n - 1), column k holding
    max(M_{k,n}, |S_{k,n}| + M_{k+n+1,n}) - M_{k,2n+1}.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    count = xi.shape[1] - 2 * n - 1
    if n < 0 or count < 1:
        raise IndexError(f"rows of length {xi.shape[1]} hold no pair of blocks of {n + 1} terms")
    C = prefix_sums(xi)
    k = np.arange(count)
    lhs = _window_absmax(C, 0, count, 2 * n + 1)
    s = np.abs(C[:, k + n + 1] - C[:, k])
    rhs = np.maximum(_window_absmax(C, 0, count, n), s + _window_absmax(C, n + 1, count, n))
    return rhs - lhs
