"""Normalizing functions phi(x) = x^q (log x)^beta (log log x)^gamma and their constants.

Besides evaluation, this module derives the structural constants needed by the
block argument: doubling bounds C1 <= phi(2x)/phi(x) <= C2, the block base ``a``
and the contraction constant ``c`` of the maximal-moment recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

E_E = math.exp(math.e)
_STRICT_MARGIN = 1e-12
_SCAN_POINTS = 10_000
_SCAN_RTOL = 1e-12


@dataclass(frozen=True)
class GrowthFunction:
    """phi(x) = x^q (log x)^beta (log log x)^loglog on [x0, inf), frozen below x0.

    ``loglog`` is zero for the plain power-log family. The composite normalizer
    sqrt(x log x (log log x)^(1+eps)) is available as :meth:`sqrt_log`.
    For beta = loglog = 0 the logarithms play no role and any x0 > 0 is allowed;
    otherwise x0 >= e^e so that log x >= e and log log x >= 1 on the domain.
    """

    q: float
    beta: float = 0.0
    x0: float = E_E
    loglog: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.q) and self.q > 0):
            raise ValueError(f"q must be a positive finite number, got {self.q!r}")
        if not (math.isfinite(self.beta) and math.isfinite(self.loglog)):
            raise ValueError("beta and loglog must be finite")
        if not (math.isfinite(self.x0) and self.x0 > 0):
            raise ValueError(f"x0 must be positive, got {self.x0!r}")
        if self.has_logs:
            if self.x0 < E_E * (1 - 1e-15):
                raise ValueError(f"x0 must be >= e^e when log factors are present, got {self.x0!r}")
            # d log(phi)/d log(x) = q + beta/log x + loglog/(log x * loglog x); worst case is at x0
            lx = math.log(self.x0)
            slope = self.q + min(self.beta, 0.0) / lx + min(self.loglog, 0.0) / (lx * math.log(lx))
            if slope < 0:
                raise ValueError("phi is not nondecreasing on [x0, inf) for these parameters")

    @classmethod
    def power(cls, q: float, x0: float = 1.0) -> "GrowthFunction":
        """Pure power x^q; no clamping above ``x0`` (default 1)."""
        return cls(q=q, beta=0.0, x0=x0)

    @classmethod
    def sqrt_log(cls, eps: float, x0: float = E_E) -> "GrowthFunction":
        """sqrt(x log x (log log x)^(1+eps))."""
        return cls(q=0.5, beta=0.5, x0=x0, loglog=0.5 * (1.0 + eps))

    @property
    def has_logs(self) -> bool:
        return self.beta != 0.0 or self.loglog != 0.0

    def __call__(self, x):
        return evaluate(self, x)

    def log_eval(self, x):
        """log phi(x), vectorized."""
        with np.errstate(divide="ignore"):
            return self.log_eval_at_log(np.log(np.asarray(x, dtype=float)))

    def log_eval_at_log(self, logx):
        """log phi(e^logx); lets level sums use x = a^n far beyond float range."""
        lx = np.maximum(np.asarray(logx, dtype=float), math.log(self.x0))
        out = self.q * lx
        if self.beta:
            out = out + self.beta * np.log(lx)
        if self.loglog:
            out = out + self.loglog * np.log(np.log(lx))
        return out

    def doubling_ratio(self, x):
        """phi(2x)/phi(x)."""
        return np.exp(self.log_eval(2 * np.asarray(x, dtype=float)) - self.log_eval(x))

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"q": self.q, "beta": self.beta, "x0": self.x0}
        if self.loglog:
            out["loglog"] = self.loglog
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "GrowthFunction":
        return cls(q=float(obj["q"]), beta=float(obj.get("beta", 0.0)),
                   x0=float(obj.get("x0", E_E)), loglog=float(obj.get("loglog", 0.0)))


def evaluate(phi: GrowthFunction, x):
    """Evaluate phi at ``x`` (scalar or array); inputs below x0 are clamped to x0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("phi is defined on x >= 0")
    xc = np.maximum(x, phi.x0)
    out = xc ** phi.q
    if phi.has_logs:
        lx = np.log(xc)
        if phi.beta:
            out = out * lx ** phi.beta
        if phi.loglog:
            out = out * np.log(lx) ** phi.loglog
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DoublingBounds:
    c1: float
    c2: float

    def __post_init__(self):
        if not (1 < self.c1 <= self.c2):
            raise ValueError(f"need 1 < c1 <= c2, got c1={self.c1!r}, c2={self.c2!r}")


def _factor_ranges(phi: GrowthFunction, lo: float, hi: float) -> list[tuple[float, float]]:
    """Range of each monotone factor of the doubling ratio over [lo, hi].

    phi(2x)/phi(x) = 2^q * (1 + log2/log x)^beta * (loglog 2x / loglog x)^loglog,
    and both bases decrease to 1 as x grows, so each factor is monotone.
    """
    ranges = [(2.0 ** phi.q, 2.0 ** phi.q)]

    def add(factor_at):
        a = factor_at(lo)
        b = factor_at(hi) if math.isfinite(hi) else 1.0
        ranges.append((min(a, b), max(a, b)))

    if phi.beta:
        add(lambda x: (1 + math.log(2) / math.log(x)) ** phi.beta)
    if phi.loglog:
        add(lambda x: (math.log(math.log(2 * x)) / math.log(math.log(x))) ** phi.loglog)
    return ranges


def doubling_bounds(phi: GrowthFunction, x_max: float = math.inf, check: bool = True) -> DoublingBounds:
    """Certified bounds on phi(2x)/phi(x) for x in [x0, x_max].

    Each factor of the ratio is monotone, so its extremes sit at the endpoints
    (``x_max = inf`` uses the limit). When all factors move in the same direction
    the product bounds are exact; otherwise they are valid but conservative.
    ``check`` confirms the bounds on a dense log-spaced grid.
    """
    if not x_max > 2 * phi.x0:
        raise ValueError(f"x_max must exceed 2*x0 = {2 * phi.x0!r}")
    ranges = _factor_ranges(phi, phi.x0, x_max)
    c1 = math.prod(lo for lo, _ in ranges)
    c2 = math.prod(hi for _, hi in ranges)
    if c1 <= 1:
        raise ValueError(f"phi is not admissible on [x0, x_max]: inf phi(2x)/phi(x) = {c1!r} <= 1")
    if check:
        top = x_max if math.isfinite(x_max) else phi.x0 * 2.0 ** 200
        grid = np.geomspace(phi.x0, top, _SCAN_POINTS)
        r = phi.doubling_ratio(grid)
        if np.any(r < c1 * (1 - _SCAN_RTOL)) or np.any(r > c2 * (1 + _SCAN_RTOL)):
            raise ArithmeticError("doubling ratio left its certified range on the scan grid")
    return DoublingBounds(c1, c2)


def contraction_constant(p: float, c1: float, a: int) -> float:
    """Geometric factor of the maximal-moment recursion for block base ``a``.

    (1 + 2^(p-1)) / c1^(p*floor(log2 a)) for p > 1, and 2 / c1^(p*floor(log2 a))
    for 0 < p <= 1. May be >= 1; admissibility is the caller's call.
    """
    if p <= 0 or c1 <= 1 or a < 2:
        raise ValueError("need p > 0, c1 > 1, a >= 2")
    k = int(a).bit_length() - 1  # floor(log2 a), exact for integers
    numerator = 1.0 + 2.0 ** (p - 1) if p > 1 else 2.0
    return numerator / c1 ** (p * k)


def block_base(p: float, c1: float) -> tuple[int, float]:
    """Smallest power of two ``a >= 2`` with contraction constant strictly below 1."""
    if p <= 0 or c1 <= 1:
        raise ValueError("need p > 0 and c1 > 1")
    numerator = 1.0 + 2.0 ** (p - 1) if p > 1 else 2.0
    # c < 1 - margin  <=>  k > log(numerator / (1 - margin)) / (p log c1); start just below and step up
    k = max(1, math.floor(math.log(numerator / (1 - _STRICT_MARGIN)) / (p * math.log(c1))) - 1)
    while contraction_constant(p, c1, 2 ** k) >= 1 - _STRICT_MARGIN:
        k += 1
    return 2 ** k, contraction_constant(p, c1, 2 ** k)
