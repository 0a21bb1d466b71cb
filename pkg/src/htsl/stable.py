"""Seedable alpha-stable variates (Chambers-Mallows-Stuck).

Laws use the S1 parameterization (Samorodnitsky-Taqqu): for alpha != 1 the
characteristic function is

    exp(-scale^alpha |t|^alpha (1 - i skew sign(t) tan(pi alpha / 2)) + i shift t),

so a zero-shift law is strictly stable for any skew when alpha != 1 and for
skew = 0 when alpha = 1. alpha = 2 is N(shift, 2 scale^2) whatever the skew.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_HALF_ULP = 2.0 ** -54


@dataclass(frozen=True)
class StableLaw:
    alpha: float
    skew: float = 0.0
    scale: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha!r}")
        if not -1 <= self.skew <= 1:
            raise ValueError(f"skew must lie in [-1, 1], got {self.skew!r}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale!r}")

    @classmethod
    def standard_normal(cls) -> "StableLaw":
        return cls(alpha=2.0, scale=1 / math.sqrt(2))

    @property
    def is_gaussian(self) -> bool:
        return self.alpha == 2

    @property
    def is_symmetric(self) -> bool:
        return self.skew == 0 or self.alpha == 2

    def rescaled(self, factor: float) -> "StableLaw":
        """Law of ``factor * X`` for X with this law and zero shift (factor > 0)."""
        if self.shift != 0:
            raise ValueError("rescaling is only defined here for zero-shift laws")
        return StableLaw(self.alpha, self.skew, self.scale * factor, 0.0)

    def abs_moment(self, p: float) -> float:
        """E|X|^p for symmetric zero-shift laws, finite for 0 < p < alpha (any p when alpha = 2)."""
        if not self.is_symmetric or self.shift != 0:
            raise ValueError("closed-form absolute moments are implemented for symmetric laws only")
        if p <= 0:
            raise ValueError("p must be positive")
        if self.alpha < 2 and p >= self.alpha:
            return math.inf
        c = 2.0 ** p * math.gamma((1 + p) / 2) / math.sqrt(math.pi)
        if self.alpha < 2:
            c *= math.gamma(1 - p / self.alpha) / math.gamma(1 - p / 2)
        return self.scale ** p * c

    def char_fn(self, t):
        """Characteristic function E exp(i t X)."""
        t = np.asarray(t, dtype=float)
        a, b, s, m = self.alpha, self.skew, self.scale, self.shift
        at = np.abs(t)
        if a == 2:
            return np.exp(-(s * at) ** 2 + 1j * m * t)
        if a == 1:
            with np.errstate(divide="ignore", invalid="ignore"):
                logt = np.where(at > 0, np.log(at), 0.0)
            psi = -s * at * (1 + 1j * b * (2 / np.pi) * np.sign(t) * logt)
        else:
            psi = -(s * at) ** a * (1 - 1j * b * np.sign(t) * math.tan(math.pi * a / 2))
        return np.exp(psi + 1j * m * t)


@dataclass(frozen=True)
class Gaussian:
    """N(0, sd^2) innovations sampled directly from the normal generator."""

    sd: float = 1.0

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError(f"sd must be positive, got {self.sd!r}")

    alpha = 2.0

    def abs_moment(self, p: float) -> float:
        return self.sd ** p * 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)


@dataclass(frozen=True)
class SeedStream:
    """Independent random stream keyed by (seed, stream_id).

    Streams are Philox (counter-based) generators whose keys are derived from
    ``SeedSequence(seed, spawn_key=(stream_id,))``, so rows of an ensemble never
    share state and any row can be regenerated alone.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= v < 2 ** 64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))


def open_uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniforms on the open interval (0, 1): (k + 1/2) 2^-53 with k uniform."""
    return rng.random(n) + _HALF_ULP


def _cms_standard(alpha: float, skew: float, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Standard (scale 1, shift 0) S1 variates from V ~ U(-pi/2, pi/2), W ~ Exp(1)."""
    if alpha == 1:
        h = np.pi / 2 + skew * v
        return (2 / np.pi) * (h * np.tan(v) - skew * np.log((np.pi / 2) * w * np.cos(v) / h))
    if skew == 0:
        return (np.sin(alpha * v) / np.cos(v) ** (1 / alpha)
                * (np.cos((1 - alpha) * v) / w) ** ((1 - alpha) / alpha))
    zeta = skew * math.tan(math.pi * alpha / 2)
    b = math.atan(zeta) / alpha
    s = (1 + zeta ** 2) ** (1 / (2 * alpha))
    return (s * np.sin(alpha * (v + b)) / np.cos(v) ** (1 / alpha)
            * (np.cos(v - alpha * (v + b)) / w) ** ((1 - alpha) / alpha))


def draw(law, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` variates of ``law`` (StableLaw or Gaussian) from an existing generator."""
    if isinstance(law, Gaussian):
        return law.sd * rng.standard_normal(n)
    if law.is_gaussian:
        return law.shift + law.scale * math.sqrt(2) * rng.standard_normal(n)
    v = np.pi * (open_uniform(rng, n) - 0.5)
    w = -np.log(open_uniform(rng, n))
    x = _cms_standard(law.alpha, law.skew, v, w)
    if law.alpha == 1:
        x = law.scale * x + (2 / np.pi) * law.skew * law.scale * math.log(law.scale)
    else:
        x = law.scale * x
    return x + law.shift


def sample_stable(law, stream: SeedStream, n: int) -> np.ndarray:
    """``n`` i.i.d. draws of ``law``; bit-identical for equal (law, stream, n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return draw(law, stream.generator(), n)
