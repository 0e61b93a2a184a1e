"""Univariate sampling, densities, and CDFs used throughout the experiments.

Every sampler is a deterministic transform of uniforms drawn from an
:class:`~prodform.rng.Rng` stream (inverse CDF where closed inverses exist,
Box-Muller for normals), so draw sequences are reproducible across runs and
substreams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class Normal:
    """Gaussian parameterized by mean and *variance*."""

    mean: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError(f"Normal variance must be positive, got {self.var}")

    def sample(self, rng, n):
        return self.mean + np.sqrt(self.var) * rng.standard_normal(n)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * (np.log(2.0 * np.pi * self.var) + (x - self.mean) ** 2 / self.var)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return special.ndtr((x - self.mean) / np.sqrt(self.var))


@dataclass(frozen=True)
class StudentT:
    df: float
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.df > 0:
            raise ValueError("StudentT df must be positive")
        if not self.scale > 0:
            raise ValueError("StudentT scale must be positive")

    def sample(self, rng, n):
        # Inverse CDF keeps the draw count fixed (one uniform per variate).
        u = rng.uniform(n)
        return self.loc + self.scale * special.stdtrit(self.df, u)

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        nu = self.df
        lognorm = (
            special.gammaln((nu + 1) / 2)
            - special.gammaln(nu / 2)
            - 0.5 * np.log(nu * np.pi)
            - np.log(self.scale)
        )
        return lognorm - 0.5 * (nu + 1) * np.log1p(z * z / nu)

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        return special.stdtr(self.df, z)


@dataclass(frozen=True)
class Uniform:
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if not self.high > self.low:
            raise ValueError("Uniform requires high > low")

    def sample(self, rng, n):
        return self.low + (self.high - self.low) * rng.uniform(n)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.low) & (x <= self.high)
        return np.where(inside, -np.log(self.high - self.low), -np.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.low) / (self.high - self.low), 0.0, 1.0)


@dataclass(frozen=True)
class InverseGamma:
    """Inverse-gamma with density proportional to x^-(shape+1) exp(-scale/x).

    With this convention the conjugate update for a variance parameter reads
    off directly: InverseGamma(a, b) given sum-of-squares s over k terms
    becomes InverseGamma(a + k/2, b + s/2).
    """

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("InverseGamma shape and scale must be positive")

    def sample(self, rng, n):
        u = rng.uniform(n)
        # CDF(x) = Q(shape, scale/x) with Q the regularized upper incomplete
        # gamma, so the inverse CDF is scale / Q^{-1}(shape, u).
        return self.scale / special.gammainccinv(self.shape, u)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (
                self.shape * np.log(self.scale)
                - special.gammaln(self.shape)
                - (self.shape + 1) * np.log(x)
                - self.scale / x
            )
        return np.where(x > 0, out, -np.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = special.gammaincc(self.shape, self.scale / np.maximum(x, 1e-300))
        return np.where(x > 0, out, 0.0)

    @property
    def mean(self):
        return self.scale / (self.shape - 1.0) if self.shape > 1 else np.inf

    @property
    def median(self):
        return self.scale / special.gammainccinv(self.shape, 0.5)


@dataclass(frozen=True)
class PointMass:
    location: float

    def sample(self, rng, n):
        return np.full(n, self.location, dtype=float)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x == self.location, 0.0, -np.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.location, 1.0, 0.0)


class FiniteDiscrete:
    """Distribution on a finite set of points with given probabilities."""

    def __init__(self, points, probs):
        self.points = np.asarray(points, dtype=float)
        self.probs = np.asarray(probs, dtype=float)
        if self.points.ndim != 1 or self.points.shape != self.probs.shape:
            raise ValueError("points and probs must be 1-d arrays of equal length")
        if np.any(self.probs <= 0):
            raise ValueError("all probabilities must be strictly positive")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1 within 1e-12")
        order = np.argsort(self.points, kind="stable")
        self.points = self.points[order]
        self.probs = self.probs[order]
        self._cum = np.cumsum(self.probs)
        self.points.flags.writeable = False
        self.probs.flags.writeable = False

    def sample(self, rng, n):
        u = rng.uniform(n)
        idx = np.searchsorted(self._cum, u, side="right")
        return self.points[np.minimum(idx, len(self.points) - 1)]

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.points, x)
        idx = np.minimum(idx, len(self.points) - 1)
        hit = self.points[idx] == x
        with np.errstate(divide="ignore"):
            return np.where(hit, np.log(self.probs[idx]), -np.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.points, x, side="right")
        cum = np.concatenate([[0.0], self._cum])
        return cum[idx]

    @property
    def mean(self):
        return float(self.points @ self.probs)
