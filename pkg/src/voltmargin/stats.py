"""Small statistical helpers shared by the simulators and reports."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "wilson_interval",
    "Welford",
    "bootstrap_se_of_mean",
    "percentile_lower",
]


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Stays inside [0, 1] and never collapses to a point at 0 or n successes.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= successes <= n:
        raise ValueError("successes must lie in [0, n]")
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * np.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class Welford:
    """Single-pass mean/variance accumulator (numerically stable).

    Merge-free sequential form; ``variance`` is the unbiased (n-1) estimate.
    """

    n: int = 0
    mean: float = 0.0
    _m2: float = 0.0

    def add(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self._m2 += delta * (x - self.mean)

    def extend(self, xs) -> None:
        for x in xs:
            self.add(float(x))

    @property
    def variance(self) -> float:
        if self.n < 2:
            return float("nan")
        return self._m2 / (self.n - 1)


def bootstrap_se_of_mean(samples: np.ndarray, n_resamples: int = 2000,
                         seed: int = 0) -> float:
    """Bootstrap standard error of the sample mean (seeded, deterministic)."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise ValueError("need at least two samples")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    idx = rng.integers(0, samples.size, size=(n_resamples, samples.size))
    means = samples[idx].mean(axis=1)
    return float(means.std(ddof=1))


def percentile_lower(samples: np.ndarray, q: float = 5.0) -> float:
    """Linear-interpolated order statistic, e.g. q=5 for the 5th percentile.

    For samples {1..100} the 5th percentile is 5.95 under this convention.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty sample")
    return float(np.percentile(samples, q, method="linear"))
