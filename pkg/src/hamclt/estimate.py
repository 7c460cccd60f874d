"""Monte Carlo estimate container."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Estimate:
    """Sample mean with its standard error; ``std_error == 0`` marks a deterministic value."""

    value: float
    std_error: float = 0.0
    count: int = 0

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "Estimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n == 0:
            raise ValueError("no samples")
        mean = math.fsum(samples) / n
        if n > 1:
            var = math.fsum((samples - mean) ** 2) / (n - 1)
            se = math.sqrt(var / n)
        else:
            se = math.inf
        return cls(mean, se, n)

    @classmethod
    def exact(cls, value: float) -> "Estimate":
        return cls(float(value), 0.0, 0)

    @property
    def deterministic(self) -> bool:
        return self.count == 0

    def __iter__(self):
        yield self.value
        yield self.std_error

    def __add__(self, other: "Estimate") -> "Estimate":
        return Estimate(
            self.value + other.value,
            math.hypot(self.std_error, other.std_error),
            self.count + other.count,
        )

    def scale(self, factor: float) -> "Estimate":
        return Estimate(self.value * factor, self.std_error * abs(factor), self.count)

    def within(self, target: float, sigmas: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.value - target) <= sigmas * self.std_error + slack
