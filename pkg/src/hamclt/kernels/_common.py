"""Constants shared by both kernel backends."""

from __future__ import annotations

import math

import numpy as np

# psi(u) = (1 - cos sqrt(u)) / u is expanded in a Maclaurin series below the cutoff
SERIES_CUTOFF = 4.0
SERIES_TERMS = 44
# Taylor coefficients kept when a cluster of nodes is treated as confluent
COEF_TERMS = 24
# clusters of nodes closer than this use the Taylor route
NODE_SPREAD = 1.0


def series_b() -> np.ndarray:
    return np.array([(-1.0) ** j / math.factorial(2 * j + 2) for j in range(SERIES_TERMS)])
