"""Numerical checks of central limit behaviour for the hyperbolic Anderson model
driven by time-independent Gaussian noise.

Submodules
----------
covariance   covariance kernels, spectral densities, Dalang constants
wave         wave Green's function and its Fourier transform
chaos        chaos kernels, norms and the covariance series
asymptotics  limit constants, variance scaling, tail majorants
stein        Stein-method integrals and the total-variation bound
noise        discretised noise, Wick/Hermite evaluation, Malliavin derivatives
clt          normality diagnostics and rate tables
cli          ``ham-clt`` command line runner
"""

from ._backend import get_backend, set_backend
from .chaos import ChaosKernel, eval_f_n, kernel_norm_sq
from .covariance import CovarianceModel, DalangError, Kind, bessel, fractional, from_config, heat, poisson, riesz, white
from .estimate import Estimate
from .streams import Stream

__version__ = "0.1.0"

__all__ = [
    "ChaosKernel",
    "CovarianceModel",
    "DalangError",
    "Estimate",
    "Kind",
    "Stream",
    "bessel",
    "eval_f_n",
    "fractional",
    "from_config",
    "get_backend",
    "heat",
    "kernel_norm_sq",
    "poisson",
    "riesz",
    "set_backend",
    "white",
]
