"""Least-squares fits in log space used by the error and cost studies."""

import math
from typing import List, Literal, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from carleman_lbm.errors import InsufficientDataError, InvalidParameterError


class FitResult(BaseModel):
    """
    A straight-line fit ln(y) = slope * x' + intercept.

    For the exponential model x' = x, so y = E exp(Gamma x) with Gamma = slope
    and E = exp(intercept). For the power model x' = ln(x), so y = c x^chi with
    chi = slope and c = exp(intercept).
    """

    model: Literal["exponential", "power"]
    slope: float
    intercept: float
    residual: float
    samples: List[Tuple[float, float]]

    @property
    def prefactor(self) -> float:
        return math.exp(self.intercept)

    @property
    def E(self) -> float:
        return self.prefactor

    @property
    def Gamma(self) -> float:
        return self.slope

    @property
    def c(self) -> float:
        return self.prefactor

    @property
    def chi(self) -> float:
        return self.slope

    @property
    def convergent(self) -> bool:
        """True when an exponential fit decays (Gamma < 0)."""
        return self.model == "exponential" and self.slope < 0

    def predict(self, x: float) -> float:
        arg = x if self.model == "exponential" else math.log(x)
        return math.exp(self.slope * arg + self.intercept)


def log_linear_fit(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float, float]:
    """
    Ordinary least squares of ln(y) against x.

    Args:
        x: Abscissae
        y: Strictly positive ordinates

    Returns:
        Tuple of (slope, intercept, rms residual in log space)
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise InvalidParameterError(f"fit needs paired data, got {x.size} and {y.size} values")
    if x.size < 2:
        raise InsufficientDataError(f"a line fit needs at least 2 points, got {x.size}")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise InvalidParameterError("log-space fits need strictly positive finite values")
    if np.ptp(x) == 0:
        raise InsufficientDataError("a line fit needs at least 2 distinct abscissae")

    design = np.stack([x, np.ones_like(x)], axis=1)
    log_y = np.log(y)
    (slope, intercept), *_ = np.linalg.lstsq(design, log_y, rcond=None)
    residual = float(np.sqrt(np.mean((design @ np.array([slope, intercept]) - log_y) ** 2)))
    return float(slope), float(intercept), residual


def fit_exponential(x: Sequence[float], y: Sequence[float]) -> FitResult:
    """y = E exp(Gamma x) by OLS on ln y."""
    slope, intercept, residual = log_linear_fit(x, y)
    return FitResult(
        model="exponential", slope=slope, intercept=intercept, residual=residual,
        samples=[(float(a), float(b)) for a, b in zip(x, y)],
    )


def fit_power(x: Sequence[float], y: Sequence[float]) -> FitResult:
    """y = c x^chi by OLS on ln y against ln x."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise InvalidParameterError("power-law fits need strictly positive abscissae")
    slope, intercept, residual = log_linear_fit(np.log(x), y)
    return FitResult(
        model="power", slope=slope, intercept=intercept, residual=residual,
        samples=[(float(a), float(b)) for a, b in zip(x, y)],
    )
