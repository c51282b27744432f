"""Itô-process representations of the wind-power disturbance.

Each Gaussian component of the input mixture becomes an Ornstein-Uhlenbeck
process ``dP = -lam (P - mu) dt + sqrt(2 lam var) dW`` whose stationary law is
that component. The weighted collection is the generalised Itô process.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
from scipy import integrate

from .errors import InvalidDriftRate, QuadratureFailure, VanishingDensity
from .gmm import WEIGHT_SUM_TOL, Gmm

DEFAULT_DRIFT_RATE = 1.0
DENSITY_FLOOR = 1e-300


@dataclass(frozen=True)
class ItoComponent:
    drift_rate: float
    drift_target: float
    diffusion: float
    weight: float

    def __post_init__(self) -> None:
        if not (self.drift_rate > 0.0 and math.isfinite(self.drift_rate)):
            raise InvalidDriftRate(f"drift rate must be positive, got {self.drift_rate!r}")
        if not self.diffusion >= 0.0:
            raise ValueError(f"diffusion must be non-negative, got {self.diffusion!r}")
        if not (0.0 < self.weight <= 1.0):
            raise ValueError(f"weight {self.weight!r} not in (0, 1]")

    @property
    def drift_constant(self) -> float:
        """Constant term ``c`` of the linear drift ``-lam * P + c``."""
        return self.drift_rate * self.drift_target

    @property
    def stationary_variance(self) -> float:
        return self.diffusion**2 / (2.0 * self.drift_rate)

    def drift(self, p: float | np.ndarray) -> float | np.ndarray:
        return -self.drift_rate * p + self.drift_constant

    def to_dict(self) -> dict[str, float]:
        return {
            "drift_rate": self.drift_rate,
            "drift_target": self.drift_target,
            "drift_constant": self.drift_constant,
            "diffusion": self.diffusion,
            "weight": self.weight,
        }


@dataclass(frozen=True)
class GeneralizedItoProcess:
    components: tuple[ItoComponent, ...]
    initial_value: float

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("process needs at least one component")
        total = math.fsum(c.weight for c in comps)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"component weights sum to {total!r}, not 1")
        rates = {c.drift_rate for c in comps}
        if len(rates) != 1:
            raise InvalidDriftRate(f"components disagree on drift rate: {sorted(rates)}")

    @property
    def drift_rate(self) -> float:
        return self.components[0].drift_rate

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def to_dict(self) -> dict[str, Any]:
        return {
            "drift_rate": self.drift_rate,
            "initial_value": self.initial_value,
            "components": [c.to_dict() for c in self.components],
        }


def from_gmm(
    model: Gmm,
    drift_rate: float = DEFAULT_DRIFT_RATE,
    initial_value: float | None = None,
) -> GeneralizedItoProcess:
    """Decompose a GMM into one OU sub-process per component.

    The diffusion is ``sqrt(2 * drift_rate * variance)`` so each sub-process
    keeps its component as stationary law for any drift rate. ``initial_value``
    defaults to the mixture mean.
    """
    if not (drift_rate > 0.0 and math.isfinite(drift_rate)):
        raise InvalidDriftRate(f"drift rate must be positive, got {drift_rate!r}")
    comps = tuple(
        ItoComponent(
            drift_rate=drift_rate,
            drift_target=c.mean,
            diffusion=math.sqrt(2.0 * drift_rate * c.variance),
            weight=c.weight,
        )
        for c in model.components
    )
    x0 = model.mean() if initial_value is None else float(initial_value)
    return GeneralizedItoProcess(comps, x0)


def diffusion_from_pdf(
    density: Callable[[float], float],
    drift: Callable[[float], float],
    x: float,
    tol: float = 1e-10,
) -> float:
    """Squared diffusion ``tau^2(x)`` that makes ``density`` stationary.

    Evaluates ``2 * int_{-inf}^{x} drift(z) density(z) dz / density(x)`` by
    adaptive quadrature. Meant as a check on closed forms, not for production.

    Raises:
        VanishingDensity: ``density(x)`` below ``1e-300``.
        QuadratureFailure: The integrator reports trouble or a large error.
    """
    px = float(density(x))
    if not px > DENSITY_FLOOR:
        raise VanishingDensity(f"density {px!r} at x={x!r} is numerically zero")

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(
                lambda z: drift(z) * density(z), -np.inf, x, epsabs=tol * px, epsrel=tol, limit=200
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from exc
    if not math.isfinite(value) or err > max(10.0 * tol * px, 10.0 * tol * abs(value)):
        raise QuadratureFailure(f"quadrature error estimate {err:g} too large")
    return 2.0 * value / px
