"""Exact two-party probabilities for isotropic measurements on the maximally entangled pair.

For one fixed CHSH expression the violating region, sliced at fixed
``x = a1 . a2``, is a pair of triangles of total area :func:`triangle_area`.
Integrating over ``x`` and normalizing gives ``(pi - 3) / 2``; the four CHSH
variants are equiprobable and mutually exclusive, so any one of them is
violated with probability ``2 (pi - 3)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate


SINGLE_CLOSED_FORM = (math.pi - 3.0) / 2.0
ORBIT_CLOSED_FORM = 2.0 * (math.pi - 3.0)


def triangle_area(x: float) -> float:
    if not abs(x) < 1.0:
        raise ValueError("triangle_area is defined on the open interval (-1, 1)")
    num = (math.sqrt(1.0 + x) + math.sqrt(1.0 - x) - math.sqrt(2.0)) ** 2
    return num / math.sqrt(1.0 - x * x)


def _area_times_cos(t: float) -> float:
    # triangle_area(sin t) * cos t with the 1/cos t factor cancelled
    s = math.sin(t)
    return (math.sqrt(1.0 + s) + math.sqrt(max(0.0, 1.0 - s)) - math.sqrt(2.0)) ** 2


INTEGRANDS = {"triangle-area-sin": _area_times_cos}


@dataclass(frozen=True)
class QuadratureSpec:
    integrand: str = "triangle-area-sin"
    lower: float = -math.pi / 2
    upper: float = math.pi / 2
    limit: int = 200
    scheme: str = "adaptive"  # scipy QUADPACK qags
    abs_tol: float = 1e-10


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    closed_form: float

    @property
    def difference(self) -> float:
        return abs(self.value - self.closed_form)


class QuadratureError(RuntimeError):
    pass


def integrate_spec(spec: QuadratureSpec) -> tuple[float, float]:
    if spec.scheme != "adaptive":
        raise ValueError(f"unsupported quadrature scheme {spec.scheme!r}")
    f = INTEGRANDS[spec.integrand]
    value, err = integrate.quad(f, spec.lower, spec.upper, epsabs=spec.abs_tol, epsrel=0.0, limit=spec.limit)
    if not err < spec.abs_tol:
        raise QuadratureError(f"quadrature error estimate {err:.3g} exceeds {spec.abs_tol:.3g}")
    return value, err


def chsh_rim_single_probability(spec: QuadratureSpec = QuadratureSpec()) -> QuadratureResult:
    """Probability that one fixed CHSH expression is violated (RIM, maximal entanglement)."""
    value, err = integrate_spec(spec)
    return QuadratureResult(value / 8.0, err / 8.0, SINGLE_CLOSED_FORM)


def chsh_rim_orbit_probability(spec: QuadratureSpec = QuadratureSpec()) -> QuadratureResult:
    single = chsh_rim_single_probability(spec)
    return QuadratureResult(4.0 * single.value, 4.0 * single.error_estimate, ORBIT_CLOSED_FORM)


def triangle_area_grid(num: int = 10_001) -> tuple[np.ndarray, np.ndarray]:
    """Sample the area on an open grid of ``num`` points (odd ``num`` includes 0)."""
    xs = np.linspace(-1.0, 1.0, num + 2)[1:-1]
    return xs, np.array([triangle_area(float(x)) for x in xs])
