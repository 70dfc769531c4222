"""Scalar and bivariate Gaussian kernels.

``std_normal_cdf`` and ``std_normal_sf`` are both written through ``math.erfc``
so that neither tail is obtained by subtracting from one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _finite(x: float, name: str = "x") -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return x


def std_normal_cdf(x: float) -> float:
    """Standard normal distribution function Phi(x)."""
    x = _finite(x)
    return 0.5 * math.erfc(-x * _INV_SQRT2)


def std_normal_sf(x: float) -> float:
    """Survival function Psi(x) = 1 - Phi(x), accurate in the upper tail."""
    x = _finite(x)
    return 0.5 * math.erfc(x * _INV_SQRT2)


def std_normal_pdf(x: float) -> float:
    x = _finite(x)
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


@dataclass(frozen=True)
class BivCovariance:
    """Covariance of ``(W1(s), W2(t))`` for correlated Brownian motions.

    Entries are ``[[s, rho*m], [rho*m, t]]`` with ``m = min(s, t)``.
    """

    s: float
    t: float
    rho: float

    def __post_init__(self):
        for name in ("s", "t", "rho"):
            _finite(getattr(self, name), name)
        if not -1.0 < self.rho < 1.0:
            raise DomainError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.s <= 0 or self.t <= 0:
            raise DomainError(f"times must be positive, got s={self.s}, t={self.t}")
        if self.det <= 0:
            raise DomainError(f"degenerate covariance (det={self.det})")

    @property
    def off_diag(self) -> float:
        return self.rho * min(self.s, self.t)

    @property
    def det(self) -> float:
        m = min(self.s, self.t)
        return self.s * self.t - self.rho * self.rho * m * m

    @property
    def entries(self) -> tuple[tuple[float, float], tuple[float, float]]:
        c = self.off_diag
        return ((self.s, c), (c, self.t))

    def inverse(self) -> tuple[tuple[float, float], tuple[float, float]]:
        d, c = self.det, self.off_diag
        return ((self.t / d, -c / d), (-c / d, self.s / d))


def biv_density(cov: BivCovariance, x: float, y: float) -> float:
    """Centered bivariate normal density with covariance ``cov`` at ``(x, y)``."""
    x, y = _finite(x, "x"), _finite(y, "y")
    d = cov.det
    if d <= 0:
        raise DomainError(f"degenerate covariance (det={d})")
    c = cov.off_diag
    quad = (cov.t * x * x - 2.0 * c * x * y + cov.s * y * y) / d
    return math.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(d))
