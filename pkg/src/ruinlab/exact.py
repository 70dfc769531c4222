"""Closed-form one-dimensional quantities."""

from __future__ import annotations

import math

from .errors import DomainError
from .gauss import std_normal_cdf


def one_dim_ruin(c: float, u: float, T: float) -> float:
    """P(sup_{[0,T]} (B(t) - c t) > u) for standard Brownian motion B.

    The second term is assembled in log space so that ``exp(-2cu)`` cannot
    overflow when ``c`` is very negative.
    """
    for name, v in (("c", c), ("u", u), ("T", T)):
        if not math.isfinite(v):
            raise DomainError(f"{name} must be finite, got {v!r}")
    if u < 0:
        raise DomainError(f"u must be nonnegative, got {u}")
    if T <= 0:
        raise DomainError(f"T must be positive, got {T}")
    r = math.sqrt(T)
    first = std_normal_cdf(-u / r - c * r)
    phi2 = std_normal_cdf(-u / r + c * r)
    second = 0.0 if phi2 == 0.0 else math.exp(-2.0 * c * u + math.log(phi2))
    return min(1.0, first + second)


def printed_sojourn_constant(s: float) -> float:
    """(2 + s) Phi(sqrt(s/2)) - sqrt(s/pi) exp(-s/4), evaluated as written.

    Kept for side-by-side reporting only; the integral representation it is
    meant to equal is 2 at s = 0, while this expression is 1 there.
    """
    if not math.isfinite(s) or s < 0:
        raise DomainError(f"s must be finite and nonnegative, got {s}")
    return (2.0 + s) * std_normal_cdf(math.sqrt(s / 2.0)) - math.sqrt(s / math.pi) * math.exp(-s / 4.0)
