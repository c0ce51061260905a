"""Probability bounds for consensus stabilisation."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .special import log_hurwitz_zeta


class BoundError(ValueError):
    pass


@dataclass(frozen=True)
class ConvergenceQuery:
    """``a_t >= 1 - c/t`` growth of local training accuracy, from round ``t0`` on."""

    u_size: int
    m: int
    c: float
    t0: int

    def __post_init__(self):
        if self.m < 3:
            raise BoundError(f"the convergence bound needs m >= 3 clients, got m={self.m}")
        if not self.c > 0:
            raise BoundError(f"c must be positive, got {self.c!r}")
        if self.t0 < 1:
            raise BoundError(f"t0 must be at least 1, got {self.t0!r}")
        if self.u_size < 1:
            raise BoundError(f"u_size must be positive, got {self.u_size!r}")


@dataclass(frozen=True)
class BoundValue:
    raw: float

    @property
    def clamped(self) -> float:
        return min(1.0, self.raw)


def per_round_change_bound(u_size: int, m: int, a_t: float) -> float:
    """Union bound on the chance that some consensus label flips in one round:
    ``|U| * 4^(m/2) * a^(m/2) * (1-a)^(m/2)``."""
    if not 0.5 <= a_t <= 1.0:
        raise BoundError(f"a_t must lie in [0.5, 1], got {a_t!r}")
    return u_size * (4.0 * a_t * (1.0 - a_t)) ** (m / 2)


def log_convergence_bound(q: ConvergenceQuery) -> float:
    half = q.m / 2
    return math.log(q.u_size) + half * math.log(4.0 * q.c) + log_hurwitz_zeta(half, q.t0 + 1)


def convergence_bound(q: ConvergenceQuery) -> BoundValue:
    """``|U| * (4c)^(m/2) * zeta(m/2, t0+1)``, unclamped in ``raw``."""
    lg = log_convergence_bound(q)
    raw = math.inf if lg > 709.0 else math.exp(lg)
    return BoundValue(raw)
