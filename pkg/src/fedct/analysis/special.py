"""Hurwitz zeta and the normal quantile function."""

from __future__ import annotations

import math

# B_2, B_4, ..., B_24
_BERNOULLI = (
    1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6, -3617 / 510,
    43867 / 798, -174611 / 330, 854513 / 138, -236364091 / 2730,
)
_EM_TOL = 1e-17


def _scaled_zeta(s: float, q: float) -> float:
    """``q**s * zeta(s, q)`` by Euler-Maclaurin summation.

    Working with terms relative to ``q**-s`` keeps large ``s`` from
    underflowing.  The head length ``N`` grows until the last correction
    term is negligible against the running total.
    """
    N = max(0, math.ceil(s + 8 - q))
    while True:
        head = math.fsum(((q + k) / q) ** -s for k in range(N))
        a = q + N
        rel = (a / q) ** -s  # (q+N)^-s scaled by q^s
        tail = [a * rel / (s - 1), 0.5 * rel]
        rising = s  # s (s+1) ... (s+2j-2)
        power = rel / a  # (q+N)^(-s-2j+1), scaled
        fact = 2.0  # (2j)!
        last = 0.0
        for j, b in enumerate(_BERNOULLI, start=1):
            last = b / fact * rising * power
            tail.append(last)
            rising *= (s + 2 * j - 1) * (s + 2 * j)
            power /= a * a
            fact *= (2 * j + 1) * (2 * j + 2)
        total = head + math.fsum(tail)
        if abs(last) <= _EM_TOL * abs(total):
            return total
        N = 2 * N + 16


def hurwitz_zeta(s: float, q: float) -> float:
    """``sum_{k>=0} (k + q)**-s`` for ``s > 1`` and ``q > 0``."""
    if not s > 1:
        raise ValueError(f"hurwitz_zeta needs s > 1, got {s!r}")
    if not q > 0:
        raise ValueError(f"hurwitz_zeta needs q > 0, got {q!r}")
    return math.exp(log_hurwitz_zeta(s, q))


def log_hurwitz_zeta(s: float, q: float) -> float:
    if not s > 1:
        raise ValueError(f"hurwitz_zeta needs s > 1, got {s!r}")
    if not q > 0:
        raise ValueError(f"hurwitz_zeta needs q > 0, got {q!r}")
    return math.log(_scaled_zeta(s, q)) - s * math.log(q)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


# Acklam's rational approximation coefficients
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def probit(r: float) -> float:
    """Inverse standard normal CDF.

    Rational approximation (relative error about 1e-9) followed by one
    Newton step against the erfc-based CDF.
    """
    if not 0.0 < r < 1.0:
        raise ValueError(f"probit needs 0 < r < 1, got {r!r}")
    if r == 0.5:
        return 0.0
    if r > 0.5:
        return -probit(1.0 - r)
    if r < _P_LOW:
        t = math.sqrt(-2.0 * math.log(r))
        x = (((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5]) / \
            ((((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0)
    else:
        t = r - 0.5
        t2 = t * t
        x = (((((_A[0] * t2 + _A[1]) * t2 + _A[2]) * t2 + _A[3]) * t2 + _A[4]) * t2 + _A[5]) * t / \
            (((((_B[0] * t2 + _B[1]) * t2 + _B[2]) * t2 + _B[3]) * t2 + _B[4]) * t2 + 1.0)
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return x - (normal_cdf(x) - r) / pdf
