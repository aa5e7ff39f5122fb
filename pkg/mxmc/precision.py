"""
Extended-precision helpers built on mpmath.

Each computation gets its own ``MPContext`` so the working precision of one
call never leaks into another.
"""

from __future__ import annotations

import math
from typing import Sequence

import mpmath

DEFAULT_DPS = 40
MAX_DPS = 4000


def make_context(dps: int = DEFAULT_DPS) -> mpmath.MPContext:
    ctx = mpmath.MPContext()
    ctx.dps = int(min(max(dps, 20), MAX_DPS))
    return ctx


def polyval(ctx, coeffs: Sequence[float], x):
    """Horner evaluation of sum_j coeffs[j] x^j in ``ctx``."""
    acc = ctx.mpf(0)
    for a in reversed(coeffs):
        acc = acc * x + ctx.mpf(a)
    return acc


def polyder(ctx, coeffs: Sequence[float], x):
    acc = ctx.mpf(0)
    for j in range(len(coeffs) - 1, 0, -1):
        acc = acc * x + j * ctx.mpf(coeffs[j])
    return acc


def digits_for_growth(growth: float, steps: int, base: int = 30) -> int:
    """Working digits so that ``growth**steps`` amplification still leaves ``base`` digits."""
    if growth <= 1 or steps <= 0:
        return base
    return base + int(math.ceil(steps * math.log10(growth)))


def to_float(value) -> float:
    return float(value)
