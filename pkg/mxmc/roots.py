"""
Roots of B_c(s) = 0 and U_lambda(s) = B_c(s) - lambda s = 0 on [0, 1].

u is the smallest root of B_c on [0, 1]; u(lambda) is the unique root of
U_lambda in (0, 1) for lambda > 0. Both are found by bisection down to a
bracket of width 1e-3 followed by bracket-safeguarded Newton steps.
"""

from __future__ import annotations

import enum
import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from config import settings
from mxmc.errors import GateError
from mxmc.model import B_coefficients, QueueModel, eval_B
from mxmc.precision import polyder, polyval

logger = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-12
BRACKET_WIDTH = 1e-3


class Regime(str, enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class RootResult:
    value: float
    residual: float
    regime: Regime


def classify_regime(model: QueueModel) -> Regime:
    drift = model.drift
    if abs(drift) < model.criticality_threshold:
        return Regime.CRITICAL
    return Regime.SUBCRITICAL if drift < 0 else Regime.SUPERCRITICAL


def tol_root(model: QueueModel) -> float:
    return 1e-12 * max(model.b0 * model.c, abs(model.b1))


def _safeguarded_newton(
    f: Callable[[float], float],
    fprime: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float,
    max_iter: int,
) -> float:
    """Root of f on [lo, hi] with f(lo) > 0 > f(hi)."""
    iterations = 0
    while hi - lo > BRACKET_WIDTH and iterations < max_iter:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        iterations += 1

    x = 0.5 * (lo + hi)
    while iterations < max_iter:
        fx = f(x)
        if fx > 0:
            lo = x
        else:
            hi = x
        if abs(fx) <= tol and hi - lo < 1e-6:
            return x
        d = fprime(x)
        step_ok = d != 0
        if step_ok:
            x_new = x - fx / d
            step_ok = lo < x_new < hi
        if not step_ok:
            x_new = 0.5 * (lo + hi)
        if x_new == x or hi - lo <= 4 * math.ulp(max(abs(hi), 1e-300)):
            return x_new
        x = x_new
        iterations += 1
    logger.warning("⚠️ Root iteration cap reached (%d)", max_iter)
    return x


def root_u(model: QueueModel) -> RootResult:
    """Smallest root u of B_c(s) = 0 on [0, 1]."""
    regime = classify_regime(model)
    if regime is not Regime.SUPERCRITICAL:
        return RootResult(1.0, abs(eval_B(model, model.c, 1.0).value), regime)

    c = model.c

    def f(s):
        return eval_B(model, c, s).value

    def fp(s):
        return eval_B(model, c, s).first_derivative

    # B_c is convex with B_c'(0) < 0 < B_c'(1): the minimiser s* has B_c(s*) < 0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fp(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    s_star = 0.5 * (lo + hi)

    u = _safeguarded_newton(f, fp, 0.0, s_star, tol_root(model), settings.ROOT_MAX_ITER)
    return RootResult(u, abs(f(u)), regime)


@functools.lru_cache(maxsize=4096)
def _u_lambda(model: QueueModel, lam: float) -> Tuple[float, float]:
    c = model.c

    def f(s):
        return eval_B(model, c, s).value - lam * s

    def fp(s):
        return eval_B(model, c, s).first_derivative - lam

    u = _safeguarded_newton(f, fp, 0.0, 1.0, tol_root(model), settings.ROOT_MAX_ITER)
    return u, abs(f(u))


def _check_lambda(lam: float) -> None:
    if not lam > 0:
        raise GateError("lambda_not_positive", f"lambda={lam}")
    if lam < LAMBDA_FLOOR:
        raise GateError("lambda_too_small", f"lambda={lam}")


def root_u_lambda(model: QueueModel, lam: float) -> RootResult:
    """Unique root u(lambda) of U_lambda on (0, 1)."""
    _check_lambda(lam)
    u, residual = _u_lambda(model, float(lam))
    logger.debug("u(%.6g) = %.17g residual=%.3g", lam, u, residual)
    return RootResult(u, residual, classify_regime(model))


def root_u_lambda_derivative(model: QueueModel, lam: float) -> float:
    """u'(lambda) = u / (B_c'(u) - lambda), by implicit differentiation."""
    u = root_u_lambda(model, lam).value
    denominator = eval_B(model, model.c, u).first_derivative - lam
    if abs(denominator) < 1e-12:
        raise GateError("derivative_singular", f"lambda={lam}")
    return u / denominator


def recursion_growth(model: QueueModel, lam: float, u: float) -> float:
    """
    |s_2| / u, where s_2 is the smallest-modulus root of B_c(s) - lam s other
    than u. Per-step amplification of rounding error in the forward recursion:
    the row decays like s_2^-j while the parasitic solution grows like u^-j.
    """
    coeffs = np.trim_zeros(np.array(B_coefficients(model, model.c), dtype=float), "b")
    coeffs[1] -= lam
    roots = np.roots(coeffs[::-1])
    if len(roots) < 2 or u <= 0:
        return 1.0
    others = np.delete(roots, np.argmin(np.abs(roots - u)))
    return max(float(np.min(np.abs(others))) / u, 1.0)


def refine(model: QueueModel, lam: float, ctx, start: Optional[float] = None):
    """
    Newton polish of u(lambda) (or of u when lam == 0) in the precision of
    ``ctx``. Returns an mpmath number.
    """
    if lam == 0:
        root = root_u(model)
        if root.value == 1.0:
            return ctx.mpf(1)
        x = ctx.mpf(root.value if start is None else start)
    else:
        x = ctx.mpf(root_u_lambda(model, lam).value if start is None else start)

    coeffs = B_coefficients(model, model.c)
    lam_mp = ctx.mpf(lam)
    eps = ctx.mpf(10) ** (-ctx.dps + 3)
    for _ in range(200):
        fx = polyval(ctx, coeffs, x) - lam_mp * x
        dx = polyder(ctx, coeffs, x) - lam_mp
        step = fx / dx
        x -= step
        if abs(step) <= eps * max(abs(x), eps):
            break
    return x
