"""
Real-axis Laplace inversion (Gaver-Stehfest).

Recovers time-domain transition functions p*(t), p~(t), p(t), h(t) and the
extinction/catastrophe-time laws from the resolvents computed elsewhere.
"""

from __future__ import annotations

import enum
import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Tuple

import numpy as np
import pandas as pd

from config import STEHFEST_ORDERS, settings
from mxmc.catastrophe import catastrophe_time_transform, eta_resolvent, resolvent as catastrophe_resolvent
from mxmc.errors import GateError
from mxmc.model import VARIANTS, QueueModel
from mxmc.precision import make_context
from mxmc.resurrect import resolvent_tilde, tilde_value
from mxmc.stopped import extinction_time_lt, resolvent_value

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
ESTIMATE_ORDERS = (12, 14)
ESTIMATE_EXTRA_DIGITS = 10
LINK_TOLERANCE = 1e-3
QUADRATURE_NODES = 32

Transform = Callable[[float], float]


class InversionKind(str, enum.Enum):
    FUNCTION = "function"
    DENSITY = "density"
    DISTRIBUTION = "distribution"


@dataclass(frozen=True)
class InversionRequest:
    transform: Transform
    t: float
    order: int = 12
    kind: InversionKind = InversionKind.FUNCTION
    probability: bool = False
    precision: Optional[int] = None

    def __post_init__(self):
        if self.precision is not None and self.precision < 1:
            raise GateError("bad_precision", f"precision={self.precision}")
        if self.order not in STEHFEST_ORDERS:
            raise GateError("bad_order", f"order={self.order}")
        if not self.t > 0:
            raise GateError("time_not_positive", f"t={self.t}")


@dataclass(frozen=True)
class InversionResult:
    value: float
    error_estimate: float


@functools.lru_cache(maxsize=None)
def stehfest_weights(order: int) -> Tuple[float, ...]:
    """
    V_1..V_N for even N:
    V_i = (-1)^(N/2+i) sum_k k^(N/2) (2k)! / ((N/2-k)! k! (k-1)! (i-k)! (2k-i)!)
    with k from floor((i+1)/2) to min(i, N/2), evaluated exactly.
    """
    if order not in STEHFEST_ORDERS:
        raise GateError("bad_order", f"order={order}")
    ctx = make_context(60)
    half = order // 2
    fac = ctx.factorial
    weights = []
    for i in range(1, order + 1):
        acc = ctx.mpf(0)
        for k in range((i + 1) // 2, min(i, half) + 1):
            acc += ctx.mpf(k) ** half * fac(2 * k) / (
                fac(half - k) * fac(k) * fac(k - 1) * fac(i - k) * fac(2 * k - i)
            )
        weights.append(float((-1) ** (half + i) * acc))
    return tuple(weights)


def _stehfest(transform: Transform, t: float, order: int) -> float:
    a = LN2 / t
    weights = stehfest_weights(order)
    return a * math.fsum(w * transform(k * a) for k, w in enumerate(weights, start=1))


def _stehfest_extended(transform: Transform, t: float, dps: int) -> float:
    # mpmath ties the Stehfest degree to the working precision
    ctx = make_context(dps)
    sample = transform(ctx.mpf(1))
    if not isinstance(sample, ctx.mpf):
        raise GateError("transform_not_extended", f"got {type(sample).__name__}")
    return ctx.invertlaplace(transform, ctx.mpf(t), method="stehfest")


def invert(request: InversionRequest) -> InversionResult:
    """
    Gaver-Stehfest value at ``request.order``; error estimate |order 12 - order 14|.

    With ``request.precision`` set the transform is evaluated in mpmath at that
    many digits (it must accept and return mpf) and the estimate is the change
    against ``precision + 10`` digits.
    """
    if request.precision is not None:
        low = _stehfest_extended(request.transform, request.t, request.precision)
        high = _stehfest_extended(request.transform, request.t, request.precision + ESTIMATE_EXTRA_DIGITS)
        value, estimate = float(low), float(abs(high - low))
    else:
        values = {request.order: _stehfest(request.transform, request.t, request.order)}
        for order in ESTIMATE_ORDERS:
            if order not in values:
                values[order] = _stehfest(request.transform, request.t, order)
        estimate = abs(values[12] - values[14])
        value = values[request.order]
    if request.probability and request.kind is not InversionKind.DENSITY:
        value = min(max(value, 0.0), 1.0)
    return InversionResult(value=value, error_estimate=estimate)


def invert_grid(
    transform: Transform,
    times: Iterable[float],
    order: Optional[int] = None,
    kind: InversionKind = InversionKind.FUNCTION,
    probability: bool = False,
) -> pd.DataFrame:
    """Invert on a t-grid; columns t, value, error_estimate."""
    order = settings.STEHFEST_ORDER if order is None else order
    rows = []
    for t in times:
        result = invert(InversionRequest(transform, float(t), order, kind, probability))
        rows.append({"t": float(t), "value": result.value, "error_estimate": result.error_estimate})
    return pd.DataFrame(rows, columns=["t", "value", "error_estimate"])


# ---------------------------------------------------------------------- #
# Transition functions                                                    #
# ---------------------------------------------------------------------- #


def transition_transform(model: QueueModel, variant: str, i: int, j: int) -> Transform:
    if variant == "stopped":
        return lambda lam: resolvent_value(model, i, j, lam)
    if variant == "resurrect":
        if model.beta != 0:
            raise GateError("variant_mismatch", "resurrect variant needs beta = 0")
        return lambda lam: resolvent_tilde(model, i, j, lam)
    if model.beta <= 0:
        raise GateError("variant_mismatch", f"{variant} variant needs beta > 0")
    if variant == "catastrophe":
        return lambda lam: catastrophe_resolvent(model, i, j, lam)

    def absorbed(lam: float) -> float:
        row = eta_resolvent(model, i, lam, max(j, model.c))
        return row.eta_minus1 if j == -1 else row.values[j]

    return absorbed


def transition_probability(
    model: QueueModel,
    variant: str,
    i: int,
    j: int,
    t: float,
    order: Optional[int] = None,
    verify: bool = True,
) -> float:
    """p_{ij}(t) of the chosen process by inverting its resolvent."""
    if variant not in VARIANTS:
        raise GateError("bad_variant", variant)
    if not t > 0:
        raise GateError("time_not_positive", f"t={t}")
    lowest = -1 if variant == "absorbed_M" else 0
    if i < lowest or j < lowest:
        raise GateError("invalid_state", f"i={i}, j={j}")
    order = settings.STEHFEST_ORDER if order is None else order

    if variant == "stopped" and i == 0:
        return 1.0 if j == 0 else 0.0
    if variant == "absorbed_M" and i == -1:
        return 1.0 if j == -1 else 0.0

    transform = transition_transform(model, variant, i, j)
    result = invert(InversionRequest(transform, t, order, InversionKind.FUNCTION, probability=True))
    logger.debug("p_%d%d(%.6g) [%s] = %.10g ± %.2g", i, j, t, variant, result.value, result.error_estimate)

    if variant == "catastrophe" and verify:
        lhs, rhs = catastrophe_link_time_domain(model, i, j, t, order)
        if abs(lhs - rhs) > LINK_TOLERANCE:
            logger.warning("⚠️ Time-domain catastrophe link off by %.3g at t=%.6g", abs(lhs - rhs), t)
    return result.value


def catastrophe_link_time_domain(model: QueueModel, j: int, n: int, t: float, order: Optional[int] = None) -> Tuple[float, float]:
    """
    (p_{jn}(t), e^{-beta t} p~_{jn}(t) + beta int_0^t e^{-beta s} p~_{0n}(s) ds)

    with both sides from independent inversions and the integral by
    Gauss-Legendre quadrature.
    """
    if model.beta <= 0:
        raise GateError("variant_mismatch", "catastrophe link needs beta > 0")
    order = settings.STEHFEST_ORDER if order is None else order
    beta = model.beta
    base = model.without_catastrophes()

    def p(transform: Transform, s: float) -> float:
        return _stehfest(transform, s, order)

    lhs = p(lambda lam: catastrophe_resolvent(model, j, n, lam), t)
    first = math.exp(-beta * t) * p(lambda lam: tilde_value(base, j, n, lam), t)

    nodes, weights = np.polynomial.legendre.leggauss(QUADRATURE_NODES)
    taus = 0.5 * t * (nodes + 1.0)
    integrand = [math.exp(-beta * s) * p(lambda lam: tilde_value(base, 0, n, lam), s) for s in taus]
    integral = 0.5 * t * math.fsum(w * f for w, f in zip(weights, integrand))
    return lhs, first + beta * integral


def extinction_distribution(model: QueueModel, k: int, t: float, order: Optional[int] = None) -> InversionResult:
    """w*_k(t) = P(tau*_0 <= t | X*_0 = k)."""
    order = settings.STEHFEST_ORDER if order is None else order
    return invert(
        InversionRequest(lambda lam: extinction_time_lt(model, k, lam), t, order, InversionKind.DISTRIBUTION, True)
    )


def catastrophe_time_density(model: QueueModel, j: int, t: float, order: Optional[int] = None) -> InversionResult:
    """d_{j0}(t), the density of the first effective catastrophe time."""
    order = settings.STEHFEST_ORDER if order is None else order
    return invert(
        InversionRequest(lambda lam: catastrophe_time_transform(model, j, lam), t, order, InversionKind.DENSITY)
    )


def catastrophe_time_distribution(model: QueueModel, j: int, t: float, order: Optional[int] = None) -> InversionResult:
    """P(C_{j0} <= t) = h_{j,-1}(t), from eta_{j,-1}."""
    order = settings.STEHFEST_ORDER if order is None else order
    return invert(
        InversionRequest(
            lambda lam: catastrophe_time_transform(model, j, lam) / lam,
            t,
            order,
            InversionKind.DISTRIBUTION,
            True,
        )
    )
