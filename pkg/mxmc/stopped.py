"""
Stopped queue Q* (state 0 absorbing).

Resolvent rows phi*_{ij}(lam), their generating function, the extinction
time transform, extinction probabilities, occupation times m*_i(k) and the
mean extinction time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

from config import settings
from mxmc.errors import GateError, NumericalError
from mxmc.forward import Source, boundary_derivative as _forward_derivative
from mxmc.forward import solve_forward, unit_source
from mxmc.model import QueueModel, eval_B
from mxmc.roots import Regime, classify_regime, root_u, root_u_lambda

logger = logging.getLogger(__name__)

TAIL_FAIL = 1e-6
HONESTY_SLACK = 1e-10
SERIES_WINDOW = 1e-6


@dataclass(frozen=True)
class ResolventRow:
    lam: float
    source: int
    values: Tuple[float, ...]
    truncation: int
    tail_bound: float

    def __getitem__(self, j: int) -> float:
        return self.values[j] if 0 <= j < len(self.values) else 0.0


@dataclass(frozen=True)
class ExtinctionReport:
    k: int
    e_star: float
    m_star: Tuple[float, ...]
    mean_time: float


def _check_state(i: int, minimum: int = 0) -> None:
    if int(i) != i or i < minimum:
        raise GateError("bad_index", f"state={i}")


def _check_lambda(lam: float) -> None:
    if not lam > 0:
        raise GateError("lambda_not_positive", f"lambda={lam}")


# ---------------------------------------------------------------------- #
# Rows with automatic truncation                                          #
# ---------------------------------------------------------------------- #


def source_row(
    model: QueueModel,
    lam: float,
    source: Source,
    J: Optional[int] = None,
    tail_epsilon: Optional[float] = None,
) -> Tuple[Tuple[float, ...], int]:
    """
    (x_0..x_J, J) of the forward system with ``source``; x_0 = z0 / lam.

    With J unset, J doubles until lam * sum x >= (1 - tail_epsilon) * sum g
    or the truncation cap is reached.
    """
    _check_lambda(lam)
    weight = math.fsum(w for _, w in source)

    def _row(n: int) -> Tuple[float, ...]:
        sol = solve_forward(model, lam, source, n)
        return (sol.head / lam,) + sol.values[:n]

    if J is not None:
        if J < model.c:
            raise GateError("bad_index", f"J={J} < c={model.c}")
        return _row(J), J

    eps = settings.TAIL_EPSILON if tail_epsilon is None else tail_epsilon
    cap = settings.TRUNCATION_CAP
    top = max((i for i, _ in source), default=0)
    n = max(2 * model.c, top + 8, 16)
    while True:
        n = min(n, cap)
        values = _row(n)
        mass = lam * math.fsum(values)
        if mass >= (1.0 - eps) * weight:
            return values, n
        if n >= cap:
            tail = weight - mass
            if tail >= TAIL_FAIL * max(weight, 1.0):
                raise NumericalError("truncation_cap", f"tail={tail:.3g}, lambda={lam}")
            logger.warning("⚠️ Truncation cap %d hit with tail %.3g", cap, tail)
            return values, n
        n *= 2


# ---------------------------------------------------------------------- #
# Resolvent                                                               #
# ---------------------------------------------------------------------- #


def resolvent_boundary(model: QueueModel, i: int, lam: float) -> Tuple[float, ...]:
    """(phi*_{i0}, ..., phi*_{i,c-1}) from the c x c boundary system."""
    _check_state(i)
    _check_lambda(lam)
    if i == 0:
        return (1.0 / lam,) + (0.0,) * (model.c - 1)
    sol = solve_forward(model, lam, unit_source(i), model.c)
    return (sol.head / lam,) + sol.values[: model.c - 1]


def resolvent_row(model: QueueModel, i: int, lam: float, J: Optional[int] = None) -> ResolventRow:
    """Row phi*_{i0..iJ}(lam); J is chosen from the honesty tail when omitted."""
    _check_state(i)
    _check_lambda(lam)
    if i == 0:
        n = model.c if J is None else J
        if n < model.c:
            raise GateError("bad_index", f"J={J} < c={model.c}")
        values = (1.0 / lam,) + (0.0,) * n
        return ResolventRow(lam, 0, values, n, 0.0)

    values, n = source_row(model, lam, unit_source(i), J)
    total = math.fsum(values)
    if lam * total > 1.0 + HONESTY_SLACK:
        logger.warning("⚠️ Honesty exceeded: lambda*sum = %.15g (i=%d, lambda=%.6g)", lam * total, i, lam)
    return ResolventRow(lam, i, values, n, 1.0 / lam - total)


def resolvent_value(model: QueueModel, i: int, j: int, lam: float) -> float:
    """Single entry phi*_{ij}(lam)."""
    _check_state(j)
    return resolvent_row(model, i, lam, max(j, model.c))[j]


def resolvent_gf(model: QueueModel, i: int, lam: float, s: float) -> float:
    """L_i(lam, s) = sum_j phi*_{ij}(lam) s^j for 0 <= s < 1."""
    _check_state(i)
    _check_lambda(lam)
    if not 0 <= s < 1:
        raise GateError("bad_argument", f"s={s}")

    u = root_u_lambda(model, lam).value
    if abs(s - u) < SERIES_WINDOW:
        row = resolvent_row(model, i, lam)
        return math.fsum(v * s**j for j, v in enumerate(row.values))

    c, b0 = model.c, model.b0
    phi = resolvent_boundary(model, i, lam)
    numerator = math.fsum(
        [eval_B(model, c, s).value * phi[0], -(s ** (i + 1))]
        + [phi[k] * s**k * (c - k) * b0 * (1 - s) for k in range(1, c)]
    )
    return numerator / (eval_B(model, c, s).value - lam * s)


def boundary_derivative(model: QueueModel, i: int, lam: float) -> Tuple[float, ...]:
    """d/dlam of (lam phi*_{i0}, phi*_{i1}, ..., phi*_{i,max(c-1,1)})."""
    _check_state(i, 1)
    _check_lambda(lam)
    return _forward_derivative(model, lam, unit_source(i))


# ---------------------------------------------------------------------- #
# Extinction                                                              #
# ---------------------------------------------------------------------- #


def extinction_time_lt(model: QueueModel, k: int, lam: float) -> float:
    """Laplace transform of the extinction-time distribution w*_k(t)."""
    _check_state(k, 1)
    _check_lambda(lam)
    c, b0 = model.c, model.b0
    u = root_u_lambda(model, lam).value
    phi = resolvent_boundary(model, k, lam)
    correction = math.fsum(phi[i] * u ** (i - 1) * (c - i) * b0 * (1 - u) for i in range(1, c))
    return (u**k - correction) / lam


def occupation_times(model: QueueModel, k: int, J: int) -> Tuple[float, ...]:
    """m*_1(k)..m*_J(k), the expected time spent in each state before absorption."""
    _check_state(k, 1)
    if J < 1:
        raise GateError("bad_index", f"J={J}")
    return solve_forward(model, 0.0, unit_source(k), max(J, model.c)).values[:J]


def extinction_probability(model: QueueModel, k: int) -> float:
    """e*_k: 1 unless B_c'(1) > 0."""
    _check_state(k, 1)
    if classify_regime(model) is not Regime.SUPERCRITICAL:
        return 1.0
    return solve_forward(model, 0.0, unit_source(k), model.c).head


def mean_extinction_time(model: QueueModel, k: int) -> float:
    """E(tau*_0 | X*_0 = k); infinite unless B_c'(1) < 0."""
    _check_state(k, 1)
    if classify_regime(model) is not Regime.SUBCRITICAL:
        return math.inf
    c, b0 = model.c, model.b0
    m = occupation_times(model, k, max(c - 1, 1))
    total = math.fsum([float(k)] + [m[i - 1] * (c - i) * b0 for i in range(1, c)])
    return -total / model.drift


def extinction_report(model: QueueModel, k: int, J: int = 20) -> ExtinctionReport:
    report = ExtinctionReport(
        k=k,
        e_star=extinction_probability(model, k),
        m_star=occupation_times(model, k, J),
        mean_time=mean_extinction_time(model, k),
    )
    logger.info(
        "✅ Extinction from k=%d: e*=%.12g mean=%.12g (u=%.12g)",
        k, report.e_star, report.mean_time, root_u(model).value,
    )
    return report
