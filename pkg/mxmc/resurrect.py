"""
Queue with resurrection at idle time (Q~ = Q* + Q_s, no catastrophes).

Resolvent r~_{ij}(lam) through the stopped-queue resolvent, recurrence
classification, equilibrium distribution with its generating function and
moments, the mean busy period and the ordinary M/M/c reference solution.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import pandas as pd

from config import settings
from mxmc.errors import GateError, NumericalError
from mxmc.forward import boundary_derivative as _forward_derivative
from mxmc.forward import rate_source, solve_forward
from mxmc.model import QueueModel, eval_B, eval_H
from mxmc.roots import Regime, classify_regime, root_u_lambda, root_u_lambda_derivative
from mxmc.stopped import (
    ResolventRow,
    boundary_derivative as phi_boundary_derivative,
    mean_extinction_time,
    resolvent_row,
    source_row,
)

logger = logging.getLogger(__name__)


class RecurrenceKind(str, enum.Enum):
    TRANSIENT = "transient"
    NULL_RECURRENT = "null_recurrent"
    POSITIVE_RECURRENT = "positive_recurrent"


@dataclass(frozen=True)
class Classification:
    kind: RecurrenceKind
    drift: float
    mu1: float


@dataclass(frozen=True)
class EquilibriumReport:
    """
    Stationary law pi_0..pi_J with its tail bound and moments.

    ``r_coeffs`` holds r_k for the resurrection queue and L_k(beta) for the
    catastrophe queue, so that pi_k = pi_0 * r_coeffs[k-1].
    """

    pi: Tuple[float, ...]
    tail_mass: float
    r_coeffs: Tuple[float, ...]
    EN: float
    ELw: float
    mean_busy_period: Optional[float] = None
    classification: Optional[Classification] = None
    extras: dict = field(default_factory=dict)

    @property
    def truncation(self) -> int:
        return len(self.pi) - 1


# ---------------------------------------------------------------------- #
# Gates                                                                   #
# ---------------------------------------------------------------------- #


def _require_resurrection(model: QueueModel) -> None:
    if model.beta != 0:
        raise GateError("use_catastrophe_module", f"beta={model.beta}")
    if not model.h_total > 0:
        raise GateError("resurrection_required")


def _check_lambda(lam: float) -> None:
    if not lam > 0:
        raise GateError("lambda_not_positive", f"lambda={lam}")


def classify(model: QueueModel) -> Classification:
    """Recurrent iff B_c'(1) <= 0; positive recurrent iff B_c'(1) < 0 (mu_1 is finite)."""
    _require_resurrection(model)
    regime = classify_regime(model)
    kind = {
        Regime.SUBCRITICAL: RecurrenceKind.POSITIVE_RECURRENT,
        Regime.CRITICAL: RecurrenceKind.NULL_RECURRENT,
        Regime.SUPERCRITICAL: RecurrenceKind.TRANSIENT,
    }[regime]
    return Classification(kind=kind, drift=model.drift, mu1=model.mu1)


# ---------------------------------------------------------------------- #
# Resolvent                                                               #
# ---------------------------------------------------------------------- #


def _anchor_weights(model: QueueModel, u: float) -> list:
    c, b0 = model.c, model.b0
    return [u ** (k - 1) * (c - k) * b0 * (1 - u) for k in range(1, c)]


def _anchor_weights_prime(model: QueueModel, u: float) -> list:
    c, b0 = model.c, model.b0
    out = []
    for k in range(1, c):
        lead = (k - 1) * u ** (k - 2) if k >= 2 else 0.0
        out.append((c - k) * b0 * (lead - k * u ** (k - 1)))
    return out


def L_boundary(model: QueueModel, lam: float) -> Tuple[float, ...]:
    """L_0(lam)..L_c(lam) with L_j = sum_i h_i phi*_{ij}(lam)."""
    if not model.h_support:
        return (0.0,) * (model.c + 1)
    sol = solve_forward(model, lam, rate_source(model.h), model.c)
    return (sol.head / lam,) + sol.values[: model.c]


def L_row(model: QueueModel, lam: float, J: Optional[int] = None) -> Tuple[float, ...]:
    if not model.h_support:
        return (0.0,) * ((J if J is not None else model.c) + 1)
    return source_row(model, lam, rate_source(model.h), J)[0]


def _r00_denominator(model: QueueModel, lam: float) -> float:
    u = root_u_lambda(model, lam).value
    L = L_boundary(model, lam)
    terms = [lam, model.h_total, -eval_H(model, u).value]
    terms += [w * L[k] for k, w in enumerate(_anchor_weights(model, u), start=1)]
    return math.fsum(terms)


def tilde_r00(model: QueueModel, lam: float) -> float:
    """r~_00(lam); with h = 0 this is 1/lam."""
    _check_lambda(lam)
    return 1.0 / _r00_denominator(model, lam)


def tilde_value(model: QueueModel, i: int, j: int, lam: float) -> float:
    """r~_{ij}(lam) without the beta/h gates; catastrophe code calls it with h = 0 too."""
    _check_lambda(lam)
    if i < 0 or j < 0:
        raise GateError("bad_index", f"i={i}, j={j}")
    r00 = tilde_r00(model, lam)
    if i == 0:
        return r00 if j == 0 else r00 * L_row(model, lam, max(j, model.c))[j]
    phi = resolvent_row(model, i, lam, max(j, model.c))
    ri0 = r00 * model.b0 * phi[1]
    if j == 0:
        return ri0
    return phi[j] + ri0 * L_row(model, lam, max(j, model.c))[j]


def tilde_row(model: QueueModel, i: int, lam: float, J: Optional[int] = None) -> ResolventRow:
    """Row r~_{i0..iJ}(lam) on a common truncation."""
    _check_lambda(lam)
    r00 = tilde_r00(model, lam)
    L = L_row(model, lam, J)
    n = len(L) - 1
    if i == 0:
        values = (r00,) + tuple(r00 * v for v in L[1:])
    else:
        phi = resolvent_row(model, i, lam, J)
        if J is None and phi.truncation != n:
            n = max(n, phi.truncation)
            L = L_row(model, lam, n)
            phi = resolvent_row(model, i, lam, n)
        ri0 = r00 * model.b0 * phi[1]
        values = (ri0,) + tuple(phi[j] + ri0 * L[j] for j in range(1, n + 1))
    return ResolventRow(lam, i, values, n, 1.0 / lam - math.fsum(values))


def resolvent_tilde(model: QueueModel, i: int, j: int, lam: float) -> float:
    """r~_{ij}(lam) of the resurrection queue."""
    _require_resurrection(model)
    return tilde_value(model, i, j, lam)


def resolvent_tilde_row(model: QueueModel, i: int, lam: float, J: Optional[int] = None) -> ResolventRow:
    _require_resurrection(model)
    return tilde_row(model, i, lam, J)


def tilde_r00_derivative(model: QueueModel, lam: float) -> float:
    """d/dlam r~_00 through u'(lam) and the differentiated L boundary system."""
    _check_lambda(lam)
    u = root_u_lambda(model, lam).value
    du = root_u_lambda_derivative(model, lam)
    L = L_boundary(model, lam)
    if model.h_support:
        dL = _forward_derivative(model, lam, rate_source(model.h))
    else:
        dL = (0.0,) * (model.c + 1)
    terms = [1.0, -eval_H(model, u).first_derivative * du]
    for k, (w, wp) in enumerate(zip(_anchor_weights(model, u), _anchor_weights_prime(model, u)), start=1):
        terms.append(wp * du * L[k])
        terms.append(w * dL[k])
    denominator = _r00_denominator(model, lam)
    return -math.fsum(terms) / denominator**2


def tilde_rj0_derivative(model: QueueModel, j: int, lam: float) -> float:
    """d/dlam r~_{j0}; r~_{j0} = r~_00 b0 phi*_{j1} for j >= 1."""
    if j == 0:
        return tilde_r00_derivative(model, lam)
    r00 = tilde_r00(model, lam)
    phi1 = resolvent_row(model, j, lam, model.c)[1]
    dphi1 = phi_boundary_derivative(model, j, lam)[1]
    return model.b0 * (tilde_r00_derivative(model, lam) * phi1 + r00 * dphi1)


# ---------------------------------------------------------------------- #
# Equilibrium                                                             #
# ---------------------------------------------------------------------- #


def r_coefficients(model: QueueModel, J: int) -> Tuple[float, ...]:
    """r_1..r_J with r_k = sum_i h_i m*_k(i), by the lam = 0 forward recursion."""
    if not model.h_total > 0:
        raise GateError("resurrection_required")
    if J < 1:
        raise GateError("bad_index", f"J={J}")
    return solve_forward(model, 0.0, rate_source(model.h), max(J, model.c)).values[:J]


def mean_busy_period(model: QueueModel) -> float:
    """Busy period: h-weighted mean extinction time from the resurrection jump."""
    _require_resurrection(model)
    if classify_regime(model) is not Regime.SUBCRITICAL:
        return math.inf
    h = model.h_total
    return math.fsum(model.h[k] * mean_extinction_time(model, k) for k in model.h_support) / h


def _moments(model: QueueModel, pi0: float, coeffs: Tuple[float, ...]) -> Tuple[float, float]:
    c, b0 = model.c, model.b0
    Bc = eval_B(model, c, 1.0)
    d1, d2 = Bc.first_derivative, Bc.second_derivative
    H = eval_H(model, 1.0)
    mu1, h2 = H.first_derivative, H.second_derivative

    head = d2 * mu1 / (2 * d1**2) - (2 * mu1 + h2) / (2 * d1)
    boundary = [(k, pi0 * coeffs[k - 1]) for k in range(1, c)]
    EN = pi0 * head + math.fsum(
        p * (c - k) * b0 * (d2 / (2 * d1**2) - k / d1) for k, p in boundary
    )
    ELw = pi0 * (head + c) + math.fsum(
        p * (c - k) * (b0 * (d2 / (2 * d1**2) - k / d1) + 1) for k, p in boundary
    ) - c
    return EN, ELw


def equilibrium(
    model: QueueModel,
    J: Optional[int] = None,
    eps_tail: Optional[float] = None,
) -> EquilibriumReport:
    """pi~ with pi~_k = pi~_0 r_k; J grows until the tail drops below ``eps_tail``."""
    classification = classify(model)
    if classification.kind is not RecurrenceKind.POSITIVE_RECURRENT:
        raise GateError("no_equilibrium", classification.kind.value)

    eps = settings.EQUILIBRIUM_TAIL if eps_tail is None else eps_tail
    c, b0 = model.c, model.b0
    drift = classification.drift
    if J is not None and J < 0:
        raise GateError("bad_index", f"J={J}")
    n = J if J is not None else max(2 * c, 32)
    while True:
        # the boundary terms need r_1..r_{c-1} even when J is smaller
        r = r_coefficients(model, max(n, c, 1))
        pi0 = -drift / math.fsum([-drift, model.mu1] + [r[k - 1] * (c - k) * b0 for k in range(1, c)])
        pi = (pi0,) + tuple(pi0 * rk for rk in r[:n])
        tail = 1.0 - math.fsum(pi)
        if J is not None or tail < eps:
            break
        if n >= settings.TRUNCATION_CAP:
            if tail >= 1e-6:
                raise NumericalError("truncation_cap", f"tail={tail:.3g}")
            logger.warning("⚠️ Equilibrium truncated at cap with tail %.3g", tail)
            break
        n = min(2 * n, settings.TRUNCATION_CAP)

    EN, ELw = _moments(model, pi0, r)
    report = EquilibriumReport(
        pi=pi,
        tail_mass=max(tail, 0.0),
        r_coeffs=tuple(r[:n]),
        EN=EN,
        ELw=ELw,
        mean_busy_period=mean_busy_period(model),
        classification=classification,
    )
    logger.info("✅ Equilibrium: pi0=%.12g EN=%.12g ELw=%.12g J=%d", pi0, EN, ELw, n)
    return report


def equilibrium_gf(model: QueueModel, s: float) -> float:
    """Pi~(s) with pi~_k (1 <= k <= c-1) substituted as pi~_0 r_k."""
    classification = classify(model)
    if classification.kind is not RecurrenceKind.POSITIVE_RECURRENT:
        raise GateError("no_equilibrium", classification.kind.value)
    if not 0 <= s < 1:
        raise GateError("bad_argument", f"s={s}")

    c, b0 = model.c, model.b0
    Bc = eval_B(model, c, s).value
    if abs(Bc) < 1e-12:
        report = equilibrium(model)
        return math.fsum(p * s**j for j, p in enumerate(report.pi))

    r = r_coefficients(model, max(c - 1, 1))
    drift = classification.drift
    pi0 = -drift / math.fsum([-drift, model.mu1] + [r[k - 1] * (c - k) * b0 for k in range(1, c)])
    head = pi0 * (1 + s * (model.h_total - eval_H(model, s).value) / Bc)
    boundary = math.fsum(pi0 * r[k - 1] * s**k * (c - k) * b0 * (1 - s) for k in range(1, c))
    return head + boundary / Bc


def mmc_reference(model: QueueModel, J: int) -> Tuple[float, ...]:
    """Ordinary M/M/c stationary law pi_0..pi_J with rho = b_2 / b_0."""
    if not model.is_mmc:
        raise GateError("variant_mismatch", "model is not an ordinary M/M/c queue")
    c = model.c
    rho = model.b[2] / model.b0
    if rho >= c:
        raise GateError("no_equilibrium", f"rho={rho}")
    norm = math.fsum(rho**k / math.factorial(k) for k in range(c + 1))
    norm += rho ** (c + 1) / (math.factorial(c) * (c - rho))
    pi0 = 1.0 / norm
    out = []
    for k in range(J + 1):
        if k < c:
            out.append(pi0 * rho**k / math.factorial(k))
        else:
            out.append(pi0 * rho**k / (c ** (k - c) * math.factorial(c)))
    return tuple(out)


def equilibrium_report_frame(report: EquilibriumReport) -> pd.DataFrame:
    return pd.DataFrame({"state": range(len(report.pi)), "probability": report.pi})
