"""
Queue with resurrection and catastrophes (Q = Q* + Q_s + Q_d).

Resolvent r_{ij}(lam), the h = 0 hitting time of the empty state, the
equilibrium law (positive recurrent whenever h, beta > 0), the absorbed
process M_t on {-1, 0, 1, ...} and the first effective catastrophe time
C_{j0}: transform, mean, variance and beta asymptotes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

from config import settings
from mxmc.errors import GateError, NumericalError
from mxmc.model import QueueModel, eval_B, eval_H
from mxmc.resurrect import (
    Classification,
    EquilibriumReport,
    L_boundary,
    L_row,
    RecurrenceKind,
    r_coefficients,
    tilde_r00,
    tilde_r00_derivative,
    tilde_rj0_derivative,
    tilde_row,
    tilde_value,
)
from mxmc.roots import Regime, classify_regime, root_u, root_u_lambda
from mxmc.stopped import ResolventRow, occupation_times, resolvent_boundary, resolvent_row

logger = logging.getLogger(__name__)

ETA_GUARD = 1e-12
SERIES_WINDOW = 1e-6
DERIVATIVE_STEP = 1e-4
DERIVATIVE_RTOL = 1e-6
SLOPE_STEP = 1e-4
CURVATURE_STEP = 2e-3
MIN_TRANSFORM_STEP = 1e-10
MEAN_RTOL = 1e-6
SECOND_MOMENT_RTOL = 1e-4


@dataclass(frozen=True)
class CatastropheTimeStats:
    j: int
    mean: float
    variance: float
    delta_at: Dict[float, float] = field(default_factory=dict)
    derivative_gap: float = 0.0
    transform_mean: Optional[float] = None
    transform_second_moment: Optional[float] = None


@dataclass(frozen=True)
class EtaRow:
    lam: float
    source: int
    eta_minus1: float
    values: Tuple[float, ...]

    @property
    def total(self) -> float:
        return math.fsum((self.eta_minus1,) + self.values)


# ---------------------------------------------------------------------- #
# Gates and shared pieces                                                 #
# ---------------------------------------------------------------------- #


def _require_catastrophes(model: QueueModel) -> None:
    if not model.beta > 0:
        raise GateError("use_resurrect_module")


def _require_h(model: QueueModel, key: str = "resurrection_required") -> None:
    if not model.h_total > 0:
        raise GateError(key)


def _check_lambda(lam: float) -> None:
    if not lam > 0:
        raise GateError("lambda_not_positive", f"lambda={lam}")


def _check_state(i: int, minimum: int = 0) -> None:
    if int(i) != i or i < minimum:
        raise GateError("bad_index", f"state={i}")


def _anchor_weights(model: QueueModel, u: float) -> list:
    c, b0 = model.c, model.b0
    return [u ** (k - 1) * (c - k) * b0 * (1 - u) for k in range(1, c)]


def _M(model: QueueModel, i: int, mu: float, u: float) -> float:
    """M_i = sum_{k=1}^{c-1} phi*_{ik}(mu) w_k(u(mu))."""
    if model.c == 1:
        return 0.0
    phi = resolvent_boundary(model, i, mu)
    return math.fsum(phi[k] * w for k, w in enumerate(_anchor_weights(model, u), start=1))


def _excess(model: QueueModel, mu: float) -> float:
    """h - H(u(mu)) + sum_k w_k(u(mu)) L_k(mu)."""
    u = root_u_lambda(model, mu).value
    L = L_boundary(model, mu)
    terms = [model.h_total, -eval_H(model, u).value]
    terms += [w * L[k] for k, w in enumerate(_anchor_weights(model, u), start=1)]
    return math.fsum(terms)


# ---------------------------------------------------------------------- #
# Resolvent                                                               #
# ---------------------------------------------------------------------- #


def _r00(model: QueueModel, lam: float) -> float:
    mu = lam + model.beta
    return 1.0 / (lam + lam / mu * _excess(model, mu))


def _ri0(model: QueueModel, i: int, lam: float, r00: float) -> float:
    mu = lam + model.beta
    u = root_u_lambda(model, mu).value
    return r00 * (lam * u**i - lam * _M(model, i, mu, u) + model.beta) / mu


def resolvent(model: QueueModel, i: int, j: int, lam: float) -> float:
    """r_{ij}(lam) with every stopped-queue quantity taken at lam + beta."""
    _require_catastrophes(model)
    _check_state(i)
    _check_state(j)
    _check_lambda(lam)
    mu = lam + model.beta
    r00 = _r00(model, lam)
    if i == 0:
        return r00 if j == 0 else r00 * L_row(model, mu, max(j, model.c))[j]
    ri0 = _ri0(model, i, lam, r00)
    if j == 0:
        return ri0
    phi = resolvent_row(model, i, mu, max(j, model.c))
    return phi[j] + ri0 * L_row(model, mu, max(j, model.c))[j]


def resolvent_catastrophe_row(model: QueueModel, i: int, lam: float, J: Optional[int] = None) -> ResolventRow:
    """Row r_{i0..iJ}(lam) on a common truncation."""
    _require_catastrophes(model)
    _check_state(i)
    _check_lambda(lam)
    mu = lam + model.beta
    r00 = _r00(model, lam)
    L = L_row(model, mu, J)
    n = len(L) - 1
    if i == 0:
        values = (r00,) + tuple(r00 * v for v in L[1:])
    else:
        phi = resolvent_row(model, i, mu, J)
        if J is None and phi.truncation != n:
            n = max(n, phi.truncation)
            L = L_row(model, mu, n)
            phi = resolvent_row(model, i, mu, n)
        ri0 = _ri0(model, i, lam, r00)
        values = (ri0,) + tuple(phi[j] + ri0 * L[j] for j in range(1, n + 1))
    return ResolventRow(lam, i, values, n, 1.0 / lam - math.fsum(values))


# ---------------------------------------------------------------------- #
# h = 0: hitting time of the empty state                                  #
# ---------------------------------------------------------------------- #


def hitting_time_h0(model: QueueModel, k: int, lam: float) -> Tuple[float, float]:
    """(Laplace transform of P(tau_0 <= t), E(tau_0)) from X_0 = k when h = 0."""
    _require_catastrophes(model)
    if model.h_total > 0:
        raise GateError("use_catastrophe_time_ops")
    _check_state(k, 1)
    _check_lambda(lam)
    beta = model.beta
    mu = lam + beta
    u_mu = root_u_lambda(model, mu).value
    transform = (beta / lam + u_mu**k - _M(model, k, mu, u_mu)) / mu

    u_b = root_u_lambda(model, beta).value
    mean = (1 - u_b**k + _M(model, k, beta, u_b)) / beta
    return transform, mean


def hitting_probability_h0(model: QueueModel, k: int) -> float:
    """e_k = 1: with catastrophes the empty state is always reached."""
    _require_catastrophes(model)
    if model.h_total > 0:
        raise GateError("use_catastrophe_time_ops")
    _check_state(k, 1)
    return 1.0


# ---------------------------------------------------------------------- #
# Equilibrium                                                             #
# ---------------------------------------------------------------------- #


def L_coefficients(model: QueueModel, lam: float, J: Optional[int] = None) -> Tuple[float, ...]:
    """L_0(lam)..L_J(lam), L_j = sum_i h_i phi*_{ij}(lam)."""
    _require_h(model)
    _check_lambda(lam)
    return L_row(model, lam, J)


def _require_equilibrium(model: QueueModel) -> None:
    _require_catastrophes(model)
    _require_h(model, "equilibrium_degenerate")


def limiting_p00(model: QueueModel) -> float:
    """lim_{t->inf} p_00(t) = beta / (beta + h - H(u(beta)) + sum_k L_k(beta) w_k(u(beta)))."""
    _require_equilibrium(model)
    return model.beta / (model.beta + _excess(model, model.beta))


def _moments(model: QueueModel, pi: Tuple[float, ...]) -> Tuple[float, float]:
    c, b0, beta = model.c, model.b0, model.beta
    u = root_u_lambda(model, beta).value
    d1 = eval_B(model, c, 1.0).first_derivative
    Hu = eval_H(model, u).value
    h, mu1 = model.h_total, model.mu1

    head = ((Hu - h - mu1) * (-beta) - (Hu - h) * (d1 - beta)) / beta**2
    boundary = [
        (pi[k] * (c - k), beta + u ** (k - 1) * (1 - u) * d1) for k in range(1, c)
    ]
    EN = pi[0] * head + math.fsum(p * b0 * t for p, t in boundary) / beta**2
    ELw = pi[0] * (head + c) + math.fsum(p * (b0 * t + beta**2) for p, t in boundary) / beta**2 - c
    return EN, ELw


def equilibrium(model: QueueModel, J: Optional[int] = None, eps_tail: Optional[float] = None) -> EquilibriumReport:
    """pi_0 by the limiting p_00 formula and pi_j = pi_0 L_j(beta)."""
    _require_equilibrium(model)
    eps = settings.EQUILIBRIUM_TAIL if eps_tail is None else eps_tail
    beta = model.beta
    pi0 = limiting_p00(model)

    if J is not None and J < 0:
        raise GateError("bad_index", f"J={J}")
    n = J if J is not None else max(2 * model.c, 32)
    while True:
        # E(N) needs pi_1..pi_{c-1} even when J is smaller
        L = L_row(model, beta, max(n, model.c))
        full = (pi0,) + tuple(pi0 * v for v in L[1:])
        pi = full[: n + 1]
        tail = 1.0 - math.fsum(pi)
        if J is not None or tail < eps:
            break
        if n >= settings.TRUNCATION_CAP:
            if tail >= 1e-6:
                raise NumericalError("truncation_cap", f"tail={tail:.3g}")
            logger.warning("⚠️ Equilibrium truncated at cap with tail %.3g", tail)
            break
        n = min(2 * n, settings.TRUNCATION_CAP)

    EN, ELw = _moments(model, full)
    EN_sum = math.fsum(j * p for j, p in enumerate(pi))
    if abs(EN - EN_sum) > 1e-6 * max(1.0, EN_sum) and tail < 1e-9:
        logger.warning("⚠️ Closed-form E(N)=%.12g differs from truncated sum %.12g", EN, EN_sum)

    report = EquilibriumReport(
        pi=pi,
        tail_mass=max(tail, 0.0),
        r_coeffs=tuple(L[1 : n + 1]),
        EN=EN,
        ELw=ELw,
        mean_busy_period=None,
        classification=Classification(RecurrenceKind.POSITIVE_RECURRENT, model.drift, model.mu1),
        extras={"EN_sum": EN_sum},
    )
    logger.info("✅ Catastrophe equilibrium: pi0=%.12g EN=%.12g ELw=%.12g J=%d", pi0, EN, ELw, n)
    return report


def equilibrium_gf(model: QueueModel, s: float) -> float:
    """Pi(s) with U_beta(s) in the denominator; series fallback near u(beta)."""
    _require_equilibrium(model)
    if not 0 <= s < 1:
        raise GateError("bad_argument", f"s={s}")
    c, b0, beta = model.c, model.b0, model.beta
    u = root_u_lambda(model, beta).value
    if abs(s - u) < SERIES_WINDOW:
        report = equilibrium(model)
        return math.fsum(p * s**j for j, p in enumerate(report.pi))

    pi0 = limiting_p00(model)
    L = L_boundary(model, beta)
    U = eval_B(model, c, s).value - beta * s
    head = pi0 * (1 + s * (eval_H(model, u).value - eval_H(model, s).value) / U)
    boundary = math.fsum(
        pi0 * L[k] * (c - k) * b0 * (s**k * (1 - s) - s * u ** (k - 1) * (1 - u)) for k in range(1, c)
    )
    return head + boundary / U


# ---------------------------------------------------------------------- #
# Absorbed process and first effective catastrophe                        #
# ---------------------------------------------------------------------- #


def _eta_denominator(base: QueueModel, beta: float, mu: float) -> float:
    denominator = 1.0 - beta * tilde_r00(base, mu)
    if abs(denominator) < ETA_GUARD:
        raise NumericalError("eta_singular", f"lambda+beta={mu}")
    return denominator


def eta_resolvent(model: QueueModel, j: int, lam: float, J: Optional[int] = None) -> EtaRow:
    """eta_{j,-1}(lam) and eta_{j0..jJ}(lam) of the absorbed process M_t."""
    _require_catastrophes(model)
    _require_h(model)
    _check_state(j)
    _check_lambda(lam)
    beta = model.beta
    mu = lam + beta
    base = model.without_catastrophes()
    denominator = _eta_denominator(base, beta, mu)

    row_j = tilde_row(base, j, mu, J)
    row_0 = tilde_row(base, 0, mu, J)
    if row_0.truncation != row_j.truncation:
        n = max(row_0.truncation, row_j.truncation)
        row_j = tilde_row(base, j, mu, n)
        row_0 = tilde_row(base, 0, mu, n)
    rj0 = row_j[0]
    scale = beta * rj0 / denominator

    eta_minus1 = beta / mu * (1.0 / lam - rj0 / denominator)
    values = tuple(row_j[m] + scale * row_0[m] for m in range(row_j.truncation + 1))
    return EtaRow(lam=lam, source=j, eta_minus1=eta_minus1, values=values)


def catastrophe_time_transform(model: QueueModel, j: int, lam: float) -> float:
    """Delta_{j0}(lam), the Laplace transform of the density of C_{j0}; 0 when h = 0 and j = 0."""
    _require_catastrophes(model)
    _check_state(j)
    _check_lambda(lam)
    beta = model.beta
    mu = lam + beta
    base = model.without_catastrophes()
    denominator = _eta_denominator(base, beta, mu)
    rj0 = tilde_value(base, j, 0, mu)
    return beta / mu - lam / mu * beta * rj0 / denominator


def _richardson(f, x: float, step: float) -> float:
    def central(hh):
        return (f(x + hh) - f(x - hh)) / (2 * hh)

    return (4 * central(step / 2) - central(step)) / 3


def transform_moments(model: QueueModel, j: int, scale: float) -> Tuple[float, float]:
    """
    (-Delta'(0+), Delta''(0+)) from one-sided differences with Delta(0) = 1,
    each Richardson-extrapolated over steps h and h/2. ``scale`` is a rough
    mean of C_{j0} and sets the step sizes.
    """
    delta = lambda lam: catastrophe_time_transform(model, j, lam)  # noqa: E731

    def slope(hh):
        return (delta(hh) - 1.0) / hh

    def curvature(hh):
        return (delta(2 * hh) - 2 * delta(hh) + 1.0) / hh**2

    h1 = max(SLOPE_STEP / scale, MIN_TRANSFORM_STEP)
    h2 = max(CURVATURE_STEP / scale, MIN_TRANSFORM_STEP)
    first = 2 * slope(h1 / 2) - slope(h1)
    second = 2 * curvature(h2 / 2) - curvature(h2)
    return -first, second


def catastrophe_time_moments(
    model: QueueModel,
    j: int,
    lambdas: Iterable[float] = (),
    check: bool = True,
) -> CatastropheTimeStats:
    """E(C_{j0}) and Var(C_{j0}); d/dbeta of r~ is analytic, checked by Richardson differences."""
    _require_catastrophes(model)
    _require_h(model)
    _check_state(j)
    beta = model.beta
    base = model.without_catastrophes()

    r00 = tilde_r00(base, beta)
    rj0 = tilde_value(base, j, 0, beta)
    gap = 1.0 - beta * r00
    if abs(gap) < ETA_GUARD:
        raise NumericalError("eta_singular", f"beta={beta}")
    d_r00 = tilde_r00_derivative(base, beta)
    d_rj0 = tilde_rj0_derivative(base, j, beta)

    derivative_gap = 0.0
    if check:
        step = DERIVATIVE_STEP * beta
        fd_r00 = _richardson(lambda x: tilde_r00(base, x), beta, step)
        fd_rj0 = _richardson(lambda x: tilde_value(base, j, 0, x), beta, step)
        derivative_gap = max(
            abs(fd_r00 - d_r00) / max(abs(d_r00), 1e-300),
            abs(fd_rj0 - d_rj0) / max(abs(d_rj0), 1e-300) if d_rj0 else abs(fd_rj0),
        )
        if derivative_gap > DERIVATIVE_RTOL:
            logger.warning("⚠️ Analytic and difference derivatives differ by %.3g (j=%d)", derivative_gap, j)

    mean = 1.0 / beta + rj0 / gap
    variance = (
        1.0
        - beta**2 * rj0**2 / gap**2
        - 2 * beta**2 / gap * d_rj0
        - 2 * beta**3 * rj0 / gap**2 * d_r00
    ) / beta**2

    transform_mean = transform_second = None
    if check:
        transform_mean, transform_second = transform_moments(model, j, mean)
        second = variance + mean**2
        if abs(transform_mean - mean) > MEAN_RTOL * abs(mean):
            raise NumericalError("moment_mismatch", f"mean {mean:.12g} vs -Delta'(0+) {transform_mean:.12g}")
        if abs(transform_second - second) > SECOND_MOMENT_RTOL * abs(second):
            raise NumericalError(
                "moment_mismatch", f"second moment {second:.12g} vs Delta''(0+) {transform_second:.12g}"
            )

    delta_at = {float(lam): catastrophe_time_transform(model, j, lam) for lam in lambdas}
    logger.info("✅ C_%d0: mean=%.12g var=%.12g (beta=%.6g)", j, mean, variance, beta)
    return CatastropheTimeStats(
        j=j,
        mean=mean,
        variance=variance,
        delta_at=delta_at,
        derivative_gap=derivative_gap,
        transform_mean=transform_mean,
        transform_second_moment=transform_second,
    )


def catastrophe_time_mean_boundary(model: QueueModel, j: int) -> float:
    """E(C_{j0}) rewritten through (beta + h) r~_{j0} = delta_{j0} + b0 r~_{j1}."""
    _require_catastrophes(model)
    _require_h(model)
    _check_state(j)
    beta, h, b0 = model.beta, model.h_total, model.b0
    base = model.without_catastrophes()
    bottom = h * tilde_value(base, 0, 0, beta) - b0 * tilde_value(base, 0, 1, beta)
    if j == 0:
        return 1.0 / beta + tilde_value(base, 0, 0, beta) / bottom
    top = h * tilde_value(base, j, 0, beta) - b0 * tilde_value(base, j, 1, beta)
    return (1.0 - top / bottom) / beta


# ---------------------------------------------------------------------- #
# Asymptotes                                                              #
# ---------------------------------------------------------------------- #


def small_beta_asymptote(model: QueueModel, j: int) -> float:
    """
    beta -> 0 limit of the mean first catastrophe time.

    B_c'(1) < 0: lim beta E(C_{j0}), the same for every j.
    B_c'(1) > 0: lim E(C_{j0}) - 1/beta.
    """
    _require_h(model)
    _check_state(j)
    base = model.without_catastrophes()
    c, b0 = base.c, base.b0
    regime = classify_regime(base)
    if regime is Regime.CRITICAL:
        raise GateError("limit_not_covered")

    r = r_coefficients(base, max(c - 1, 1))
    if regime is Regime.SUBCRITICAL:
        boundary = math.fsum(r[k - 1] * (c - k) * b0 for k in range(1, c))
        return (-base.drift + base.mu1 + boundary) / (base.mu1 + boundary)

    u = root_u(base).value
    weights = _anchor_weights(base, u)
    bottom = math.fsum(
        [base.h_total, -eval_H(base, u).value] + [w * r[k - 1] for k, w in enumerate(weights, start=1)]
    )
    if j == 0:
        return 1.0 / bottom
    return b0 * occupation_times(base, j, 1)[0] / bottom


def large_beta_asymptote(model: QueueModel, j: int) -> float:
    """beta -> inf: E(C_00) -> 1/h; beta E(C_10) -> 1 + b0/h; beta E(C_{j0}) -> 1 for j >= 2."""
    _require_h(model)
    _check_state(j)
    if j == 0:
        return 1.0 / model.h_total
    if j == 1:
        return 1.0 + model.b0 / model.h_total
    return 1.0


# ---------------------------------------------------------------------- #
# Report                                                                  #
# ---------------------------------------------------------------------- #


def catastrophe_report(model: QueueModel, j: int = 0) -> dict:
    """Equilibrium, C_{j0} moments and asymptotes as plain data."""
    report = equilibrium(model)
    stats = catastrophe_time_moments(model, j)
    asymptotes: Dict[str, object] = {"large_beta": large_beta_asymptote(model, j)}
    try:
        asymptotes["small_beta"] = small_beta_asymptote(model, j)
        regime = classify_regime(model.without_catastrophes())
        asymptotes["small_beta_quantity"] = (
            "beta*E(C)" if regime is Regime.SUBCRITICAL else "E(C)-1/beta"
        )
    except GateError as exc:
        asymptotes["small_beta"] = str(exc)
    return {
        "pi": list(report.pi),
        "tail_mass": report.tail_mass,
        "EN": report.EN,
        "ELw": report.ELw,
        "catastrophe_time": {
            "j": j,
            "mean": stats.mean,
            "var": stats.variance,
            "mean_boundary": catastrophe_time_mean_boundary(model, j),
            "transform_mean": stats.transform_mean,
            "transform_second_moment": stats.transform_second_moment,
        },
        "asymptotes": asymptotes,
    }
