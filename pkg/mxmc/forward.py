"""
Forward-equation engine for the stopped queue.

Every row-type quantity in the toolkit solves the same Kolmogorov forward
system of the stopped generator Q*, differing only in the source vector g:

    sum_{k>=1} x_k q*_{kj} - lam x_j = -g_j        (j >= 1)
    -z0 + b0 x_1 = -g_0                              (column 0, z0 = lam x_0)
    -z0 - sum_{k=1}^{c-1} w_k(u) x_k = -G(u)         (anchor, G(s) = sum g_i s^i)

with w_k(u) = u^(k-1) (c-k) b0 (1-u) and u = u(lam) (u = root of B_c when
lam = 0). Source e_i gives the resolvent row phi*_i, source h gives L_j, and
at lam = 0 the same sources give the occupation times m*(k) and r_k.

The c x c boundary block is solved by partial-pivot LU and the remaining
unknowns by the forward recursion, both in an mpmath context whose precision
is chosen from the recursion's growth and then verified against a run with
more digits.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from mxmc.errors import NumericalError
from mxmc.model import QueueModel
from mxmc.precision import MAX_DPS, digits_for_growth, make_context, polyval
from mxmc.roots import recursion_growth, refine, root_u, root_u_lambda, root_u_lambda_derivative

logger = logging.getLogger(__name__)

Source = Tuple[Tuple[int, float], ...]

AGREEMENT_RTOL = 1e-13
NEGATIVE_CLIP = -1e-9


@dataclass(frozen=True)
class ForwardSolution:
    """z0 = lam x_0 (or the absorption mass at lam = 0) and x_1..x_J as floats."""

    lam: float
    head: float
    values: Tuple[float, ...]
    dps: int


def unit_source(i: int) -> Source:
    return ((int(i), 1.0),)


def rate_source(weights: Sequence[float]) -> Source:
    return tuple((j, float(w)) for j, w in enumerate(weights) if w)


# ---------------------------------------------------------------------- #
# Boundary system                                                         #
# ---------------------------------------------------------------------- #


def _weights(ctx, model: QueueModel, u) -> List:
    """w_k(u) for k = 1..c-1."""
    c, b0 = model.c, ctx.mpf(model.b0)
    return [u ** (k - 1) * (c - k) * b0 * (1 - u) for k in range(1, c)]


def _weights_prime(ctx, model: QueueModel, u) -> List:
    c, b0 = model.c, ctx.mpf(model.b0)
    out = []
    for k in range(1, c):
        lead = (k - 1) * u ** (k - 2) if k >= 2 else ctx.mpf(0)
        out.append((c - k) * b0 * (lead - k * u ** (k - 1)))
    return out


def _diagonal(model: QueueModel, j: int) -> float:
    """q*_{jj} for j >= 1."""
    return model.b1 - (min(j, model.c) - 1) * model.b0


def _boundary_matrix(ctx, model: QueueModel, lam, u):
    """
    Rows: anchor, column-0 equation, column equations j = 1..c-2.
    Unknowns: (z0, x_1, ..., x_{c-1}).
    """
    c = model.c
    A = ctx.matrix(c, c)
    A[0, 0] = -1
    for k, w in enumerate(_weights(ctx, model, u), start=1):
        A[0, k] = -w
    if c >= 2:
        A[1, 0] = -1
        A[1, 1] = ctx.mpf(model.b0)
    for j in range(1, c - 1):
        row = j + 1
        for k in range(1, j):
            A[row, k] = ctx.mpf(model.rate(j - k + 1))
        A[row, j] = ctx.mpf(_diagonal(model, j)) - lam
        A[row, j + 1] = min(j + 1, c) * ctx.mpf(model.b0)
    return A


def _boundary_rhs(ctx, model: QueueModel, source: Source, u):
    c = model.c
    g = dict(source)
    rhs = ctx.matrix(c, 1)
    rhs[0] = -ctx.fsum(ctx.mpf(w) * u ** i for i, w in source)
    if c >= 2:
        rhs[1] = -ctx.mpf(g.get(0, 0.0))
    for j in range(1, c - 1):
        rhs[j + 1] = -ctx.mpf(g.get(j, 0.0))
    return rhs


def _lu_solve(ctx, A, rhs):
    try:
        return ctx.lu_solve(A, rhs)
    except ZeroDivisionError as exc:
        raise NumericalError("singular_system") from exc


def _root_mp(ctx, model: QueueModel, lam: float):
    return refine(model, lam, ctx)


# ---------------------------------------------------------------------- #
# Recursion                                                               #
# ---------------------------------------------------------------------- #


def _run(model: QueueModel, lam: float, source: Source, J: int, dps: int):
    ctx = make_context(dps)
    lam_mp = ctx.mpf(lam)
    u = _root_mp(ctx, model, lam)
    A = _boundary_matrix(ctx, model, lam_mp, u)
    y = _lu_solve(ctx, A, _boundary_rhs(ctx, model, source, u))

    g = dict(source)
    b0 = ctx.mpf(model.b0)
    z0 = y[0]
    xs = [None] + [y[k] for k in range(1, model.c)]  # x_0 slot unused

    if model.c == 1:
        xs.append((z0 - ctx.mpf(g.get(0, 0.0))) / b0)

    rates = [ctx.mpf(r) for r in model.b]
    max_batch = model.max_batch
    # column j gives x_{j+1}; columns 1..c-2 already sit in the boundary block
    for j in range(max(1, model.c - 1), J):
        acc = -ctx.mpf(g.get(j, 0.0))
        lo = max(1, j + 1 - max_batch)
        terms = [rates[j - k + 1] * xs[k] for k in range(lo, j)]
        terms.append((ctx.mpf(_diagonal(model, j)) - lam_mp) * xs[j])
        acc -= ctx.fsum(terms)
        xs.append(acc / (min(j + 1, model.c) * b0))
    return z0, xs[1 : J + 1]


def _agree(a: Sequence[float], b: Sequence[float]) -> bool:
    scale = max((abs(v) for v in b), default=0.0)
    floor = 1e-30 * scale
    return all(abs(x - y) <= AGREEMENT_RTOL * abs(y) + floor for x, y in zip(a, b))


@functools.lru_cache(maxsize=2048)
def solve_forward(model: QueueModel, lam: float, source: Source, J: int) -> ForwardSolution:
    """
    Solve the forward system for x_1..x_J with source ``source``.

    ``lam`` may be 0 (occupation-time systems). Precision starts from the
    per-step growth |s_2| / u(lam) of the parasitic solution relative to the
    wanted one and is doubled until two runs agree.
    """
    J = max(int(J), model.c)
    u = root_u(model).value if lam == 0 else root_u_lambda(model, lam).value
    growth = recursion_growth(model, lam, u) if u > 0 else math.inf
    dps = digits_for_growth(min(growth, 1e300), J) if math.isfinite(growth) else MAX_DPS

    while True:
        z_lo, x_lo = _run(model, lam, source, J, dps)
        extra = max(20, dps // 2)
        z_hi, x_hi = _run(model, lam, source, J, dps + extra)
        lo = [float(z_lo)] + [float(v) for v in x_lo]
        hi = [float(z_hi)] + [float(v) for v in x_hi]
        if _agree(lo, hi):
            break
        if dps >= MAX_DPS:
            raise NumericalError("recursion_unstable", f"lambda={lam}, J={J}")
        logger.warning("⚠️ Escalating precision from %d digits (lambda=%.6g, J=%d)", dps, lam, J)
        dps = min(2 * dps, MAX_DPS)

    values = _clip(hi[1:], lam, J)
    logger.debug("Forward solve lambda=%.6g J=%d dps=%d", lam, J, dps + extra)
    return ForwardSolution(lam=float(lam), head=hi[0], values=tuple(values), dps=dps + extra)


def _clip(values: List[float], lam: float, J: int) -> List[float]:
    out = []
    for j, v in enumerate(values, start=1):
        if v < NEGATIVE_CLIP:
            raise NumericalError("recursion_unstable", f"x[{j}]={v:.3g}, lambda={lam}, J={J}")
        out.append(v if v > 0 else 0.0)
    return out


# ---------------------------------------------------------------------- #
# Differentiated boundary system                                          #
# ---------------------------------------------------------------------- #


def boundary_derivative(model: QueueModel, lam: float, source: Source) -> Tuple[float, ...]:
    """
    d/dlam of (z0, x_1, ..., x_{max(c-1, 1)}) from A y' = b' - A' y.

    A depends on lam through u(lam) in the anchor row and through the -lam
    diagonal of the column rows; b depends on lam through G(u(lam)).
    """
    ctx = make_context(50)
    lam_mp = ctx.mpf(lam)
    u = _root_mp(ctx, model, lam)
    du = ctx.mpf(root_u_lambda_derivative(model, lam))
    c = model.c

    A = _boundary_matrix(ctx, model, lam_mp, u)
    y = _lu_solve(ctx, A, _boundary_rhs(ctx, model, source, u))

    dA = ctx.matrix(c, c)
    for k, wp in enumerate(_weights_prime(ctx, model, u), start=1):
        dA[0, k] = -wp * du
    for j in range(1, c - 1):
        dA[j + 1, j] = -1

    db = ctx.matrix(c, 1)
    db[0] = -ctx.fsum(ctx.mpf(w) * i * u ** (i - 1) for i, w in source if i >= 1) * du

    dy = _lu_solve(ctx, A, db - dA * y)
    out = [float(dy[k]) for k in range(c)]
    if c == 1:
        out.append(float(dy[0] / ctx.mpf(model.b0)))
    return tuple(out)


def source_gf(ctx, source: Source, s):
    """G(s) = sum g_i s^i in ``ctx``."""
    coeffs = [0.0] * (max((i for i, _ in source), default=0) + 1)
    for i, w in source:
        coeffs[i] = w
    return polyval(ctx, coeffs, s)
