"""
Queue parameterisation for the M^X/M/c queue with resurrection and catastrophes.

Holds the validated rates (c, b_j, h_j, beta), evaluates the generating
functions B(s), B_i(s), H(s) with their first two derivatives, loads model
files and builds dense truncated generators for the test oracles.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Mapping, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ValidationError, field_validator

from config import settings
from mxmc.errors import GateError, ModelValidationError

logger = logging.getLogger(__name__)

RateInput = Union[Mapping[int, float], Sequence[float], None]

VARIANTS = ("stopped", "resurrect", "catastrophe", "absorbed_M")


@dataclass(frozen=True)
class GfValue:
    value: float
    first_derivative: float
    second_derivative: float


@dataclass(frozen=True)
class QueueModel:
    """
    Validated parameter set. Build it through :func:`validate`.

    ``b`` is indexed by batch index j = 0..J_b; ``b[1]`` holds the derived
    diagonal rate b_1 = -sum_{j != 1} b_j. ``h`` is indexed j = 0..J_h with
    ``h[0] == 0``.
    """

    c: int
    b: tuple
    h: tuple
    beta: float = 0.0

    # ------------------------------------------------------------------ #
    # Derived quantities                                                 #
    # ------------------------------------------------------------------ #

    @property
    def b0(self) -> float:
        return self.b[0]

    @property
    def b1(self) -> float:
        return self.b[1]

    @property
    def max_batch(self) -> int:
        """Largest j with b_j > 0 (j >= 2)."""
        return len(self.b) - 1

    @property
    def h_total(self) -> float:
        return math.fsum(self.h)

    @property
    def h_support(self) -> tuple:
        return tuple(j for j, rate in enumerate(self.h) if j >= 1 and rate > 0)

    @property
    def drift(self) -> float:
        """B_c'(1)."""
        return eval_B(self, self.c, 1.0).first_derivative

    @property
    def mu1(self) -> float:
        return eval_H(self, 1.0).first_derivative

    @property
    def criticality_threshold(self) -> float:
        return 1e-10 * (abs(self.b1) + self.c * self.b0)

    @property
    def is_mmc(self) -> bool:
        """Ordinary M/M/c: single arrivals, h_1 = b_2 and nothing else."""
        single_arrivals = self.max_batch == 2
        return (
            single_arrivals
            and len(self.h) == 2
            and self.h[1] == self.b[2]
            and self.beta == 0.0
        )

    def rate(self, j: int) -> float:
        return self.b[j] if 0 <= j < len(self.b) else 0.0

    def h_rate(self, j: int) -> float:
        return self.h[j] if 0 <= j < len(self.h) else 0.0

    def with_beta(self, beta: float) -> "QueueModel":
        if not (math.isfinite(beta) and beta >= 0):
            raise ModelValidationError("negative_rate", f"beta={beta}")
        return replace(self, beta=float(beta))

    def without_catastrophes(self) -> "QueueModel":
        return self.with_beta(0.0)

    def with_resurrection(self, h: RateInput) -> "QueueModel":
        return validate(self.c, self.b_input(), h, self.beta)

    def b_input(self) -> Dict[int, float]:
        return {j: rate for j, rate in enumerate(self.b) if j != 1}

    def to_dict(self) -> dict:
        """Model-file representation."""
        return {
            "c": self.c,
            "b": {str(j): rate for j, rate in self.b_input().items() if rate > 0},
            "h": {str(j): rate for j, rate in enumerate(self.h) if j >= 1 and rate > 0},
            "beta": self.beta,
        }

    # ------------------------------------------------------------------ #
    # Dense truncated generators (oracle support)                        #
    # ------------------------------------------------------------------ #

    def generator(self, n_states: int, variant: str = "catastrophe") -> np.ndarray:
        """
        Dense q-matrix on states 0..n_states-1, arrivals beyond the window
        lumped into the last state so rows stay conservative.

        For ``absorbed_M`` the matrix has n_states + 1 rows: index 0 is the
        absorbing state -1 and index n + 1 is state n.
        """
        if variant not in VARIANTS:
            raise GateError("bad_variant", variant)
        N = n_states
        offset = 1 if variant == "absorbed_M" else 0
        Q = np.zeros((N + offset, N + offset))
        last = N - 1

        for i in range(1, N):
            row = i + offset
            Q[row, i - 1 + offset] += min(i, self.c) * self.b0
            for j in range(2, len(self.b)):
                Q[row, min(i + j - 1, last) + offset] += self.b[j]
            if self.beta > 0 and variant in ("catastrophe", "absorbed_M"):
                Q[row, 0] += self.beta
        if variant != "stopped":
            for j in range(1, len(self.h)):
                Q[offset, min(j, last) + offset] += self.h[j]

        np.fill_diagonal(Q, 0.0)
        np.fill_diagonal(Q, -Q.sum(axis=1))
        return Q


# ---------------------------------------------------------------------- #
# Validation                                                              #
# ---------------------------------------------------------------------- #


def _as_indexed(raw: RateInput, first_index: int, name: str) -> Dict[int, float]:
    if raw is None:
        return {}
    if isinstance(raw, Mapping):
        items = {int(k): v for k, v in raw.items()}
    else:
        seq = list(raw)
        if first_index == 0:
            # (b0, b2, b3, ...): index 1 is never supplied
            items = {(0 if pos == 0 else pos + 1): v for pos, v in enumerate(seq)}
        else:
            items = {pos + first_index: v for pos, v in enumerate(seq)}
    out: Dict[int, float] = {}
    for idx, value in items.items():
        try:
            value = float(value)
        except (TypeError, ValueError) as exc:
            raise ModelValidationError("non_finite_rate", f"{name}[{idx}]={value!r}") from exc
        if not math.isfinite(value):
            raise ModelValidationError("non_finite_rate", f"{name}[{idx}]={value}")
        if value < 0:
            raise ModelValidationError("negative_rate", f"{name}[{idx}]={value}")
        if idx < 0:
            raise ModelValidationError("bad_index", f"{name}[{idx}]")
        out[idx] = value
    return out


def validate(c: int, b: RateInput, h: RateInput = None, beta: float = 0.0) -> QueueModel:
    """
    Check raw parameters and return an immutable :class:`QueueModel`.

    ``b`` is a mapping ``{j: b_j}`` (j = 0, 2, 3, ...) or a sequence
    ``(b0, b2, b3, ...)``; ``h`` is ``{j: h_j}`` (j >= 1) or ``(h1, h2, ...)``.
    """
    if isinstance(c, bool) or not isinstance(c, (int, np.integer)) or c < 1:
        raise ModelValidationError("bad_server_count", f"c={c!r}")

    rates = _as_indexed(b, 0, "b")
    if 1 in rates:
        raise ModelValidationError("bad_index", "b1 is derived and cannot be supplied")
    resurrection = _as_indexed(h, 1, "h")
    if 0 in resurrection:
        raise ModelValidationError("bad_index", "h starts at index 1")

    try:
        beta = float(beta)
    except (TypeError, ValueError) as exc:
        raise ModelValidationError("non_finite_rate", f"beta={beta!r}") from exc
    if not math.isfinite(beta):
        raise ModelValidationError("non_finite_rate", f"beta={beta}")
    if beta < 0:
        raise ModelValidationError("negative_rate", f"beta={beta}")

    b0 = rates.get(0, 0.0)
    if b0 <= 0:
        raise ModelValidationError("no_service_capacity")
    batches = {j: v for j, v in rates.items() if j >= 2 and v > 0}
    if not batches:
        raise ModelValidationError("no_batch_arrivals")

    max_b = max(batches)
    b_vec = [0.0] * (max_b + 1)
    b_vec[0] = b0
    for j, v in batches.items():
        b_vec[j] = v
    b_vec[1] = -math.fsum(v for j, v in enumerate(b_vec) if j != 1)

    support = [j for j, v in resurrection.items() if v > 0]
    h_vec = [0.0] * ((max(support) if support else 0) + 1)
    for j in support:
        h_vec[j] = resurrection[j]

    model = QueueModel(c=int(c), b=tuple(b_vec), h=tuple(h_vec), beta=beta)
    logger.info(
        "✅ Model validated: c=%d b1=%.6g h=%.6g beta=%.6g drift=%.6g",
        model.c, model.b1, model.h_total, model.beta, model.drift,
    )
    return model


# ---------------------------------------------------------------------- #
# Generating functions                                                    #
# ---------------------------------------------------------------------- #


def _check_argument(s: float) -> None:
    if not (math.isfinite(s) and abs(s) <= 1.0):
        raise GateError("bad_argument", f"s={s}")


def _poly_value(coeffs: Sequence[float], s: float) -> GfValue:
    value = math.fsum(a * s**j for j, a in enumerate(coeffs) if a)
    first = math.fsum(j * a * s ** (j - 1) for j, a in enumerate(coeffs) if a and j >= 1)
    second = math.fsum(j * (j - 1) * a * s ** (j - 2) for j, a in enumerate(coeffs) if a and j >= 2)
    return GfValue(value, first, second)


def B_coefficients(model: QueueModel, i: int) -> list:
    """Coefficients of B_i(s) = B(s) + (i-1) b0 (1-s)."""
    coeffs = list(model.b)
    coeffs[0] = math.fsum([coeffs[0], (i - 1) * model.b0])
    coeffs[1] = math.fsum([coeffs[1], -(i - 1) * model.b0])
    return coeffs


def eval_B(model: QueueModel, i: int, s: float) -> GfValue:
    """B_i(s) and its first two derivatives; B_1 is B itself."""
    if not 1 <= i <= model.c:
        raise GateError("bad_index", f"i={i}, c={model.c}")
    _check_argument(s)
    return _poly_value(B_coefficients(model, i), s)


def eval_H(model: QueueModel, s: float) -> GfValue:
    """H(s) = sum_j h_j s^j and its first two derivatives."""
    _check_argument(s)
    return _poly_value(model.h, s)


# ---------------------------------------------------------------------- #
# Loading                                                                 #
# ---------------------------------------------------------------------- #


class ModelFile(BaseModel):
    """JSON schema of a model file; string keys are batch indices."""

    c: int
    b: Dict[str, float]
    h: Dict[str, float] = {}
    beta: float = 0.0

    @field_validator("b", "h")
    @classmethod
    def validate_keys(cls, v):
        for key in v:
            if not key.lstrip("-").isdigit():
                raise ValueError(f"batch index {key!r} is not an integer")
        return v


def load_model(path: Union[str, Path]) -> QueueModel:
    """Parse a model JSON file and validate it."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelValidationError("unreadable_model", f"{p}: {exc}") from exc
    try:
        parsed = ModelFile.model_validate(raw)
    except ValidationError as exc:
        raise ModelValidationError("unreadable_model", str(exc)) from exc

    logger.info("📁 Loaded model file %s", p)
    return validate(
        parsed.c,
        {int(k): v for k, v in parsed.b.items()},
        {int(k): v for k, v in parsed.h.items()},
        parsed.beta,
    )


def geometric_pmf(p: float) -> Callable[[int], float]:
    """Geometric law on {1, 2, ...}: P(n) = p (1-p)^(n-1)."""
    if not 0 < p <= 1:
        raise ModelValidationError("bad_argument", f"p={p}")
    return lambda n: p * (1 - p) ** (n - 1) if n >= 1 else 0.0


def from_distributions(
    c: int,
    b0: float,
    arrival_rate: float,
    batch_pmf: Callable[[int], float],
    resurrection_rate: float = 0.0,
    resurrection_pmf: Optional[Callable[[int], float]] = None,
    beta: float = 0.0,
    tail_epsilon: Optional[float] = None,
    max_support: int = 100_000,
) -> QueueModel:
    """
    Build a model from batch-size laws with possibly infinite support.

    b_j = arrival_rate * P(batch = j-1) for j >= 2 and
    h_j = resurrection_rate * P(size = j). Each law is cut where the
    rate-weighted remaining tail mass falls to ``tail_epsilon``; rates are
    absolute, so nothing is renormalised.
    """
    eps = settings.LOADER_TAIL_EPSILON if tail_epsilon is None else tail_epsilon

    def _truncate(rate: float, pmf: Callable[[int], float]) -> Dict[int, float]:
        out: Dict[int, float] = {}
        mass = 0.0
        for n in range(1, max_support + 1):
            p = pmf(n)
            mass += p
            if p > 0:
                out[n] = rate * p
            if rate * (1.0 - mass) <= eps:
                break
        else:
            logger.warning("⚠️ Tail above %.1e after %d terms", eps, max_support)
        return out

    batches = _truncate(arrival_rate, batch_pmf) if arrival_rate > 0 else {}
    b = {0: b0, **{n + 1: v for n, v in batches.items()}}
    h: Dict[int, float] = {}
    if resurrection_rate > 0 and resurrection_pmf is not None:
        h = _truncate(resurrection_rate, resurrection_pmf)
    logger.debug("Loader truncated batches at %d, resurrection at %d", max(b), max(h, default=0))
    return validate(c, b, h, beta)
