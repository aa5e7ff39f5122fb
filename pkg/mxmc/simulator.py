"""
Discrete-event simulation of the stopped, resurrection, catastrophe and
absorbed (M_t) processes as continuous-time jump chains.

Each replication r draws from its own counter-based stream
Philox(SeedSequence(seed, spawn_key=(r,))), so estimates do not depend on
how replications are split across workers. Per-replication samples are
folded into mergeable moment accumulators.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from config import settings
from mxmc.errors import SimulationError
from mxmc.model import VARIANTS, QueueModel

logger = logging.getLogger(__name__)

BURN_IN_FRACTION = 0.01
BATCHES = 100

STATISTICS = (
    "stationary",
    "mean_busy_period",
    "extinction_prob",
    "mean_extinction_time",
    "mean_catastrophe_time",
    "var_catastrophe_time",
    "p_ij",
)

COMPATIBLE = {
    "stationary": ("resurrect", "catastrophe"),
    "mean_busy_period": ("resurrect",),
    "extinction_prob": ("stopped",),
    "mean_extinction_time": ("stopped",),
    "mean_catastrophe_time": ("catastrophe", "absorbed_M"),
    "var_catastrophe_time": ("catastrophe", "absorbed_M"),
    "p_ij": VARIANTS,
}


class Jump(NamedTuple):
    target: int
    probability: float
    channel: str


@dataclass(frozen=True)
class SimConfig:
    variant: str
    x0: int
    horizon: float = 1_000.0
    replications: int = 10_000
    seed: int = 42
    workers: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise SimulationError("bad_statistic", f"variant={self.variant}")
        if self.replications < 1 or not self.horizon > 0:
            raise SimulationError("bad_config", f"replications={self.replications}, horizon={self.horizon}")

    @classmethod
    def from_settings(cls, variant: str, x0: int, **overrides) -> "SimConfig":
        values = {
            "horizon": settings.SIM_HORIZON,
            "replications": settings.SIM_REPLICATIONS,
            "seed": settings.SIM_SEED,
            "workers": settings.SIM_WORKERS,
        }
        values.update(overrides)
        return cls(variant=variant, x0=x0, **values)


@dataclass(frozen=True)
class SimEstimate:
    point: float
    std_error: float
    n: int
    seed: int
    censored: int = 0


@dataclass(frozen=True)
class OccupancyEstimate:
    probabilities: np.ndarray
    std_errors: np.ndarray
    batches: int


@dataclass(frozen=True)
class SamplePath:
    times: np.ndarray
    states: np.ndarray
    channels: Tuple[str, ...]


# ---------------------------------------------------------------------- #
# Moment accumulator                                                      #
# ---------------------------------------------------------------------- #


@dataclass
class Moments:
    """Running count, mean and central sums M2..M4; ``merge`` is associative."""

    n: int = 0
    mean: float = 0.0
    M2: float = 0.0
    M3: float = 0.0
    M4: float = 0.0
    censored: int = 0

    def add(self, x: float) -> None:
        self.merge(Moments(1, float(x)))

    def merge(self, other: "Moments") -> "Moments":
        na, nb = self.n, other.n
        self.censored += other.censored
        if nb == 0:
            return self
        if na == 0:
            self.n, self.mean, self.M2, self.M3, self.M4 = other.n, other.mean, other.M2, other.M3, other.M4
            return self
        n = na + nb
        d = other.mean - self.mean
        d2, d3, d4 = d * d, d**3, d**4
        M2 = self.M2 + other.M2 + d2 * na * nb / n
        M3 = (
            self.M3 + other.M3
            + d3 * na * nb * (na - nb) / n**2
            + 3 * d * (na * other.M2 - nb * self.M2) / n
        )
        M4 = (
            self.M4 + other.M4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / n**3
            + 6 * d2 * (na * na * other.M2 + nb * nb * self.M2) / n**2
            + 4 * d * (na * other.M3 - nb * self.M3) / n
        )
        self.n, self.mean, self.M2, self.M3, self.M4 = n, self.mean + d * nb / n, M2, M3, M4
        return self

    @property
    def variance(self) -> float:
        return self.M2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def mean_std_error(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n > 1 else 0.0

    @property
    def variance_std_error(self) -> float:
        if self.n < 4:
            return 0.0
        n = self.n
        s2 = self.variance
        m4 = self.M4 / n
        return math.sqrt(max(m4 - (n - 3) / (n - 1) * s2 * s2, 0.0) / n)


# ---------------------------------------------------------------------- #
# Jump kernel                                                             #
# ---------------------------------------------------------------------- #


def _stream(seed: int, replication: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(replication,))))


def step_distribution(model: QueueModel, variant: str, state: int) -> Tuple[float, List[Jump]]:
    """Total leaving rate of ``state`` and the jump law, channels kept apart."""
    if variant not in VARIANTS:
        raise SimulationError("bad_statistic", f"variant={variant}")
    lowest = -1 if variant == "absorbed_M" else 0
    if state < lowest:
        raise SimulationError("invalid_state", f"state={state}")
    if state == -1:
        return 0.0, []

    rates: List[Tuple[int, float, str]] = []
    if state == 0:
        if variant != "stopped":
            rates = [(j, rate, "resurrection") for j, rate in enumerate(model.h) if j >= 1 and rate > 0]
    else:
        rates.append((state - 1, min(state, model.c) * model.b0, "service"))
        rates += [(state + j - 1, model.b[j], "arrival") for j in range(2, len(model.b)) if model.b[j] > 0]
        if model.beta > 0 and variant in ("catastrophe", "absorbed_M"):
            rates.append((-1 if variant == "absorbed_M" else 0, model.beta, "catastrophe"))

    total = math.fsum(rate for _, rate, _ in rates)
    if total == 0:
        return 0.0, []
    return total, [Jump(target, rate / total, channel) for target, rate, channel in rates]


class _Kernel:
    """Cached jump laws; busy states share a law up to the shift by the state."""

    def __init__(self, model: QueueModel, variant: str):
        self.model = model
        self.variant = variant
        self._laws: Dict[int, Tuple[float, np.ndarray, np.ndarray, Tuple[str, ...], np.ndarray]] = {}

    def _law(self, state: int):
        key = min(state, self.model.c) if state >= 1 else state
        law = self._laws.get(key)
        if law is None:
            total, jumps = step_distribution(self.model, self.variant, key)
            cumulative = np.cumsum([j.probability for j in jumps]) if jumps else np.zeros(0)
            relative = np.array(
                [j.channel in ("service", "arrival") for j in jumps], dtype=bool
            )
            offsets = np.array([j.target - key for j in jumps], dtype=np.int64)
            targets = np.array([j.target for j in jumps], dtype=np.int64)
            law = (total, cumulative, np.where(relative, offsets, targets), tuple(j.channel for j in jumps), relative)
            self._laws[key] = law
        return law

    def step(self, state: int, rng: np.random.Generator) -> Optional[Tuple[float, int, str]]:
        total, cumulative, moves, channels, relative = self._law(state)
        if total == 0:
            return None
        dt = rng.exponential(1.0 / total)
        k = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
        k = min(k, len(channels) - 1)
        target = state + int(moves[k]) if relative[k] else int(moves[k])
        return dt, target, channels[k]


def simulate_path(
    model: QueueModel,
    variant: str,
    x0: int,
    horizon: float,
    rng: np.random.Generator,
    max_events: int = 1_000_000,
) -> SamplePath:
    """One trajectory up to ``horizon`` (or absorption)."""
    kernel = _Kernel(model, variant)
    step_distribution(model, variant, x0)
    t, state = 0.0, x0
    times, states, channels = [0.0], [x0], ["start"]
    for _ in range(max_events):
        move = kernel.step(state, rng)
        if move is None or t + move[0] > horizon:
            break
        t += move[0]
        state = move[1]
        times.append(t)
        states.append(state)
        channels.append(move[2])
    return SamplePath(np.array(times), np.array(states, dtype=np.int64), tuple(channels))


# ---------------------------------------------------------------------- #
# Per-replication samples                                                 #
# ---------------------------------------------------------------------- #


def _time_to(kernel: _Kernel, state: int, rng, horizon: float, stop) -> Optional[float]:
    """Elapsed time until ``stop(target, channel)`` holds; None when censored."""
    t = 0.0
    while True:
        move = kernel.step(state, rng)
        if move is None:
            return None
        t += move[0]
        if t > horizon:
            return None
        state = move[1]
        if stop(state, move[2]):
            return t


def _state_at(kernel: _Kernel, state: int, rng, t_end: float) -> int:
    t = 0.0
    while True:
        move = kernel.step(state, rng)
        if move is None or t + move[0] > t_end:
            return state
        t += move[0]
        state = move[1]


def _sample(model: QueueModel, config: SimConfig, statistic: str, params: dict, rng, kernel: _Kernel):
    x0 = config.x0
    if statistic == "mean_busy_period":
        first = kernel.step(0, rng)
        if first is None:
            raise SimulationError("bad_statistic", "no resurrection from the empty state")
        return _time_to(kernel, first[1], rng, config.horizon, lambda s, ch: s == 0)
    if statistic == "mean_extinction_time":
        return _time_to(kernel, x0, rng, config.horizon, lambda s, ch: s == 0)
    if statistic == "extinction_prob":
        T = params.get("T", config.horizon)
        return 0.0 if _time_to(kernel, x0, rng, T, lambda s, ch: s == 0) is None else 1.0
    if statistic in ("mean_catastrophe_time", "var_catastrophe_time"):
        return _time_to(kernel, x0, rng, config.horizon, lambda s, ch: ch == "catastrophe")
    if statistic == "p_ij":
        return 1.0 if _state_at(kernel, x0, rng, params["t"]) == params["j"] else 0.0
    raise SimulationError("bad_statistic", statistic)


def _run_chunk(model: QueueModel, config: SimConfig, statistic: str, params: dict, start: int, stop: int) -> Moments:
    kernel = _Kernel(model, config.variant)
    acc = Moments()
    for r in range(start, stop):
        value = _sample(model, config, statistic, params, _stream(config.seed, r), kernel)
        if value is None:
            acc.censored += 1
        else:
            acc.add(value)
    return acc


def _check_compatible(model: QueueModel, config: SimConfig, statistic: str) -> None:
    if statistic not in STATISTICS:
        raise SimulationError("bad_statistic", statistic)
    if config.variant not in COMPATIBLE[statistic]:
        raise SimulationError("bad_statistic", f"{statistic} with variant {config.variant}")
    if statistic in ("mean_catastrophe_time", "var_catastrophe_time") and not model.beta > 0:
        raise SimulationError("bad_statistic", "catastrophe statistics need beta > 0")
    if statistic == "mean_busy_period" and not model.h_total > 0:
        raise SimulationError("bad_statistic", "busy periods need h > 0")
    step_distribution(model, config.variant, config.x0)


def _chunks(n: int, workers: int) -> List[Tuple[int, int]]:
    size = math.ceil(n / workers)
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def _replicate(model: QueueModel, config: SimConfig, statistic: str, params: dict) -> Moments:
    if config.workers <= 1:
        return _run_chunk(model, config, statistic, params, 0, config.replications)
    acc = Moments()
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        futures = [
            pool.submit(_run_chunk, model, config, statistic, params, start, stop)
            for start, stop in _chunks(config.replications, config.workers)
        ]
        for future in futures:
            acc.merge(future.result())
    return acc


def estimate(model: QueueModel, config: SimConfig, statistic: str, **params) -> SimEstimate:
    """
    Monte-Carlo estimate of ``statistic`` with its standard error.

    ``stationary`` takes ``target`` (a probability vector) and returns the
    total-variation distance of the time-average occupancy to it; ``p_ij``
    takes ``j`` and ``t``; ``extinction_prob`` takes an optional ``T``.
    """
    _check_compatible(model, config, statistic)
    if statistic == "stationary":
        occ = occupancy(model, config)
        target = np.asarray(params["target"], dtype=float)
        size = max(len(target), len(occ.probabilities))
        a = np.pad(occ.probabilities, (0, size - len(occ.probabilities)))
        b = np.pad(target, (0, size - len(target)))
        tv = 0.5 * float(np.abs(a - b).sum())
        se = 0.5 * float(np.sqrt(np.sum(occ.std_errors**2)))
        return SimEstimate(point=tv, std_error=se, n=occ.batches, seed=config.seed)

    acc = _replicate(model, config, statistic, params)
    if acc.n == 0:
        raise SimulationError("horizon_exhausted", f"{statistic}: all {acc.censored} replications censored")
    if acc.censored:
        logger.warning("⚠️ %d of %d replications censored at the horizon", acc.censored, config.replications)

    if statistic == "var_catastrophe_time":
        point, se = acc.variance, acc.variance_std_error
    else:
        point, se = acc.mean, acc.mean_std_error
    logger.info("✅ %s: %.10g ± %.3g (n=%d, seed=%d)", statistic, point, se, acc.n, config.seed)
    return SimEstimate(point=point, std_error=se, n=acc.n, seed=config.seed, censored=acc.censored)


# ---------------------------------------------------------------------- #
# Time averages and self-tests                                            #
# ---------------------------------------------------------------------- #


def occupancy(model: QueueModel, config: SimConfig) -> OccupancyEstimate:
    """Time-average occupancy after a 1% burn-in, standard errors from 100 batch means."""
    if config.variant == "absorbed_M":
        raise SimulationError("bad_statistic", "occupancy of the absorbed process")
    kernel = _Kernel(model, config.variant)
    horizon = config.horizon
    burn = BURN_IN_FRACTION * horizon
    width = (horizon - burn) / BATCHES
    batches: List[np.ndarray] = []

    for r in range(config.replications):
        rng = _stream(config.seed, r)
        totals = [np.zeros(8) for _ in range(BATCHES)]
        t, state = 0.0, config.x0
        while t < horizon:
            move = kernel.step(state, rng)
            t_next = horizon if move is None else min(t + move[0], horizon)
            lo, hi = max(t, burn), t_next
            b = min(int((lo - burn) / width), BATCHES - 1) if lo < hi else BATCHES
            while lo < hi and b < BATCHES:
                edge = hi if b == BATCHES - 1 else min(hi, burn + (b + 1) * width)
                if state >= len(totals[b]):
                    totals[b] = np.pad(totals[b], (0, 2 * state + 1 - len(totals[b])))
                totals[b][state] += edge - lo
                lo = edge
                b += 1
            if move is None:
                break
            t, state = t_next, move[1]
        batches += [row / width for row in totals]

    size = max(len(row) for row in batches)
    matrix = np.vstack([np.pad(row, (0, size - len(row))) for row in batches])
    probabilities = matrix.mean(axis=0)
    std_errors = matrix.std(axis=0, ddof=1) / math.sqrt(len(batches))
    return OccupancyEstimate(probabilities=probabilities, std_errors=std_errors, batches=len(batches))


def holding_time_check(model: QueueModel, variant: str, state: int, n: int = 10_000, seed: int = 0) -> float:
    """z-score of the mean holding time in ``state`` against 1 / total rate."""
    total, _ = step_distribution(model, variant, state)
    if total == 0:
        raise SimulationError("invalid_state", f"state {state} is absorbing")
    kernel = _Kernel(model, variant)
    rng = _stream(seed, 0)
    acc = Moments()
    for _ in range(n):
        acc.add(kernel.step(state, rng)[0])
    expected = 1.0 / total
    z = (acc.mean - expected) / (expected / math.sqrt(n))
    logger.debug("Holding time in %d: mean=%.6g expected=%.6g z=%.3f", state, acc.mean, expected, z)
    return z


def absorption_times(model: QueueModel, config: SimConfig) -> np.ndarray:
    """Raw absorption (first catastrophe) times of M_t, one per replication."""
    if config.variant != "absorbed_M":
        raise SimulationError("bad_statistic", "absorption times need the absorbed_M variant")
    kernel = _Kernel(model, config.variant)
    out = np.full(config.replications, np.inf)
    for r in range(config.replications):
        value = _time_to(kernel, config.x0, _stream(config.seed, r), config.horizon, lambda s, ch: s == -1)
        if value is not None:
            out[r] = value
    return out
