import math

import numpy as np
import pytest

from mxmc.catastrophe import catastrophe_time_moments
from mxmc.errors import SimulationError
from mxmc.inversion import catastrophe_time_distribution, transition_probability
from mxmc.simulator import (
    Moments,
    SimConfig,
    absorption_times,
    estimate,
    holding_time_check,
    occupancy,
    simulate_path,
    step_distribution,
)

Z = 4.0


def within(est, expected):
    return abs(est.point - expected) <= Z * est.std_error + 1e-12


# ---------------------------------------------------------------------- #
# Jump laws                                                               #
# ---------------------------------------------------------------------- #


def test_step_distribution_multi_server(model_c):
    total, jumps = step_distribution(model_c, "resurrect", 3)
    assert total == 3.0
    assert {j.target: j.probability for j in jumps} == pytest.approx({2: 2 / 3, 4: 1 / 3})


def test_step_distribution_keeps_channels_apart(model_d):
    total, jumps = step_distribution(model_d, "catastrophe", 1)
    assert total == 4.0
    assert [(j.target, j.probability, j.channel) for j in jumps] == [
        (0, 0.5, "service"),
        (2, 0.25, "arrival"),
        (0, 0.25, "catastrophe"),
    ]


def test_absorbing_states(model_d):
    assert step_distribution(model_d, "stopped", 0) == (0.0, [])
    assert step_distribution(model_d, "absorbed_M", -1) == (0.0, [])
    _, jumps = step_distribution(model_d, "absorbed_M", 3)
    assert jumps[-1].target == -1
    total, jumps = step_distribution(model_d, "resurrect", 0)
    assert total == 1.0 and jumps[0].channel == "resurrection"
    # beta is ignored outside the catastrophe variants
    total, _ = step_distribution(model_d, "resurrect", 1)
    assert total == 3.0


def test_invalid_states(model_d):
    with pytest.raises(SimulationError) as exc:
        step_distribution(model_d, "catastrophe", -1)
    assert exc.value.key == "invalid_state"
    with pytest.raises(SimulationError):
        step_distribution(model_d, "absorbed_M", -2)


# ---------------------------------------------------------------------- #
# Accumulator                                                             #
# ---------------------------------------------------------------------- #


def test_moments_merge_matches_numpy():
    rng = np.random.default_rng(7)
    data = rng.exponential(2.0, size=1000)
    parts = [Moments(), Moments(), Moments()]
    for k, x in enumerate(data):
        parts[k % 3].add(x)
    merged = Moments().merge(parts[0]).merge(parts[1]).merge(parts[2])

    centred = data - data.mean()
    assert merged.n == 1000
    assert merged.mean == pytest.approx(data.mean(), rel=1e-12)
    assert merged.M2 == pytest.approx((centred**2).sum(), rel=1e-10)
    assert merged.M3 == pytest.approx((centred**3).sum(), rel=1e-9)
    assert merged.M4 == pytest.approx((centred**4).sum(), rel=1e-9)
    assert merged.variance == pytest.approx(data.var(ddof=1), rel=1e-10)


def test_empty_moments():
    acc = Moments()
    assert acc.variance == 0.0 and acc.mean_std_error == 0.0
    acc.merge(Moments(censored=2))
    assert acc.censored == 2 and acc.n == 0


# ---------------------------------------------------------------------- #
# Configuration and gates                                                 #
# ---------------------------------------------------------------------- #


def test_bad_config():
    with pytest.raises(SimulationError) as exc:
        SimConfig("stopped", 1, horizon=0.0)
    assert exc.value.key == "bad_config"
    with pytest.raises(SimulationError):
        SimConfig("stopped", 1, replications=0)


def test_incompatible_statistics(model_a, model_d):
    with pytest.raises(SimulationError) as exc:
        estimate(model_a, SimConfig("catastrophe", 0, replications=10), "mean_catastrophe_time")
    assert exc.value.key == "bad_statistic"
    with pytest.raises(SimulationError):
        estimate(model_d, SimConfig("stopped", 1, replications=10), "mean_busy_period")
    with pytest.raises(SimulationError):
        estimate(model_d, SimConfig("catastrophe", 0, replications=10), "no_such_statistic")


def test_horizon_exhausted(model_d):
    config = SimConfig("catastrophe", 0, horizon=1e-9, replications=20)
    with pytest.raises(SimulationError) as exc:
        estimate(model_d, config, "mean_catastrophe_time")
    assert exc.value.key == "horizon_exhausted"


def test_censoring_is_counted(model_d):
    config = SimConfig("catastrophe", 0, horizon=1.0, replications=400, seed=3)
    est = estimate(model_d, config, "mean_catastrophe_time")
    assert est.censored > 0
    assert est.n + est.censored == 400


# ---------------------------------------------------------------------- #
# Reproducibility                                                         #
# ---------------------------------------------------------------------- #


def test_same_seed_same_estimate(model_d):
    config = SimConfig("catastrophe", 1, replications=200, seed=11)
    a = estimate(model_d, config, "mean_catastrophe_time")
    b = estimate(model_d, config, "mean_catastrophe_time")
    assert a == b
    other = estimate(model_d, SimConfig("catastrophe", 1, replications=200, seed=12), "mean_catastrophe_time")
    assert other.point != a.point


def test_paths_are_reproducible(model_d):
    a = simulate_path(model_d, "catastrophe", 2, 5.0, np.random.default_rng(1))
    b = simulate_path(model_d, "catastrophe", 2, 5.0, np.random.default_rng(1))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.states, b.states)
    assert a.channels[0] == "start"
    assert (np.diff(a.times) > 0).all()
    assert a.times[-1] <= 5.0


def test_catastrophes_only_from_busy_states(model_d):
    path = simulate_path(model_d, "catastrophe", 0, 50.0, np.random.default_rng(5))
    for k, channel in enumerate(path.channels):
        if channel == "catastrophe":
            assert path.states[k - 1] >= 1 and path.states[k] == 0


def test_stopped_path_ends_in_zero(model_a):
    path = simulate_path(model_a, "stopped", 3, 1e6, np.random.default_rng(2))
    assert path.states[-1] == 0


@pytest.mark.parametrize("state", [0, 1, 2, 5])
def test_holding_times(model_d, state):
    assert abs(holding_time_check(model_d, "catastrophe", state, n=5000, seed=state)) <= Z


def test_holding_time_of_absorbing_state(model_a):
    with pytest.raises(SimulationError):
        holding_time_check(model_a, "stopped", 0)


@pytest.mark.slow
def test_workers_split_does_not_change_samples(model_d):
    one = estimate(model_d, SimConfig("catastrophe", 0, replications=400, seed=9), "mean_catastrophe_time")
    two = estimate(model_d, SimConfig("catastrophe", 0, replications=400, seed=9, workers=2), "mean_catastrophe_time")
    assert two.n == one.n
    assert two.point == pytest.approx(one.point, rel=1e-12)
    assert two.std_error == pytest.approx(one.std_error, rel=1e-9)


# ---------------------------------------------------------------------- #
# Against the analytic values                                             #
# ---------------------------------------------------------------------- #


@pytest.mark.slow
def test_busy_period(model_a):
    est = estimate(model_a, SimConfig("resurrect", 0, replications=20_000, seed=1), "mean_busy_period")
    assert within(est, 1.0)


@pytest.mark.slow
def test_extinction_probability(model_b):
    config = SimConfig("stopped", 1, replications=4_000, seed=2)
    est = estimate(model_b, config, "extinction_prob", T=50.0)
    assert within(est, 0.5)


@pytest.mark.slow
def test_mean_extinction_time(model_a):
    est = estimate(model_a, SimConfig("stopped", 2, replications=20_000, seed=3), "mean_extinction_time")
    assert within(est, 2.0)


@pytest.mark.slow
def test_mean_catastrophe_time(model_d):
    est = estimate(model_d, SimConfig("catastrophe", 0, replications=20_000, seed=42), "mean_catastrophe_time")
    assert within(est, 2 + math.sqrt(2))


@pytest.mark.slow
def test_catastrophe_time_variance(model_d):
    expected = catastrophe_time_moments(model_d, 0).variance
    est = estimate(model_d, SimConfig("absorbed_M", 0, replications=20_000, seed=4), "var_catastrophe_time")
    assert within(est, expected)


@pytest.mark.slow
def test_transition_probability(model_d):
    expected = transition_probability(model_d, "catastrophe", 5, 0, 0.5, verify=False)
    config = SimConfig("catastrophe", 5, replications=20_000, seed=5)
    est = estimate(model_d, config, "p_ij", j=0, t=0.5)
    assert within(est, expected)


@pytest.mark.slow
def test_occupancy(model_a):
    occ = occupancy(model_a, SimConfig("resurrect", 0, horizon=20_000.0, replications=1, seed=6))
    assert occ.batches == 100
    for k in range(4):
        assert abs(occ.probabilities[k] - 0.5 ** (k + 1)) <= Z * occ.std_errors[k]


@pytest.mark.slow
def test_stationary_distance(model_a):
    target = [0.5 ** (k + 1) for k in range(60)]
    est = estimate(model_a, SimConfig("resurrect", 0, horizon=20_000.0, replications=1, seed=8), "stationary", target=target)
    assert est.point < 0.05


@pytest.mark.slow
def test_absorption_time_quantiles(model_d):
    samples = absorption_times(model_d, SimConfig("absorbed_M", 0, horizon=1e4, replications=20_000, seed=10))
    n = len(samples)
    for t in (1.0, 3.0, 6.0):
        expected = catastrophe_time_distribution(model_d, 0, t).value
        empirical = float(np.mean(samples <= t))
        se = math.sqrt(expected * (1 - expected) / n)
        assert abs(empirical - expected) <= Z * se + 2e-3
