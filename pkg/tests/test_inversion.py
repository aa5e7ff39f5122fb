import math

import pytest

from mxmc.errors import GateError
from mxmc.inversion import (
    InversionKind,
    InversionRequest,
    catastrophe_time_density,
    catastrophe_time_distribution,
    extinction_distribution,
    invert,
    invert_grid,
    catastrophe_link_time_domain,
    stehfest_weights,
    transition_probability,
)
from tests.oracles import absorption_moments, transient_row, uniformization


def test_weights_order_8():
    expected = [-1 / 3, 145 / 3, -906, 16394 / 3, -43130 / 3, 18730, -35840 / 3, 8960 / 3]
    assert stehfest_weights(8) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("order", [8, 10, 12, 14, 16])
def test_weights_sum_to_zero(order):
    weights = stehfest_weights(order)
    assert len(weights) == order
    assert math.fsum(weights) == pytest.approx(0.0, abs=1e-4)


def test_bad_order_and_time():
    with pytest.raises(GateError) as exc:
        stehfest_weights(11)
    assert exc.value.key == "bad_order"
    with pytest.raises(GateError) as exc:
        InversionRequest(lambda lam: 1 / lam, 0.0)
    assert exc.value.key == "time_not_positive"
    with pytest.raises(GateError):
        InversionRequest(lambda lam: 1 / lam, 1.0, order=9)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_exponential_pair(t):
    result = invert(InversionRequest(lambda lam: 1.0 / (lam + 1.0), t, order=16))
    assert result.value == pytest.approx(math.exp(-t), abs=1e-5)
    assert result.error_estimate >= 0


def test_exponential_pair_extended_precision():
    result = invert(InversionRequest(lambda lam: 1.0 / (lam + 2.0), 1.0, precision=30))
    assert result.value == pytest.approx(math.exp(-2.0), abs=1e-6)
    assert result.error_estimate < 1e-6


def test_exponential_pair_double_precision_ceiling():
    result = invert(InversionRequest(lambda lam: 1.0 / (lam + 2.0), 1.0, order=16))
    assert result.value == pytest.approx(math.exp(-2.0), abs=2e-6)


def test_extended_precision_gates():
    with pytest.raises(GateError) as exc:
        InversionRequest(lambda lam: 1.0 / (lam + 2.0), 1.0, precision=0)
    assert exc.value.key == "bad_precision"
    with pytest.raises(GateError) as exc:
        invert(InversionRequest(lambda lam: 1.0 / (float(lam) + 2.0), 1.0, precision=30))
    assert exc.value.key == "transform_not_extended"


def test_probability_clipping():
    result = invert(InversionRequest(lambda lam: 1.0 / lam, 1.0, probability=True))
    assert 0.0 <= result.value <= 1.0
    assert result.value == pytest.approx(1.0, abs=1e-9)


def test_grid_frame():
    times = [0.25, 0.5, 1.0]
    frame = invert_grid(lambda lam: 1.0 / (lam + 2.0), times)
    assert list(frame.columns) == ["t", "value", "error_estimate"]
    assert frame["t"].tolist() == times
    for t, value, estimate in frame.itertuples(index=False):
        assert value == pytest.approx(math.exp(-2.0 * t), abs=1e-4)
        assert 0 <= estimate < 1e-3


def test_long_run_resurrect(model_a):
    assert transition_probability(model_a, "resurrect", 0, 0, 50.0) == pytest.approx(0.5, abs=1e-3)


@pytest.mark.parametrize(
    "fixture, variant, i, j, t",
    [
        ("model_a", "stopped", 2, 0, 1.5),
        ("model_c", "resurrect", 1, 2, 1.0),
        ("model_d", "catastrophe", 2, 0, 0.7),
        ("model_d", "catastrophe", 1, 1, 2.0),
    ],
)
def test_against_uniformization(request, fixture, variant, i, j, t):
    model = request.getfixturevalue(fixture)
    expected = uniformization(model, variant, i, t)[j]
    assert transition_probability(model, variant, i, j, t, verify=False) == pytest.approx(expected, abs=1e-3)


def test_uniformization_matches_expm(model_d):
    a = uniformization(model_d, "catastrophe", 1, 0.8)
    b = transient_row(model_d, "catastrophe", 1, 0.8)
    assert max(abs(x - y) for x, y in zip(a, b)) < 1e-10


def test_absorbed_process(model_d):
    expected = uniformization(model_d, "absorbed_M", 0, 1.0)
    assert transition_probability(model_d, "absorbed_M", 0, -1, 1.0) == pytest.approx(expected[0], abs=1e-3)
    assert transition_probability(model_d, "absorbed_M", -1, -1, 1.0) == 1.0
    assert transition_probability(model_d, "absorbed_M", -1, 2, 1.0) == 0.0


def test_trivial_stopped_rows(model_a):
    assert transition_probability(model_a, "stopped", 0, 0, 3.0) == 1.0
    assert transition_probability(model_a, "stopped", 0, 4, 3.0) == 0.0


def test_variant_gates(model_a, model_d):
    with pytest.raises(GateError) as exc:
        transition_probability(model_d, "resurrect", 0, 0, 1.0)
    assert exc.value.key == "variant_mismatch"
    with pytest.raises(GateError) as exc:
        transition_probability(model_a, "catastrophe", 0, 0, 1.0)
    assert exc.value.key == "variant_mismatch"
    with pytest.raises(GateError) as exc:
        transition_probability(model_a, "bogus", 0, 0, 1.0)
    assert exc.value.key == "bad_variant"
    with pytest.raises(GateError):
        transition_probability(model_a, "stopped", -1, 0, 1.0)


def test_time_domain_catastrophe_link(model_d):
    lhs, rhs = catastrophe_link_time_domain(model_d, 1, 0, 1.0)
    assert lhs == pytest.approx(rhs, abs=1e-3)


def test_extinction_distribution(model_a):
    expected = uniformization(model_a, "stopped", 1, 2.0)[0]
    result = extinction_distribution(model_a, 1, 2.0)
    assert result.value == pytest.approx(expected, abs=1e-3)


def test_catastrophe_time_laws(model_d):
    # the distribution integrates the density; both against the absorbed chain
    expected = uniformization(model_d, "absorbed_M", 0, 3.0)[0]
    distribution = catastrophe_time_distribution(model_d, 0, 3.0)
    assert distribution.value == pytest.approx(expected, abs=1e-3)
    density = catastrophe_time_density(model_d, 0, 3.0)
    assert density.value > 0
    m1, _ = absorption_moments(model_d)
    assert m1[0] == pytest.approx(2 + math.sqrt(2), rel=1e-8)


def test_kinds_are_strings():
    assert InversionKind("density") is InversionKind.DENSITY


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_row_sums_to_one(model_d, t):
    row = [transition_probability(model_d, "catastrophe", 1, j, t, order=16, verify=False) for j in range(21)]
    assert math.fsum(row) == pytest.approx(1.0, abs=1e-3)


def test_chapman_kolmogorov(model_d):
    s, t, n = 0.5, 0.7, 0
    head = [transition_probability(model_d, "catastrophe", 1, j, s, order=16, verify=False) for j in range(13)]
    tail = [uniformization(model_d, "catastrophe", j, t)[n] for j in range(13)]
    composed = math.fsum(p * q for p, q in zip(head, tail))
    direct = transition_probability(model_d, "catastrophe", 1, n, s + t, order=16, verify=False)
    assert direct == pytest.approx(composed, abs=2e-3)


def test_return_probability_decreases_to_equilibrium(model_a):
    # birth-death chain: p00 decays monotonically to pi_0 = 1/2
    times = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0]
    values = [transition_probability(model_a, "resurrect", 0, 0, t) for t in times]
    for earlier, later in zip(values, values[1:]):
        assert later <= earlier + 1e-4
    assert all(v >= 0.5 - 1e-4 for v in values)
    assert values[-1] == pytest.approx(0.5, abs=1e-3)
