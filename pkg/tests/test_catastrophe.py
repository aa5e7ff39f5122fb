import math

import pytest

from mxmc.catastrophe import (
    L_coefficients,
    catastrophe_report,
    catastrophe_time_mean_boundary,
    catastrophe_time_moments,
    catastrophe_time_transform,
    equilibrium,
    equilibrium_gf,
    eta_resolvent,
    hitting_probability_h0,
    hitting_time_h0,
    large_beta_asymptote,
    limiting_p00,
    resolvent,
    resolvent_catastrophe_row,
    small_beta_asymptote,
)
from mxmc import catastrophe as catastrophe_module
from mxmc.errors import GateError, NumericalError
from mxmc.model import validate
from mxmc.resurrect import tilde_value
from tests.oracles import (
    absorption_moments,
    absorption_transform,
    dense_resolvent_row,
    dense_stationary,
    hitting_mean,
)

SQRT2 = math.sqrt(2.0)


@pytest.fixture
def model_batch_d(model_batch):
    return model_batch.with_beta(0.7)


# ---------------------------------------------------------------------- #
# Resolvent                                                               #
# ---------------------------------------------------------------------- #


@pytest.mark.parametrize("fixture", ["model_d", "model_batch_d"])
@pytest.mark.parametrize("i, lam", [(0, 0.5), (1, 1.0), (3, 0.2)])
def test_row_matches_dense_solve(request, fixture, i, lam):
    model = request.getfixturevalue(fixture)
    row = resolvent_catastrophe_row(model, i, lam)
    dense = dense_resolvent_row(model, "catastrophe", i, lam)
    for j in range(20):
        assert row[j] == pytest.approx(dense[j], abs=1e-9)
    assert lam * math.fsum(row.values) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("j, n", [(0, 0), (0, 2), (1, 0), (2, 3), (4, 1)])
@pytest.mark.parametrize("lam", [0.1, 1.0, 7.5])
def test_catastrophe_link(model_batch_d, j, n, lam):
    beta = model_batch_d.beta
    base = model_batch_d.without_catastrophes()
    expected = tilde_value(base, j, n, lam + beta) + beta / lam * tilde_value(base, 0, n, lam + beta)
    assert resolvent(model_batch_d, j, n, lam) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_gates(model_a, model_d):
    with pytest.raises(GateError) as exc:
        resolvent(model_a, 0, 0, 1.0)
    assert exc.value.key == "use_resurrect_module"
    with pytest.raises(GateError) as exc:
        hitting_time_h0(model_d, 1, 1.0)
    assert exc.value.key == "use_catastrophe_time_ops"
    no_h = validate(1, {0: 2.0, 2: 1.0}, beta=1.0)
    with pytest.raises(GateError) as exc:
        equilibrium(no_h)
    assert exc.value.key == "equilibrium_degenerate"


# ---------------------------------------------------------------------- #
# h = 0                                                                   #
# ---------------------------------------------------------------------- #


def test_hitting_time_without_resurrection():
    model = validate(2, {0: 1.0, 2: 1.5, 3: 0.5}, beta=0.4)
    dense = hitting_mean(model)
    for k in (1, 2, 5):
        _, mean = hitting_time_h0(model, k, 1.0)
        assert mean == pytest.approx(dense[k - 1], rel=1e-8)
        assert hitting_probability_h0(model, k) == 1.0


def test_hitting_transform_is_p_k0():
    model = validate(1, {0: 1.0, 2: 2.0}, beta=0.5)
    lam = 0.8
    transform, _ = hitting_time_h0(model, 2, lam)
    dense = dense_resolvent_row(model, "catastrophe", 2, lam)
    assert transform == pytest.approx(dense[0], rel=1e-9)


# ---------------------------------------------------------------------- #
# Equilibrium                                                             #
# ---------------------------------------------------------------------- #


def test_model_d_equilibrium(model_d):
    report = equilibrium(model_d)
    assert report.pi[0] == pytest.approx(1 / SQRT2, abs=1e-10)
    assert limiting_p00(model_d) == pytest.approx(1 / SQRT2, abs=1e-10)
    dense = dense_stationary(model_d, "catastrophe")
    for k in range(25):
        assert report.pi[k] == pytest.approx(dense[k], abs=1e-6)


def test_single_server_closed_form(model_d):
    # c = 1: above state 1 the law is geometric with ratio u(beta) / 2 = 1 - 1/sqrt(2)
    report = equilibrium(model_d)
    ratio = 1 - 1 / SQRT2
    for k in range(1, 20):
        assert report.pi[k + 1] / report.pi[k] == pytest.approx(ratio, rel=1e-9)


def test_supercritical_equilibrium_exists(model_b_resurrected):
    model = model_b_resurrected.with_beta(1.0)
    report = equilibrium(model)
    assert math.fsum(report.pi) == pytest.approx(1.0, abs=1e-8)
    dense = dense_stationary(model, "catastrophe")
    for k in range(15):
        assert report.pi[k] == pytest.approx(dense[k], abs=1e-6)


def test_batch_equilibrium_moments(model_batch_d):
    report = equilibrium(model_batch_d)
    assert math.fsum(report.pi) == pytest.approx(1.0, abs=1e-10)
    assert report.EN == pytest.approx(report.extras["EN_sum"], rel=1e-8)
    ELw_sum = math.fsum(max(k - model_batch_d.c, 0) * p for k, p in enumerate(report.pi))
    assert report.ELw == pytest.approx(ELw_sum, rel=1e-8)
    dense = dense_stationary(model_batch_d, "catastrophe")
    for k in range(20):
        assert report.pi[k] == pytest.approx(dense[k], abs=1e-6)


def test_equilibrium_gf(model_batch_d, model_d):
    for model in (model_batch_d, model_d):
        report = equilibrium(model)
        for s in (0.0, 0.3, 0.8):
            series = math.fsum(p * s**k for k, p in enumerate(report.pi))
            assert equilibrium_gf(model, s) == pytest.approx(series, rel=1e-9)


def test_L_coefficients(model_d):
    L = L_coefficients(model_d, 1.0, J=5)
    report = equilibrium(model_d)
    for k in range(1, 6):
        assert report.pi[k] == pytest.approx(report.pi[0] * L[k], rel=1e-10)


# ---------------------------------------------------------------------- #
# First effective catastrophe                                             #
# ---------------------------------------------------------------------- #


def test_model_d_mean_catastrophe_time(model_d):
    stats = catastrophe_time_moments(model_d, 0)
    assert stats.mean == pytest.approx(2 + SQRT2, abs=1e-10)
    assert catastrophe_time_mean_boundary(model_d, 0) == pytest.approx(2 + SQRT2, abs=1e-10)
    assert stats.derivative_gap < 1e-6


@pytest.mark.parametrize("fixture", ["model_d", "model_batch_d"])
def test_catastrophe_time_moments_against_dense(request, fixture):
    model = request.getfixturevalue(fixture)
    m1, m2 = absorption_moments(model)
    for j in (0, 1, 3):
        stats = catastrophe_time_moments(model, j)
        assert stats.mean == pytest.approx(m1[j], rel=1e-8)
        assert stats.variance == pytest.approx(m2[j] - m1[j] ** 2, rel=1e-6)
        assert catastrophe_time_mean_boundary(model, j) == pytest.approx(m1[j], rel=1e-8)


def test_catastrophe_time_transform(model_batch_d):
    for lam in (0.2, 1.0, 4.0):
        dense = absorption_transform(model_batch_d, lam)
        for j in (0, 2):
            assert catastrophe_time_transform(model_batch_d, j, lam) == pytest.approx(dense[j], rel=1e-9)


def test_moments_match_transform_derivatives(model_d):
    stats = catastrophe_time_moments(model_d, 0)
    assert stats.transform_mean == pytest.approx(2 + SQRT2, rel=1e-6)
    assert stats.transform_second_moment == pytest.approx(stats.variance + stats.mean**2, rel=1e-4)


def test_moment_mismatch_is_raised(model_d, monkeypatch):
    monkeypatch.setattr(catastrophe_module, "catastrophe_time_transform", lambda model, j, lam: 1.0 / (1.0 + lam))
    with pytest.raises(NumericalError) as exc:
        catastrophe_time_moments(model_d, 0)
    assert exc.value.key == "moment_mismatch"
    assert catastrophe_time_moments(model_d, 0, check=False).transform_mean is None


def test_transform_samples_in_stats(model_d):
    stats = catastrophe_time_moments(model_d, 1, lambdas=(0.5, 2.0))
    assert set(stats.delta_at) == {0.5, 2.0}
    assert stats.delta_at[0.5] == pytest.approx(catastrophe_time_transform(model_d, 1, 0.5))


def test_eta_row_is_honest(model_batch_d):
    row = eta_resolvent(model_batch_d, 1, 0.6)
    assert 0.6 * row.total == pytest.approx(1.0, abs=1e-9)
    dense = dense_resolvent_row(model_batch_d, "absorbed_M", 1, 0.6)
    assert row.eta_minus1 == pytest.approx(dense[0], rel=1e-9)
    for m in range(10):
        assert row.values[m] == pytest.approx(dense[m + 1], abs=1e-9)


# ---------------------------------------------------------------------- #
# Asymptotes                                                              #
# ---------------------------------------------------------------------- #


@pytest.mark.parametrize("j", [0, 1, 2])
def test_small_beta_subcritical(model_a, j):
    assert small_beta_asymptote(model_a, j) == pytest.approx(2.0, rel=1e-12)
    beta = 1e-4
    stats = catastrophe_time_moments(model_a.with_beta(beta), j, check=False)
    assert beta * stats.mean == pytest.approx(2.0, rel=1e-2)


def test_small_beta_supercritical(model_b_resurrected):
    assert small_beta_asymptote(model_b_resurrected, 0) == pytest.approx(2.0, rel=1e-10)
    beta = 1e-4
    stats = catastrophe_time_moments(model_b_resurrected.with_beta(beta), 0, check=False)
    assert stats.mean - 1 / beta == pytest.approx(2.0, rel=1e-2)


def test_small_beta_critical_not_covered():
    critical = validate(1, {0: 1.0, 2: 1.0}, {1: 1.0})
    with pytest.raises(GateError) as exc:
        small_beta_asymptote(critical, 0)
    assert exc.value.key == "limit_not_covered"


def test_large_beta(model_a):
    assert large_beta_asymptote(model_a, 0) == 1.0
    assert large_beta_asymptote(model_a, 1) == 3.0
    assert large_beta_asymptote(model_a, 4) == 1.0

    beta = 1e6
    model = model_a.with_beta(beta)
    assert catastrophe_time_moments(model, 0, check=False).mean == pytest.approx(1.0, rel=1e-3)
    assert beta * catastrophe_time_moments(model, 1, check=False).mean == pytest.approx(3.0, rel=5e-3)


def test_report(model_d):
    report = catastrophe_report(model_d, 0)
    assert report["pi"][0] == pytest.approx(1 / SQRT2)
    assert report["catastrophe_time"]["mean"] == pytest.approx(2 + SQRT2)
    assert report["asymptotes"]["small_beta"] == pytest.approx(2.0)
    assert report["asymptotes"]["small_beta_quantity"] == "beta*E(C)"


# ---------------------------------------------------------------------- #
# Shape of the catastrophe-time transform                                 #
# ---------------------------------------------------------------------- #


@pytest.mark.parametrize("j", [0, 2])
def test_transform_is_decreasing_and_convex(model_batch_d, j):
    grid = [0.05 * n for n in range(1, 61)]
    values = [catastrophe_time_transform(model_batch_d, j, lam) for lam in grid]
    first = [b - a for a, b in zip(values, values[1:])]
    assert all(d < 0 for d in first)
    assert all(b - a >= -1e-12 for a, b in zip(first, first[1:]))


def test_transform_tends_to_one(model_d):
    assert catastrophe_time_transform(model_d, 1, 1e-8) == pytest.approx(1.0, abs=1e-4)


def test_transform_vanishes_without_resurrection():
    model = validate(1, {0: 2.0, 2: 1.0}, beta=1.0)
    for lam in (0.1, 1.0, 5.0):
        assert catastrophe_time_transform(model, 0, lam) == pytest.approx(0.0, abs=1e-12)


def test_large_beta_from_two(model_a):
    assert large_beta_asymptote(model_a, 2) == 1.0
    beta = 1e6
    mean = catastrophe_time_moments(model_a.with_beta(beta), 2, check=False).mean
    assert beta * mean == pytest.approx(1.0, rel=1e-3)


def test_fixed_truncation_is_kept(model_d):
    full = equilibrium(model_d)
    report = equilibrium(model_d, J=10)
    assert len(report.pi) == 11
    assert report.pi[0] == pytest.approx(1 / SQRT2, abs=1e-12)
    assert report.tail_mass == pytest.approx(1.0 - math.fsum(report.pi), abs=1e-15)
    assert report.EN == pytest.approx(full.EN, rel=1e-12)
