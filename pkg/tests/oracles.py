"""
Dense truncated-generator oracles used only by the tests.
"""

import math

import numpy as np
from scipy import linalg

N_STATES = 400


def _offset(variant):
    return 1 if variant == "absorbed_M" else 0


def dense_resolvent_row(model, variant, i, lam, n_states=N_STATES):
    """Row i of (lam I - Q_N)^{-1}; for absorbed_M index 0 is state -1."""
    Q = model.generator(n_states, variant)
    A = lam * np.eye(len(Q)) - Q
    e = np.zeros(len(Q))
    e[i + _offset(variant)] = 1.0
    return linalg.solve(A.T, e)


def dense_stationary(model, variant="resurrect", n_states=N_STATES):
    """pi Q_N = 0 with sum(pi) = 1."""
    Q = model.generator(n_states, variant)
    A = np.vstack([Q.T, np.ones(len(Q))])
    rhs = np.zeros(len(Q) + 1)
    rhs[-1] = 1.0
    pi, *_ = linalg.lstsq(A, rhs)
    return pi


def absorption_moments(model, n_states=300):
    """
    First two moments of the absorption time of M_t (first catastrophe)
    from every state 0..n_states-1.
    """
    Q = model.generator(n_states, "absorbed_M")
    T = Q[1:, 1:]
    ones = np.ones(len(T))
    m1 = linalg.solve(-T, ones)
    m2 = 2.0 * linalg.solve(-T, m1)
    return m1, m2


def absorption_transform(model, lam, n_states=300):
    """E exp(-lam C_{j0}) for every start j."""
    Q = model.generator(n_states, "absorbed_M")
    T = Q[1:, 1:]
    exit_rates = Q[1:, 0]
    return linalg.solve(lam * np.eye(len(T)) - T, exit_rates)


def hitting_mean(model, n_states=300):
    """Mean hitting time of 0 from 1..n_states-1 with state 0 made absorbing."""
    Q = model.generator(n_states, "catastrophe")
    T = Q[1:, 1:]
    return linalg.solve(-T, np.ones(len(T)))


def uniformization(model, variant, i, t, n_states=200, tol=1e-14):
    """Row i of exp(Q_N t) as a Poisson mixture of powers of I + Q_N / rate."""
    Q = model.generator(n_states, variant)
    rate = float(np.max(-np.diag(Q))) or 1.0
    P = np.eye(len(Q)) + Q / rate
    row = np.zeros(len(Q))
    row[i + _offset(variant)] = 1.0
    mean = rate * t
    weight = math.exp(-mean)
    total = weight * row
    mass = weight
    n = 0
    while 1.0 - mass > tol and n < 100_000:
        n += 1
        row = row @ P
        weight *= mean / n
        total += weight * row
        mass += weight
    return total


def transient_row(model, variant, i, t, n_states=200):
    Q = model.generator(n_states, variant)
    row = linalg.expm(Q * t)[i + _offset(variant)]
    return row
