import math
from dataclasses import replace
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbcirl import tinynn
from bbcirl.errors import ConfigError, UsageError
from bbcirl.theory import (SWEEP_COLUMNS, BoundInputs, averaged_drift_bound, bound_sweep, bundle_bound,
                          consecutive_tv, estimate_epsilon, within_bundle_bounds, optimal_bundle_size,
                          standard_bound, sweep_rows, tv_distance)
from bbcirl.tinynn import NetSpec

BASE = BoundInputs(B=15, T=15, epsilon=1e-5, gamma=0.999, delta=0.05, policy_class_size=1e8)


def sup_over_events(p, q):
    """TV as the largest probability gap over every subset of outcomes."""
    idx = range(len(p))
    return max(abs(sum(p[i] - q[i] for i in sub)) for r in range(len(p) + 1) for sub in combinations(idx, r))


def tabular_net(table):
    """Single-layer policy whose logits are log probabilities, so it reproduces ``table``."""
    net = tinynn.zeros_like_spec(NetSpec((49, 3)))
    W, _ = net.layers()[0]
    W[:] = np.log(table).T
    return net


def bound_by_hand(B, T, eps, g, d, n):
    return 4 * g * (B - 1) * eps / (1 - g) + 4 * math.log(n / d) / (B * T) + 2 * eps ** 2 * (B - 1) ** 2


@pytest.mark.parametrize("p,q,expect", [([1, 0, 0], [0, 1, 0], 1.0), ([0.5, 0.5, 0], [0.5, 0.5, 0], 0.0),
                                        ([0.5, 0.3, 0.2], [0.2, 0.3, 0.5], 0.3),
                                        ([0.25, 0.25, 0.25, 0.25], [0.7, 0.1, 0.1, 0.1], 0.45)])
def test_tv_examples(p, q, expect):
    assert tv_distance(p, q) == pytest.approx(expect, abs=1e-12)
    assert sup_over_events(p, q) == pytest.approx(expect, abs=1e-12)


dists = st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4).map(lambda v: np.array(v) / sum(v))


@settings(max_examples=60, deadline=None)
@given(dists, dists, dists)
def test_tv_is_a_bounded_metric(p, q, r):
    pq = tv_distance(p, q)
    assert 0 <= pq <= 1
    assert pq == pytest.approx(tv_distance(q, p), abs=1e-15)
    assert tv_distance(p, p) == 0
    assert pq <= tv_distance(p, r) + tv_distance(r, q) + 1e-12
    assert pq == pytest.approx(sup_over_events(p, q), abs=1e-12)


def test_tv_errors():
    with pytest.raises(UsageError):
        tv_distance([0.5, 0.5], [1.0, 0.0, 0.0])
    with pytest.raises(UsageError):
        tv_distance([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(UsageError):
        tv_distance([1.5, -0.5], [0.5, 0.5])


def test_epsilon_of_identical_policies_is_zero():
    net = tinynn.mlp_new(NetSpec((49, 16, 3), init_seed=2))
    assert estimate_epsilon([net, net, net]) == 0.0


def test_epsilon_picks_the_worst_state_and_pair():
    base = np.full((49, 3), 1 / 3)
    moved = base.copy()
    moved[10] = [1 / 3 + 0.3, 1 / 3 - 0.2, 1 / 3 - 0.1]
    small = base.copy()
    small[20] = [1 / 3 + 0.1, 1 / 3 - 0.1, 1 / 3]
    nets = [tabular_net(t) for t in (base, moved, moved, small)]
    assert estimate_epsilon(nets[:2]) == pytest.approx(0.3, abs=1e-12)
    assert estimate_epsilon(nets[2:]) == pytest.approx(0.3, abs=1e-12)  # moved -> small differs at 10 and 20
    assert estimate_epsilon(nets, states=[20]) == pytest.approx(0.1, abs=1e-12)
    values = [estimate_epsilon(nets[:k]) for k in range(2, 5)]
    assert values == sorted(values)
    with pytest.raises(UsageError):
        estimate_epsilon(nets[:1])


def test_mean_drift_never_exceeds_epsilon(default_run):
    _, seq = default_run
    head = seq.prefix(60)
    assert np.all(consecutive_tv(head) <= estimate_epsilon(head) + 1e-15)


@pytest.mark.parametrize("B,eps", [(1, 0.0), (1, 0.2), (15, 1e-5), (50, 1e-3), (7, 0.01)])
def test_bound_matches_formula(B, eps):
    inputs = replace(BASE, B=B, epsilon=eps)
    rep = bundle_bound(inputs)
    assert rep.bundle_bound == pytest.approx(bound_by_hand(B, 15, eps, 0.999, 0.05, 1e8), rel=1e-12)
    assert sum(rep.terms) == pytest.approx(rep.bundle_bound, rel=1e-15)
    assert rep.probability == pytest.approx(0.95 ** 2)
    assert rep.standard_bound == pytest.approx(2 * math.log(1e8 / (0.1 - 0.0025)) / 15, rel=1e-12)


def test_second_parameter_set():
    rep = bundle_bound(BoundInputs(15, 15, 0.01, 0.9, 0.05, 1e6))
    assert abs(rep.bundle_bound - bound_by_hand(15, 15, 0.01, 0.9, 0.05, 1e6)) <= 1e-12


def test_b1_has_no_drift_terms():
    rep = bundle_bound(replace(BASE, B=1, epsilon=0.5))
    assert rep.drift_term == 0 and rep.quadratic_term == 0
    assert rep.sample_term == pytest.approx(4 * math.log(1e8 / 0.05) / 15)


def test_bound_input_errors():
    with pytest.raises(ConfigError, match="gamma = 1"):
        bundle_bound(replace(BASE, gamma=1.0))
    for bad in (dict(B=0), dict(T=0), dict(epsilon=-1.0), dict(delta=0.0), dict(delta=1.0),
                dict(policy_class_size=1.0), dict(gamma=0.0)):
        with pytest.raises(ConfigError):
            bundle_bound(replace(BASE, **bad))


def test_within_bundle_examples():
    assert within_bundle_bounds(1, 0.3, 0.9) == (0.0, 0.0)
    tv, l1 = within_bundle_bounds(5, 0.01, 0.9)
    assert tv == pytest.approx(0.04) and l1 == pytest.approx(2 * 0.9 * 0.04 / 0.1)
    with pytest.raises(ConfigError):
        within_bundle_bounds(5, 0.01, 1.0)
    with pytest.raises(ConfigError):
        within_bundle_bounds(0, 0.01, 0.5)


def test_averaged_drift_is_sharper():
    for B in range(1, 101):
        assert averaged_drift_bound(B, 0.01) == pytest.approx((B - 1) ** 2 / B * 0.01)
        assert averaged_drift_bound(B, 0.01) <= within_bundle_bounds(B, 0.01, 0.5)[0] + 1e-15


def test_zero_drift_sweep_is_decreasing_and_picks_bmax():
    sweep = bound_sweep(replace(BASE, epsilon=0.0), 100)
    totals = [r.bundle_bound for r in sweep]
    assert all(a > b for a, b in zip(totals, totals[1:]))
    best = optimal_bundle_size(replace(BASE, epsilon=0.0), 100)
    assert best.B == 100 and best.advantage


def test_large_drift_picks_one():
    best = optimal_bundle_size(replace(BASE, epsilon=1.0), 100)
    assert best.B == 1 and not best.advantage


def test_regression_case_matches_brute_force():
    best = optimal_bundle_size(BASE, 400)
    totals = [bound_by_hand(B, 15, 1e-5, 0.999, 0.05, 1e8) for B in range(1, 401)]
    assert best.B == int(np.argmin(totals)) + 1
    assert best.bound == pytest.approx(min(totals), rel=1e-12)
    assert 1 < best.B < 400
    assert best.advantage == (min(totals) < standard_bound(15, 0.05, 1e8))


def test_sweep_rows():
    rows = sweep_rows(bound_sweep(BASE, 3))
    assert [r[0] for r in rows] == [1, 2, 3] and len(rows[0]) == len(SWEEP_COLUMNS)
    assert all(r[4] == pytest.approx(r[1] + r[2] + r[3]) for r in rows)
    with pytest.raises(ConfigError):
        bound_sweep(BASE, 0)
