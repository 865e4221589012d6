from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivregime import (
    ComplianceType,
    ObservationPath,
    PanelDataset,
    PropensityModel,
    enumerate_compliance_types,
    k_term,
    kappa_full,
    kappa_type,
)
from ivregime.weights import kappa_full_values, kappa_term_count, kappa_terms, kappa_type_values

from _util import random_panel


def history_model(horizon):
    """Instrument propensities that depend on covariates and the previous instrument."""
    def score(j):
        def f(d):
            s = 0.3 * d.x[j][:, 0] - 0.2 * d.x[0][:, 1]
            if j:
                s = s + 0.8 * d.z[:, j - 1] - 0.4
            return 1 / (1 + np.exp(-s))
        return f
    return PropensityModel.oracle([score(j) for j in range(horizon + 1)])


def two_period_kappa(path, p0, p1):
    """Nine-term expansion written out by hand; ``p0``/``p1`` give P(Z_t = 1)."""
    (w0, w1), (z0, z1) = path.w, path.z
    k00, k01 = w0 * (1 - z0), (1 - w0) * z0
    k10, k11 = w1 * (1 - z1), (1 - w1) * z1
    q0 = {0: 1 - p0, 1: p0}
    q1 = {0: 1 - p1, 1: p1}
    k0 = {0: k00, 1: k01}
    k1 = {0: k10, 1: k11}
    kappa = 1.0
    kappa -= k00 / q0[0] + k01 / q0[1]
    kappa -= k10 / q1[0] + k11 / q1[1]
    for a in (0, 1):
        for b in (0, 1):
            kappa += k0[a] * k1[b] / (q0[a] * q1[b])
    return kappa


def test_k_term_examples():
    def one(w, z):
        return ObservationPath(x=(np.zeros(1),), z=[z], w=[w], y=[0.0])
    assert k_term(one(1, 0), 0, 0) == 1
    assert k_term(one(0, 1), 0, 1) == 1
    for v in (0, 1):
        for i in (0, 1):
            assert k_term(one(v, v), 0, i) == 0


@pytest.mark.parametrize("horizon", [0, 1, 2, 3])
def test_term_count(horizon):
    expected = sum(2 ** t * comb(horizon + 1, t) for t in range(1, horizon + 2))
    assert kappa_term_count(horizon) == expected


def test_terms_signs_and_order():
    terms = list(kappa_terms([0, 1]))
    assert terms[:4] == [(-1, ((0, 0),)), (-1, ((0, 1),)), (-1, ((1, 0),)), (-1, ((1, 1),))]
    assert all(sign == 1 and len(a) == 2 for sign, a in terms[4:])


def test_general_kappa_matches_hand_expansion():
    rng = np.random.default_rng(42)
    data = random_panel(rng, 1000, 1, p_follow=0.3)
    model = history_model(1)
    general = kappa_full(data, model)
    p0, p1 = model.prob_one(data, 0), model.prob_one(data, 1)
    hand = np.array([two_period_kappa(data.path(i), p0[i], p1[i]) for i in range(data.n)])
    assert np.max(np.abs(general - hand)) <= 1e-12


@pytest.mark.parametrize("horizon", [0, 1, 2, 3])
def test_kappa_equals_product_of_period_factors(horizon):
    rng = np.random.default_rng(horizon)
    data = random_panel(rng, 400, horizon, p_follow=0.2)
    model = history_model(horizon)
    factors = np.ones(data.n)
    for t in range(horizon + 1):
        p1 = model.prob_one(data, t)
        w, z = data.w[:, t], data.z[:, t]
        factors *= 1 - w * (1 - z) / (1 - p1) - (1 - w) * z / p1
    np.testing.assert_allclose(kappa_full(data, model), factors, rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 3), st.lists(st.integers(0, 1), min_size=4, max_size=4),
       st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_kappa_is_one_on_compliant_paths(horizon, z, p, q):
    z = z[: horizon + 1]
    path = ObservationPath(x=tuple(np.zeros(1) for _ in range(horizon + 2)), z=z, w=z,
                           y=np.zeros(horizon + 1))
    model = PropensityModel.constant([p, q, p, q][: horizon + 1])
    assert kappa_full(path, model) == 1.0


def test_kappa_single_defier_period():
    path = ObservationPath(x=(np.zeros(1), np.zeros(1)), z=[0, 1], w=[1, 1], y=[0.0, 0.0])
    model = PropensityModel.constant([0.5, 0.5])
    assert kappa_full(path, model) == pytest.approx(-1.0, abs=1e-15)


def test_kappa_two_always_taker_periods():
    path = ObservationPath(x=(np.zeros(1), np.zeros(1)), z=[0, 0], w=[1, 1], y=[0.0, 0.0])
    model = PropensityModel.constant([0.5, 0.5])
    assert kappa_full(path, model) == pytest.approx(1.0, abs=1e-15)


# compliance-type weights ----------------------------------------------------


def test_full_type_reduces_to_full_kappa():
    rng = np.random.default_rng(9)
    data = random_panel(rng, 300, 2)
    model = history_model(2)
    np.testing.assert_array_equal(kappa_type(data, ComplianceType.full(2), model),
                                  kappa_full(data, model))


def test_never_taker_single_period():
    model = PropensityModel.constant([0.5])
    ctype = ComplianceType(tn0={0})
    untreated = ObservationPath(x=(np.zeros(1),), z=[1], w=[0], y=[0.0])
    treated = ObservationPath(x=(np.zeros(1),), z=[1], w=[1], y=[0.0])
    assert kappa_type(untreated, ctype, model) == 2.0
    assert kappa_type(treated, ctype, model) == 0.0


def test_always_taker_single_period():
    model = PropensityModel.constant([0.25])
    ctype = ComplianceType(tn1={0})
    path = ObservationPath(x=(np.zeros(1),), z=[0], w=[1], y=[0.0])
    assert kappa_type(path, ctype, model) == pytest.approx(1 / 0.75)


@pytest.mark.parametrize("horizon", [0, 1, 2])
def test_type_weights_sum_to_one(horizon):
    rng = np.random.default_rng(100 + horizon)
    data = random_panel(rng, 500, horizon, p_follow=0.4)
    model = history_model(horizon)
    total = sum(kappa_type(data, t, model) for t in enumerate_compliance_types(horizon))
    np.testing.assert_allclose(total, 1.0, rtol=0, atol=1e-10)


def test_type_kappa_factorizes_per_period():
    rng = np.random.default_rng(8)
    data = random_panel(rng, 500, 2, p_follow=0.3)
    model = history_model(2)
    ctype = ComplianceType.from_label("acn")
    p = [model.prob_one(data, t) for t in range(3)]
    w, z = data.w, data.z
    expect = (w[:, 0] * (1 - z[:, 0]) / (1 - p[0])
              * (1 - w[:, 1] * (1 - z[:, 1]) / (1 - p[1]) - (1 - w[:, 1]) * z[:, 1] / p[1])
              * (1 - w[:, 2]) * z[:, 2] / p[2])
    np.testing.assert_allclose(kappa_type(data, ctype, model), expect, rtol=1e-12, atol=1e-12)


def test_clip_counts_reported():
    n = 4
    z = np.array([[0.0], [1.0], [0.0], [1.0]])
    w = np.array([[1.0], [0.0], [0.0], [1.0]])
    data = PanelDataset([np.zeros((n, 1))], z, w, np.zeros((n, 1)))
    model = PropensityModel.constant([1.0])
    kappa, clipped = kappa_full_values(data, model)
    assert clipped >= 1
    assert np.all(np.isfinite(kappa))
    _, clipped_type = kappa_type_values(data, ComplianceType(tn1={0}), model)
    assert clipped_type == 1
