import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from restock import env
from restock.env import (
    ProductCatalog, RewardParams, Simulator, StoreState, ForecastState,
    apply_demand_and_spoilage, apply_replenishment, build_feature_vector,
    business_reward, capacity_ratio, clip_action, enforce_capacity,
    feature_matrix, per_product_rewards, percentile_spread, step,
)
from conftest import make_catalog


# ---------------------------------------------------------------- clipping

def test_clip_action_examples():
    s = StoreState(t=0, x=np.array([0.9]))
    assert clip_action(s, np.array([0.5])) == pytest.approx(0.1)
    s = StoreState(t=0, x=np.array([0.0]))
    assert clip_action(s, np.array([1.0])) == pytest.approx(1.0)
    s = StoreState(t=0, x=np.array([0.5]))
    assert clip_action(s, np.array([0.2])) == pytest.approx(0.2)


def test_capacity_ratio_examples():
    cat = make_catalog(p=1, volume=[2.0], weight=[1.0], v_max=1.0, c_max=1.0)
    assert capacity_ratio(cat, np.array([0.0])) == 0.0
    assert capacity_ratio(cat, np.array([0.5])) == pytest.approx(1.0)
    cat = make_catalog(p=2, v_max=1.0, c_max=2.0)
    assert capacity_ratio(cat, np.array([1.0, 1.0])) == pytest.approx(2.0)


def test_enforce_capacity_examples():
    u = np.array([0.2, 0.2])
    assert np.array_equal(enforce_capacity(u, 0.8), u)
    np.testing.assert_allclose(enforce_capacity(np.array([0.4, 0.4]), 2.0),
                               [0.2, 0.2])
    np.testing.assert_allclose(enforce_capacity(np.array([0.5]), 1.0), [0.5])


def test_enforced_action_hits_ratio_one():
    cat = make_catalog(p=3, volume=[1, 2, 3], weight=[3, 1, 1],
                       v_max=0.5, c_max=0.7)
    u = np.array([0.3, 0.3, 0.3])
    rho = capacity_ratio(cat, u)
    assert rho > 1
    scaled = enforce_capacity(u, rho)
    assert capacity_ratio(cat, scaled) == pytest.approx(1.0, abs=1e-12)


# ----------------------------------------------------------- replenishment

def test_apply_replenishment_examples():
    s = StoreState(t=0, x=np.array([0.5]))
    assert apply_replenishment(s, np.array([0.3])) == pytest.approx(0.8)
    s = StoreState(t=0, x=np.array([0.0]))
    assert apply_replenishment(s, np.array([0.0])) == pytest.approx(0.0)
    s = StoreState(t=0, x=np.array([0.1, 0.9]))
    np.testing.assert_allclose(apply_replenishment(s, np.array([0.2, 0.1])),
                               [0.3, 1.0])


def test_apply_replenishment_rejects_overflow():
    s = StoreState(t=0, x=np.array([0.9]))
    with pytest.raises(ValueError):
        apply_replenishment(s, np.array([0.5]))


def test_apply_demand_and_spoilage_examples():
    x_next, q, refused = apply_demand_and_spoilage(
        np.array([0.2]), np.array([0.5]), np.array([0.1]))
    assert (x_next[0], q[0], refused[0]) == pytest.approx((0.0, 0.0, 0.3))

    x_next, q, refused = apply_demand_and_spoilage(
        np.array([1.0]), np.array([0.0]), np.array([0.1]))
    assert (x_next[0], q[0], refused[0]) == pytest.approx((0.9, 0.1, 0.0))

    x_next, q, refused = apply_demand_and_spoilage(
        np.array([0.6]), np.array([0.2]), np.array([0.25]))
    assert (x_next[0], q[0], refused[0]) == pytest.approx((0.3, 0.1, 0.0))


# -------------------------------------------------------------- percentiles

def sort_and_interpolate(values, q):
    """Independent percentile oracle: linear interpolation between ranks."""
    v = sorted(values)
    pos = (len(v) - 1) * q / 100.0
    lo = int(pos)
    frac = pos - lo
    if lo + 1 < len(v):
        return v[lo] + frac * (v[lo + 1] - v[lo])
    return v[lo]


def test_percentile_spread_examples():
    assert percentile_spread(np.full(5, 0.4)) == 0.0
    assert percentile_spread(np.array([0.7])) == 0.0
    x = np.array([i / 100 for i in range(1, 101)])
    # frozen from the sort-and-interpolate oracle above
    assert percentile_spread(x) == pytest.approx(0.8909999999999999, abs=1e-12)


def test_percentile_spread_matches_oracle_on_random_vectors():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        x = rng.random(rng.integers(1, 40))
        expect = sort_and_interpolate(x, 95) - sort_and_interpolate(x, 5)
        assert percentile_spread(x) == pytest.approx(expect, abs=1e-12)


# ------------------------------------------------------------------ rewards

def test_business_reward_examples():
    zeros = np.zeros(3)
    assert business_reward(zeros, zeros, zeros, 0.0, zeros) == pytest.approx(1.0)

    b_e = np.array([1.0, 0.0])
    assert business_reward(b_e, b_e, np.zeros(2), 0.0, np.zeros(2)) == pytest.approx(0.0)

    one = np.ones(1)
    assert business_reward(one, one, one, 0.0, one) == pytest.approx(-3.0)


def test_per_product_reward_examples():
    zeros = np.zeros(2)
    clean = per_product_rewards(zeros, zeros, zeros, 0.0, zeros, rho=0.9)
    np.testing.assert_allclose(clean, 1.0)
    penalized = per_product_rewards(zeros, zeros, zeros, 0.0, zeros, rho=1.5,
                                    reward=RewardParams(alpha=1.0))
    np.testing.assert_allclose(penalized, 0.5)


def test_mean_per_product_matches_business_reward_when_feasible():
    rng = np.random.default_rng(3)
    for _ in range(200):
        p = rng.integers(1, 9)
        b_e = (rng.random(p) < 0.2).astype(float)
        b_c = np.maximum(b_e, (rng.random(p) < 0.3).astype(float))
        q = rng.random(p) * 0.2
        refused = rng.random(p) * 0.3
        spread = float(rng.random() * 0.5)
        r = business_reward(b_e, b_c, q, spread, refused)
        ri = per_product_rewards(b_e, b_c, q, spread, refused, rho=0.7)
        assert ri.mean() == pytest.approx(r, abs=1e-12)


def test_reward_modifications():
    one, zero = np.ones(1), np.zeros(1)
    base = business_reward(zero, zero, np.array([0.1]), 0.0, zero)
    heavy = business_reward(zero, zero, np.array([0.1]), 0.0, zero,
                            RewardParams(wastage_weight=4.0))
    assert base - heavy == pytest.approx(3 * 0.1)

    cat = make_catalog(p=1, critical=[0.05])
    x = np.array([0.07])
    _, b_c = env.empty_critical_flags(x, cat, RewardParams())
    assert b_c[0] == 0.0
    _, b_c = env.empty_critical_flags(x, cat, RewardParams(critical_override=0.1))
    assert b_c[0] == 1.0


# ----------------------------------------------------------------- forecast

def test_forecast_examples():
    fs = ForecastState(window=4, num_products=1)
    for _ in range(4):
        fs.push(np.array([0.1]))
    assert fs.forecast[0] == pytest.approx(0.1)

    fs = ForecastState(window=4, num_products=1)
    fs.push(np.array([0.4]))
    assert fs.forecast[0] == pytest.approx(0.1)

    fs = ForecastState(window=2, num_products=1)
    fs.push(np.array([0.1]))
    fs.push(np.array([0.5]))
    fs.push(np.array([0.3]))
    assert sorted(fs.buffer.ravel()) == [0.3, 0.5]
    assert fs.forecast[0] == pytest.approx(0.4)


def test_forecast_empty_buffer_is_zero():
    fs = ForecastState(window=8, num_products=3)
    np.testing.assert_array_equal(fs.forecast, np.zeros(3))


# ---------------------------------------------------------------- cumulants

def test_cumulant_examples():
    c = env.cumulants(np.array([0.0]), np.array([1.0]), np.array([0.0]))
    np.testing.assert_allclose(c[:, 0], [0.0, 1.0, 1.0])
    c = env.cumulants(np.array([0.0]), np.array([0.0]), np.array([1.0]))
    np.testing.assert_allclose(c[:, 0], [0.0, 0.0, 0.0])
    c = env.cumulants(np.array([0.1]), np.array([0.0]), np.array([0.3]))
    np.testing.assert_allclose(c[:, 0], [0.1, 0.0, 0.7])


# ----------------------------------------------------------------- features

def test_features_identical_products_are_symmetric():
    cat = make_catalog(p=3)
    feats = feature_matrix(cat, np.full(3, 0.4), np.full(3, 0.1))
    assert np.all(feats == feats[0])


def test_shelf_life_self_normalizes():
    cat = make_catalog(p=1, spoilage=[0.5])
    feats = feature_matrix(cat, np.array([0.2]), np.array([0.0]))
    assert feats[0, 4] == 1.0


def test_system_features_shared_across_products():
    cat = make_catalog(p=4, volume=[1, 2, 3, 4], weight=[4, 3, 2, 1],
                       spoilage=[0.1, 0.2, 0.15, 0.25])
    feats = feature_matrix(cat, np.linspace(0.1, 0.9, 4), np.linspace(0, 0.3, 4))
    assert np.unique(feats[:, 5]).size == 1
    assert np.unique(feats[:, 6]).size == 1
    single = build_feature_vector(2, cat, np.linspace(0.1, 0.9, 4),
                                  np.linspace(0, 0.3, 4))
    np.testing.assert_array_equal(single, feats[2])


# ------------------------------------------------------------- full steps

def test_step_zero_action_zero_demand():
    cat = make_catalog(p=1, spoilage=[0.1])
    out = step(cat, StoreState(t=0, x=np.array([0.5])), np.array([0.0]),
               np.array([0.0]))
    assert out.next_state.x[0] == pytest.approx(0.45)
    assert out.q_waste[0] == pytest.approx(0.05)
    assert out.next_state.t == 1


def test_step_reward_reconstruction():
    cat = make_catalog(p=3, volume=[1, 2, 1], weight=[2, 1, 1],
                       v_max=0.4, c_max=0.5, spoilage=[0.1, 0.2, 0.3])
    rng = np.random.default_rng(11)
    state = StoreState(t=0, x=rng.random(3))
    out = step(cat, state, rng.random(3), rng.random(3) * 0.5)
    rebuilt = (1.0 - out.b_empty.mean() - out.b_critical.mean()
               - out.q_waste.mean() - out.spread - out.refused.mean())
    assert rebuilt == pytest.approx(out.business_reward, abs=1e-12)


def test_step_dimension_mismatch():
    cat = make_catalog(p=2)
    with pytest.raises(ValueError):
        step(cat, StoreState(t=0, x=np.zeros(2)), np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        step(cat, StoreState(t=0, x=np.zeros(2)), np.zeros(2), np.zeros(3))


def scalar_trace(x0, actions, demands, volume, weight, v_max, c_max,
                 spoilage, kappa, alpha=1.0):
    """Hand-computation oracle: pure-Python scalar replay of an episode."""
    p = len(x0)
    x = list(x0)
    records = []
    for a_row, w_row in zip(actions, demands):
        req = [min(a_row[i], 1.0 - x[i]) for i in range(p)]
        rho = max(sum(volume[i] * req[i] for i in range(p)) / v_max,
                  sum(weight[i] * req[i] for i in range(p)) / c_max)
        scale = 1.0 / rho if rho > 1.0 else 1.0
        exe = [req[i] * scale for i in range(p)]
        x_plus = [x[i] + exe[i] for i in range(p)]
        resid = [max(0.0, x_plus[i] - w_row[i]) for i in range(p)]
        refused = [max(0.0, w_row[i] - x_plus[i]) for i in range(p)]
        waste = [spoilage[i] * resid[i] for i in range(p)]
        x = [(1.0 - spoilage[i]) * resid[i] for i in range(p)]
        spread = sort_and_interpolate(x, 95) - sort_and_interpolate(x, 5)
        b_e = [1.0 if x[i] == 0.0 else 0.0 for i in range(p)]
        b_c = [1.0 if x[i] < kappa[i] else 0.0 for i in range(p)]
        r = (1.0 - sum(b_e) / p - sum(b_c) / p - sum(waste) / p - spread
             - sum(refused) / p)
        r_i = [1.0 - b_e[i] - b_c[i] - waste[i] - spread - refused[i]
               - alpha * max(rho - 1.0, 0.0) for i in range(p)]
        records.append(dict(x=list(x), waste=waste, refused=refused, rho=rho,
                            spread=spread, r=r, r_i=r_i))
    return records


def test_step_matches_scalar_trace():
    volume, weight = [1.0, 2.0], [2.0, 1.0]
    v_max, c_max = 1.0, 1.5
    spoilage, kappa = [0.1, 0.5], [0.2, 0.3]
    cat = make_catalog(p=2, volume=volume, weight=weight,
                       spoilage=spoilage, critical=kappa,
                       v_max=v_max, c_max=c_max)
    x0 = [0.5, 0.0]
    actions = [[0.6, 0.3], [0.0, 0.2], [0.05, 0.5]]
    demands = [[0.2, 0.4], [0.3, 0.05], [0.0, 0.1]]
    expect = scalar_trace(x0, actions, demands, volume, weight, v_max, c_max,
                          spoilage, kappa)

    state = StoreState(t=0, x=np.array(x0))
    for k in range(3):
        out = step(cat, state, np.array(actions[k]), np.array(demands[k]))
        ref = expect[k]
        np.testing.assert_allclose(out.next_state.x, ref["x"], atol=1e-12)
        np.testing.assert_allclose(out.q_waste, ref["waste"], atol=1e-12)
        np.testing.assert_allclose(out.refused, ref["refused"], atol=1e-12)
        assert out.rho == pytest.approx(ref["rho"], abs=1e-12)
        assert out.spread == pytest.approx(ref["spread"], abs=1e-12)
        assert out.business_reward == pytest.approx(ref["r"], abs=1e-12)
        np.testing.assert_allclose(out.per_product_rewards, ref["r_i"],
                                   atol=1e-12)
        state = out.next_state


# --------------------------------------------------------- property checks

catalog_strategy = st.integers(min_value=1, max_value=8).flatmap(
    lambda p: st.tuples(
        st.just(p),
        st.lists(st.floats(0.1, 3.0), min_size=p, max_size=p),
        st.lists(st.floats(0.1, 3.0), min_size=p, max_size=p),
        st.lists(st.floats(0.01, 1.0), min_size=p, max_size=p),
        st.lists(st.floats(0.01, 0.99), min_size=p, max_size=p),
        st.floats(0.05, 3.0),
        st.floats(0.05, 3.0),
        st.lists(st.floats(0.0, 1.0), min_size=p, max_size=p),
        st.lists(st.floats(0.0, 1.0), min_size=p, max_size=p),
        st.lists(st.floats(0.0, 1.0), min_size=p, max_size=p),
    )
)


@settings(max_examples=200, deadline=None)
@given(catalog_strategy)
def test_step_invariants(args):
    p, vol, wgt, spoil, kap, v_max, c_max, x0, raw, w = args
    cat = make_catalog(p=p, volume=vol, weight=wgt, spoilage=spoil,
                       critical=kap, v_max=v_max, c_max=c_max)
    out = step(cat, StoreState(t=0, x=np.array(x0)), np.array(raw),
               np.array(w))

    assert np.all(out.next_state.x >= 0) and np.all(out.next_state.x <= 1 + 1e-12)
    # conservation: received stock is sold, spoiled, or carried over
    x_plus = np.array(x0) + out.executed
    sold = np.minimum(np.array(w), x_plus)
    np.testing.assert_allclose(x_plus, sold + out.q_waste + out.next_state.x,
                               atol=1e-9)
    assert cat.unit_volume @ out.executed <= cat.v_max + 1e-9
    assert cat.unit_weight @ out.executed <= cat.c_max + 1e-9
    penalty = max(out.rho - 1.0, 0.0)
    assert out.per_product_rewards.mean() == pytest.approx(
        out.business_reward - penalty, abs=1e-9)
    assert np.all(out.b_empty <= out.b_critical)
    assert out.business_reward <= 1.0 + 1e-12
    assert out.business_reward >= -4.0 - 1e-12


def test_step_is_deterministic(catalog2):
    rng = np.random.default_rng(5)
    x0, raw, w = rng.random(2), rng.random(2), rng.random(2)
    a = step(catalog2, StoreState(t=3, x=x0), raw, w)
    b = step(catalog2, StoreState(t=3, x=x0), raw, w)
    np.testing.assert_array_equal(a.next_state.x, b.next_state.x)
    assert a.business_reward == b.business_reward


# ---------------------------------------------------------------- simulator

def test_simulator_walks_demand_and_warms_forecast():
    cat = make_catalog(p=2, spoilage=[0.1, 0.1])
    demand = np.tile(np.array([[0.1, 0.2]]), (10, 1))
    sim = Simulator(cat, demand, forecast_window=4)
    sim.reset(np.array([0.5, 0.5]), start=6)
    np.testing.assert_allclose(sim.forecaster.forecast, [0.1, 0.2])
    feats = sim.features()
    assert feats.shape == (2, 7)
    out = sim.step(np.array([0.0, 0.0]))
    assert sim.state.t == 7
    assert out.next_state.x[0] == pytest.approx((0.5 - 0.1) * 0.9)


def test_simulator_cold_start_has_zero_forecast():
    cat = make_catalog(p=1)
    sim = Simulator(cat, np.full((5, 1), 0.3), forecast_window=4)
    sim.reset(np.array([0.2]), start=0)
    assert sim.forecaster.forecast[0] == 0.0


def test_catalog_validation():
    with pytest.raises(ValueError):
        make_catalog(p=1, spoilage=[0.0])
    with pytest.raises(ValueError):
        make_catalog(p=1, critical=[1.0])
    with pytest.raises(ValueError):
        make_catalog(p=1, volume=[-1.0])
    with pytest.raises(ValueError):
        make_catalog(p=1, v_max=0.0)
