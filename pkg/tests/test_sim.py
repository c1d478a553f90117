import math

import numpy as np
import pytest

from vaoi_noma.cosrp import CoSrpPolicy, average_vaoi, delivery_stats, stationary_distribution
from vaoi_noma.errors import InvalidInputError
from vaoi_noma.model import ChannelModel, PowerAccounting, RateFunction, StreamConfig, enumerate_joint_states, noma_powers
from vaoi_noma.sim import (
    CoSrpAdapter,
    FixedAdapter,
    PeriodicAdapter,
    SimConfig,
    always_transmit,
    inter_delivery_check,
    never_transmit,
    replicate,
    sample_path,
    simulate,
    worker_count,
)

F = RateFunction.LOG1P


class SequentialCoSrp(CoSrpAdapter):
    oblivious = False


class SequentialFixed(FixedAdapter):
    oblivious = False


def policy_with_p(model, p):
    """Single-user policy transmitting with probability p in every state."""
    return CoSrpPolicy(np.tile([1 - p, p], (model.n_levels, 1)), (0, 1))


def test_config_validation():
    with pytest.raises(InvalidInputError):
        SimConfig(horizon=0)
    with pytest.raises(InvalidInputError):
        SimConfig(horizon=10, warmup=10)
    cfg = SimConfig(horizon=1000)
    assert cfg.warmup_slots == 10 and cfg.slots == 990


def test_same_seed_same_numbers(fig1):
    pol = CoSrpPolicy.uniform(4, 2)
    a = simulate(fig1.model, fig1.streams, F, pol, SimConfig(horizon=20_000, seed=9))
    b = simulate(fig1.model, fig1.streams, F, pol, SimConfig(horizon=20_000, seed=9))
    c = simulate(fig1.model, fig1.streams, F, pol, SimConfig(horizon=20_000, seed=10))
    np.testing.assert_array_equal(a.histogram, b.histogram)
    assert a.power == b.power and a.weighted_vaoi == b.weighted_vaoi
    assert a.power != c.power


@pytest.mark.parametrize("accounting", list(PowerAccounting))
def test_vectorized_and_slot_loop_agree_exactly(fig1, rng, accounting):
    mu = rng.dirichlet(np.ones(4), size=4)
    pol = CoSrpPolicy(mu, (0, 1, 2, 3))
    cfg = SimConfig(horizon=150_000, seed=4, trace_slots=200, power_accounting=accounting)
    fast = simulate(fig1.model, fig1.streams, F, CoSrpAdapter(pol, 2), cfg)
    slow = simulate(fig1.model, fig1.streams, F, SequentialCoSrp(pol, 2), cfg)
    np.testing.assert_array_equal(fast.histogram, slow.histogram)
    np.testing.assert_array_equal(fast.deliveries, slow.deliveries)
    assert fast.power == slow.power
    assert fast.trace == slow.trace
    fixed = simulate(fig1.model, fig1.streams, F, FixedAdapter(2, 2), cfg)
    fixed_slow = simulate(fig1.model, fig1.streams, F, SequentialFixed(2, 2), cfg)
    np.testing.assert_array_equal(fixed.histogram, fixed_slow.histogram)


def test_zero_arrivals_give_exact_zeros(fig1):
    streams = [StreamConfig(0.0, 2.0), StreamConfig(0.0, 2.0)]
    m = replicate(fig1.model, streams, F, always_transmit(2), SimConfig(horizon=5000, replications=3), workers=1)
    assert m.weighted_vaoi == 0.0 and m.power == 0.0
    assert m.se_weighted == 0.0 and m.se_power == 0.0
    assert np.all(m.deliveries == 0)


def test_always_transmit_full_load_power(fig1):
    streams = [StreamConfig(1.0, 2.0, 0.5), StreamConfig(1.0, 2.0, 0.5)]
    m = replicate(fig1.model, streams, F, always_transmit(2), SimConfig(horizon=200_000, seed=2, replications=4),
                  workers=1)
    expected = sum(st.prob * noma_powers(st.gains, (1, 1), streams).total
                   for st in enumerate_joint_states(fig1.model))
    assert m.weighted_vaoi == 0.0
    assert abs(m.power - expected) <= 3 * m.se_power


def test_never_transmit_spends_nothing(fig1):
    m = simulate(fig1.model, fig1.streams, F, never_transmit(2), SimConfig(horizon=10_000, hist_max=16))
    assert m.power == 0.0 and np.all(m.deliveries == 0)
    assert m.histogram[0, -1] > 0.9 * m.histogram[0].sum()


def test_half_and_half_gives_half():
    model = ChannelModel((1.0,), ((1.0,),))
    m = simulate(model, [StreamConfig(0.5, 1.0)], F, policy_with_p(model, 0.5), SimConfig(horizon=1_000_000, seed=1))
    assert abs(m.weighted_vaoi - 0.5) <= 3 * m.se_weighted


def test_histogram_matches_geometric_law():
    model = ChannelModel((1.0,), ((1.0,),))
    lam, p = 0.7, 0.4
    m = simulate(model, [StreamConfig(lam, 1.0)], F, policy_with_p(model, p),
                 SimConfig(horizon=1_000_000, seed=3, hist_max=200))
    pmf = stationary_distribution(lam, p, n_max=200)
    pmf[-1] += 1 - pmf.sum()
    assert 0.5 * np.abs(m.vaoi_pmf(0) - pmf).sum() < 0.01
    assert abs(m.weighted_vaoi - average_vaoi(p, lam)) <= 3 * m.se_weighted


def test_single_user_transition_frequencies():
    """Empirical one-step moves of the VAoI chain against their probabilities."""
    model = ChannelModel((1.0,), ((1.0,),))
    lam, p = 0.6, 0.3
    path = sample_path(model, [StreamConfig(lam, 1.0)], policy_with_p(model, p), 400_000, seed=8)
    d = path.delta[:, 0]
    prev, nxt = d[:-1], d[1:]
    busy = prev > 0
    n = busy.sum()
    for name, hit, prob in [
        ("up", nxt == prev + 1, lam * (1 - p)),
        ("reset", nxt == 0, p),
        ("stay", nxt == prev, (1 - lam) * (1 - p)),
    ]:
        freq = np.count_nonzero(hit & busy) / n
        assert abs(freq - prob) <= 3 * math.sqrt(prob * (1 - prob) / n), name
    idle = ~busy
    up = np.count_nonzero((nxt == 1) & idle) / idle.sum()
    assert abs(up - lam * (1 - p)) <= 3 * math.sqrt(lam * (1 - p) * (1 - lam * (1 - p)) / idle.sum())


def test_power_only_when_serving(fig1):
    path = sample_path(fig1.model, fig1.streams, CoSrpPolicy.uniform(4, 2), 50_000, seed=6)
    assert np.all(path.power[path.served == 0] == 0)
    assert np.all(path.power[path.served > 0] > 0)
    # a served user always ends the slot at VAoI zero
    for i in range(2):
        assert np.all(path.delta[(path.served >> i) & 1 == 1, i] == 0)


def test_closed_forms_random_policy(fig1, rng):
    mu = 0.5 * rng.dirichlet(np.ones(4), size=4) + 0.5 * np.eye(4)[3]
    pol = CoSrpPolicy(mu, (0, 1, 2, 3))
    stats = delivery_stats(pol, fig1.model, fig1.streams)
    lam = np.array([s.lam for s in fig1.streams])
    occ = lam / (lam * (1 - stats.p) + stats.p)
    m = replicate(fig1.model, fig1.streams, F, pol, SimConfig(horizon=300_000, seed=11, replications=4), workers=1)
    assert abs(m.weighted_vaoi - 0.5 * average_vaoi(stats.p, lam).sum()) <= 3 * m.batch_se_weighted
    assert abs(m.power - occ @ stats.p_cond_power) <= 3 * m.batch_se_power


def test_batch_se_agrees_with_replication_se(table_noma):
    # spread of 16 replications against the pooled batch-means estimate
    pol = CoSrpPolicy.uniform(4, 2)
    m = replicate(table_noma.model, table_noma.streams, F, pol,
                  SimConfig(horizon=100_000, seed=0, replications=16), workers=1)
    assert m.se_weighted < 0.01
    assert 0.5 < m.batch_se_weighted / m.se_weighted < 2.0


def test_parallel_replications_match_serial(fig1):
    cfg = SimConfig(horizon=20_000, seed=21, replications=3)
    pol = CoSrpPolicy.uniform(4, 2)
    a = replicate(fig1.model, fig1.streams, F, pol, cfg, workers=1)
    b = replicate(fig1.model, fig1.streams, F, pol, cfg, workers=2)
    np.testing.assert_array_equal(a.rep_vaoi, b.rep_vaoi)
    np.testing.assert_array_equal(a.rep_power, b.rep_power)
    with pytest.raises(InvalidInputError):
        replicate(fig1.model, fig1.streams, F, pol, SimConfig(horizon=100), workers=1)


def test_worker_env(monkeypatch):
    monkeypatch.setenv("VAOI_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("VAOI_WORKERS", "many")
    with pytest.raises(InvalidInputError):
        worker_count()


def test_trace_format(fig1):
    m = simulate(fig1.model, fig1.streams, F, CoSrpPolicy.uniform(4, 2), SimConfig(horizon=1000, trace_slots=5))
    lines = m.trace.splitlines()
    assert lines[0] == "t,delta_1,delta_2,action_mask,power"
    assert len(lines) == 6 and lines[1].startswith("0,")


def test_periodic_schedule():
    model = ChannelModel((1.0,), ((1.0,),))
    path = sample_path(model, [StreamConfig(1.0, 1.0)], PeriodicAdapter(3), 30)
    assert path.delta[:6, 0].tolist() == [1, 2, 0, 1, 2, 0]


@pytest.mark.parametrize("lam,period", [(1.0, 3), (0.5, 4), (0.3, 6)])
def test_inter_delivery_identity(lam, period):
    res = inter_delivery_check(lam, period, cycles=50_000, seed=1)
    assert abs(res.mean - res.expected) <= 3 * res.se or res.se == 0 and res.mean == res.expected
