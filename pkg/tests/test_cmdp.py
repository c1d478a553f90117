import math

import numpy as np
import pytest

from vaoi_noma import cmdp
from vaoi_noma.cmdp import (
    CmdpPolicy,
    MdpConfig,
    MdpState,
    StateSpace,
    bisect_theta,
    check_contraction,
    check_threshold,
    check_value_monotone,
    evaluate_policy,
    expected_stage_cost,
    format_policy_dump,
    format_value_dump,
    parse_policy_dump,
    value_iteration,
)
from vaoi_noma.cosrp import Scheme
from vaoi_noma.errors import InvalidInputError, PolicyFormatError, StateSpaceTooLargeError
from vaoi_noma.model import ChannelModel, PowerAccounting, StreamConfig
from vaoi_noma.sim import SimConfig, replicate

SMALL = MdpConfig(delta_max=8)


@pytest.mark.parametrize("accounting", list(PowerAccounting))
def test_tabulated_costs_match_enumeration(fig1, rng, accounting):
    cfg = MdpConfig(delta_max=5, power_accounting=accounting)
    space = StateSpace(fig1.model, fig1.streams, cfg)
    values = np.zeros((space.n_delta, space.n_channel))
    theta = 0.37
    q = space.q_table(values, theta)
    for _ in range(40):
        d = int(rng.integers(space.n_delta))
        s = int(rng.integers(space.n_channel))
        m = int(rng.integers(space.n_actions))
        state = MdpState(tuple(int(v) for v in space.deltas[d]), s)
        u = [(space.masks[m] >> i) & 1 for i in range(2)]
        ref = expected_stage_cost(state, u, theta, fig1.model, fig1.streams, 5, accounting=accounting)
        assert q[d, s, m] == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_single_user_always_transmit_closed_form():
    lam = 0.6
    model = ChannelModel((0.5, 2.0), ((0.3, 0.7),))
    stream = StreamConfig(lam, 1.0)
    space = StateSpace(model, [stream], MdpConfig(delta_max=10))
    pol = CmdpPolicy(np.ones((space.n_delta, space.n_channel), dtype=int), space.masks)
    ev = evaluate_policy(pol, space)
    c = math.expm1(1.0)
    assert ev.vaoi == pytest.approx(0.0, abs=1e-12)
    # a packet is present exactly when one arrived this slot
    assert ev.power == pytest.approx(lam * (0.3 * c / 0.5 + 0.7 * c / 2.0), rel=1e-10)
    assert ev.tail_mass == pytest.approx(0.0, abs=1e-12)


def test_never_transmit_piles_up_in_the_tail(fig1):
    space = StateSpace(fig1.model, fig1.streams, SMALL)
    pol = CmdpPolicy(np.zeros((space.n_delta, space.n_channel), dtype=int), space.masks)
    ev = evaluate_policy(pol, space)
    assert ev.power == 0.0
    assert ev.tail_mass > 0.99


def test_evaluation_agrees_with_simulation(fig1):
    space = StateSpace(fig1.model, fig1.streams, MdpConfig(delta_max=12))
    sol = bisect_theta(10.0, space)
    m = replicate(fig1.model, fig1.streams, space.f, sol.policy,
                  SimConfig(horizon=60_000, seed=5, replications=4), workers=1)
    assert abs(m.weighted_vaoi - sol.average_vaoi) <= 4 * m.se_weighted
    assert abs(m.power - sol.average_power) <= 4 * m.se_power


@pytest.mark.parametrize("theta", [0.0, 0.01, 0.1])
def test_structure_small(fig1, theta):
    space = StateSpace(fig1.model, fig1.streams, SMALL)
    vf, _ = value_iteration(theta, space)
    assert check_threshold(vf, space) == []
    assert check_value_monotone(vf, space) == []
    assert check_contraction(vf)
    assert vf.bellman_residual < 1e-5


def test_bisection_meets_budget_with_blend(fig1):
    space = StateSpace(fig1.model, fig1.streams, SMALL)
    pbar = 10.0
    sol = bisect_theta(pbar, space)
    assert sol.converged and not sol.slack
    assert abs(sol.average_power - pbar) <= space.config.power_tol(pbar)
    # exact re-evaluation of the returned policy
    ev = evaluate_policy(sol.policy, space)
    assert ev.power == pytest.approx(sol.average_power)
    assert ev.vaoi == pytest.approx(sol.average_vaoi)


def test_bisection_power_falls_with_price(fig1):
    space = StateSpace(fig1.model, fig1.streams, SMALL)
    powers = [evaluate_policy(value_iteration(t, space)[1], space).power for t in (0.0, 0.01, 0.05, 0.2, 1.0)]
    assert all(b <= a + 1e-9 for a, b in zip(powers, powers[1:]))


def test_slack_and_idle_cases():
    model = ChannelModel.shared((0.1, 1.0), (0.2, 0.8), 2)
    idle = StateSpace(model, [StreamConfig(0.0, 2.0)] * 2, SMALL)
    sol = bisect_theta(5.0, idle)
    assert sol.slack and sol.average_vaoi == 0.0 and sol.average_power == 0.0
    with pytest.raises(InvalidInputError):
        bisect_theta(0.0, idle)


def test_tdma_actions_are_single_user(fig1):
    space = StateSpace(fig1.model, fig1.streams, SMALL, Scheme.TDMA)
    assert space.masks == (0, 1, 2)
    sol = bisect_theta(5.0, space)
    used = {space.masks[a] for a in np.unique(sol.policy.actions)}
    assert used <= {0, 1, 2}


def test_state_cap():
    model = ChannelModel.shared((0.1, 1.0), (0.5, 0.5), 3)
    with pytest.raises(StateSpaceTooLargeError):
        StateSpace(model, [StreamConfig(0.5, 1.0)] * 3, MdpConfig(delta_max=60, state_cap=100_000))


def test_policy_mixing_validation():
    a = np.zeros((2, 2), dtype=int)
    with pytest.raises(InvalidInputError):
        CmdpPolicy(a, (0, 1), mix=0.5)
    with pytest.raises(InvalidInputError):
        CmdpPolicy(a, (0, 1), alt_actions=a, mix=1.5)
    pol = CmdpPolicy(a, (0, 1), alt_actions=np.ones_like(a), mix=0.25)
    np.testing.assert_allclose(pol.probabilities()[0, 0], [0.75, 0.25])


def test_dump_round_trip(fig1):
    space = StateSpace(fig1.model, fig1.streams, SMALL)
    sol = bisect_theta(10.0, space)
    assert sol.policy.randomized
    back = parse_policy_dump(format_policy_dump(sol.policy, space), space)
    np.testing.assert_array_equal(back.actions, sol.policy.actions)
    np.testing.assert_array_equal(back.alt_actions, sol.policy.alt_actions)
    assert back.mix == sol.policy.mix
    plain = CmdpPolicy(sol.policy.actions, space.masks)
    again = parse_policy_dump(format_policy_dump(plain, space), space)
    assert not again.randomized
    values = format_value_dump(sol.value_function, space).splitlines()
    assert values[0] == "delta_1,delta_2,gain_1,gain_2,value"
    assert len(values) == space.n_states + 1


@pytest.mark.parametrize("mutate,line", [
    (lambda L: L[:3] + [L[2]] + L[3:], 4),
    (lambda L: L[:1] + ["0,0,0.1,0.1,7"] + L[2:], 2),
    (lambda L: L[:1] + ["0,99,0.1,0.1,0"] + L[2:], 2),
    (lambda L: L[:1] + ["0,0,0.3,0.1,0"] + L[2:], 2),
    (lambda L: L[:1] + ["0,0,0.1"] + L[2:], 2),
    (lambda L: ["nonsense"] + L[1:], 1),
])
def test_dump_errors_carry_line(fig1, mutate, line):
    space = StateSpace(fig1.model, fig1.streams, MdpConfig(delta_max=3))
    pol = CmdpPolicy(np.zeros((space.n_delta, space.n_channel), dtype=int), space.masks)
    lines = format_policy_dump(pol, space).splitlines()
    with pytest.raises(PolicyFormatError) as err:
        parse_policy_dump("\n".join(mutate(lines)), space)
    assert err.value.line == line


def test_dump_must_cover_every_state(fig1):
    space = StateSpace(fig1.model, fig1.streams, MdpConfig(delta_max=3))
    pol = CmdpPolicy(np.zeros((space.n_delta, space.n_channel), dtype=int), space.masks)
    text = "\n".join(format_policy_dump(pol, space).splitlines()[:-1])
    with pytest.raises(PolicyFormatError, match="cover"):
        parse_policy_dump(text, space)
