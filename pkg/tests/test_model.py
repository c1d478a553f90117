import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vaoi_noma.errors import InvalidInputError, StateSpaceTooLargeError
from vaoi_noma.model import (
    ChannelModel,
    PowerAccounting,
    StreamConfig,
    action_to_mask,
    charged_power,
    decoding_order,
    enumerate_joint_states,
    mask_to_action,
    noma_powers,
    subset_masks,
    subset_power_table,
    verify_rates,
)


def test_stream_validation():
    with pytest.raises(InvalidInputError):
        StreamConfig(1.5, 1.0)
    with pytest.raises(InvalidInputError):
        StreamConfig(0.5, -1.0)
    with pytest.raises(InvalidInputError):
        StreamConfig(0.5, 1.0, weight=-0.1)


@pytest.mark.parametrize("levels,pmf", [
    ((), ((),)),
    ((0.0, 1.0), ((0.5, 0.5),)),
    ((1.0, 0.5), ((0.5, 0.5),)),
    ((0.1, 1.0), ((0.5, 0.6),)),
    ((0.1, 1.0), ((1.0,),)),
])
def test_channel_validation(levels, pmf):
    with pytest.raises(InvalidInputError):
        ChannelModel(levels, pmf)


def test_joint_states_order_and_mass():
    model = ChannelModel((0.1, 1.0, 2.0), ((0.2, 0.3, 0.5), (0.6, 0.3, 0.1)))
    states = enumerate_joint_states(model)
    assert len(states) == 9
    assert [s.level_indices for s in states[:4]] == [(0, 0), (0, 1), (0, 2), (1, 0)]
    assert states[5].gains == (1.0, 2.0)
    assert math.isclose(states[5].prob, 0.3 * 0.1)
    assert math.isclose(sum(s.prob for s in states), 1.0)


def test_joint_state_cap():
    model = ChannelModel.shared((0.1, 1.0), (0.5, 0.5), 17)
    with pytest.raises(StateSpaceTooLargeError):
        enumerate_joint_states(model)


def test_decoding_order_ties_lower_index_first():
    dec = decoding_order((1.0, 2.0, 1.0, 0.5))
    assert dec.order == (1, 0, 2, 3)
    assert dec.inverse == (1, 0, 2, 3)
    with pytest.raises(InvalidInputError):
        decoding_order((1.0, 0.0))


def test_two_user_powers_by_hand():
    c = math.expm1(2.0)
    streams = [StreamConfig(0.5, 2.0), StreamConfig(0.5, 2.0)]
    p = noma_powers((0.1, 1.0), (1, 1), streams).powers
    # strong user decodes first; the weak one sees it as interference
    assert math.isclose(p[1], c)
    assert math.isclose(p[0], c / 0.1 + c * c)
    alone = noma_powers((0.1, 1.0), (1, 0), streams).powers
    assert math.isclose(alone[0], c / 0.1) and alone[1] == 0


gain = st.sampled_from([0.05, 0.1, 0.5, 1.0, 2.0, 4.0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(gain, st.floats(0.1, 4.0), st.booleans()), min_size=1, max_size=5))
def test_powers_deliver_exact_rates(users):
    h = [g for g, _, _ in users]
    streams = [StreamConfig(0.5, r) for _, r, _ in users]
    u = [int(b) for _, _, b in users]
    powers = noma_powers(h, u, streams).powers
    rates = verify_rates(h, u, powers, streams)
    for i, ui in enumerate(u):
        if ui:
            assert math.isclose(rates[i], streams[i].r0, rel_tol=1e-9)
        else:
            assert powers[i] == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(gain, min_size=2, max_size=4), st.data())
def test_powers_monotone_in_subset(h, data):
    n = len(h)
    streams = [StreamConfig(0.5, 1.0)] * n
    small = data.draw(st.integers(0, (1 << n) - 1))
    extra = data.draw(st.integers(0, (1 << n) - 1))
    big = small | extra
    p_small = noma_powers(h, mask_to_action(small, n), streams).powers
    p_big = noma_powers(h, mask_to_action(big, n), streams).powers
    assert np.all(p_big >= p_small - 1e-12)


@given(st.integers(0, 255))
def test_mask_round_trip(mask):
    assert action_to_mask(mask_to_action(mask, 8)) == mask


def test_subset_masks():
    assert subset_masks(3, tdma=True) == (0, 1, 2, 4)
    assert subset_masks(2, tdma=False) == (0, 1, 2, 3)


def test_power_table_shape(fig1):
    states = enumerate_joint_states(fig1.model)
    table = subset_power_table(states, subset_masks(2, False), fig1.streams)
    assert table.shape == (4, 4, 2)
    assert np.all(table[:, 0] == 0)


def test_charged_power_accounting():
    c = math.expm1(2.0)
    streams = [StreamConfig(0.5, 2.0), StreamConfig(0.5, 2.0)]
    h = (0.1, 1.0)
    # both scheduled, only the weak user had a packet
    code = charged_power(h, (1, 1), (1, 0), streams)
    served = charged_power(h, (1, 1), (1, 0), streams, accounting=PowerAccounting.SERVED)
    assert math.isclose(code, c / 0.1 + c * c)
    assert math.isclose(served, c / 0.1)
    assert charged_power(h, (1, 1), (0, 0), streams) == 0.0
    full = charged_power(h, (1, 1), (1, 1), streams)
    assert math.isclose(full, noma_powers(h, (1, 1), streams).total)
    with pytest.raises(InvalidInputError):
        charged_power(h, (1, 0), (0, 1), streams)
