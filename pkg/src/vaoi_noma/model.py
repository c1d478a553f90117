"""System model: streams, fading channel, SIC decoding order and NOMA powers.

Powers are linear with unit noise variance. Users are 0-indexed in code; a
transmission subset is a bitmask where bit ``i`` selects user ``i``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, StateSpaceTooLargeError

DEFAULT_JOINT_STATE_CAP = 65536


class RateFunction(Enum):
    """Achievable-rate map from SINR to nats per slot."""

    LOG1P = "log1p"

    def __call__(self, x):
        return np.log1p(x)

    def inverse(self, rate):
        return np.expm1(rate)


@dataclass(frozen=True)
class StreamConfig:
    lam: float
    r0: float
    weight: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidInputError(f"arrival probability must be in [0, 1], got {self.lam}")
        if self.r0 < 0:
            raise InvalidInputError(f"packet size must be >= 0, got {self.r0}")
        if self.weight < 0:
            raise InvalidInputError(f"weight must be >= 0, got {self.weight}")


@dataclass(frozen=True)
class JointChannelState:
    index: int
    level_indices: tuple[int, ...]
    gains: tuple[float, ...]
    prob: float


@dataclass(frozen=True)
class ChannelModel:
    """Finite i.i.d. block-fading channel, independent across users.

    ``levels`` is the gain alphabet in strictly increasing order and
    ``pmf`` holds one probability row per user.
    """

    levels: tuple[float, ...]
    pmf: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        levels = tuple(float(x) for x in self.levels)
        pmf = tuple(tuple(float(q) for q in row) for row in self.pmf)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "pmf", pmf)
        if not levels:
            raise InvalidInputError("channel needs at least one gain level")
        if any(g <= 0 for g in levels):
            raise InvalidInputError("channel gains must be positive")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise InvalidInputError("channel levels must be strictly increasing")
        if not pmf:
            raise InvalidInputError("channel needs at least one user")
        for row in pmf:
            if len(row) != len(levels):
                raise InvalidInputError("each pmf row must have one entry per level")
            if any(q < 0 for q in row) or abs(sum(row) - 1.0) > 1e-12:
                raise InvalidInputError(f"pmf row {row} is not a probability vector")

    @classmethod
    def shared(cls, levels: Sequence[float], pmf: Sequence[float], n_users: int) -> "ChannelModel":
        """Same gain distribution for every user."""
        return cls(tuple(levels), tuple(tuple(pmf) for _ in range(n_users)))

    @property
    def n_users(self) -> int:
        return len(self.pmf)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def subset(self, users: Sequence[int]) -> "ChannelModel":
        return ChannelModel(self.levels, tuple(self.pmf[i] for i in users))


def enumerate_joint_states(model: ChannelModel, cap: int = DEFAULT_JOINT_STATE_CAP) -> list[JointChannelState]:
    """All joint channel realisations with product probabilities.

    Ordering is lexicographic in per-user level index with user 0 the most
    significant digit; this order defines the joint-state index everywhere.
    """
    count = model.n_levels ** model.n_users
    if count > cap:
        raise StateSpaceTooLargeError(
            f"{count} joint channel states exceed the cap of {cap}; "
            "reduce the number of users or gain levels"
        )
    states = []
    for idx, combo in enumerate(itertools.product(range(model.n_levels), repeat=model.n_users)):
        prob = math.prod(model.pmf[u][k] for u, k in enumerate(combo))
        gains = tuple(model.levels[k] for k in combo)
        states.append(JointChannelState(idx, combo, gains, prob))
    return states


@dataclass(frozen=True)
class DecodingOrder:
    order: tuple[int, ...]
    inverse: tuple[int, ...]


def decoding_order(h: Sequence[float]) -> DecodingOrder:
    """Users sorted by non-increasing gain, lower index first on ties."""
    h = [float(x) for x in h]
    if any(not x > 0 for x in h):
        raise InvalidInputError(f"channel gains must be positive, got {h}")
    order = tuple(sorted(range(len(h)), key=lambda i: (-h[i], i)))
    inverse = [0] * len(h)
    for pos, user in enumerate(order):
        inverse[user] = pos
    return DecodingOrder(order, tuple(inverse))


@dataclass(frozen=True)
class PowerAllocation:
    powers: np.ndarray = field(repr=False)

    @property
    def total(self) -> float:
        return float(self.powers.sum())


def mask_to_action(mask: int, n_users: int) -> tuple[int, ...]:
    return tuple((mask >> i) & 1 for i in range(n_users))


def action_to_mask(u: Sequence[int]) -> int:
    return sum(1 << i for i, ui in enumerate(u) if ui)


def noma_powers(
    h: Sequence[float],
    u: Sequence[int],
    streams: Sequence[StreamConfig],
    f: RateFunction = RateFunction.LOG1P,
) -> PowerAllocation:
    """Minimum superposition-coding powers delivering every scheduled packet.

    Walking the decoding order from the strongest user, each scheduled user
    needs f^-1(R0)/h of its own plus f^-1(R0) times the power already
    allocated to stronger users, which it sees as interference.
    """
    if len(h) != len(u) or len(h) != len(streams):
        raise InvalidInputError("h, u and streams must have the same length")
    dec = decoding_order(h)
    powers = np.zeros(len(h))
    stronger = 0.0
    for user in dec.order:
        if not u[user]:
            continue
        need = float(f.inverse(streams[user].r0))
        powers[user] = need / h[user] + need * stronger
        stronger += powers[user]
    return PowerAllocation(powers)


def verify_rates(
    h: Sequence[float],
    u: Sequence[int],
    powers: Sequence[float],
    streams: Sequence[StreamConfig],
    f: RateFunction = RateFunction.LOG1P,
) -> np.ndarray:
    """Rates achieved under SIC, straight from the SINR formula."""
    dec = decoding_order(h)
    powers = np.asarray(powers, dtype=float)
    rates = np.zeros(len(h))
    for i in range(len(h)):
        interference = sum(powers[dec.order[k]] for k in range(dec.inverse[i]))
        sinr = powers[i] * h[i] / (1.0 + h[i] * interference)
        rates[i] = f(sinr)
    return rates


def subset_masks(n_users: int, tdma: bool) -> tuple[int, ...]:
    """Admissible transmission subsets in ascending bitmask order."""
    if tdma:
        return (0,) + tuple(1 << i for i in range(n_users))
    return tuple(range(1 << n_users))


def subset_power_table(
    states: Sequence[JointChannelState],
    masks: Sequence[int],
    streams: Sequence[StreamConfig],
    f: RateFunction = RateFunction.LOG1P,
) -> np.ndarray:
    """Per-user powers for every (joint state, subset): shape (S, M, N)."""
    n = len(streams)
    table = np.zeros((len(states), len(masks), n))
    for s, st in enumerate(states):
        for m, mask in enumerate(masks):
            table[s, m] = noma_powers(st.gains, mask_to_action(mask, n), streams, f).powers
    return table


class PowerAccounting(Enum):
    """What a slot costs when scheduled users have nothing to send.

    ``CODEWORD``: every served user is charged the codeword power it would
    get in the scheduled subset; users with an empty queue cost nothing.
    This is the accounting under which the CO-SRP power closed form is
    exact. ``SERVED``: powers are recomputed for the subset actually
    served, which can only be cheaper.
    """

    CODEWORD = "codeword"
    SERVED = "served"


def charged_power(
    h: Sequence[float],
    scheduled: Sequence[int],
    served: Sequence[int],
    streams: Sequence[StreamConfig],
    f: RateFunction = RateFunction.LOG1P,
    accounting: PowerAccounting = PowerAccounting.CODEWORD,
) -> float:
    """Power spent when ``scheduled`` is chosen and only ``served`` had packets."""
    if any(v and not u for u, v in zip(scheduled, served)):
        raise InvalidInputError("served users must be scheduled")
    if accounting is PowerAccounting.SERVED:
        return noma_powers(h, served, streams, f).total
    powers = noma_powers(h, scheduled, streams, f).powers
    return float(sum(p for p, v in zip(powers, served) if v))
