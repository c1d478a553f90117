"""Channel-only stationary randomized policies (CO-SRP).

A CO-SRP picks a transmission subset with probabilities that depend only on
the current joint channel state. Under such a policy each user's VAoI is a
birth/reset chain whose stationary law is geometric, which gives closed
forms for average VAoI and average transmit power.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, PolicyFormatError
from .model import (
    ChannelModel,
    JointChannelState,
    RateFunction,
    StreamConfig,
    enumerate_joint_states,
    subset_masks,
    subset_power_table,
)

P_CLAMP = 1e-12


class Scheme(Enum):
    NOMA = "noma"
    TDMA = "tdma"


@dataclass
class CoSrpPolicy:
    """Subset probabilities ``mu[s, m]`` for joint state ``s`` and subset ``masks[m]``."""

    mu: np.ndarray
    masks: tuple[int, ...]
    scheme: Scheme = Scheme.NOMA

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if self.mu.ndim != 2 or self.mu.shape[1] != len(self.masks):
            raise InvalidInputError("mu must have shape (n_states, n_subsets)")

    @classmethod
    def uniform(cls, n_states: int, n_users: int, scheme: Scheme = Scheme.NOMA) -> "CoSrpPolicy":
        masks = subset_masks(n_users, scheme is Scheme.TDMA)
        return cls(np.full((n_states, len(masks)), 1.0 / len(masks)), masks, scheme)

    @classmethod
    def constant(cls, n_states: int, n_users: int, mask: int, scheme: Scheme = Scheme.NOMA) -> "CoSrpPolicy":
        """Deterministic policy using the same subset in every channel state."""
        masks = subset_masks(n_users, scheme is Scheme.TDMA)
        mu = np.zeros((n_states, len(masks)))
        mu[:, masks.index(mask)] = 1.0
        return cls(mu, masks, scheme)

    def check(self, tol: float = 1e-9) -> None:
        if np.any(self.mu < -tol) or np.any(self.mu > 1 + tol):
            raise InvalidInputError("policy probabilities must lie in [0, 1]")
        if np.any(np.abs(self.mu.sum(axis=1) - 1.0) > tol):
            raise InvalidInputError("policy probabilities must sum to 1 in every channel state")
        if self.scheme is Scheme.TDMA and any(bin(m).count("1") > 1 for m in self.masks):
            raise InvalidInputError("TDMA policies may only use single-user subsets")

    def membership(self, n_users: int) -> np.ndarray:
        """Boolean (M, N) table: does subset m contain user i."""
        return np.array([[(m >> i) & 1 for i in range(n_users)] for m in self.masks], dtype=bool)


@dataclass
class UserDeliveryStats:
    p: np.ndarray
    p_cond_power: np.ndarray


def delivery_stats(
    policy: CoSrpPolicy,
    model: ChannelModel,
    streams: Sequence[StreamConfig],
    f: RateFunction = RateFunction.LOG1P,
) -> UserDeliveryStats:
    states = enumerate_joint_states(model)
    probs = np.array([st.prob for st in states])
    powers = subset_power_table(states, policy.masks, streams, f)
    member = policy.membership(len(streams))
    weighted = policy.mu * probs[:, None]
    p = weighted.sum(axis=0) @ member
    pw = np.einsum("sm,smi->i", weighted, powers)
    return UserDeliveryStats(p=p, p_cond_power=pw)


def average_vaoi(p, lam):
    """Long-run mean VAoI lam(1-p)/p, elementwise. Zero when lam is zero."""
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(p > 0, lam * (1.0 - p) / np.where(p > 0, p, 1.0), math.inf)
    out = np.where(lam == 0, 0.0, out)
    return out if out.ndim else float(out)


def occupancy(p, lam):
    """Probability that a user's queue holds a packet at decision time."""
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=float)
    denom = lam * (1.0 - p) + p
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(lam > 0, lam / np.where(denom > 0, denom, 1.0), 0.0)


def average_power(stats: UserDeliveryStats, streams: Sequence[StreamConfig]) -> float:
    lam = np.array([s.lam for s in streams])
    return float(np.sum(occupancy(stats.p, lam) * stats.p_cond_power))


def weighted_objective(streams: Sequence[StreamConfig], p) -> float:
    lam = np.array([s.lam for s in streams])
    w = np.array([s.weight for s in streams])
    per_user = np.asarray(average_vaoi(p, lam))
    # a zero-weight user never counts, even with infinite VAoI
    return float(np.sum(w[w > 0] * per_user[w > 0]))


def stationary_distribution(lam: float, p: float, n_max: int | None = None) -> np.ndarray:
    """Geometric law of a single user's VAoI under a CO-SRP, truncated at ``n_max``.

    With ``n_max=None`` the truncation is the smallest n whose tail mass is
    below 1e-10.
    """
    if not 0 < p <= 1:
        raise InvalidInputError("delivery probability must be in (0, 1]")
    denom = lam * (1 - p) + p
    ratio = lam * (1 - p) / denom
    if n_max is None:
        n_max = 0
        if ratio > 0:
            # tail beyond n is ratio**(n+1)
            n_max = max(0, math.ceil(math.log(1e-10) / math.log(ratio)) - 1)
    n = np.arange(n_max + 1)
    return (p / denom) * ratio ** n


@dataclass
class FractionalProgram:
    """Sum-of-ratios program over a flattened policy vector ``x = mu.ravel()``.

    Per user ``i``: ``O_i = lam_i (1/p_i - 1)``, ``d_i = lam_i E[mu P_i]``,
    ``f_i = lam_i (1 - p_i) + p_i`` and the power constraint reads
    ``sum_i d_i/f_i <= pbar``. ``g_h`` are the per-state simplex equalities.
    """

    model: ChannelModel
    streams: tuple[StreamConfig, ...]
    pbar: float
    scheme: Scheme
    f: RateFunction
    states: list[JointChannelState] = field(repr=False)
    masks: tuple[int, ...]
    subset_powers: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)
    a_mat: np.ndarray = field(repr=False)
    d_mat: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)

    @property
    def n_users(self) -> int:
        return len(self.streams)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_subsets(self) -> int:
        return len(self.masks)

    @property
    def size(self) -> int:
        return self.n_states * self.n_subsets

    def uniform_point(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.n_subsets)

    def as_policy(self, x) -> CoSrpPolicy:
        return CoSrpPolicy(np.asarray(x, dtype=float).reshape(self.n_states, self.n_subsets).copy(),
                           self.masks, self.scheme)

    def p(self, x) -> np.ndarray:
        return self.a_mat @ x

    def clamped_p(self, x) -> tuple[np.ndarray, bool]:
        p = self.p(x)
        return np.maximum(p, P_CLAMP), bool(np.any(p < P_CLAMP))

    def o(self, x) -> np.ndarray:
        p, _ = self.clamped_p(x)
        return self.lam * (1.0 / p - 1.0)

    def grad_o(self, x) -> np.ndarray:
        """Rows are gradients of O_i; the clamp freezes p below P_CLAMP."""
        raw = self.p(x)
        p = np.maximum(raw, P_CLAMP)
        scale = np.where(raw >= P_CLAMP, -self.lam / p ** 2, 0.0)
        return scale[:, None] * self.a_mat

    def d(self, x) -> np.ndarray:
        return self.lam * (self.d_mat @ x)

    def grad_d(self) -> np.ndarray:
        return self.lam[:, None] * self.d_mat

    def fden(self, x) -> np.ndarray:
        return self.lam + (1.0 - self.lam) * self.p(x)

    def grad_f(self) -> np.ndarray:
        return (1.0 - self.lam)[:, None] * self.a_mat

    def g(self, x) -> np.ndarray:
        return np.asarray(x).reshape(self.n_states, self.n_subsets).sum(axis=1) - 1.0

    def objective(self, x) -> float:
        return float(self.w @ self.o(x))

    def power(self, x) -> float:
        return float(np.sum(self.d(x) / self.fden(x)))


def build_program(
    model: ChannelModel,
    streams: Sequence[StreamConfig],
    pbar: float,
    scheme: Scheme = Scheme.NOMA,
    f: RateFunction = RateFunction.LOG1P,
) -> FractionalProgram:
    if not pbar > 0:
        raise InvalidInputError(f"power budget must be positive, got {pbar}")
    streams = tuple(streams)
    if model.n_users != len(streams):
        raise InvalidInputError("channel model and streams disagree on the number of users")
    states = enumerate_joint_states(model)
    masks = subset_masks(len(streams), scheme is Scheme.TDMA)
    powers = subset_power_table(states, masks, streams, f)
    probs = np.array([st.prob for st in states])
    n = len(streams)
    member = np.array([[(m >> i) & 1 for m in masks] for i in range(n)], dtype=float)
    a_mat = (probs[None, :, None] * member[:, None, :]).reshape(n, -1)
    d_mat = (probs[None, :, None] * member[:, None, :] * powers.transpose(2, 0, 1)).reshape(n, -1)
    return FractionalProgram(
        model=model,
        streams=streams,
        pbar=float(pbar),
        scheme=scheme,
        f=f,
        states=states,
        masks=masks,
        subset_powers=powers,
        probs=probs,
        a_mat=a_mat,
        d_mat=d_mat,
        lam=np.array([s.lam for s in streams]),
        w=np.array([s.weight for s in streams]),
    )


# -- policy file format -----------------------------------------------------

def format_policy(policy: CoSrpPolicy, model: ChannelModel) -> str:
    n = model.n_users
    states = enumerate_joint_states(model)
    buf = io.StringIO()
    buf.write("state_index," + ",".join(f"gain_{i + 1}" for i in range(n)) + ",subset_mask,probability\n")
    for s, st in enumerate(states):
        gains = ",".join(repr(g) for g in st.gains)
        for m, mask in enumerate(policy.masks):
            buf.write(f"{s},{gains},{mask},{policy.mu[s, m]:.17g}\n")
    return buf.getvalue()


def parse_policy(text: str, model: ChannelModel, scheme: Scheme | None = None, tol: float = 1e-6) -> CoSrpPolicy:
    """Read a policy table; lines starting with ``#`` and blank lines are skipped.

    A footer line containing ``=`` (solution files) ends the table.
    """
    n = model.n_users
    states = enumerate_joint_states(model)
    rows: dict[tuple[int, int], float] = {}
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            break
        if not header_seen:
            if not line.startswith("state_index"):
                raise PolicyFormatError("expected header row starting with 'state_index'", lineno)
            header_seen = True
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != n + 3:
            raise PolicyFormatError(f"expected {n + 3} fields, got {len(parts)}", lineno)
        try:
            s = int(parts[0])
            gains = tuple(float(g) for g in parts[1:1 + n])
            mask = int(parts[1 + n])
            prob = float(parts[2 + n])
        except ValueError as exc:
            raise PolicyFormatError(str(exc), lineno) from None
        if not 0 <= s < len(states):
            raise PolicyFormatError(f"state index {s} out of range", lineno)
        if not np.allclose(gains, states[s].gains, rtol=1e-12, atol=0):
            raise PolicyFormatError(f"gains {gains} do not match state {s}", lineno)
        if not 0 <= mask < (1 << n):
            raise PolicyFormatError(f"subset mask {mask} out of range", lineno)
        if (s, mask) in rows:
            raise PolicyFormatError(f"duplicate entry for state {s}, mask {mask}", lineno)
        if prob < 0 or prob > 1:
            raise PolicyFormatError(f"probability {prob} outside [0, 1]", lineno)
        rows[(s, mask)] = prob
    if not header_seen:
        raise PolicyFormatError("empty policy file")
    if scheme is None:
        # a file listing exactly the TDMA subsets was written for TDMA
        listed = {m for _, m in rows}
        scheme = Scheme.TDMA if n > 1 and listed == set(subset_masks(n, True)) else Scheme.NOMA
    masks = subset_masks(n, scheme is Scheme.TDMA)
    mu = np.zeros((len(states), len(masks)))
    for (s, mask), prob in rows.items():
        if mask not in masks:
            if prob > 0:
                raise PolicyFormatError(f"mask {mask} not allowed under {scheme.value}")
            continue
        mu[s, masks.index(mask)] = prob
    sums = mu.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise PolicyFormatError(f"probabilities of state {bad[0]} sum to {sums[bad[0]]:.9g}, not 1")
    return CoSrpPolicy(mu, masks, scheme)
