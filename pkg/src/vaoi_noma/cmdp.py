"""Constrained MDP over (capped VAoI, joint channel) states.

The power constraint is priced by a Lagrange multiplier ``theta``; for each
price a discounted value iteration gives a deterministic policy, which is
then evaluated exactly on its induced Markov chain. Bisection on ``theta``
meets the average power budget.

Timing inside a slot: the state holds the VAoI left by the previous slot and
the current channel. The action is chosen before this slot's arrivals are
seen; arrivals then land, scheduled users with a packet are served, and the
stage cost is the end-of-slot weighted VAoI plus ``theta`` times the power
charged. A user whose queue is empty (VAoI 0, no arrival) cannot be served
and costs no power; the others pay as set by ``MdpConfig.power_accounting``.
"""
from __future__ import annotations

import io
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .cosrp import CoSrpPolicy, Scheme
from .errors import ConvergenceError, InvalidInputError, StateSpaceTooLargeError
from .model import (
    ChannelModel,
    PowerAccounting,
    RateFunction,
    StreamConfig,
    enumerate_joint_states,
    charged_power,
    mask_to_action,
    noma_powers,
    subset_masks,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MdpConfig:
    delta_max: int = 20
    gamma: float = 0.99
    vi_tol: float = 1e-6
    max_vi_iter: int = 200_000
    state_cap: int = 1_000_000
    theta_hi_init: float = 1.0
    eps_power: float | None = None  # None: 1e-4 * pbar, floored at 1e-6
    max_bisect: int = 60
    bracket_tol: float = 1e-10
    eval_tol: float = 1e-12
    max_eval_iter: int = 1_000_000
    power_accounting: PowerAccounting = PowerAccounting.CODEWORD

    def __post_init__(self):
        if self.delta_max < 1:
            raise InvalidInputError("delta_max must be at least 1")
        if not 0 < self.gamma < 1:
            raise InvalidInputError("gamma must lie in (0, 1)")
        if not self.vi_tol > 0:
            raise InvalidInputError("vi_tol must be positive")

    def power_tol(self, pbar: float) -> float:
        if self.eps_power is not None:
            return self.eps_power
        return max(1e-4 * pbar, 1e-6)


@dataclass(frozen=True)
class MdpState:
    delta: tuple[int, ...]
    channel_index: int


class StateSpace:
    """Dense tabulation of the truncated MDP.

    Flat state index is ``delta_index * n_channel + channel_index`` where
    ``delta_index`` enumerates VAoI vectors with user 0 as most significant
    digit. Tables are indexed ``[delta_index, channel_index, action]``.
    """

    def __init__(self, model: ChannelModel, streams: Sequence[StreamConfig], config: MdpConfig = MdpConfig(),
                 scheme: Scheme = Scheme.NOMA, f: RateFunction = RateFunction.LOG1P):
        self.model = model
        self.streams = tuple(streams)
        self.config = config
        self.scheme = scheme
        self.f = f
        n = len(self.streams)
        if model.n_users != n:
            raise InvalidInputError("channel model and streams disagree on the number of users")
        self.n_users = n
        self.n_delta = (config.delta_max + 1) ** n
        self.channel_states = enumerate_joint_states(model)
        self.n_channel = len(self.channel_states)
        if self.n_delta * self.n_channel > config.state_cap:
            raise StateSpaceTooLargeError(
                f"{self.n_delta * self.n_channel} MDP states exceed the cap of {config.state_cap}; "
                "reduce delta_max, the number of users or gain levels"
            )
        self.masks = subset_masks(n, scheme is Scheme.TDMA)
        self.channel_probs = np.array([st.prob for st in self.channel_states])
        self.lam = np.array([s.lam for s in self.streams])
        self.w = np.array([s.weight for s in self.streams])
        self.deltas = np.array(list(itertools.product(range(config.delta_max + 1), repeat=n)), dtype=int)
        self._radix = (config.delta_max + 1) ** np.arange(n - 1, -1, -1)
        self._build()

    @property
    def n_states(self) -> int:
        return self.n_delta * self.n_channel

    @property
    def n_actions(self) -> int:
        return len(self.masks)

    def delta_index(self, delta) -> int:
        return int(np.asarray(delta) @ self._radix)

    def state_index(self, state: MdpState) -> int:
        return self.delta_index(state.delta) * self.n_channel + state.channel_index

    def state_at(self, index: int) -> MdpState:
        d, s = divmod(index, self.n_channel)
        return MdpState(tuple(int(v) for v in self.deltas[d]), s)

    def _build(self):
        n = self.n_users
        cap = self.config.delta_max
        arrivals = np.array(list(itertools.product((0, 1), repeat=n)), dtype=int)
        a_prob = np.prod(np.where(arrivals == 1, self.lam, 1.0 - self.lam), axis=1)
        action_bits = np.array([mask_to_action(m, n) for m in self.masks], dtype=int)
        # per-user codeword powers for every channel state and subset: (S, 2^N, N)
        self.user_power = np.array([
            [noma_powers(st.gains, mask_to_action(m, n), self.streams, self.f).powers for m in range(1 << n)]
            for st in self.channel_states
        ])
        self.total_power = self.user_power.sum(axis=-1)
        d = self.deltas[:, None, None, :]
        u = action_bits[None, :, None, :]
        a = arrivals[None, None, :, :]
        nxt = np.where(u == 1, 0, np.minimum(d + a, cap))
        served = (u == 1) & ((d > 0) | (a == 1))
        served_mask = (served * (1 << np.arange(n))).sum(axis=-1)
        self.arrival_prob = a_prob
        self.next_delta = (nxt * self._radix).sum(axis=-1)  # (ND, M, A)
        self.next_values = nxt  # (ND, M, A, N)
        self.served_mask = served_mask  # (ND, M, A)
        self.vaoi_cost = np.einsum("dman,n,a->dm", nxt.astype(float), self.w, a_prob)
        self.user_vaoi = np.einsum("dman,a->dmn", nxt.astype(float), a_prob)
        # expected power over arrivals: (ND, S, M)
        if self.config.power_accounting is PowerAccounting.SERVED:
            self.power_cost = np.einsum("sdma,a->dsm", self.total_power[:, served_mask], a_prob)
        else:
            sched = self.user_power[:, list(self.masks)]  # (S, M, N)
            self.power_cost = np.einsum("smn,dman,a->dsm", sched, served.astype(float), a_prob)

    def continuation(self, values: np.ndarray) -> np.ndarray:
        """E[V(s')] for every (delta, action): shape (ND, M)."""
        ev = values @ self.channel_probs
        return np.einsum("dma,a->dm", ev[self.next_delta], self.arrival_prob)

    def q_table(self, values: np.ndarray, theta: float) -> np.ndarray:
        cont = self.continuation(values)
        return (self.vaoi_cost[:, None, :] + theta * self.power_cost
                + self.config.gamma * cont[:, None, :])


@dataclass
class ValueFunction:
    values: np.ndarray  # (n_delta, n_channel)
    theta: float
    gamma: float
    iterations: int = 0
    diffs: list = field(default_factory=list, repr=False)
    bellman_residual: float = math.nan


@dataclass
class CmdpPolicy:
    """Action table: ``actions[delta_index, channel_index]`` indexes ``masks``.

    With ``alt_actions`` set, every slot independently takes the alternative
    action with probability ``mix``; this is how two greedy policies at the
    same price are blended to meet the budget with equality.
    """

    actions: np.ndarray
    masks: tuple[int, ...]
    scheme: Scheme = Scheme.NOMA
    alt_actions: np.ndarray | None = None
    mix: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.mix <= 1.0:
            raise InvalidInputError("mixing probability must lie in [0, 1]")
        if self.mix > 0 and self.alt_actions is None:
            raise InvalidInputError("a mixing probability needs alternative actions")

    @property
    def randomized(self) -> bool:
        return self.alt_actions is not None and 0.0 < self.mix

    def mask_at(self, delta_index: int, channel_index: int) -> int:
        return self.masks[self.actions[delta_index, channel_index]]

    def alt_mask_at(self, delta_index: int, channel_index: int) -> int:
        table = self.actions if self.alt_actions is None else self.alt_actions
        return self.masks[table[delta_index, channel_index]]

    def probabilities(self) -> np.ndarray:
        probs = np.zeros(self.actions.shape + (len(self.masks),))
        np.put_along_axis(probs, self.actions[..., None], 1.0 - self.mix, axis=-1)
        if self.alt_actions is not None and self.mix > 0:
            alt = np.zeros_like(probs)
            np.put_along_axis(alt, self.alt_actions[..., None], self.mix, axis=-1)
            probs += alt
        return probs


@dataclass
class PolicyEvaluation:
    vaoi: float
    power: float
    per_user_vaoi: np.ndarray
    tail_mass: float
    distribution: np.ndarray = field(repr=False)
    reducible: bool = False
    class_averages: list = field(default_factory=list)
    iterations: int = 0


@dataclass
class CmdpSolution:
    policy: CmdpPolicy
    average_vaoi: float
    average_power: float
    theta_star: float
    value_function: ValueFunction
    evaluation: PolicyEvaluation
    slack: bool = False
    converged: bool = True
    trace: list = field(default_factory=list)

    @property
    def tail_mass(self) -> float:
        return self.evaluation.tail_mass

    @property
    def reliable(self) -> bool:
        return self.evaluation.tail_mass <= 1e-6


def expected_stage_cost(
    state: MdpState,
    u: Sequence[int],
    theta: float,
    model: ChannelModel,
    streams: Sequence[StreamConfig],
    delta_max: int,
    f: RateFunction = RateFunction.LOG1P,
    accounting: PowerAccounting = PowerAccounting.CODEWORD,
) -> float:
    """Expected end-of-slot weighted VAoI plus priced power for one state-action pair.

    Computed by direct enumeration of arrivals; the tabulated path in
    :class:`StateSpace` is checked against this.
    """
    n = len(streams)
    h = enumerate_joint_states(model)[state.channel_index].gains
    total = 0.0
    for arr in itertools.product((0, 1), repeat=n):
        prob = math.prod(s.lam if a else 1.0 - s.lam for s, a in zip(streams, arr))
        if prob == 0:
            continue
        served = [int(u[i] and (state.delta[i] > 0 or arr[i])) for i in range(n)]
        nxt = [0 if u[i] else min(state.delta[i] + arr[i], delta_max) for i in range(n)]
        cost = sum(s.weight * d for s, d in zip(streams, nxt))
        cost += theta * charged_power(h, u, served, streams, f, accounting)
        total += prob * cost
    return total


def _greedy(q: np.ndarray) -> np.ndarray:
    """Smallest action index among near-minimisers."""
    qmin = q.min(axis=-1, keepdims=True)
    near = q <= qmin + 1e-12 * np.maximum(1.0, np.abs(qmin))
    return np.argmax(near, axis=-1)


def value_iteration(
    theta: float,
    space: StateSpace,
    v0: np.ndarray | None = None,
) -> tuple[ValueFunction, CmdpPolicy]:
    """Discounted value iteration from ``v0`` (zeros by default) to sup-norm change < vi_tol."""
    cfg = space.config
    values = np.zeros((space.n_delta, space.n_channel)) if v0 is None else np.array(v0, dtype=float)
    diffs = []
    for it in range(1, cfg.max_vi_iter + 1):
        new = space.q_table(values, theta).min(axis=-1)
        diff = float(np.max(np.abs(new - values)))
        diffs.append(diff)
        values = new
        if diff < cfg.vi_tol:
            break
    else:
        raise ConvergenceError(f"value iteration did not converge in {cfg.max_vi_iter} sweeps",
                               best=values, residual=diffs[-1], trace=diffs)
    q = space.q_table(values, theta)
    residual = float(np.max(np.abs(values - q.min(axis=-1))))
    vf = ValueFunction(values, float(theta), cfg.gamma, it, diffs, residual)
    return vf, CmdpPolicy(_greedy(q), space.masks, space.scheme)


def cosrp_action_probabilities(policy: CoSrpPolicy, space: StateSpace) -> np.ndarray:
    """A channel-only policy as (n_delta, n_channel, n_actions) action probabilities."""
    probs = np.zeros((space.n_channel, space.n_actions))
    for m, mask in enumerate(policy.masks):
        probs[:, space.masks.index(mask)] += policy.mu[:, m]
    return np.broadcast_to(probs, (space.n_delta,) + probs.shape).copy()


def _stationary(trans: np.ndarray, start: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    # lazy chain: same stationary law, aperiodic
    lazy = 0.5 * (trans + np.eye(trans.shape[0]))
    dist = start
    for it in range(1, max_iter + 1):
        new = dist @ lazy
        if np.sum(np.abs(new - dist)) <= tol:
            return new / new.sum(), it
        dist = new
    raise ConvergenceError(f"stationary distribution did not converge in {max_iter} steps", best=dist)


def evaluate_policy(policy, space: StateSpace) -> PolicyEvaluation:
    """Exact long-run averages of a stationary policy on its induced chain.

    ``policy`` is a :class:`CmdpPolicy` or an array of action probabilities
    shaped (n_delta, n_channel, n_actions). Averages are those reached from
    the all-zero VAoI start; if the chain has several closed classes each
    class's own averages are reported as well.
    """
    probs = policy.probabilities() if isinstance(policy, CmdpPolicy) else np.asarray(policy, dtype=float)
    weights = probs * space.channel_probs[None, :, None]  # (ND, S, M)
    act = weights.sum(axis=1)  # (ND, M), channel marginalised
    nd = space.n_delta
    trans = np.zeros((nd, nd))
    flow = act[:, :, None] * space.arrival_prob[None, None, :]
    rows = np.broadcast_to(np.arange(nd)[:, None, None], flow.shape)
    np.add.at(trans, (rows.ravel(), space.next_delta.ravel()), flow.ravel())
    r_user = np.einsum("dm,dmn->dn", act, space.user_vaoi)
    r_vaoi = r_user @ space.w
    r_power = np.einsum("dsm,dsm->d", weights, space.power_cost)

    cfg = space.config
    start = np.zeros(nd)
    start[0] = 1.0
    dist, iters = _stationary(trans, start, cfg.eval_tol, cfg.max_eval_iter)

    n_comp, labels = connected_components(csr_matrix(trans > 0), directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = labels == c
        if trans[members][:, ~members].sum() <= 1e-15:
            closed.append(np.flatnonzero(members))
    class_avgs = []
    if len(closed) > 1:
        for members in closed:
            sub = trans[np.ix_(members, members)]
            sub = sub / sub.sum(axis=1, keepdims=True)
            d_sub, _ = _stationary(sub, np.full(len(members), 1.0 / len(members)), cfg.eval_tol, cfg.max_eval_iter)
            class_avgs.append(dict(states=members, vaoi=float(d_sub @ r_vaoi[members]),
                                   power=float(d_sub @ r_power[members])))
        log.warning("policy induces %d closed classes; reporting averages from the zero-VAoI start", len(closed))
    at_cap = np.any(space.deltas == cfg.delta_max, axis=1)
    return PolicyEvaluation(
        vaoi=float(dist @ r_vaoi),
        power=float(dist @ r_power),
        per_user_vaoi=dist @ r_user,
        tail_mass=float(dist[at_cap].sum()),
        distribution=dist,
        reducible=len(closed) > 1,
        class_averages=class_avgs,
        iterations=iters,
    )


def _solve_at(theta, space, v0=None):
    vf, pol = value_iteration(theta, space, v0)
    return vf, pol, evaluate_policy(pol, space)


def bisect_theta(pbar: float, space: StateSpace) -> CmdpSolution:
    """Bisection on the power price; returns the deterministic policy on the feasible side."""
    if not pbar > 0:
        raise InvalidInputError("power budget must be positive")
    cfg = space.config
    tol = cfg.power_tol(pbar)
    trace = []

    vf, pol, ev = _solve_at(0.0, space)
    trace.append((0.0, ev.vaoi, ev.power))
    if ev.power <= pbar + tol:
        return CmdpSolution(pol, ev.vaoi, ev.power, 0.0, vf, ev, slack=True, trace=trace)

    lo, hi = 0.0, cfg.theta_hi_init
    best = _solve_at(hi, space, vf.values)
    trace.append((hi, best[2].vaoi, best[2].power))
    while best[2].power > pbar:
        hi *= 2.0
        if hi > 2.0 ** 60:
            raise ConvergenceError(f"power stays above {pbar} for every theta up to 2^60")
        best = _solve_at(hi, space, best[0].values)
        trace.append((hi, best[2].vaoi, best[2].power))
    low = (vf, pol, ev)  # power above the budget
    converged = abs(best[2].power - pbar) < tol
    for _ in range(cfg.max_bisect):
        if converged or hi - lo < cfg.bracket_tol * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        cur = _solve_at(mid, space, best[0].values)
        trace.append((mid, cur[2].vaoi, cur[2].power))
        if cur[2].power > pbar + tol:
            lo, low = mid, cur
        else:
            hi, best = mid, cur
            converged = abs(cur[2].power - pbar) < tol
    vf, pol, ev = best
    if not converged:
        # power jumps at the price: blend the greedy policies on both sides
        pol, ev, converged = _blend(pbar, tol, pol, low[1], space)
    return CmdpSolution(pol, ev.vaoi, ev.power, hi, vf, ev, slack=False, converged=converged, trace=trace)


def _blend(pbar: float, tol: float, feasible: CmdpPolicy, costly: CmdpPolicy, space: StateSpace):
    """Mixture of two deterministic policies whose average power meets ``pbar``.

    Average power is continuous in the mixing probability, so bisection on
    it finds the budget; the feasible side is kept.
    """
    def make(q):
        return CmdpPolicy(feasible.actions, feasible.masks, feasible.scheme, alt_actions=costly.actions, mix=q)

    lo, hi = 0.0, 1.0
    best = (feasible, evaluate_policy(feasible, space))
    for _ in range(space.config.max_bisect):
        q = 0.5 * (lo + hi)
        cand = make(q)
        ev = evaluate_policy(cand, space)
        if ev.power > pbar + tol:
            hi = q
        else:
            lo, best = q, (cand, ev)
            if abs(ev.power - pbar) < tol:
                return cand, ev, True
    log.warning("policy blend stopped at power %.6g for budget %.6g", best[1].power, pbar)
    return best[0], best[1], False


@dataclass
class ThresholdViolation:
    axis: str  # "delta" or "gain"
    user: int
    delta_index: int
    channel_index: int
    other_action: int
    gap: float


def check_threshold(vf: ValueFunction, space: StateSpace, tol: float = 1e-9) -> list[ThresholdViolation]:
    """Scan the Q-table for breaks of the transmit-threshold structure.

    For every user ``i`` and every fixed choice of the other users' actions:
    if serving ``i`` is strictly better at some VAoI (or gain level), it must
    stay at least as good (within ``tol``) at the next VAoI (or any larger
    gain), with everything else held fixed.
    """
    q = space.q_table(vf.values, vf.theta)
    n = space.n_users
    cap = space.config.delta_max
    violations = []
    mask_pos = {m: k for k, m in enumerate(space.masks)}
    levels = space.model.n_levels
    level_idx = np.array([st.level_indices for st in space.channel_states])
    radix = space._radix
    for i in range(n):
        bit = 1 << i
        for m_without in space.masks:
            if m_without & bit or (m_without | bit) not in mask_pos:
                continue
            diff = q[:, :, mask_pos[m_without | bit]] - q[:, :, mask_pos[m_without]]  # (ND, S)
            # along delta_i
            lower = space.deltas[:, i] < cap
            for d in np.flatnonzero(lower):
                up = d + radix[i]
                bad = (diff[d] < 0) & (diff[up] >= tol)
                for s in np.flatnonzero(bad):
                    violations.append(ThresholdViolation("delta", i, int(d), int(s), m_without, float(diff[up, s])))
            # along h_i, comparing every larger level
            for s in range(space.n_channel):
                for k in range(level_idx[s, i] + 1, levels):
                    target = level_idx[s].copy()
                    target[i] = k
                    s2 = int(np.flatnonzero(np.all(level_idx == target, axis=1))[0])
                    bad = (diff[:, s] < 0) & (diff[:, s2] >= tol)
                    for d in np.flatnonzero(bad):
                        violations.append(ThresholdViolation("gain", i, int(d), int(s), m_without, float(diff[d, s2])))
    return violations


def check_value_monotone(vf: ValueFunction, space: StateSpace, tol: float = 1e-9) -> list[tuple[int, int, int]]:
    """(user, delta_index, channel_index) where V drops by more than tol when Delta_i grows by one."""
    out = []
    for i in range(space.n_users):
        lower = np.flatnonzero(space.deltas[:, i] < space.config.delta_max)
        drop = vf.values[lower] - vf.values[lower + space._radix[i]]
        for k, s in zip(*np.nonzero(drop > tol)):
            out.append((i, int(lower[k]), int(s)))
    return out


def check_contraction(vf: ValueFunction, slack: float = 1e-12) -> bool:
    """Successive sup-norm changes shrink by at least gamma after the first sweep."""
    d = vf.diffs
    return all(d[k + 1] <= vf.gamma * d[k] + slack for k in range(len(d) - 1))


# -- dumps ------------------------------------------------------------------

def format_policy_dump(policy: CmdpPolicy, space: StateSpace) -> str:
    """One row per state; randomized policies add ``alt_mask,alt_prob`` columns."""
    n = space.n_users
    extra = ["alt_mask", "alt_prob"] if policy.randomized else []
    buf = io.StringIO()
    buf.write(",".join([f"delta_{i + 1}" for i in range(n)] + [f"gain_{i + 1}" for i in range(n)]
                       + ["action_mask"] + extra) + "\n")
    for d, delta in enumerate(space.deltas):
        for s, st in enumerate(space.channel_states):
            row = [str(v) for v in delta] + [repr(g) for g in st.gains] + [str(policy.mask_at(d, s))]
            if extra:
                row += [str(policy.alt_mask_at(d, s)), f"{policy.mix:.17g}"]
            buf.write(",".join(row) + "\n")
    return buf.getvalue()


def format_value_dump(vf: ValueFunction, space: StateSpace) -> str:
    n = space.n_users
    buf = io.StringIO()
    buf.write(",".join([f"delta_{i + 1}" for i in range(n)] + [f"gain_{i + 1}" for i in range(n)] + ["value"]) + "\n")
    for d, delta in enumerate(space.deltas):
        for s, st in enumerate(space.channel_states):
            row = [str(v) for v in delta] + [repr(g) for g in st.gains] + [f"{vf.values[d, s]:.12g}"]
            buf.write(",".join(row) + "\n")
    return buf.getvalue()


def parse_policy_dump(text: str, space: StateSpace) -> CmdpPolicy:
    from .errors import PolicyFormatError

    n = space.n_users
    actions = np.full((space.n_delta, space.n_channel), -1, dtype=int)
    alt = np.full_like(actions, -1)
    mix = None
    gain_index = {st.gains: st.index for st in space.channel_states}
    header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header:
            if not line.startswith("delta_1"):
                raise PolicyFormatError("expected header row starting with 'delta_1'", lineno)
            header = True
            continue
        parts = line.split(",")
        if len(parts) not in (2 * n + 1, 2 * n + 3):
            raise PolicyFormatError(f"expected {2 * n + 1} or {2 * n + 3} fields, got {len(parts)}", lineno)
        try:
            delta = [int(v) for v in parts[:n]]
            gains = tuple(float(v) for v in parts[n:2 * n])
            mask = int(parts[2 * n])
            alt_mask = int(parts[2 * n + 1]) if len(parts) > 2 * n + 1 else mask
            q = float(parts[2 * n + 2]) if len(parts) > 2 * n + 1 else 0.0
        except ValueError as exc:
            raise PolicyFormatError(str(exc), lineno) from None
        if mix is None:
            mix = q
        elif q != mix:
            raise PolicyFormatError(f"alt_prob {q} differs from {mix} on earlier rows", lineno)
        if not 0.0 <= q <= 1.0:
            raise PolicyFormatError(f"alt_prob {q} outside [0, 1]", lineno)
        if any(not 0 <= v <= space.config.delta_max for v in delta):
            raise PolicyFormatError(f"VAoI {delta} outside 0..{space.config.delta_max}", lineno)
        if gains not in gain_index:
            raise PolicyFormatError(f"unknown channel gains {gains}", lineno)
        if mask not in space.masks:
            raise PolicyFormatError(f"action mask {mask} not allowed under {space.scheme.value}", lineno)
        if alt_mask not in space.masks:
            raise PolicyFormatError(f"alt mask {alt_mask} not allowed under {space.scheme.value}", lineno)
        where = space.delta_index(delta), gain_index[gains]
        if actions[where] >= 0:
            raise PolicyFormatError(f"duplicate row for VAoI {delta}, gains {gains}", lineno)
        actions[where] = space.masks.index(mask)
        alt[where] = space.masks.index(alt_mask)
    if not header:
        raise PolicyFormatError("empty policy dump")
    if np.any(actions < 0):
        raise PolicyFormatError("policy dump does not cover every state")
    if not mix:
        return CmdpPolicy(actions, space.masks, space.scheme)
    return CmdpPolicy(actions, space.masks, space.scheme, alt_actions=alt, mix=mix)
