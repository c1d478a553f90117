"""Slot-level Monte Carlo simulator for the multi-stream VAoI system.

Each slot consumes ``2N + 1`` uniforms from the replication's generator in a
fixed order: one arrival draw per user, one channel draw per user, then one
draw the policy may use to randomize. Policies that never look at the VAoI
(channel-only, constant, periodic) are run in vectorized chunks; the result
is identical to the slot-by-slot loop used for state-feedback policies.

Within a slot: arrivals land, the channel is drawn, the policy picks a
subset from the VAoI left by the previous slot and the current channel,
scheduled users with an empty queue are dropped, the rest are served and
their VAoI resets. VAoI is recorded at the end of the slot.
"""
from __future__ import annotations

import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cmdp import CmdpPolicy
from .cosrp import CoSrpPolicy
from .errors import InvalidInputError
from .model import (
    ChannelModel,
    PowerAccounting,
    RateFunction,
    StreamConfig,
    enumerate_joint_states,
    mask_to_action,
    noma_powers,
)

log = logging.getLogger(__name__)

WORKERS_ENV = "VAOI_WORKERS"
TRACE_LIMIT = 10_000
_CHUNK = 1 << 16
_N_BATCHES = 20


@dataclass(frozen=True)
class SimConfig:
    horizon: int
    warmup: int | None = None  # None: 1% of the horizon
    seed: int = 0
    replications: int = 1
    hist_max: int = 64  # last histogram bin collects VAoI >= hist_max
    trace_slots: int = 0
    power_accounting: PowerAccounting = PowerAccounting.CODEWORD

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidInputError("horizon must be positive")
        if self.warmup is not None and not 0 <= self.warmup < self.horizon:
            raise InvalidInputError("need horizon > warmup >= 0")
        if self.replications < 1:
            raise InvalidInputError("replications must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")
        if self.hist_max < 1:
            raise InvalidInputError("hist_max must be at least 1")
        if not 0 <= self.trace_slots <= TRACE_LIMIT:
            raise InvalidInputError(f"trace_slots must lie in [0, {TRACE_LIMIT}]")

    @property
    def warmup_slots(self) -> int:
        return self.horizon // 100 if self.warmup is None else self.warmup

    @property
    def slots(self) -> int:
        return self.horizon - self.warmup_slots


@dataclass
class SystemState:
    """Newest version at the base station (z) and at each user (y)."""

    z: list[int]
    y: list[int]
    channel_index: int = 0

    @classmethod
    def initial(cls, n_users: int) -> "SystemState":
        return cls([0] * n_users, [0] * n_users)

    @property
    def delta(self) -> tuple[int, ...]:
        return tuple(zi - yi for zi, yi in zip(self.z, self.y))


# -- policy adapters ----------------------------------------------------------

class PolicyAdapter:
    """Turns simulator observations into a transmission subset.

    ``decide`` sees the slot index, the VAoI vector left by the previous
    slot, the joint channel index and one uniform draw. ``act`` then clears
    users whose queue is empty. Adapters with ``oblivious = True`` ignore
    the VAoI and also provide the vectorized ``decide_many``.
    """

    oblivious = False

    def __init__(self, n_users: int):
        self.n_users = n_users

    def decide(self, t: int, delta_prev: tuple[int, ...], channel_index: int, r: float) -> int:
        raise NotImplementedError

    def decide_many(self, t: np.ndarray, channel_index: np.ndarray, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def act(self, t, delta_prev, channel_index, occupied_mask: int, r: float) -> int:
        return self.decide(t, delta_prev, channel_index, r) & occupied_mask


class CoSrpAdapter(PolicyAdapter):
    """Samples the subset from the policy row of the current channel state."""

    oblivious = True

    def __init__(self, policy: CoSrpPolicy, n_users: int):
        super().__init__(n_users)
        cum = np.cumsum(policy.mu, axis=1)
        cum[:, -1] = 1.0  # rounding in the last bucket
        self.cum = cum
        self.masks = np.asarray(policy.masks, dtype=np.int64)

    def decide(self, t, delta_prev, channel_index, r):
        k = int(np.searchsorted(self.cum[channel_index], r, side="right"))
        return int(self.masks[min(k, len(self.masks) - 1)])

    def decide_many(self, t, channel_index, r):
        rows = self.cum[channel_index]
        k = (rows <= r[:, None]).sum(axis=1)
        return self.masks[np.minimum(k, len(self.masks) - 1)]


class CmdpAdapter(PolicyAdapter):
    """Table lookup with each VAoI capped at the truncation level.

    A blended policy uses the slot's policy draw: below ``mix`` the
    alternative table is read.
    """

    def __init__(self, policy: CmdpPolicy, n_users: int, delta_max: int):
        super().__init__(n_users)
        masks = np.asarray(policy.masks, dtype=np.int64)
        self.table = masks[policy.actions].tolist()
        self.alt_table = masks[policy.alt_actions].tolist() if policy.randomized else self.table
        self.mix = policy.mix if policy.randomized else 0.0
        self.delta_max = delta_max
        self.radix = [(delta_max + 1) ** (n_users - 1 - i) for i in range(n_users)]

    def decide(self, t, delta_prev, channel_index, r):
        cap = self.delta_max
        d = sum(min(v, cap) * b for v, b in zip(delta_prev, self.radix))
        table = self.alt_table if r < self.mix else self.table
        return table[d][channel_index]


class FixedAdapter(PolicyAdapter):
    """Same subset every slot."""

    oblivious = True

    def __init__(self, mask: int, n_users: int):
        super().__init__(n_users)
        if not 0 <= mask < (1 << n_users):
            raise InvalidInputError(f"subset mask {mask} out of range")
        self.mask = mask

    def decide(self, t, delta_prev, channel_index, r):
        return self.mask

    def decide_many(self, t, channel_index, r):
        return np.full(len(t), self.mask, dtype=np.int64)


def always_transmit(n_users: int) -> FixedAdapter:
    return FixedAdapter((1 << n_users) - 1, n_users)


def never_transmit(n_users: int) -> FixedAdapter:
    return FixedAdapter(0, n_users)


class PeriodicAdapter(PolicyAdapter):
    """Schedules every user in slots ``period - 1, 2 * period - 1, ...``."""

    oblivious = True

    def __init__(self, period: int, n_users: int = 1):
        super().__init__(n_users)
        if period < 1:
            raise InvalidInputError("period must be at least 1")
        self.period = period
        self.mask = (1 << n_users) - 1

    def decide(self, t, delta_prev, channel_index, r):
        return self.mask if (t + 1) % self.period == 0 else 0

    def decide_many(self, t, channel_index, r):
        return np.where((t + 1) % self.period == 0, self.mask, 0)


def adapter_for(policy, n_users: int, delta_max: int | None = None) -> PolicyAdapter:
    if isinstance(policy, PolicyAdapter):
        return policy
    if isinstance(policy, CoSrpPolicy):
        return CoSrpAdapter(policy, n_users)
    if isinstance(policy, CmdpPolicy):
        if delta_max is None:
            delta_max = round(policy.actions.shape[0] ** (1.0 / n_users)) - 1
        return CmdpAdapter(policy, n_users, delta_max)
    raise InvalidInputError(f"cannot simulate a {type(policy).__name__}")


# -- metrics ------------------------------------------------------------------

@dataclass
class Metrics:
    per_user_vaoi: np.ndarray
    weighted_vaoi: float
    power: float
    se_per_user: np.ndarray
    se_weighted: float
    se_power: float
    slots: int  # post-warmup slots per replication
    reps: int
    seed: int
    rep_vaoi: np.ndarray = field(repr=False)  # (reps, N)
    rep_weighted: np.ndarray = field(repr=False)
    rep_power: np.ndarray = field(repr=False)
    histogram: np.ndarray = field(repr=False)  # (N, hist_max + 1) slot counts
    deliveries: np.ndarray = field(repr=False)  # (N,) per replication, summed
    trace: str | None = field(default=None, repr=False)
    # batch-means SE pooled over every replication's batches; steadier than
    # the replication SE when there are only a few replications
    batch_se_weighted: float = float("nan")
    batch_se_power: float = float("nan")

    def vaoi_pmf(self, user: int) -> np.ndarray:
        return self.histogram[user] / self.histogram[user].sum()


@dataclass
class _RunResult:
    vaoi: np.ndarray  # (N,) time averages
    power: float
    batch_vaoi: np.ndarray  # (B, N)
    batch_power: np.ndarray  # (B,)
    histogram: np.ndarray
    deliveries: np.ndarray
    trace: str | None


class _System:
    """Per-instance tables shared by both execution paths."""

    def __init__(self, model: ChannelModel, streams: Sequence[StreamConfig], f: RateFunction,
                 accounting: PowerAccounting = PowerAccounting.CODEWORD):
        n = len(streams)
        if model.n_users != n:
            raise InvalidInputError("channel model and streams disagree on the number of users")
        states = enumerate_joint_states(model)
        self.n = n
        self.lam = np.array([s.lam for s in streams])
        self.w = np.array([s.weight for s in streams])
        self.cum = np.cumsum(np.asarray(model.pmf, dtype=float), axis=1)
        self.cum[:, -1] = 1.0
        self.n_levels = model.n_levels
        self.radix = model.n_levels ** np.arange(n - 1, -1, -1)
        self.gains = [st.gains for st in states]
        self.user_power = np.array([
            [noma_powers(st.gains, mask_to_action(m, n), streams, f).powers for m in range(1 << n)]
            for st in states
        ])  # (S, 2^N, N)
        self.accounting = accounting
        self.bits = 1 << np.arange(n)

    def charge(self, chan, scheduled, served):
        """Slot power for arrays of channel indices and subset masks."""
        if self.accounting is PowerAccounting.SERVED:
            return self.user_power[chan, served].sum(axis=-1)
        keep = (np.asarray(served)[..., None] >> np.arange(self.n)) & 1
        return (self.user_power[chan, scheduled] * keep).sum(axis=-1)

    def channel(self, r: np.ndarray) -> np.ndarray:
        """Joint channel index from one uniform per user, shape (k, N) -> (k,)."""
        lvl = np.stack([np.searchsorted(self.cum[i], r[:, i], side="right") for i in range(self.n)], axis=1)
        return np.minimum(lvl, self.n_levels - 1) @ self.radix


class _Accumulator:
    def __init__(self, sys: _System, cfg: SimConfig):
        n = sys.n
        self.cfg = cfg
        self.warmup = cfg.warmup_slots
        self.slots = cfg.slots
        self.n_batch = min(_N_BATCHES, self.slots)
        self.batch_vaoi = np.zeros((self.n_batch, n))
        self.batch_power = np.zeros(self.n_batch)
        self.hist = np.zeros((n, cfg.hist_max + 1), dtype=np.int64)
        self.deliveries = np.zeros(n, dtype=np.int64)
        self.trace = io.StringIO() if cfg.trace_slots else None
        if self.trace is not None:
            self.trace.write("t," + ",".join(f"delta_{i + 1}" for i in range(n)) + ",action_mask,power\n")

    def add(self, t0: int, delta: np.ndarray, served: np.ndarray, power: np.ndarray):
        k = len(power)
        if self.trace is not None and t0 < self.cfg.trace_slots:
            for j in range(min(k, self.cfg.trace_slots - t0)):
                row = ",".join(str(int(v)) for v in delta[j])
                self.trace.write(f"{t0 + j},{row},{int(served[j])},{power[j]:.17g}\n")
        start = max(0, self.warmup - t0)
        if start >= k:
            return
        delta, served, power = delta[start:], served[start:], power[start:]
        pos = np.arange(t0 + start, t0 + k) - self.warmup
        batch = pos * self.n_batch // self.slots
        for i in range(delta.shape[1]):
            self.batch_vaoi[:, i] += np.bincount(batch, weights=delta[:, i], minlength=self.n_batch)
            self.hist[i] += np.bincount(np.minimum(delta[:, i], self.cfg.hist_max),
                                        minlength=self.cfg.hist_max + 1)
            self.deliveries[i] += np.count_nonzero((served >> i) & 1)
        self.batch_power += np.bincount(batch, weights=power, minlength=self.n_batch)

    def result(self) -> _RunResult:
        sizes = np.bincount(np.arange(self.slots) * self.n_batch // self.slots, minlength=self.n_batch)
        return _RunResult(
            vaoi=self.batch_vaoi.sum(axis=0) / self.slots,
            power=float(self.batch_power.sum() / self.slots),
            batch_vaoi=self.batch_vaoi / sizes[:, None],
            batch_power=self.batch_power / sizes,
            histogram=self.hist,
            deliveries=self.deliveries,
            trace=None if self.trace is None else self.trace.getvalue(),
        )


def _run_oblivious(sys: _System, adapter: PolicyAdapter, cfg: SimConfig, rng, acc: _Accumulator):
    n = sys.n
    carry = np.zeros(n, dtype=np.int64)
    for t0 in range(0, cfg.horizon, _CHUNK):
        k = min(_CHUNK, cfg.horizon - t0)
        r = rng.random((k, 2 * n + 1))
        arrivals = (r[:, :n] < sys.lam).astype(np.int64)
        chan = sys.channel(r[:, n:2 * n])
        t = np.arange(t0, t0 + k)
        scheduled = adapter.decide_many(t, chan, r[:, 2 * n])
        ubits = (scheduled[:, None] >> np.arange(n)) & 1
        # VAoI restarts from the running arrival count at each scheduled slot
        count = carry + np.cumsum(arrivals, axis=0)
        base = np.maximum.accumulate(np.where(ubits == 1, count, 0), axis=0)
        delta = count - base
        prev = np.vstack([carry, delta[:-1]])
        served = ((ubits == 1) & ((prev > 0) | (arrivals == 1))) @ sys.bits
        acc.add(t0, delta, served, sys.charge(chan, scheduled, served))
        carry = delta[-1].copy()


def _run_sequential(sys: _System, adapter: PolicyAdapter, cfg: SimConfig, rng, acc: _Accumulator):
    n = sys.n
    users = range(n)
    state = SystemState.initial(n)
    z, y = state.z, state.y
    for t0 in range(0, cfg.horizon, _CHUNK):
        k = min(_CHUNK, cfg.horizon - t0)
        r = rng.random((k, 2 * n + 1))
        chan = sys.channel(r[:, n:2 * n])
        arrivals = (r[:, :n] < sys.lam).tolist()
        draws = r[:, 2 * n].tolist()
        chans = chan.tolist()
        deltas = [None] * k
        scheduled = [0] * k
        served = [0] * k
        for j in range(k):
            prev = state.delta
            occupied = 0
            for i in users:
                if arrivals[j][i]:
                    z[i] += 1
                if z[i] > y[i]:
                    occupied |= 1 << i
            state.channel_index = chans[j]
            u = adapter.decide(t0 + j, prev, chans[j], draws[j])
            mask = u & occupied
            for i in users:
                if mask >> i & 1:
                    y[i] = z[i]
            deltas[j] = state.delta
            scheduled[j] = u
            served[j] = mask
        served_arr = np.array(served, dtype=np.int64)
        acc.add(t0, np.array(deltas, dtype=np.int64).reshape(k, n), served_arr,
                sys.charge(chan, np.array(scheduled, dtype=np.int64), served_arr))


def _run_one(model, streams, f, adapter, cfg: SimConfig, seed: int) -> _RunResult:
    sys = _System(model, streams, f, cfg.power_accounting)
    if adapter.n_users != sys.n:
        raise InvalidInputError("policy and system disagree on the number of users")
    rng = np.random.default_rng(seed)
    acc = _Accumulator(sys, cfg)
    if adapter.oblivious:
        _run_oblivious(sys, adapter, cfg, rng, acc)
    else:
        _run_sequential(sys, adapter, cfg, rng, acc)
    return acc.result()


def _se(x: np.ndarray) -> np.ndarray:
    return np.std(x, axis=0, ddof=1) / np.sqrt(x.shape[0])


def simulate(
    model: ChannelModel,
    streams: Sequence[StreamConfig],
    f: RateFunction,
    policy,
    cfg: SimConfig,
) -> Metrics:
    """One replication seeded with ``cfg.seed``; standard errors from batch means."""
    streams = tuple(streams)
    adapter = adapter_for(policy, len(streams))
    res = _run_one(model, streams, f, adapter, cfg, cfg.seed)
    w = np.array([s.weight for s in streams])
    if res.batch_vaoi.shape[0] > 1:
        se_user = _se(res.batch_vaoi)
        se_weighted = float(_se(res.batch_vaoi @ w))
        se_power = float(_se(res.batch_power))
    else:
        se_user, se_weighted, se_power = np.full(len(streams), np.nan), float("nan"), float("nan")
    return Metrics(
        per_user_vaoi=res.vaoi,
        weighted_vaoi=float(w @ res.vaoi),
        power=res.power,
        se_per_user=se_user,
        se_weighted=se_weighted,
        se_power=se_power,
        slots=cfg.slots,
        reps=1,
        seed=cfg.seed,
        rep_vaoi=res.vaoi[None, :],
        rep_weighted=np.array([w @ res.vaoi]),
        rep_power=np.array([res.power]),
        histogram=res.histogram,
        deliveries=res.deliveries,
        trace=res.trace,
        batch_se_weighted=se_weighted,
        batch_se_power=se_power,
    )


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise InvalidInputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, value)


def replicate(
    model: ChannelModel,
    streams: Sequence[StreamConfig],
    f: RateFunction,
    policy,
    cfg: SimConfig,
    workers: int | None = None,
) -> Metrics:
    """Independent replications seeded ``seed + r``; SE = sample stdev / sqrt(reps)."""
    if cfg.replications < 2:
        raise InvalidInputError("replicate needs at least two replications")
    streams = tuple(streams)
    adapter = adapter_for(policy, len(streams))
    seeds = [(cfg.seed + r) % 2 ** 64 for r in range(cfg.replications)]
    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            runs = list(pool.map(_run_one, *zip(*[(model, streams, f, adapter, cfg, s) for s in seeds])))
    else:
        runs = [_run_one(model, streams, f, adapter, cfg, s) for s in seeds]
    w = np.array([s.weight for s in streams])
    rep_vaoi = np.array([r.vaoi for r in runs])
    rep_power = np.array([r.power for r in runs])
    per_user = rep_vaoi.mean(axis=0)
    batch_vaoi = np.concatenate([r.batch_vaoi for r in runs])
    batch_power = np.concatenate([r.batch_power for r in runs])
    return Metrics(
        per_user_vaoi=per_user,
        weighted_vaoi=float(w @ per_user),
        power=float(rep_power.mean()),
        se_per_user=_se(rep_vaoi),
        se_weighted=float(_se(rep_vaoi @ w)),
        se_power=float(_se(rep_power)),
        slots=cfg.slots,
        reps=cfg.replications,
        seed=cfg.seed,
        rep_vaoi=rep_vaoi,
        rep_weighted=rep_vaoi @ w,
        rep_power=rep_power,
        histogram=sum(r.histogram for r in runs),
        deliveries=sum(r.deliveries for r in runs),
        trace=runs[0].trace,
        batch_se_weighted=float(_se(batch_vaoi @ w)),
        batch_se_power=float(_se(batch_power)),
    )


# -- renewal-cycle check ------------------------------------------------------

@dataclass
class InterDeliveryResult:
    mean: float
    se: float
    cycles: int
    expected: float

    @property
    def z_score(self) -> float:
        if self.se == 0:
            return 0.0 if self.mean == self.expected else float("inf")
        return (self.mean - self.expected) / self.se


def inter_delivery_check(lam: float, period: int, cycles: int = 100_000, seed: int = 0) -> InterDeliveryResult:
    """Mean VAoI summed over a delivery cycle of fixed length ``period``.

    A single user with arrival probability ``lam`` is served every
    ``period`` slots by the simulator; the per-cycle sums are compared with
    ``lam * (period**2 - period) / 2``.
    """
    if period < 1 or cycles < 2:
        raise InvalidInputError("need period >= 1 and at least two cycles")
    stream = StreamConfig(lam, 1.0)
    model = ChannelModel((1.0,), ((1.0,),))
    sys = _System(model, [stream], RateFunction.LOG1P)
    cfg = SimConfig(horizon=cycles * period, warmup=0, seed=seed)
    sums = np.zeros(cycles)

    class _Collect(_Accumulator):
        def add(self, t0, delta, served, power):
            np.add.at(sums, np.arange(t0, t0 + len(power)) // period, delta[:, 0])

    acc = _Collect(sys, cfg)
    _run_oblivious(sys, PeriodicAdapter(period), cfg, np.random.default_rng(seed), acc)
    return InterDeliveryResult(
        mean=float(sums.mean()),
        se=float(sums.std(ddof=1) / np.sqrt(cycles)),
        cycles=cycles,
        expected=lam * (period * period - period) / 2.0,
    )


@dataclass
class SamplePath:
    delta: np.ndarray  # (T, N) end-of-slot VAoI
    served: np.ndarray  # (T,) mask of users delivered to
    power: np.ndarray  # (T,)


def sample_path(
    model: ChannelModel,
    streams: Sequence[StreamConfig],
    policy,
    horizon: int,
    seed: int = 0,
    f: RateFunction = RateFunction.LOG1P,
    accounting: PowerAccounting = PowerAccounting.CODEWORD,
) -> SamplePath:
    """Every slot of one run, for checks that need the raw path."""
    streams = tuple(streams)
    sys = _System(model, streams, f, accounting)
    adapter = adapter_for(policy, sys.n)
    cfg = SimConfig(horizon=horizon, warmup=0, seed=seed)
    parts = []

    class _Keep(_Accumulator):
        def add(self, t0, delta, served, power):
            parts.append((delta.copy(), np.asarray(served).copy(), np.asarray(power, dtype=float).copy()))

    acc = _Keep(sys, cfg)
    run = _run_oblivious if adapter.oblivious else _run_sequential
    run(sys, adapter, cfg, np.random.default_rng(seed), acc)
    return SamplePath(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                      np.concatenate([p[2] for p in parts]))
