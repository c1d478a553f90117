"""Optimal CO-SRP via Lagrangian bisection and a sum-of-ratios fixed point.

For a power price ``theta`` the power constraint enters the objective as
``theta * sum_i d_i/f_i``. Each ratio is handled with an auxiliary pair
``(beta_i, rho_i)``: for fixed pairs the subproblem

    min  sum_i w_i O_i(mu) + theta (sum_i beta_i - pbar)
         + sum_i rho_i (d_i(mu) - beta_i f_i(mu))
    s.t. mu in a product of simplices

is convex and is solved by spectral projected gradient, with an SQP
active-set fallback on nearly flat faces. The pairs are then reset to
``beta_i = d_i/f_i`` and ``rho_i = theta/f_i`` until the residual vector
``psi`` vanishes. An outer bisection on ``theta`` meets the power budget.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .cosrp import (
    P_CLAMP,
    CoSrpPolicy,
    FractionalProgram,
    Scheme,
    build_program,
    format_policy,
    parse_policy,
    weighted_objective,
)
from .errors import ConvergenceError, InvalidInputError, PolicyFormatError
from .model import ChannelModel, RateFunction, StreamConfig

log = logging.getLogger(__name__)

THETA_CAP = 2.0 ** 60


class BracketError(ConvergenceError):
    """No multiplier up to the cap brings the power under budget."""


@dataclass
class DualState:
    beta: np.ndarray
    rho: np.ndarray
    theta: float


@dataclass(frozen=True)
class SolverConfig:
    eps_psi: float = 1e-8
    eps_power: float | None = None  # None: 1e-4 * pbar, floored at 1e-6
    eps_inner: float = 1e-10  # Frank-Wolfe gap relative to max(1, |objective|)
    eps_stall: float = 1e-6  # gap still accepted once no decrease is representable
    max_inner: int = 5_000  # spectral steps before the active-set fallback
    max_newton: int = 200
    max_bisect: int = 60
    theta_hi_init: float = 1.0
    armijo: float = 1e-4
    stall_window: int = 8  # fixed-point steps that must halve the residual
    max_descents: int = 5

    def __post_init__(self):
        for name in ("eps_psi", "eps_inner", "eps_stall", "theta_hi_init", "armijo"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.eps_power is not None and not self.eps_power > 0:
            raise InvalidInputError("eps_power must be positive")
        for name in ("max_inner", "max_newton", "max_bisect", "stall_window"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be at least 1")

    def power_tol(self, pbar: float) -> float:
        if self.eps_power is not None:
            return self.eps_power
        return max(1e-4 * pbar, 1e-6)


@dataclass
class ThetaResult:
    x: np.ndarray
    objective: float
    power: float
    dual: DualState
    psi_inf: float
    newton_iters: int
    inner_iters: int
    clamped: bool
    descents: int = 0


@dataclass
class CosrpSolution:
    policy: CoSrpPolicy
    objective: float
    achieved_power: float
    theta: float
    dual: DualState | None
    psi_inf: float
    diagnostics: dict = field(default_factory=dict)


def project_simplex_rows(y: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``y`` onto the probability simplex."""
    y = np.atleast_2d(y)
    n = y.shape[1]
    u = -np.sort(-y, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    k = np.arange(1, n + 1)
    cond = u - css / k > 0
    # last index where the condition holds
    r = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(y.shape[0]), r] / (r + 1)
    out = np.maximum(y - tau[:, None], 0.0)
    # for huge inputs tau carries rounding of order |y| * eps; renormalise
    return out / out.sum(axis=1, keepdims=True)


def inner_objective(program: FractionalProgram, dual: DualState, x) -> float:
    d = program.d(x)
    f = program.fden(x)
    return float(program.w @ program.o(x) + dual.theta * (dual.beta.sum() - program.pbar)
                 + dual.rho @ (d - dual.beta * f))


def inner_gradient(program: FractionalProgram, dual: DualState, x) -> np.ndarray:
    return (program.grad_o(x).T @ program.w + program.grad_d().T @ dual.rho
            - program.grad_f().T @ (dual.rho * dual.beta))


def _inner_change(program: FractionalProgram, coef: np.ndarray, x, p, xn, pn):
    """Inner objective difference F(xn) - F(x), formed without cancellation.

    ``xn``/``pn`` may carry a leading batch axis of candidate points.
    """
    pc = np.maximum(p, P_CLAMP)
    pcn = np.maximum(pn, P_CLAMP)
    recip = (pc - pcn) / (pc * pcn)
    return (program.lam * recip) @ program.w + (xn - x) @ coef


_HALVINGS = 0.5 ** np.arange(41)  # shorter steps only chase rounding noise


def _spg(x, value: float, grad, change, proj, config: SolverConfig, max_iter: int):
    """Spectral projected gradient with monotone Armijo backtracking (halving).

    ``value`` is the objective at ``x``; ``change(x, cand)`` returns
    objective differences for a batch of candidate points. ``proj`` carries a
    per-row step scale and helpers that centre gradients row by row (the simplex projection ignores
    row constants, which would otherwise swamp small differences in
    rounding) and compute the Frank-Wolfe gap, an upper bound on the
    suboptimality of a convex objective. Stops once the gap is at most
    ``eps_inner * max(1, |value|)``. Returns ``(x, iterations, gap, converged)``.
    """
    g = proj.center(grad(x))
    alpha = 1.0
    gap = math.inf
    it = 0
    while it < max_iter:
        it += 1
        gap = proj.gap(x, g)
        tol = config.eps_inner * max(1.0, abs(value))
        if gap <= tol:
            return x, it, gap, True
        direction = proj(x - alpha * proj.scale * g) - x
        slope = float(g @ direction)
        ok = np.empty(0, dtype=int)
        if slope < 0:
            # the whole halving sequence at once; the first step passing Armijo wins
            cand = x + _HALVINGS[:, None] * direction
            delta = change(x, cand)
            ok = np.flatnonzero(delta <= config.armijo * _HALVINGS * slope)
        if ok.size == 0:
            # no usable decrease: either stationary to working precision or
            # a long spectral step drowned in rounding
            if gap <= config.eps_stall * max(1.0, abs(value)):
                return x, it, gap, True
            if alpha != 1.0:
                alpha = 1.0
                continue
            break
        xn = cand[ok[0]]
        value += float(delta[ok[0]])
        gn = proj.center(grad(xn))
        s_vec = xn - x
        sy = float(s_vec @ (gn - g))
        alpha = min(max(float(s_vec @ (s_vec / proj.scale)) / sy, 1e-12), 1e12) if sy > 0 else 1e12
        x, g = xn, gn
    return x, it, gap, False


def _row_projector(program: FractionalProgram):
    shape = (program.n_states, program.n_subsets)

    def proj(y):
        return project_simplex_rows(y.reshape(shape)).ravel()

    def center(g):
        g = g.reshape(shape)
        return (g - g.mean(axis=1, keepdims=True)).ravel()

    def gap(x, g):
        # max over the feasible set of g.(x - s)
        return float(g @ x - g.reshape(shape).min(axis=1).sum())

    proj.center = center
    proj.gap = gap
    # rows move in the metric of their state probability: a rare channel
    # state has a proportionally small gradient but needs the same step
    proj.scale = np.repeat(1.0 / np.maximum(program.probs, 1e-300), program.n_subsets)
    return proj


def inner_solve(
    program: FractionalProgram,
    dual: DualState,
    mu0,
    config: SolverConfig = SolverConfig(),
) -> tuple[np.ndarray, int]:
    """Minimise the convex subproblem for a fixed dual state.

    Spectral projected gradient; the Barzilai-Borwein trial step lets the
    iterate cross directions where only a small linear term breaks ties.
    Stops when the Frank-Wolfe gap certifies the objective to within
    ``eps_inner * max(1, |objective|)``. Returns the flattened minimiser and the
    iteration count; every iterate is exactly feasible.
    """
    proj = _row_projector(program)
    x = proj(np.asarray(mu0.mu if isinstance(mu0, CoSrpPolicy) else mu0, dtype=float).ravel())
    # the part of the subproblem that is linear in x
    coef = program.grad_d().T @ dual.rho - program.grad_f().T @ (dual.rho * dual.beta)

    def grad(z):
        return program.grad_o(z).T @ program.w + coef

    def change(z, cand):
        return _inner_change(program, coef, z, program.p(z), cand, cand @ program.a_mat.T)

    value = float(program.w @ program.o(x) + coef @ x)
    x, it, gap, done = _spg(x, value, grad, change, proj, config, config.max_inner)
    if done:
        return x, it
    return _active_set_polish(program, coef, x, config, gap, it)


def lagrangian_gradient(program: FractionalProgram, theta: float, x) -> np.ndarray:
    """Gradient of sum_i w_i O_i + theta * sum_i d_i/f_i."""
    d = program.d(x)
    f = program.fden(x)
    ratio = (program.grad_d() * f[:, None] - d[:, None] * program.grad_f()) / (f * f)[:, None]
    return program.grad_o(x).T @ program.w + theta * ratio.sum(axis=0)


def _lagrangian_change(program: FractionalProgram, theta: float, x, cand):
    p = program.p(x)
    pc = cand @ program.a_mat.T
    step = cand - x
    dd = step @ program.grad_d().T
    df = step @ program.grad_f().T
    d = program.d(x)
    f = program.fden(x)
    fn = f + df
    ratio = (dd * f - d * df) / (f * fn)
    return _inner_change(program, np.zeros_like(x), x, p, cand, pc) + theta * ratio.sum(axis=-1)


def lagrangian_descent(program: FractionalProgram, theta: float, x, config: SolverConfig = SolverConfig()):
    """Descend directly on the priced objective from ``x``.

    Its stationary points are exactly the fixed points of the (beta, rho)
    update: there ``psi`` vanishes and ``x`` solves the convex subproblem,
    whose gradient coincides with this one.
    """
    proj = _row_projector(program)
    x = proj(np.asarray(x, dtype=float))
    value = float(program.w @ program.o(x)) + theta * program.power(x)
    x, it, _, _ = _spg(
        x, value,
        lambda z: lagrangian_gradient(program, theta, z),
        lambda z, cand: _lagrangian_change(program, theta, z, cand),
        proj, config, config.max_inner,
    )
    return x, it


def _active_set_polish(program, coef, x, config, residual, iters):
    # First-order steps crawl when a tiny linear term is the only thing
    # separating points of a nearly flat face; an SQP active-set solve
    # lands on the face's optimal vertex directly.
    shape = (program.n_states, program.n_subsets)
    rows = np.kron(np.eye(program.n_states), np.ones(program.n_subsets))

    def fun(z):
        return float(program.w @ program.o(z) + coef @ z)

    def jac(z):
        return program.grad_o(z).T @ program.w + coef

    res = minimize(fun, x, jac=jac, method="SLSQP", bounds=[(0.0, 1.0)] * x.size,
                   constraints=[{"type": "eq", "fun": lambda z: rows @ z - 1.0, "jac": lambda z: rows}],
                   options=dict(ftol=1e-16, maxiter=1000))
    z = project_simplex_rows(res.x.reshape(shape)).ravel()
    if fun(z) > fun(x):
        z = x
    proj = _row_projector(program)
    gap = proj.gap(z, proj.center(jac(z)))
    if gap <= config.eps_stall * max(1.0, abs(fun(z))):
        return z, iters + res.nit
    raise ConvergenceError(
        f"inner solve stalled after {iters} iterations (duality gap {min(gap, residual):.3g})",
        best=z, residual=gap,
    )


def psi(x, dual: DualState, program: FractionalProgram) -> np.ndarray:
    """Residual (-d_i + beta_i f_i, -theta + rho_i f_i) over users with arrivals."""
    d = program.d(x)
    f = program.fden(x)
    active = program.lam > 0
    r1 = np.where(active, -d + dual.beta * f, 0.0)
    r2 = np.where(active, -dual.theta + dual.rho * f, 0.0)
    return np.concatenate([r1, r2])


def dual_from_point(program: FractionalProgram, x, theta: float) -> DualState:
    d = program.d(x)
    f = program.fden(x)
    active = program.lam > 0
    safe = np.where(active, f, 1.0)
    return DualState(
        beta=np.where(active, d / safe, 0.0),
        rho=np.where(active, theta / safe, 0.0),
        theta=float(theta),
    )


def _fixed_point_residual(program, x, dual) -> float:
    r = psi(x, dual, program)
    f = np.tile(program.fden(x), 2)
    scaled = r / np.where(f > 0, f, 1.0)
    return float(max(np.max(np.abs(r)), np.max(np.abs(scaled))))


def solve_for_theta(
    program: FractionalProgram,
    theta: float,
    config: SolverConfig = SolverConfig(),
    mu0=None,
) -> ThetaResult:
    """Fixed-point iteration on (beta, rho) for a fixed power price ``theta``.

    Stops once both ``psi`` and ``psi / f`` are below ``eps_psi`` in the
    infinity norm, so that ``beta = d/f`` and ``rho = theta/f`` hold to the
    same tolerance.
    """
    if theta < 0:
        raise InvalidInputError("theta must be non-negative")
    x = program.uniform_point() if mu0 is None else np.asarray(
        mu0.mu if isinstance(mu0, CoSrpPolicy) else mu0, dtype=float).ravel().copy()
    dual = dual_from_point(program, x, theta)
    trace = []
    inner_total = 0
    descents = 0
    growth = 0
    for k in range(1, config.max_newton + 1):
        x, n_inner = inner_solve(program, dual, x, config)
        inner_total += n_inner
        res = _fixed_point_residual(program, x, dual)
        trace.append(res)
        if res <= config.eps_psi:
            _, clamped = program.clamped_p(x)
            return ThetaResult(
                x=x,
                objective=weighted_objective(program.streams, program.p(x)),
                power=program.power(x),
                dual=dual,
                psi_inf=float(np.max(np.abs(psi(x, dual, program)))),
                newton_iters=k,
                inner_iters=inner_total,
                clamped=clamped,
                descents=descents,
            )
        growth = growth + 1 if len(trace) > 1 and res > trace[-2] else 0
        stalled = k >= config.stall_window and res > 0.5 * trace[-config.stall_window]
        if (stalled or growth >= 10) and descents < config.max_descents:
            # the full-step update crawls or cycles here; jump to a nearby
            # fixed point and let the next pass confirm it
            x, n_inner = lagrangian_descent(program, theta, x, config)
            inner_total += n_inner
            descents += 1
            growth = 0
            trace.append(math.nan)
        elif growth >= 10:
            raise ConvergenceError(
                f"dual iteration diverging at theta={theta:.6g} (residual grew 10 times in a row)",
                best=x, residual=res, trace=trace,
            )
        dual = dual_from_point(program, x, theta)
    raise ConvergenceError(
        f"dual iteration did not converge in {config.max_newton} steps at theta={theta:.6g}",
        best=x, residual=trace[-1], trace=trace,
    )


def _lift_policy(x_reduced, reduced: FractionalProgram, full: FractionalProgram, active: list[int]) -> CoSrpPolicy:
    """Embed a policy over the active users into the full user set.

    Subsets containing an inactive user get probability zero.
    """
    mu_red = np.asarray(x_reduced).reshape(reduced.n_states, reduced.n_subsets)
    mu = np.zeros((full.n_states, full.n_subsets))
    red_index = {tuple(st.level_indices): st.index for st in reduced.states}
    for st in full.states:
        s_red = red_index[tuple(st.level_indices[i] for i in active)]
        for m_red, mask_red in enumerate(reduced.masks):
            mask = sum(1 << active[j] for j in range(len(active)) if (mask_red >> j) & 1)
            mu[st.index, full.masks.index(mask)] = mu_red[s_red, m_red]
    return CoSrpPolicy(mu, full.masks, full.scheme)


def _solution(res: ThetaResult, program: FractionalProgram, policy: CoSrpPolicy, **diag) -> CosrpSolution:
    return CosrpSolution(
        policy=policy,
        objective=res.objective,
        achieved_power=res.power,
        theta=res.dual.theta,
        dual=res.dual,
        psi_inf=res.psi_inf,
        diagnostics=dict(newton_iters=res.newton_iters, inner_iters=res.inner_iters,
                         clamped=res.clamped, descents=res.descents, **diag),
    )


def _cheapest_unconstrained(program: FractionalProgram, res0: ThetaResult) -> ThetaResult | None:
    """Least-power point among the theta = 0 minimisers (the theta -> 0+ limit).

    With every weight positive the delivery probabilities of the theta = 0
    optimum are unique, the denominators are then fixed and the power is
    linear in mu, so the tie-break is a linear program.
    """
    if np.any(program.w <= 0):
        return None
    p_star = program.p(res0.x)
    f_fix = program.fden(res0.x)
    cost = (program.lam / f_fix) @ program.d_mat
    rows = np.kron(np.eye(program.n_states), np.ones(program.n_subsets))
    lp = linprog(cost, A_eq=np.vstack([program.a_mat, rows]),
                 b_eq=np.concatenate([p_star, np.ones(program.n_states)]),
                 bounds=(0.0, 1.0), method="highs")
    if lp.status != 0:
        return None
    x = project_simplex_rows(lp.x.reshape(program.n_states, program.n_subsets)).ravel()
    dual = dual_from_point(program, x, 0.0)
    return ThetaResult(
        x=x,
        objective=weighted_objective(program.streams, program.p(x)),
        power=program.power(x),
        dual=dual,
        psi_inf=float(np.max(np.abs(psi(x, dual, program)))),
        newton_iters=res0.newton_iters,
        inner_iters=res0.inner_iters,
        clamped=program.clamped_p(x)[1],
    )


def solve(program: FractionalProgram, config: SolverConfig = SolverConfig()) -> CosrpSolution:
    """Optimal CO-SRP for the program's power budget.

    Users without arrivals or with zero weight do not affect the objective;
    they are removed before solving and get probability zero on every subset
    that contains them, which is also their cheapest treatment.
    """
    active = [i for i, s in enumerate(program.streams) if s.lam > 0 and s.weight > 0]
    if not active:
        policy = CoSrpPolicy.constant(program.n_states, program.n_users, 0, program.scheme)
        return CosrpSolution(policy, 0.0, 0.0, 0.0, None, 0.0,
                             dict(slack=True, converged=True, bisect_iters=0, trace=[]))
    if len(active) < program.n_users:
        reduced = build_program(program.model.subset(active), [program.streams[i] for i in active],
                                program.pbar, program.scheme, program.f)
        sol = solve(reduced, config)
        sol.policy = _lift_policy(sol.policy.mu, reduced, program, active)
        sol.diagnostics["dropped_users"] = [i for i in range(program.n_users) if i not in active]
        return sol

    pbar = program.pbar
    tol = config.power_tol(pbar)
    trace = []

    res0 = solve_for_theta(program, 0.0, config)
    trace.append((0.0, res0.power, res0.objective))
    if res0.power > 0:
        cheap = _cheapest_unconstrained(program, res0)
        if cheap is not None and cheap.power < res0.power and cheap.objective <= res0.objective + 1e-12:
            res0 = cheap
            trace.append((0.0, res0.power, res0.objective))
    if res0.power <= pbar + tol:
        return _solution(res0, program, program.as_policy(res0.x), slack=True, converged=True,
                         bisect_iters=0, trace=trace)

    lo, hi = 0.0, config.theta_hi_init
    res_hi = solve_for_theta(program, hi, config)
    trace.append((hi, res_hi.power, res_hi.objective))
    while res_hi.power > pbar:
        hi *= 2.0
        if hi > THETA_CAP:
            raise BracketError(f"power stays above {pbar} for every theta up to 2^60")
        res_hi = solve_for_theta(program, hi, config)
        trace.append((hi, res_hi.power, res_hi.objective))
    if abs(res_hi.power - pbar) < tol:
        return _solution(res_hi, program, program.as_policy(res_hi.x), slack=False, converged=True,
                         bisect_iters=0, trace=trace)

    for m in range(1, config.max_bisect + 1):
        if (lo == 0.0 and hi < 1e-12) or hi - lo <= 1e-12 * hi:
            break
        mid = 0.5 * (lo + hi)
        res = solve_for_theta(program, mid, config)
        trace.append((mid, res.power, res.objective))
        if abs(res.power - pbar) < tol:
            return _solution(res, program, program.as_policy(res.x), slack=False, converged=True,
                             bisect_iters=m, trace=trace)
        if res.power > pbar:
            lo = mid
        else:
            hi, res_hi = mid, res
    if lo == 0.0 and hi < 1e-9:
        # the budget binds only in the limit theta -> 0+: a slack budget
        return _solution(res_hi, program, program.as_policy(res_hi.x), slack=True, converged=True,
                         bisect_iters=config.max_bisect, trace=trace)
    # power jumps across theta: no multiplier lands within eps_power
    log.warning("theta bisection ended at a power jump (%.6g -> %.6g); returning the feasible endpoint",
                trace[-1][1], res_hi.power)
    return _solution(res_hi, program, program.as_policy(res_hi.x), slack=False, converged=False,
                     bisect_iters=len(trace), trace=trace)


def lower_bound(v_srp: float) -> float:
    """Lower bound on the optimal VAoI implied by the optimal CO-SRP value."""
    if v_srp < 0:
        raise InvalidInputError("objective must be non-negative")
    return v_srp / 2.0


def grid_oracle_single_user(
    model: ChannelModel,
    stream: StreamConfig,
    pbar: float,
    step: float = 1e-3,
    f: RateFunction = RateFunction.LOG1P,
    chunk: int = 1 << 20,
) -> float:
    """Brute-force optimum for one user: grid over per-level transmit probabilities."""
    if model.n_users != 1:
        raise InvalidInputError("grid oracle is single-user only")
    levels = np.array(model.levels)
    pi = np.array(model.pmf[0])
    need = float(f.inverse(stream.r0))
    cost = need / levels
    lam, w = stream.lam, stream.weight
    if lam == 0 or w == 0:
        return 0.0
    axis = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    k = len(levels)
    total = len(axis) ** k
    best = math.inf
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        q = np.empty((idx.size, k))
        rem = idx
        for j in range(k - 1, -1, -1):
            q[:, j] = axis[rem % len(axis)]
            rem = rem // len(axis)
        p = q @ pi
        pw_cond = q @ (pi * cost)
        power = lam * pw_cond / (lam * (1 - p) + p)
        ok = (power <= pbar) & (p > 0)
        if np.any(ok):
            best = min(best, float(np.min(w * lam * (1.0 / p[ok] - 1.0))))
    return best


def random_feasibility_probe(
    program: FractionalProgram,
    solution: CosrpSolution,
    samples: int = 100_000,
    seed: int = 0,
    config: SolverConfig = SolverConfig(),
    batch: int = 20_000,
) -> int:
    """Count random feasible policies that beat ``solution`` by more than 1e-6."""
    rng = np.random.default_rng(seed)
    tol = config.power_tol(program.pbar)
    target = solution.objective - 1e-6
    violations = 0
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        x = rng.dirichlet(np.ones(program.n_subsets), size=(b, program.n_states)).reshape(b, -1)
        p = x @ program.a_mat.T
        d = program.lam * (x @ program.d_mat.T)
        fden = program.lam + (1 - program.lam) * p
        power = np.sum(d / fden, axis=1)
        with np.errstate(divide="ignore"):
            obj = np.sum(np.where(program.lam > 0, program.w * program.lam * (1 / p - 1), 0.0), axis=1)
        violations += int(np.sum((power <= program.pbar + tol) & (obj < target)))
        done += b
    return violations


# -- solution file ----------------------------------------------------------

def format_solution(solution: CosrpSolution, model: ChannelModel) -> str:
    footer = (f"objective={solution.objective:.12g}, power={solution.achieved_power:.12g}, "
              f"theta={solution.theta:.12g}, psi_inf={solution.psi_inf:.12g}\n")
    return format_policy(solution.policy, model) + footer


def parse_solution(text: str, model: ChannelModel, scheme: Scheme | None = None) -> tuple[CoSrpPolicy, dict]:
    """Policy plus the footer fields (empty dict if the footer is absent)."""
    policy = parse_policy(text, model, scheme)
    footer = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if "=" not in line or line.lstrip().startswith("#"):
            continue
        for item in line.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise PolicyFormatError(f"malformed footer item {item!r}", lineno)
            try:
                footer[key.strip()] = float(value)
            except ValueError:
                raise PolicyFormatError(f"non-numeric footer value {value!r}", lineno) from None
    return policy, footer
