import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vaoi_noma.cosrp import Scheme, build_program
from vaoi_noma.errors import InvalidInputError
from vaoi_noma.experiments import two_user
from vaoi_noma.model import ChannelModel, StreamConfig
from vaoi_noma.optimizer import (
    SolverConfig,
    dual_from_point,
    format_solution,
    grid_oracle_single_user,
    lower_bound,
    parse_solution,
    project_simplex_rows,
    psi,
    random_feasibility_probe,
    solve,
)


@settings(max_examples=200, deadline=None)
@given(arrays(float, (3, 5), elements=st.floats(-50, 50)), st.integers(0, 2 ** 31))
def test_simplex_projection_is_optimal(y, seed):
    x = project_simplex_rows(y)
    np.testing.assert_allclose(x.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(x >= 0)
    # variational inequality: (y - x).(z - x) <= 0 for every simplex point z
    z = np.random.default_rng(seed).dirichlet(np.ones(5), size=(50, 3))
    inner = np.einsum("rk,nrk->nr", y - x, z - x[None])
    assert np.all(inner <= 1e-8 * (1 + np.abs(y).max()))


def test_projection_keeps_simplex_points():
    x = np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
    np.testing.assert_allclose(project_simplex_rows(x), x)


SINGLE = ChannelModel((0.1, 1.0), ((0.2, 0.8),))


@pytest.mark.parametrize("pbar", [2.0, 5.0, 15.0])
def test_single_user_matches_grid(pbar):
    stream = StreamConfig(0.5, 2.0)
    sol = solve(build_program(SINGLE, [stream], pbar))
    grid = grid_oracle_single_user(SINGLE, stream, pbar, step=2e-3)
    # the grid can only be worse than the continuum optimum
    assert sol.objective <= grid + 1e-9
    assert sol.objective == pytest.approx(grid, abs=0.01)
    assert sol.achieved_power <= pbar * (1 + 1e-4)


def test_slack_budget_gives_theta_zero(fig1):
    sol = solve(build_program(fig1.model, fig1.streams, 1e4))
    assert sol.theta == 0.0 and sol.diagnostics["slack"]
    assert sol.objective == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("pbar", [3.0, 10.0, 25.0])
@pytest.mark.parametrize("scheme", [Scheme.NOMA, Scheme.TDMA])
def test_binding_budget_met_with_equality_and_kkt(fig1, pbar, scheme):
    prog = build_program(fig1.model, fig1.streams, pbar, scheme)
    sol = solve(prog)
    sol.policy.check()
    if not sol.diagnostics["slack"]:
        assert abs(sol.achieved_power - pbar) <= SolverConfig().power_tol(pbar)
    x = sol.policy.mu.ravel()
    assert sol.psi_inf <= 1e-8
    assert np.max(np.abs(psi(x, sol.dual, prog))) <= 1e-8
    ref = dual_from_point(prog, x, sol.theta)
    np.testing.assert_allclose(sol.dual.beta, ref.beta, atol=1e-8)
    np.testing.assert_allclose(sol.dual.rho, ref.rho, atol=1e-8)


def test_objective_non_increasing_in_budget(fig1):
    values = [solve(build_program(fig1.model, fig1.streams, p)).objective for p in (2.0, 5.0, 10.0, 20.0, 40.0)]
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


def test_noma_never_worse_than_tdma(fig1):
    for pbar in (2.0, 8.0, 30.0):
        noma = solve(build_program(fig1.model, fig1.streams, pbar, Scheme.NOMA)).objective
        tdma = solve(build_program(fig1.model, fig1.streams, pbar, Scheme.TDMA)).objective
        assert noma <= tdma + 1e-9


def test_users_without_arrivals_or_weight_never_scheduled():
    model = ChannelModel.shared((0.1, 1.0), (0.5, 0.5), 3)
    streams = [StreamConfig(0.6, 1.0), StreamConfig(0.0, 1.0), StreamConfig(0.6, 1.0, weight=0.0)]
    sol = solve(build_program(model, streams, 5.0))
    member = sol.policy.membership(3)
    assert np.all(sol.policy.mu[:, member[:, 1]] == 0)
    assert np.all(sol.policy.mu[:, member[:, 2]] == 0)
    alone = solve(build_program(model.subset([0]), streams[:1], 5.0))
    assert sol.objective == pytest.approx(alone.objective, rel=1e-9)
    assert sol.diagnostics["dropped_users"] == [1, 2]


def test_all_idle_users():
    model = ChannelModel.shared((1.0,), (1.0,), 2)
    sol = solve(build_program(model, [StreamConfig(0.0, 1.0)] * 2, 1.0))
    assert sol.objective == 0.0 and sol.achieved_power == 0.0


def test_feasibility_probe_small(table_noma):
    prog = build_program(table_noma.model, table_noma.streams, 45.0)
    sol = solve(prog)
    assert random_feasibility_probe(prog, sol, samples=20_000, seed=3) == 0


def test_tdma_saturates_at_lambda():
    inst = two_user(0.9, 2.0, (0.1, 1.0), 0.5)
    sol = solve(build_program(inst.model, inst.streams, 1e4, Scheme.TDMA))
    assert sol.objective == pytest.approx(0.9, abs=1e-6)


def test_lower_bound_is_half():
    assert lower_bound(0.8) == pytest.approx(0.4)


def test_solution_file_round_trip(fig1):
    sol = solve(build_program(fig1.model, fig1.streams, 12.0, Scheme.TDMA))
    text = format_solution(sol, fig1.model)
    pol, meta = parse_solution(text, fig1.model)
    assert pol.scheme is Scheme.TDMA
    np.testing.assert_array_equal(pol.mu, sol.policy.mu)
    # the footer is written to 12 significant digits
    assert float(meta["objective"]) == pytest.approx(sol.objective, rel=1e-11)
    assert float(meta["power"]) == pytest.approx(sol.achieved_power, rel=1e-11)


def test_config_validation():
    with pytest.raises(InvalidInputError):
        SolverConfig(eps_psi=0)
    with pytest.raises(InvalidInputError):
        SolverConfig(max_bisect=0)
