from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asymmlfc import lagrangian as lg
from asymmlfc.asymm import AsymmParams, init_states
from asymmlfc.gradcheck import check_family, fd_grad, random_state, relative_error
from asymmlfc.model import DimensionMismatch
from asymmlfc.netgraph import build_graph
from asymmlfc.problem import CallableNodeProblem
from asymmlfc.scenarios import toy_suite

vec = st.lists(st.floats(-10, 10), min_size=1, max_size=5)


def test_v_examples():
    assert lg.v(1, [0.0, 0.0], [3.0, 4.0]) == 12.5
    assert lg.v(1, [1], [2]) == 4
    assert lg.v(2, [1, -1], [3, 3]) == 18


def test_q_examples():
    assert lg.q(1, [0], [0]).tolist() == [0]
    assert lg.q(2, [0], [1]).tolist() == [1]
    assert lg.q(1, [1], [-2]).tolist() == [-0.5]


def test_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        lg.v(1, [1, 2], [1])
    with pytest.raises(DimensionMismatch):
        lg.q(1, [1, 2], [1])


@given(vec, st.floats(0.1, 10))
def test_v_zero_b(a, c):
    assert lg.v(c, a, np.zeros(len(a))) == 0


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 10))
def test_q_matches_piecewise(a, b, c):
    # active branch: a b + c b^2 / 2, clamped branch: -a^2 / (2c)
    expect = a * b + c * b * b / 2 if a + c * b > 0 else -a * a / (2 * c)
    assert lg.q(c, [a], [b])[0] == pytest.approx(expect, abs=1e-9)


@pytest.mark.parametrize("a,c", [(0.5, 1.0), (-1.0, 2.0), (0.0, 1.0), (2.0, 0.3)])
def test_q_derivative_across_kink(a, c):
    h = 1e-7
    kink = -a / c
    for b in (kink - 3e-8, kink, kink + 3e-8):
        fd = (lg.q(c, [a], [b + h])[0] - lg.q(c, [a], [b - h])[0]) / (2 * h)
        assert abs(fd - lg.dq_db(c, a, b)) < 1e-3


def quad_state(ws, nbr_ws, nu, rho, nu_in, rho_in):
    prob = CallableNodeProblem(0, len(ws), lambda w, x: (0.0, np.zeros(0), np.zeros(len(ws))))
    s = SimpleNamespace(w=np.zeros(0), ws=np.asarray(ws, dtype=float))
    s.neighbor_ws = {1: np.asarray(nbr_ws, dtype=float)}
    s.multipliers = lg.MultiplierSet.zeros([1], len(ws), prob.sizes)
    s.multipliers.nu = {1: np.asarray(nu, dtype=float)}
    s.penalties = lg.PenaltySet.constant([1], 1.0, consensus=rho)
    s.neighbor_nu_rho = {1: (np.asarray(nu_in, dtype=float), rho_in)}
    return prob, s


def test_zero_multipliers_leave_pure_quadratic_penalty():
    prob, s = quad_state([1.0, 2.0], [0.0, 0.0], [0, 0], 2.0, [0, 0], 3.0)
    # own edge 2/2 * 5 plus the mirrored edge 3/2 * 5
    assert lg.local_lagrangian(prob, s) == pytest.approx(12.5)


def test_consensus_only_gradient_closed_form():
    prob, s = quad_state([1.0, -1.0], [0.5, 0.5], [0.2, 0.1], 2.0, [0.3, -0.4], 1.5)
    d = np.array([0.5, -1.5])
    _, g = lg.local_lagrangian_grad(prob, s)
    np.testing.assert_allclose(g, np.array([0.2, 0.1]) - np.array([0.3, -0.4]) + 3.5 * d)


def test_isolated_node_equals_objective():
    prob = CallableNodeProblem(1, 1, lambda w, ws: (float(w[0] ** 2 + 3 * ws[0]), 2 * w, np.array([3.0])))
    (st0,) = init_states(build_graph(1, []), [prob], AsymmParams(), [np.array([2.0])], [np.array([1.0])])
    assert lg.local_lagrangian(prob, st0) == 7.0
    assert lg.global_lagrangian([prob], [st0]) == 7.0


def test_stationary_quadratic_has_zero_gradient():
    prob = CallableNodeProblem(1, 0, lambda w, ws: (float((w[0] - 1) ** 2), 2 * (w - 1), np.zeros(0)))
    (s,) = init_states(build_graph(1, []), [prob], AsymmParams(), [np.array([1.0])], [np.zeros(0)])
    gw, gws = lg.local_lagrangian_grad(prob, s)
    assert gw.tolist() == [0.0] and gws.size == 0


def term_by_term(prob, s):
    """Independent re-computation of the local Lagrangian."""
    ev = prob.evaluate(s.w, s.ws)
    m, p = s.multipliers, s.penalties
    total = ev.objective
    for a, c, b in ((m.lam, p.varrho, ev.values["eq"]), (m.lam_s, p.varrho_s, ev.values["shared_eq"])):
        total += sum(x * y + c / 2 * y * y for x, y in zip(a, b))
    for a, c, b in ((m.mu, p.zeta, ev.values["ineq"]), (m.mu_s, p.zeta_s, ev.values["shared_ineq"])):
        total += sum((max(0.0, x + c * y) ** 2 - x * x) / (2 * c) for x, y in zip(a, b))
    for j, wj in s.neighbor_ws.items():
        d = s.ws - wj
        nu_in, rho_in = s.neighbor_nu_rho[j]
        total += m.nu[j] @ d + p.rho[j] / 2 * d @ d
        total += nu_in @ (-d) + rho_in / 2 * d @ d
    return total


@pytest.mark.parametrize("k", range(len(toy_suite())))
def test_random_state_against_term_by_term(k):
    sc = toy_suite()[k]
    rng = np.random.default_rng(k)
    for _ in range(10):
        i = int(rng.integers(len(sc.problems)))
        s = random_state(sc, i, rng)
        assert lg.local_lagrangian(sc.problems[i], s) == pytest.approx(term_by_term(sc.problems[i], s), rel=1e-12)
        assert relative_error(sc.problems[i], s) < 1e-6


def test_global_counts_each_edge_orientation():
    sc = toy_suite()[0]
    rng = np.random.default_rng(1)
    states = [random_state(sc, i, rng) for i in range(2)]
    states[0].neighbor_ws = {1: states[1].ws}
    states[1].neighbor_ws = {0: states[0].ws}
    p0, p1 = sc.problems
    d = states[0].ws - states[1].ws
    expect = (p0.evaluate(states[0].w, states[0].ws).objective + p1.evaluate(states[1].w, states[1].ws).objective
              + lg.v(states[0].penalties.rho[1], states[0].multipliers.nu[1], d)
              + lg.v(states[1].penalties.rho[0], states[1].multipliers.nu[0], -d))
    assert lg.global_lagrangian(sc.problems, states) == pytest.approx(expect)


def test_local_and_global_gradients_agree_when_messages_are_fresh():
    sc = toy_suite()[3]
    rng = np.random.default_rng(5)
    states = [random_state(sc, i, rng) for i in range(len(sc.problems))]
    for s in states:
        s.neighbor_ws = {j: states[j].ws for j in s.neighbors}
        s.neighbor_nu_rho = {j: (states[j].multipliers.nu[s.node], states[j].penalties.rho[s.node])
                             for j in s.neighbors}
    for i, s in enumerate(states):
        a = np.concatenate(lg.local_lagrangian_grad(sc.problems[i], s))
        b = np.concatenate(lg.global_block_grad(sc.problems, states, i))
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)
        # global block gradient against differences of the global Lagrangian
        h = 1e-6
        fd = np.zeros_like(s.ws)
        base = s.ws.copy()
        for k in range(base.size):
            for sign in (1, -1):
                s.ws = base.copy()
                s.ws[k] += sign * h
                for t in states:
                    t.neighbor_ws = {j: states[j].ws for j in t.neighbors}
                fd[k] += sign * lg.global_lagrangian(sc.problems, states) / (2 * h)
        s.ws = base
        for t in states:
            t.neighbor_ws = {j: states[j].ws for j in t.neighbors}
        np.testing.assert_allclose(lg.global_block_grad(sc.problems, states, i)[1], fd, rtol=1e-5, atol=1e-7)


def test_fd_oracle_on_toy_family():
    res = check_family("toy", n_states=40)
    assert res.passed()


def test_fd_grad_shapes():
    sc = toy_suite()[1]
    s = random_state(sc, 0, np.random.default_rng(0))
    gw, gws = fd_grad(sc.problems[0], s)
    assert gw.shape == s.w.shape and gws.shape == s.ws.shape


def test_penalty_growth_is_capped():
    p = lg.PenaltySet.constant([1, 2], 1.0, consensus=3.0, shared=0.1)
    for _ in range(10):
        q = p.grown(2.0, 5.0)
        assert all(b >= a for a, b in zip(p.all_values(), q.all_values()))
        p = q
    assert p.all_values() == [5.0] * 6
