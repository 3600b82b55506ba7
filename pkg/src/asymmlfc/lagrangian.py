"""Augmented-Lagrangian kernel: penalty functions, local and global Lagrangians.

For a node ``i`` with neighbours ``N_i`` the local Lagrangian collects every
term of the network Lagrangian that depends on ``(w_i, ws_i)``::

    psi_i
    + sum_j v_{rho_ij}(nu_ij, ws_i - ws_j)         own consensus terms
    + sum_j v_{rho_ji}(nu_ji, ws_j - ws_i)         neighbours' terms on the same edges
    + v_{varrho}(lam, Phi) + v_{varrho_s}(lam_s, Phi_s)
    + 1'q_{zeta}(mu, Phi_ineq) + 1'q_{zeta_s}(mu_s, Phi_s_ineq)

Node states are duck-typed: anything with ``w``, ``ws``, ``neighbor_ws``,
``multipliers``, ``penalties`` and ``neighbor_nu_rho`` works.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DimensionMismatch


def _pair(a, b):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return a, b


def v(c: float, a, b) -> float:
    """``a'b + c/2 ||b||^2``."""
    a, b = _pair(a, b)
    return float(a @ b + 0.5 * c * (b @ b))


def q(c: float, a, b) -> np.ndarray:
    """Componentwise ``(max(0, a + c b)^2 - a^2) / (2c)``."""
    a, b = _pair(a, b)
    return (np.maximum(0.0, a + c * b) ** 2 - a * a) / (2.0 * c)


def dv_db(c: float, a, b) -> np.ndarray:
    return a + c * b


def dq_db(c: float, a, b) -> np.ndarray:
    """Derivative of ``q`` in ``b``; ``q`` is C^1, so this is exact at the kink."""
    return np.maximum(0.0, a + c * b)


@dataclass
class MultiplierSet:
    nu: dict = field(default_factory=dict)  # neighbour j -> nu_ij
    lam: np.ndarray = None
    lam_s: np.ndarray = None
    mu: np.ndarray = None
    mu_s: np.ndarray = None

    @classmethod
    def zeros(cls, neighbors, n_shared: int, sizes: dict) -> "MultiplierSet":
        return cls(
            nu={j: np.zeros(n_shared) for j in neighbors},
            lam=np.zeros(sizes["eq"]),
            lam_s=np.zeros(sizes["shared_eq"]),
            mu=np.zeros(sizes["ineq"]),
            mu_s=np.zeros(sizes["shared_ineq"]),
        )

    def copy(self) -> "MultiplierSet":
        return MultiplierSet(
            {j: x.copy() for j, x in self.nu.items()},
            self.lam.copy(), self.lam_s.copy(), self.mu.copy(), self.mu_s.copy(),
        )


@dataclass
class PenaltySet:
    rho: dict = field(default_factory=dict)  # neighbour j -> rho_ij
    varrho: float = 1.0
    varrho_s: float = 1.0
    zeta: float = 1.0
    zeta_s: float = 1.0

    @classmethod
    def constant(cls, neighbors, value: float = 1.0, consensus=None, shared=None) -> "PenaltySet":
        rho = value if consensus is None else consensus
        sh = value if shared is None else shared
        return cls({j: rho for j in neighbors}, value, sh, value, sh)

    def grown(self, gamma: float, cap: float) -> "PenaltySet":
        g = lambda x: min(cap, gamma * x)  # noqa: E731
        return PenaltySet(
            {j: g(r) for j, r in self.rho.items()},
            g(self.varrho), g(self.varrho_s), g(self.zeta), g(self.zeta_s),
        )

    def all_values(self) -> list:
        return list(self.rho.values()) + [self.varrho, self.varrho_s, self.zeta, self.zeta_s]


def _constraint_terms(ev, mult: MultiplierSet, pen: PenaltySet) -> float:
    vals = ev.values
    return (
        v(pen.varrho, mult.lam, vals["eq"])
        + v(pen.varrho_s, mult.lam_s, vals["shared_eq"])
        + float(np.sum(q(pen.zeta, mult.mu, vals["ineq"])))
        + float(np.sum(q(pen.zeta_s, mult.mu_s, vals["shared_ineq"])))
    )


def _constraint_cotangents(ev, mult: MultiplierSet, pen: PenaltySet) -> dict:
    vals = ev.values
    return {
        "eq": dv_db(pen.varrho, mult.lam, vals["eq"]),
        "shared_eq": dv_db(pen.varrho_s, mult.lam_s, vals["shared_eq"]),
        "ineq": dq_db(pen.zeta, mult.mu, vals["ineq"]),
        "shared_ineq": dq_db(pen.zeta_s, mult.mu_s, vals["shared_ineq"]),
    }


def local_lagrangian(problem, state, ev=None) -> float:
    ev = ev if ev is not None else problem.evaluate(state.w, state.ws)
    m, p = state.multipliers, state.penalties
    total = ev.objective + _constraint_terms(ev, m, p)
    for j, ws_j in state.neighbor_ws.items():
        total += v(p.rho[j], m.nu[j], state.ws - ws_j)
        nu_ji, rho_ji = state.neighbor_nu_rho[j]
        total += v(rho_ji, nu_ji, ws_j - state.ws)
    return total


def local_lagrangian_grad(problem, state, ev=None):
    """Exact gradient of :func:`local_lagrangian` in ``(w_i, ws_i)``."""
    ev = ev if ev is not None else problem.evaluate(state.w, state.ws)
    m, p = state.multipliers, state.penalties
    gw, gws = ev.pullback(_constraint_cotangents(ev, m, p))
    for j, ws_j in state.neighbor_ws.items():
        diff = state.ws - ws_j
        nu_ji, rho_ji = state.neighbor_nu_rho[j]
        gws = gws + (m.nu[j] + p.rho[j] * diff) - (nu_ji - rho_ji * diff)
    return gw, gws


def global_lagrangian(problems, states) -> float:
    """Network Lagrangian; every edge contributes once per orientation."""
    total = 0.0
    for prob, st in zip(problems, states):
        ev = prob.evaluate(st.w, st.ws)
        total += ev.objective + _constraint_terms(ev, st.multipliers, st.penalties)
        for j in st.multipliers.nu:
            total += v(st.penalties.rho[j], st.multipliers.nu[j], st.ws - states[j].ws)
    return total


def global_block_grad(problems, states, i: int, ev=None):
    """Gradient of :func:`global_lagrangian` in node ``i``'s block.

    Reads neighbour parameters and multipliers straight from the global
    ``states`` rather than from node ``i``'s received copies.
    """
    st = states[i]
    ev = ev if ev is not None else problems[i].evaluate(st.w, st.ws)
    gw, gws = ev.pullback(_constraint_cotangents(ev, st.multipliers, st.penalties))
    for j in st.multipliers.nu:
        other = states[j]
        diff = st.ws - other.ws
        own = st.multipliers.nu[j] + st.penalties.rho[j] * diff
        mirrored = other.multipliers.nu[i] - other.penalties.rho[i] * diff
        gws = gws + own - mirrored
    return gw, gws
