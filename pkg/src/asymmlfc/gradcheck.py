"""Finite-difference checks of the local Lagrangian gradient on random states."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import lagrangian as lg
from .asymm import init_states
from .scenarios import (
    DigitConfig,
    DocumentConfig,
    build_digit_scenario,
    build_document_scenario,
    toy_suite,
)

FAMILIES = ("digit", "document", "toy")
KINK_BAND = 1e-4


@dataclass
class GradCheckResult:
    family: str
    n_states: int
    max_rel_err: float  # over states away from q-kinks
    max_rel_err_kink: float  # over states with some row near a q-kink
    n_kink: int

    def passed(self, tol: float = 1e-5, kink_tol: float = 1e-3) -> bool:
        return self.max_rel_err < tol and self.max_rel_err_kink < kink_tol


def family_scenarios(family: str, seed: int = 0) -> list:
    """Small instances of every scenario shape; sizes are cut down so that a
    full coordinate-wise finite difference stays cheap."""
    if family == "digit":
        cfg = DigitConfig(seed=seed, n_sup=6, n_unsup=8, n_test_per_class=1)
        return [build_digit_scenario(cfg)]
    if family == "document":
        return [build_document_scenario(DocumentConfig(seed=seed, n_pos=4, n_unsup=6, hidden=h))
                for h in (0, 4)]
    if family == "toy":
        return toy_suite()
    raise ValueError(f"unknown family {family!r}")


def random_state(scenario, i: int, rng: np.random.Generator, scale: float = 0.5):
    """Node ``i``'s state with every field drawn at random."""
    st = init_states(scenario.graph, scenario.problems, scenario.params,
                     scenario.w0, scenario.ws0)[i]
    st.w = st.w + scale * rng.standard_normal(st.w.shape)
    st.ws = st.ws + scale * rng.standard_normal(st.ws.shape)
    st.neighbor_ws = {j: x + scale * rng.standard_normal(x.shape) for j, x in st.neighbor_ws.items()}
    m = st.multipliers
    m.nu = {j: rng.standard_normal(x.shape) for j, x in m.nu.items()}
    m.lam = rng.standard_normal(m.lam.shape)
    m.lam_s = rng.standard_normal(m.lam_s.shape)
    m.mu = np.abs(rng.standard_normal(m.mu.shape))
    m.mu_s = np.abs(rng.standard_normal(m.mu_s.shape))
    pen = lambda: float(rng.uniform(0.5, 3.0))  # noqa: E731
    st.penalties = lg.PenaltySet({j: pen() for j in st.neighbors}, pen(), pen(), pen(), pen())
    st.neighbor_nu_rho = {j: (rng.standard_normal(st.ws.shape), pen()) for j in st.neighbors}
    st.cache = None
    return st


def near_kink(problem, st, band: float = KINK_BAND) -> bool:
    ev = problem.evaluate(st.w, st.ws)
    m, p = st.multipliers, st.penalties
    z = np.concatenate([m.mu + p.zeta * ev.values["ineq"],
                        m.mu_s + p.zeta_s * ev.values["shared_ineq"]])
    return bool(z.size and np.min(np.abs(z)) < band)


def fd_grad(problem, st, h: float = 1e-6):
    """Central differences of the local Lagrangian in ``(w, ws)``."""
    def f(w, ws):
        return lg.local_lagrangian(problem, replace(st, w=w, ws=ws, cache=None))

    def partials(x, make):
        g = np.empty_like(x)
        for k in range(x.size):
            step = h * max(1.0, abs(x[k]))
            xp, xm = x.copy(), x.copy()
            xp[k] += step
            xm[k] -= step
            g[k] = (f(*make(xp)) - f(*make(xm))) / (2 * step)
        return g
    gw = partials(st.w, lambda x: (x, st.ws))
    gws = partials(st.ws, lambda x: (st.w, x))
    return gw, gws


def relative_error(problem, st) -> float:
    gw, gws = lg.local_lagrangian_grad(problem, st)
    fw, fws = fd_grad(problem, st)
    g, fd = np.r_[gw, gws], np.r_[fw, fws]
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12))


def check_family(family: str, n_states: int = 100, seed: int = 0) -> GradCheckResult:
    rng = np.random.default_rng([seed, 7])
    scenarios = family_scenarios(family, seed)
    worst, worst_kink, n_kink = 0.0, 0.0, 0
    for k in range(n_states):
        sc = scenarios[k % len(scenarios)]
        i = int(rng.integers(len(sc.problems)))
        st = random_state(sc, i, rng)
        err = relative_error(sc.problems[i], st)
        if near_kink(sc.problems[i], st):
            n_kink += 1
            worst_kink = float(np.max([worst_kink, err]))
        else:
            worst = float(np.max([worst, err]))
    return GradCheckResult(family, n_states, worst, worst_kink, n_kink)
