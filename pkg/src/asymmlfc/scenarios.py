"""Scenario assembly: knowledge base + per-node data -> graph and node problems."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import data as dio
from . import logic
from .asymm import AsymmParams
from .model import MlpSpec, init_params
from .netgraph import Graph, build_graph, make_graph, ring_edges
from .problem import (
    CallableNodeProblem,
    ConstraintRow,
    ConstraintSystem,
    Dataset,
    InvalidConfig,
    LfcNodeProblem,
    SquaredLoss,
)


@dataclass
class Scenario:
    name: str
    graph: Graph
    problems: list
    w0: list
    ws0: list
    params: AsymmParams = field(default_factory=AsymmParams)
    kb: list = field(default_factory=list)
    # states -> {predictor name: (scores, 0/1 labels)}
    evaluate: Optional[Callable] = None


def assemble(kb, node_data, bindings, s_spec, p_spec=None, shared_data=None) -> list:
    """One :class:`LfcNodeProblem` per node.

    Each node's sample set is its private data followed by the shared data.
    Labels on private rows enter the objective with weight 1, labels of
    shared predicates on shared rows with weight ``1/N``.  Shared formulas are
    compiled once and the same compiled object is bound on every node.
    """
    n = len(node_data)
    shared_compiled = [(logic.compile(e.formula, e.kind), e) for e in kb if e.shared]
    for e in kb:
        if not e.shared and any(not 0 <= k < n for k in e.nodes):
            raise InvalidConfig(f"kb line {e.line}: node id out of range for N={n}")
    problems = []
    for i, own in enumerate(node_data):
        parts = [own] + ([shared_data] if shared_data is not None and len(shared_data) else [])
        ds = Dataset.concat(parts)
        n_own = len(own)
        everything = np.arange(len(ds))
        terms = []
        for pred, y in sorted(ds.labels.items()):
            if pred not in bindings[i]:
                continue
            for lo, hi, wgt in ((0, n_own, 1.0), (n_own, len(ds), 1.0 / n)):
                if bindings[i][pred][0] == "p" and lo > 0:
                    wgt = 1.0
                idx = np.arange(lo, hi)
                idx = idx[~np.isnan(y[idx])]
                if len(idx):
                    terms.append(SquaredLoss(pred, idx, y[idx].copy(), wgt))
        rows = {"eq": [], "ineq": [], "shared_eq": [], "shared_ineq": []}
        for e in kb:
            if e.shared or i not in e.nodes:
                continue
            missing = logic.predicates(e.formula) - set(bindings[i])
            if missing:
                raise InvalidConfig(f"kb line {e.line}: node {i} cannot see {sorted(missing)}")
            rows[e.kind].append(ConstraintRow(logic.compile(e.formula, e.kind), everything))
        for c, e in shared_compiled:
            missing = logic.predicates(e.formula) - set(bindings[i])
            if missing:
                raise InvalidConfig(f"kb line {e.line}: node {i} cannot see {sorted(missing)}")
            rows["shared_" + e.kind].append(ConstraintRow(c, everything))
        systems = {k: ConstraintSystem(tuple(v)) for k, v in rows.items()}
        problems.append(LfcNodeProblem(ds.features, s_spec, bindings[i], terms, systems,
                                       p_spec=p_spec, name=f"node{i}"))
    return problems


# --- digit parity --------------------------------------------------------------

@dataclass
class DigitConfig:
    seed: int = 0
    n_sup: int = 60
    n_unsup: int = 200
    dim: int = 16
    hidden: int = 8
    sigma: float = 0.1
    n_test_per_class: int = 100
    semi_supervised: bool = True
    weight_decay: float = 1e-3
    p_output_bias: float = 0.0
    graph: str = "ring"
    source: str = "synthetic"  # or "idx:<images>,<labels>" or a gen-data directory


def digit_kb(n: int = 10) -> list:
    lines = [f"private:{i} implies p{i} {'even' if i % 2 == 0 else 'odd'}" for i in range(n)]
    lines.append("shared xor even odd")
    return logic.parse_kb("\n".join(lines))


def _digit_split(classes_pool, features_pool, cfg, rng):
    """Private data per node drawn without overlap from a labeled pool."""
    order = rng.permutation(len(classes_pool))
    by_class = {c: [k for k in order if classes_pool[k] == c] for c in range(10)}
    taken = {c: 0 for c in range(10)}

    def take(c, m):
        got = by_class[c][taken[c]:taken[c] + m]
        if len(got) < m:
            raise InvalidConfig(f"not enough samples of class {c}")
        taken[c] += m
        return got

    nodes = []
    n_pos = cfg.n_sup // 2
    n_neg = cfg.n_sup - n_pos
    for i in range(10):
        idx = take(i, n_pos)
        others = [c for c in range(10) if c != i]
        for k in range(n_neg):
            idx += take(others[k % 9], 1)
        y = np.r_[np.ones(n_pos), np.zeros(n_neg)]
        if cfg.semi_supervised and cfg.n_unsup:
            for k in range(cfg.n_unsup):
                idx += take(int(rng.integers(10)), 1)
            y = np.r_[y, np.full(cfg.n_unsup, np.nan)]
        nodes.append(Dataset(features_pool[idx], {f"p{i}": y}))
    return nodes


def _synthetic_digits(cfg, rng):
    means = dio.blob_means(10, cfg.dim, rng)
    per_class = 2 * (cfg.n_sup + cfg.n_unsup) + 10
    classes = np.repeat(np.arange(10), per_class)
    pool_X = dio.sample_blobs(means, classes, cfg.sigma, rng)
    test_c = np.repeat(np.arange(10), cfg.n_test_per_class)
    test_X = dio.sample_blobs(means, test_c, cfg.sigma, rng)
    return _digit_split(classes, pool_X, cfg, rng), (test_X, test_c)


def _idx_digits(cfg, rng):
    img, lab = cfg.source[4:].split(",")
    X = dio.read_idx_images(img)
    y = dio.read_idx_labels(lab)
    order = rng.permutation(len(y))
    n_test = 10 * cfg.n_test_per_class
    test_idx, pool_idx = order[:n_test], order[n_test:]
    return _digit_split(y[pool_idx], X[pool_idx], cfg, rng), (X[test_idx], y[test_idx])


def _dir_digits(cfg):
    root = Path(cfg.source)
    nodes = [dio.read_dataset_csv(root / f"node{i}.csv", f"p{i}") for i in range(10)]
    if not cfg.semi_supervised:
        nodes = [d.subset(np.flatnonzero(d.supervised)) for d in nodes]
    ev = np.load(root / "eval.npz")
    return nodes, (ev["X"], ev["y"].astype(int))


def build_digit_scenario(cfg: DigitConfig = None) -> Scenario:
    """Ten nodes, node ``i`` recognises digit ``i`` privately; all share an
    even/odd predictor learned only through the logic constraints."""
    cfg = cfg or DigitConfig()
    if cfg.n_sup < 2 or cfg.n_unsup < 0 or cfg.hidden < 0:
        raise InvalidConfig("digit scenario needs n_sup >= 2, n_unsup >= 0, hidden >= 0")
    rng = np.random.default_rng(cfg.seed)
    if cfg.source == "synthetic":
        nodes, (test_X, test_c) = _synthetic_digits(cfg, rng)
    elif cfg.source.startswith("idx:"):
        nodes, (test_X, test_c) = _idx_digits(cfg, rng)
    else:
        nodes, (test_X, test_c) = _dir_digits(cfg)
    dim = nodes[0].features.shape[1]
    hid = (cfg.hidden,) if cfg.hidden else ()
    p_spec = MlpSpec((dim,) + hid + (1,), output_bias_init=cfg.p_output_bias,
                     weight_decay=cfg.weight_decay)
    s_spec = MlpSpec((dim,) + hid + (2,), weight_decay=cfg.weight_decay)
    bindings = [{f"p{i}": ("p", 0), "even": ("s", 0), "odd": ("s", 1)} for i in range(10)]
    kb = digit_kb()
    problems = assemble(kb, nodes, bindings, s_spec, p_spec)
    graph = make_graph(cfg.graph, 10, seed=cfg.seed)
    w0 = [init_params(p_spec, np.random.default_rng([cfg.seed, 1, i])) for i in range(10)]
    shared = init_params(s_spec, np.random.default_rng([cfg.seed, 2]))
    ws0 = [shared.copy() for _ in range(10)]

    def evaluate(states):
        ws_bar = np.mean([st.ws for st in states], axis=0)
        out = {}
        for i, (st, prob) in enumerate(zip(states, problems)):
            acts = prob.predict(st.w, ws_bar, test_X)
            out[f"p{i}"] = (acts[f"p{i}"], (test_c == i).astype(float))
            if i == 0:
                out["even"] = (acts["even"], (test_c % 2 == 0).astype(float))
                out["odd"] = (acts["odd"], (test_c % 2 == 1).astype(float))
        return out

    # the xor row is replicated on every node, so its starting penalty is
    # divided by N; a stiffer consensus keeps the local copies of s pooled
    params = AsymmParams(alpha=0.02, gamma=2.0, eps0=3.0, eps_min=1e-3, penalty_cap=10.0,
                         penalty0=0.3, consensus_penalty0=5.0, shared_penalty0=0.03)
    name = "digit_parity" if cfg.semi_supervised else "digit_supervised"
    return Scenario(name, graph, problems, w0, ws0, params, kb, evaluate)


# --- document classification ----------------------------------------------------

# (formula, aware nodes) with the category numbering clothing=1 ... wrestling=6
DOCUMENT_KB_ROWS = (
    ("not (and politics wrestling)", (2, 6)),
    ("not (and politics clothing)", (2, 1)),
    ("not (and politics sport)", (2, 5)),
    ("not (and politics running)", (2, 3)),
    ("not (and politics shoes)", (2, 4)),
    ("implies wrestling sport", (6, 5)),
    ("implies (and running shoes) clothing", (3, 4, 2)),
    ("implies running sport", (3, 5)),
)


def document_kb() -> list:
    """Document knowledge base with 0-based node ids."""
    text = "\n".join(
        f"private:{','.join(str(k - 1) for k in nodes)} {f}" for f, nodes in DOCUMENT_KB_ROWS
    )
    return logic.parse_kb(text)


@dataclass
class DocumentConfig:
    seed: int = 0
    n_pos: int = 40
    n_unsup: int = 60
    hidden: int = 0
    weight_decay: float = 1e-2
    output_bias: float = -1.0
    graph: str = "ring"
    source: str = "synthetic"


def _synthetic_documents(cfg, rng):
    """Positive-only private sets plus an even split of the pooled unlabeled
    documents, which double as the evaluation set."""
    n = len(dio.DOC_CLASSES)
    positives = []
    for i, cls in enumerate(dio.DOC_CLASSES):
        X, Y = dio.sample_documents(8 * cfg.n_pos, rng)
        pos = np.flatnonzero(Y[:, i] == 1)[:cfg.n_pos]
        if len(pos) < cfg.n_pos:
            raise InvalidConfig(f"could not draw {cfg.n_pos} positives for {cls}")
        positives.append(X[pos])
    U, UY = dio.sample_documents(n * cfg.n_unsup, rng)
    perm = rng.permutation(len(U))
    U, UY = U[perm], UY[perm]
    nodes = [
        Dataset(
            np.vstack([P, U[i * cfg.n_unsup:(i + 1) * cfg.n_unsup]]),
            {dio.DOC_CLASSES[i]: np.r_[np.ones(len(P)), np.full(cfg.n_unsup, np.nan)]},
        )
        for i, P in enumerate(positives)
    ]
    return nodes, (U, UY)


def build_document_scenario(cfg: DocumentConfig = None) -> Scenario:
    """Six nodes, one document category each, positive-only supervision.

    Evaluation is transductive: scores on the pooled unlabeled documents.
    """
    cfg = cfg or DocumentConfig()
    if cfg.n_pos < 1 or cfg.n_unsup < 0:
        raise InvalidConfig("document scenario needs n_pos >= 1 and n_unsup >= 0")
    n = len(dio.DOC_CLASSES)
    if cfg.source != "synthetic":
        root = Path(cfg.source)
        nodes = [dio.read_dataset_csv(root / f"node{i}.csv", dio.DOC_CLASSES[i]) for i in range(n)]
        ev = np.load(root / "eval.npz")
        U, UY = ev["X"], ev["y"]
    else:
        nodes, (U, UY) = _synthetic_documents(cfg, np.random.default_rng(cfg.seed))
    dim = nodes[0].features.shape[1]
    hid = (cfg.hidden,) if cfg.hidden else ()
    s_spec = MlpSpec((dim,) + hid + (n,), output_bias_init=cfg.output_bias,
                     weight_decay=cfg.weight_decay)
    binding = {c: ("s", k) for k, c in enumerate(dio.DOC_CLASSES)}
    kb = document_kb()
    problems = assemble(kb, nodes, [binding] * n, s_spec)
    graph = make_graph(cfg.graph, n, seed=cfg.seed)
    w0 = [np.zeros(0) for _ in range(n)]
    shared = init_params(s_spec, np.random.default_rng([cfg.seed, 2]))
    ws0 = [shared.copy() for _ in range(n)]

    def evaluate(states):
        ws_bar = np.mean([st.ws for st in states], axis=0)
        acts = problems[0].predict(np.zeros(0), ws_bar, U)
        return {c: (acts[c], UY[:, k]) for k, c in enumerate(dio.DOC_CLASSES)}

    # alpha * 4 * penalty_cap must stay below 2 for the ring consensus terms
    params = AsymmParams(alpha=0.02, gamma=1.5, eps0=0.5, eps_min=1e-3, penalty_cap=20.0,
                         consensus_penalty0=3.0)
    return Scenario("document", graph, problems, w0, ws0, params, kb, evaluate)


# --- toy problems -------------------------------------------------------------

def _quad(center, weight=1.0):
    center = np.atleast_1d(np.asarray(center, dtype=float))

    def f(w, ws):
        d = ws - center
        return weight * float(d @ d), np.zeros(len(w)), 2.0 * weight * d
    return f


def toy_consensus() -> Scenario:
    """Two nodes share ``u``; node costs ``(u-1)^2`` and ``(u+1)^2``, optimum ``u = 0``."""
    graph = build_graph(2, [(0, 1)])
    problems = [CallableNodeProblem(0, 1, _quad(1.0), name="node0"),
                CallableNodeProblem(0, 1, _quad(-1.0), name="node1")]
    params = AsymmParams(alpha=0.1, eps0=1e-1, eps_min=1e-7, gamma=2.0, penalty_cap=8.0)
    w0 = [np.zeros(0)] * 2
    ws0 = [np.array([0.7]), np.array([-0.3])]

    def evaluate(states):
        return {}
    return Scenario("toy_consensus", graph, problems, w0, ws0, params, [], evaluate)


def _circle_node(c, d):
    """Private ``x``, shared ``u``: min (x-c)^2 + (u-d)^2 s.t. x^2 + u^2 = 1, u <= 0.6."""

    def obj(w, ws):
        return (w[0] - c) ** 2 + (ws[0] - d) ** 2, np.array([2 * (w[0] - c)]), np.array([2 * (ws[0] - d)])

    def eq(w, ws):
        return [w[0] ** 2 + ws[0] ** 2 - 1.0], [[2 * w[0]]], [[2 * ws[0]]]

    def sineq(w, ws):
        return [ws[0] - 0.6], [[0.0]], [[1.0]]
    return CallableNodeProblem(1, 1, obj, {"eq": eq, "shared_ineq": sineq})


def _ring_node(a, nonconvex):
    """Shared 2-vector ``u``; ``||u - a||^2`` with a shared sum constraint."""
    a = np.asarray(a, dtype=float)

    def obj(w, ws):
        d = ws - a
        val = float(d @ d)
        g = 2 * d
        if nonconvex:
            val += 0.3 * np.sin(3 * ws[0])
            g = g + np.array([0.9 * np.cos(3 * ws[0]), 0.0])
        return val, np.zeros(0), g

    def seq(w, ws):
        return [ws[0] + ws[1] - 1.0], np.zeros((1, 0)), [[1.0, 1.0]]

    def sineq(w, ws):
        return [ws[0] * ws[1] - 0.2], np.zeros((1, 0)), [[ws[1], ws[0]]]
    return CallableNodeProblem(0, 2, obj, {"shared_eq": seq, "shared_ineq": sineq})


def toy_suite() -> list:
    """Five small problems used for the distributed/centralized equivalence checks.

    Step sizes and penalty caps are small enough that alpha times the
    curvature of the capped Lagrangian stays below 2 on every toy.
    """
    suite = []
    s = toy_consensus()
    suite.append(s)

    g = build_graph(2, [(0, 1)])
    probs = [_circle_node(1.0, 0.5), _circle_node(-0.5, 1.0)]
    suite.append(Scenario("circle_1d", g, probs, [np.array([0.3]), np.array([-0.2])],
                          [np.array([0.1]), np.array([0.1])],
                          AsymmParams(alpha=0.02, eps0=0.2, eps_min=1e-6, gamma=1.5, penalty_cap=4.0)))

    g = build_graph(3, ring_edges(3))
    probs = [_ring_node(a, False) for a in ([1.0, 0.0], [0.0, 1.0], [0.5, 0.5])]
    suite.append(Scenario("ring3", g, probs, [np.zeros(0)] * 3, [np.zeros(2)] * 3,
                          AsymmParams(alpha=0.02, eps0=0.2, gamma=1.5, penalty_cap=4.0)))

    g = build_graph(4, [(0, 1), (1, 2), (2, 3)])
    probs = [_ring_node(a, True) for a in ([1.0, 0.2], [0.1, 0.9], [0.6, 0.6], [0.3, 0.1])]
    ws_init = [np.array([0.2 * k, 0.1]) for k in range(4)]
    suite.append(Scenario("path4_nonconvex", g, probs, [np.zeros(0)] * 4, ws_init,
                          AsymmParams(alpha=0.02, eps0=0.3, gamma=1.5, penalty_cap=4.0)))

    g = build_graph(5, [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2)])
    probs = [_circle_node(c, d) for c, d in ((0.8, 0.2), (0.1, 0.9), (-0.6, 0.4), (0.5, 0.5), (0.0, -0.3))]
    suite.append(Scenario("star5_circle", g, probs, [np.array([0.5])] * 5, [np.array([0.0])] * 5,
                          AsymmParams(alpha=0.02, eps0=0.3, gamma=1.5, penalty_cap=4.0)))
    return suite


# --- data export ---------------------------------------------------------------

def export_data(name: str, cfg, out_dir) -> list:
    """Write the synthetic data of a scenario in the directory layout that
    ``source=<dir>`` reads back: ``node{i}.csv`` plus ``eval.npz``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    if name == "digit_parity":
        nodes, (X, y) = _synthetic_digits(cfg, rng)
        keys = [f"p{i}" for i in range(len(nodes))]
    elif name == "document":
        nodes, (X, y) = _synthetic_documents(cfg, rng)
        keys = list(dio.DOC_CLASSES)
    else:
        raise InvalidConfig(f"scenario {name!r} has no data to export")
    paths = []
    for i, (ds, key) in enumerate(zip(nodes, keys)):
        p = out / f"node{i}.csv"
        dio.write_dataset_csv(p, ds, key)
        paths.append(p)
    np.savez(out / "eval.npz", X=X, y=y)
    paths.append(out / "eval.npz")
    return paths
