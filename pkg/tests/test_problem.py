import numpy as np
import pytest

from asymmlfc import logic
from asymmlfc.model import DimensionMismatch, MlpSpec, forward, init_params
from asymmlfc.problem import (
    CallableNodeProblem,
    ConstraintRow,
    ConstraintSystem,
    Dataset,
    InvalidConfig,
    LfcNodeProblem,
    SquaredLoss,
    SupervisedResidual,
    constraints_jtvp,
    eval_constraints,
    objective_value_and_grad,
)
from asymmlfc.scenarios import (
    DigitConfig,
    DocumentConfig,
    build_digit_scenario,
    build_document_scenario,
    document_kb,
)


def fd_blocks(f, w, ws, h=1e-6):
    def part(x, make):
        g = np.zeros_like(x)
        for k in range(x.size):
            e = np.zeros_like(x)
            e[k] = h
            g[k] = (f(*make(x + e)) - f(*make(x - e))) / (2 * h)
        return g
    return part(w, lambda v: (v, ws)), part(ws, lambda v: (w, v))


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def small_problem(rng, wd=0.0):
    p_spec = MlpSpec((3, 4, 1), weight_decay=wd)
    s_spec = MlpSpec((3, 2), weight_decay=wd)
    X = rng.random((5, 3))
    imp = logic.compile(logic.parse_formula("implies p even"))
    xor = logic.compile(logic.parse_formula("xor even odd"))
    bad = logic.compile(logic.parse_formula("not (and p odd)"), "ineq")
    systems = {
        "eq": ConstraintSystem((ConstraintRow(imp, np.arange(5)),)),
        "ineq": ConstraintSystem((ConstraintRow(bad, np.array([0, 2, 4])),)),
        "shared_eq": ConstraintSystem((ConstraintRow(xor, np.arange(5)),
                                       ConstraintRow(SupervisedResidual("odd", np.array([1.0, 0.0])), np.array([1, 3])))),
    }
    terms = [SquaredLoss("p", np.array([0, 1]), np.array([1.0, 0.0])),
             SquaredLoss("even", np.array([4]), np.array([1.0]), weight=0.2)]
    prob = LfcNodeProblem(X, s_spec, {"p": ("p", 0), "even": ("s", 0), "odd": ("s", 1)},
                          terms, systems, p_spec=p_spec)
    w = rng.standard_normal(p_spec.n_params)
    ws = rng.standard_normal(s_spec.n_params)
    return prob, w, ws


def test_dataset_masks_subset_concat():
    d = Dataset(np.eye(3), {"a": [1.0, np.nan, 0.0]})
    assert d.supervised.tolist() == [True, False, True]
    assert d.unsupervised.tolist() == [False, True, False]
    e = Dataset.concat([d, Dataset(np.ones((2, 3)), {"b": [1.0, 1.0]})])
    assert len(e) == 5 and np.isnan(e.labels["a"][3:]).all() and np.isnan(e.labels["b"][:3]).all()
    assert d.subset([2]).labels["a"].tolist() == [0.0]
    with pytest.raises(DimensionMismatch):
        Dataset(np.eye(3), {"a": [1.0]})


def test_empty_objective_is_zero():
    s_spec = MlpSpec((2, 1))
    prob = LfcNodeProblem(np.zeros((3, 2)), s_spec, {"a": ("s", 0)})
    val, (gw, gws) = objective_value_and_grad(prob, np.zeros(0), np.ones(s_spec.n_params))
    assert val == 0.0 and gw.size == 0 and not gws.any()


def test_single_sample_closed_form():
    p_spec = MlpSpec((1, 1))
    s_spec = MlpSpec((1, 1))
    prob = LfcNodeProblem(np.array([[0.7]]), s_spec, {"p": ("p", 0), "s": ("s", 0)},
                          [SquaredLoss("p", np.array([0]), np.array([1.0]))], p_spec=p_spec)
    val, (gw, _) = objective_value_and_grad(prob, np.zeros(2), np.zeros(2))
    assert val == pytest.approx(0.25)
    # 2 (p - y) * sigma' * [x, 1] with p = 0.5
    np.testing.assert_allclose(gw, 2 * (0.5 - 1.0) * 0.25 * np.array([0.7, 1.0]))


@pytest.mark.parametrize("seed", range(5))
def test_objective_and_constraint_gradients(seed):
    rng = np.random.default_rng(seed)
    prob, w, ws = small_problem(rng, wd=0.3)
    val, (gw, gws) = objective_value_and_grad(prob, w, ws)
    fw, fws = fd_blocks(lambda a, b: prob.evaluate(a, b).objective, w, ws)
    assert rel(gw, fw) < 1e-5 and rel(gws, fws) < 1e-5
    for system in ("eq", "ineq", "shared_eq"):
        cot = rng.standard_normal(prob.sizes[system])
        jw, jws = constraints_jtvp(prob, system, w, ws, cot)
        fw, fws = fd_blocks(lambda a, b: float(cot @ eval_constraints(prob, system, a, b)), w, ws)
        assert rel(jw, fw) < 1e-5 and rel(jws, fws) < 1e-5


def test_sizes_and_sample_major_stacking():
    rng = np.random.default_rng(0)
    prob, w, ws = small_problem(rng)
    assert prob.sizes == {"eq": 5, "ineq": 3, "shared_eq": 12, "shared_ineq": 0}
    v = eval_constraints(prob, "shared_eq", w, ws)
    s = forward(prob.s_spec, ws, prob.features)
    # xor over 5 samples: (s0+s1-1, s0*s1) per sample, then the two residuals
    expect = np.column_stack([s[:, 0] + s[:, 1] - 1, s[:, 0] * s[:, 1]]).ravel()
    np.testing.assert_allclose(v[:10], expect)
    np.testing.assert_allclose(v[10:], s[[1, 3], 1] - [1.0, 0.0])


def test_two_rows_three_samples_layout():
    xor = logic.compile(logic.parse_formula("xor a b"))
    sysm = ConstraintSystem((ConstraintRow(xor, np.arange(3)),))
    acts = {"a": np.array([1.0, 0.5, 0.0]), "b": np.array([0.0, 0.5, 0.0])}
    assert sysm.m == 6
    np.testing.assert_allclose(sysm.evaluate(acts), [0, 0, 0, 0.25, -1, 0])


def test_zero_cotangent_and_residual_chain():
    rng = np.random.default_rng(3)
    prob, w, ws = small_problem(rng)
    jw, jws = constraints_jtvp(prob, "eq", w, ws, np.zeros(prob.sizes["eq"]))
    assert not jw.any() and not jws.any()
    # residual row: J^T e_k is the gradient of odd(x_k) alone
    cot = np.zeros(prob.sizes["shared_eq"])
    cot[10] = 1.0
    _, jws = constraints_jtvp(prob, "shared_eq", w, ws, cot)
    _, fws = fd_blocks(lambda a, b: float(forward(prob.s_spec, b, prob.features[1])[1]), w, ws)
    assert rel(jws, fws) < 1e-6
    with pytest.raises(DimensionMismatch):
        constraints_jtvp(prob, "eq", w, ws, np.zeros(4))


def test_binding_errors():
    s_spec = MlpSpec((2, 1))
    imp = logic.compile(logic.parse_formula("implies a b"))
    with pytest.raises(InvalidConfig):
        LfcNodeProblem(np.zeros((2, 2)), s_spec, {"a": ("s", 0)},
                       systems={"eq": ConstraintSystem((ConstraintRow(imp, np.arange(2)),))})
    with pytest.raises(InvalidConfig):
        LfcNodeProblem(np.zeros((2, 2)), s_spec, {"a": ("s", 3)})
    with pytest.raises(InvalidConfig):
        LfcNodeProblem(np.zeros((2, 2)), s_spec, {"a": ("p", 0)})
    with pytest.raises(DimensionMismatch):
        LfcNodeProblem(np.zeros((2, 2)), s_spec, {"a": ("s", 0)}).evaluate(np.zeros(1), np.zeros(3))


def test_callable_problem():
    prob = CallableNodeProblem(1, 1, lambda w, ws: (w[0] ** 2 + ws[0], [2 * w[0]], [1.0]),
                               {"ineq": lambda w, ws: ([w[0] - ws[0]], [[1.0]], [[-1.0]])})
    assert prob.sizes == {"eq": 0, "ineq": 1, "shared_eq": 0, "shared_ineq": 0}
    val, (gw, gws) = objective_value_and_grad(prob, np.array([2.0]), np.array([1.0]))
    assert val == 5.0 and gw.tolist() == [4.0] and gws.tolist() == [1.0]
    assert constraints_jtvp(prob, "ineq", [2.0], [1.0], [3.0]) == pytest.approx(([3.0], [-3.0]))


# --- scenario wiring -----------------------------------------------------------------

@pytest.fixture(scope="module")
def digits():
    return build_digit_scenario(DigitConfig(n_sup=4, n_unsup=6, n_test_per_class=2))


def _texts(system):
    return [str(r.constraint.rows[0]) for r in system.rows]


def test_digit_private_constraints(digits):
    for i, prob in enumerate(digits.problems):
        (row,) = prob.systems["eq"].rows
        parity = "even" if i % 2 == 0 else "odd"
        assert row.constraint.rows == (logic.Poly({(f"p{i}",): 1.0, tuple(sorted((parity, f"p{i}"))): -1.0}),)
        assert len(row.samples) == prob.n_samples
        (xor,) = prob.systems["shared_eq"].rows
        assert xor.constraint is digits.problems[0].systems["shared_eq"].rows[0].constraint
        assert not prob.systems["ineq"].rows and not prob.systems["shared_ineq"].rows


def test_digit_supervision_and_sizes(digits):
    prob = digits.problems[3]
    (term,) = prob.objective_terms
    assert term.predicate == "p3" and len(term.samples) == 4 and term.targets.tolist() == [1, 1, 0, 0]
    assert prob.n_samples == 10 and prob.sizes["shared_eq"] == 20


def test_boolean_consistent_outputs_satisfy_every_constraint(digits):
    for i, prob in enumerate(digits.problems):
        for digit in range(10):
            acts = {f"p{i}": np.array([float(digit == i)]),
                    "even": np.array([float(digit % 2 == 0)]),
                    "odd": np.array([float(digit % 2 == 1)])}
            for sysm in prob.systems.values():
                for row in sysm.rows:
                    assert np.all(logic.evaluate(row.constraint, acts) == 0)


def test_digit_without_unsupervised_data():
    sc = build_digit_scenario(DigitConfig(n_sup=4, n_unsup=6, semi_supervised=False))
    assert all(p.n_samples == 4 for p in sc.problems)


def test_digit_config_errors():
    with pytest.raises(InvalidConfig):
        build_digit_scenario(DigitConfig(n_sup=1))


# rules known per node, numbering clothing=1, politics=2, running=3, shoes=4, sport=5, wrestling=6
AWARE_COUNTS = {1: 1, 2: 6, 3: 3, 4: 2, 5: 3, 6: 2}


def test_document_awareness_pattern():
    kb = document_kb()
    assert len(kb) == 8
    sc = build_document_scenario(DocumentConfig(n_pos=3, n_unsup=4))
    for node, count in AWARE_COUNTS.items():
        prob = sc.problems[node - 1]
        assert len(prob.systems["eq"].rows) == count
        assert sum(node - 1 in e.nodes for e in kb) == count
        assert prob.p_spec is None and prob.n_private == 0
        assert not prob.systems["shared_eq"].rows


def test_document_node4_rows():
    sc = build_document_scenario(DocumentConfig(n_pos=3, n_unsup=4))
    texts = _texts(sc.problems[3].systems["eq"])
    assert texts == ["politics*shoes", "running*shoes - clothing*running*shoes"]


def test_document_objective_is_positive_only():
    sc = build_document_scenario(DocumentConfig(n_pos=3, n_unsup=4))
    for i, prob in enumerate(sc.problems):
        (term,) = prob.objective_terms
        assert term.targets.tolist() == [1.0] * 3
        assert prob.bindings[term.predicate] == ("s", i)
