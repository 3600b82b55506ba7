"""Per-node pieces of the distributed constrained learning problem.

A node owns private parameters ``w`` (its private predictor) and a local copy
``ws`` of the shared predictor parameters.  Its problem consists of a soft
objective (squared-error fits plus weight decay) and four hard constraint
systems, keyed by :data:`SYSTEMS`:

``eq`` / ``ineq``
    private constraints, ``= 0`` and ``<= 0``
``shared_eq`` / ``shared_ineq``
    the network-wide constraints, replicated on every node's data

Every node problem exposes :meth:`NodeProblem.evaluate`, which returns a
:class:`NodeEval` holding all values at a point and able to pull back
cotangents on the constraint vectors to parameter gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from . import logic
from .model import DimensionMismatch, MlpSpec, backward, forward_cached

SYSTEMS = ("eq", "ineq", "shared_eq", "shared_ineq")


class InvalidConfig(ValueError):
    pass


@dataclass
class Dataset:
    """Feature matrix plus optional 0/1 labels per predicate (NaN = unlabeled)."""

    features: np.ndarray
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        for k, v in self.labels.items():
            v = np.asarray(v, dtype=float)
            if v.shape != (len(self.features),):
                raise DimensionMismatch(f"labels for {k!r} have shape {v.shape}")
            self.labels[k] = v

    def __len__(self):
        return len(self.features)

    @property
    def supervised(self) -> np.ndarray:
        """Boolean mask of the labeled subset."""
        mask = np.zeros(len(self), dtype=bool)
        for v in self.labels.values():
            mask |= ~np.isnan(v)
        return mask

    @property
    def unsupervised(self) -> np.ndarray:
        return ~self.supervised

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.features[idx], {k: v[idx] for k, v in self.labels.items()})

    @staticmethod
    def concat(parts) -> "Dataset":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise InvalidConfig("cannot concatenate zero datasets")
        keys = sorted(set().union(*(p.labels for p in parts)))
        labels = {
            k: np.concatenate([p.labels.get(k, np.full(len(p), np.nan)) for p in parts])
            for k in keys
        }
        return Dataset(np.vstack([p.features for p in parts]), labels)


# --- constraint systems ---------------------------------------------------------

@dataclass(frozen=True)
class SupervisedResidual:
    """Point-wise fit ``f(x) - y`` used as a hard row."""

    predicate: str
    targets: np.ndarray
    kind: str = "eq"

    arity = 1

    def variables(self):
        return {self.predicate}


@dataclass(frozen=True)
class ConstraintRow:
    constraint: object  # logic.PolyConstraint or SupervisedResidual
    samples: np.ndarray

    @property
    def size(self) -> int:
        return self.constraint.arity * len(self.samples)


@dataclass(frozen=True)
class ConstraintSystem:
    """Rows in declaration order; each row is stacked sample-major."""

    rows: tuple = ()

    @property
    def m(self) -> int:
        return sum(r.size for r in self.rows)

    def evaluate(self, acts: Mapping) -> np.ndarray:
        out = []
        for row in self.rows:
            c = row.constraint
            if isinstance(c, SupervisedResidual):
                out.append(acts[c.predicate][row.samples] - c.targets)
            else:
                sub = {n: acts[n][row.samples] for n in c.variables()}
                out.append(logic.evaluate(c, sub).ravel())
        return np.concatenate(out) if out else np.zeros(0)

    def pullback(self, acts: Mapping, cotangent, into: dict) -> None:
        """Accumulate ``J^T cotangent`` onto per-predicate activation cotangents."""
        cotangent = np.asarray(cotangent, dtype=float)
        if cotangent.shape != (self.m,):
            raise DimensionMismatch(f"cotangent has shape {cotangent.shape}, system has m={self.m}")
        off = 0
        for row in self.rows:
            c = row.constraint
            seg = cotangent[off:off + row.size]
            off += row.size
            if isinstance(c, SupervisedResidual):
                np.add.at(into[c.predicate], row.samples, seg)
                continue
            sub = {n: acts[n][row.samples] for n in c.variables()}
            g = logic.jacobian_tvp(c, sub, seg.reshape(len(row.samples), c.arity))
            for n, v in g.items():
                np.add.at(into[n], row.samples, v)


@dataclass(frozen=True)
class SquaredLoss:
    """``weight * sum (f(x) - y)^2`` over the listed samples."""

    predicate: str
    samples: np.ndarray
    targets: np.ndarray
    weight: float = 1.0


# --- node problems --------------------------------------------------------------

class NodeEval:
    """Values of one node's problem at a fixed ``(w, ws)``."""

    objective: float
    values: dict

    def pullback(self, cotangents: Mapping, objective_weight: float = 1.0):
        """Gradient of ``objective_weight * objective + sum_k <cot_k, values_k>``."""
        raise NotImplementedError


class NodeProblem:
    n_private: int
    n_shared: int
    sizes: dict

    def evaluate(self, w, ws) -> NodeEval:
        raise NotImplementedError

    def objective_value_and_grad(self, w, ws):
        ev = self.evaluate(w, ws)
        return ev.objective, ev.pullback({})

    def eval_constraints(self, system: str, w, ws) -> np.ndarray:
        return self.evaluate(w, ws).values[system]

    def constraints_jtvp(self, system: str, w, ws, cotangent):
        return self.evaluate(w, ws).pullback({system: cotangent}, objective_weight=0.0)

    def _check(self, w, ws):
        w = np.asarray(w, dtype=float)
        ws = np.asarray(ws, dtype=float)
        if w.shape != (self.n_private,) or ws.shape != (self.n_shared,):
            raise DimensionMismatch(
                f"expected ({self.n_private},) and ({self.n_shared},), got {w.shape} and {ws.shape}"
            )
        return w, ws


class _LfcEval(NodeEval):
    def __init__(self, prob, w, ws, caches, acts):
        self.prob, self.w, self.ws = prob, w, ws
        self.caches, self.acts = caches, acts
        obj = 0.0
        for t in prob.objective_terms:
            r = acts[t.predicate][t.samples] - t.targets
            obj += t.weight * float(r @ r)
        if prob.p_spec is not None and prob.p_spec.weight_decay:
            obj += 0.5 * prob.p_spec.weight_decay * float(w @ w)
        if prob.s_spec.weight_decay:
            obj += 0.5 * prob.s_spec.weight_decay * float(ws @ ws)
        self.objective = obj
        self.values = {k: prob.systems[k].evaluate(acts) for k in SYSTEMS}

    def pullback(self, cotangents, objective_weight=1.0):
        prob, acts = self.prob, self.acts
        into = {n: np.zeros(prob.n_samples) for n in prob.bindings}
        if objective_weight:
            for t in prob.objective_terms:
                r = acts[t.predicate][t.samples] - t.targets
                np.add.at(into[t.predicate], t.samples, (2.0 * t.weight * objective_weight) * r)
        for k, cot in cotangents.items():
            prob.systems[k].pullback(acts, cot, into)
        ups = {"p": None, "s": None}
        for name, (net, col) in prob.bindings.items():
            spec = prob.p_spec if net == "p" else prob.s_spec
            if ups[net] is None:
                ups[net] = np.zeros((prob.n_samples, spec.n_outputs))
            ups[net][:, col] += into[name]
        gw = np.zeros(prob.n_private)
        gws = np.zeros(prob.n_shared)
        if ups["p"] is not None:
            gw = backward(prob.p_spec, self.w, self.caches["p"], ups["p"])[0]
        if ups["s"] is not None:
            gws = backward(prob.s_spec, self.ws, self.caches["s"], ups["s"])[0]
        if objective_weight:
            if prob.p_spec is not None and prob.p_spec.weight_decay:
                gw = gw + objective_weight * prob.p_spec.weight_decay * self.w
            if prob.s_spec.weight_decay:
                gws = gws + objective_weight * prob.s_spec.weight_decay * self.ws
        return gw, gws


class LfcNodeProblem(NodeProblem):
    """Node problem whose predicates are outputs of a private and a shared MLP.

    ``bindings`` maps predicate names to ``("p" | "s", output index)``.  All
    sample indices refer to rows of ``features`` (the node's data followed by
    any shared data).
    """

    def __init__(
        self,
        features,
        s_spec: MlpSpec,
        bindings: Mapping,
        objective_terms=(),
        systems: Optional[Mapping] = None,
        p_spec: Optional[MlpSpec] = None,
        name: str = "",
    ):
        self.features = np.atleast_2d(np.asarray(features, dtype=float))
        self.s_spec = s_spec
        self.p_spec = p_spec
        self.bindings = dict(bindings)
        self.objective_terms = tuple(objective_terms)
        systems = dict(systems or {})
        unknown = set(systems) - set(SYSTEMS)
        if unknown:
            raise InvalidConfig(f"unknown constraint systems {sorted(unknown)}")
        self.systems = {k: systems.get(k, ConstraintSystem()) for k in SYSTEMS}
        self.name = name
        for pred, (net, col) in self.bindings.items():
            spec = p_spec if net == "p" else s_spec
            if net not in ("p", "s") or spec is None or not 0 <= col < spec.n_outputs:
                raise InvalidConfig(f"predicate {pred!r} bound to missing output {(net, col)}")
        used = {t.predicate for t in self.objective_terms}
        for sysm in self.systems.values():
            for row in sysm.rows:
                used |= row.constraint.variables()
        missing = used - set(self.bindings)
        if missing:
            raise InvalidConfig(f"unbound predicates {sorted(missing)}")
        if self.n_samples and self.features.shape[1] != s_spec.n_inputs:
            raise DimensionMismatch("feature width does not match the shared network")

    @property
    def n_samples(self) -> int:
        return len(self.features)

    @property
    def n_private(self) -> int:
        return 0 if self.p_spec is None else self.p_spec.n_params

    @property
    def n_shared(self) -> int:
        return self.s_spec.n_params

    @property
    def sizes(self) -> dict:
        return {k: s.m for k, s in self.systems.items()}

    def evaluate(self, w, ws) -> NodeEval:
        w, ws = self._check(w, ws)
        caches = {"s": forward_cached(self.s_spec, ws, self.features)}
        if self.p_spec is not None:
            caches["p"] = forward_cached(self.p_spec, w, self.features)
        acts = {
            name: caches[net].activations[-1][:, col]
            for name, (net, col) in self.bindings.items()
        }
        return _LfcEval(self, w, ws, caches, acts)

    def predict(self, w, ws, X) -> dict:
        """Activations of every bound predicate on new inputs."""
        outs = {"s": forward_cached(self.s_spec, ws, X).activations[-1]}
        if self.p_spec is not None:
            outs["p"] = forward_cached(self.p_spec, w, X).activations[-1]
        return {name: outs[net][:, col] for name, (net, col) in self.bindings.items()}


# --- closed-form problems (toy suites) ---------------------------------------

class _CallableEval(NodeEval):
    def __init__(self, prob, w, ws):
        self.objective, self._gw, self._gws = prob.objective(w, ws)
        self.objective = float(self.objective)
        self._jac = {}
        self.values = {}
        for k in SYSTEMS:
            fn = prob.constraints.get(k)
            if fn is None:
                self.values[k] = np.zeros(0)
                self._jac[k] = (np.zeros((0, prob.n_private)), np.zeros((0, prob.n_shared)))
            else:
                v, jw, jws = fn(w, ws)
                self.values[k] = np.atleast_1d(np.asarray(v, dtype=float))
                m = len(self.values[k])
                self._jac[k] = (
                    np.asarray(jw, dtype=float).reshape(m, prob.n_private),
                    np.asarray(jws, dtype=float).reshape(m, prob.n_shared),
                )

    def pullback(self, cotangents, objective_weight=1.0):
        gw = objective_weight * np.asarray(self._gw, dtype=float)
        gws = objective_weight * np.asarray(self._gws, dtype=float)
        for k, cot in cotangents.items():
            cot = np.asarray(cot, dtype=float)
            jw, jws = self._jac[k]
            if cot.shape != (jw.shape[0],):
                raise DimensionMismatch(f"cotangent for {k} has shape {cot.shape}")
            gw = gw + cot @ jw
            gws = gws + cot @ jws
        return gw, gws


class CallableNodeProblem(NodeProblem):
    """Node problem given by closed-form callables.

    ``objective(w, ws) -> (value, d/dw, d/dws)``; each entry of
    ``constraints`` maps a system name to ``(w, ws) -> (values, J_w, J_ws)``
    with dense Jacobians.
    """

    def __init__(self, n_private: int, n_shared: int, objective: Callable, constraints=None, name=""):
        self.n_private = int(n_private)
        self.n_shared = int(n_shared)
        self.objective = objective
        self.constraints = dict(constraints or {})
        self.name = name
        probe = _CallableEval(self, np.zeros(self.n_private), np.zeros(self.n_shared))
        self.sizes = {k: len(v) for k, v in probe.values.items()}

    def evaluate(self, w, ws) -> NodeEval:
        w, ws = self._check(w, ws)
        return _CallableEval(self, w, ws)


def objective_value_and_grad(problem: NodeProblem, w, ws):
    return problem.objective_value_and_grad(w, ws)


def eval_constraints(problem: NodeProblem, system: str, w, ws):
    return problem.eval_constraints(system, w, ws)


def constraints_jtvp(problem: NodeProblem, system: str, w, ws, cotangent):
    return problem.constraints_jtvp(system, w, ws, cotangent)
