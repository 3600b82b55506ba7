"""First-order formulas over predicate activations and their product T-norm
translation into polynomial point-wise constraints.

Only four schemas are translated, each operand being a predicate or a
conjunction of predicates::

    a => b          a (1 - b) = 0
    not (a and b)   a b = 0
    (a and b) => c  a b (1 - c) = 0
    a xor b         a + b - 1 = 0,  a b = 0

Polynomials are kept in expanded form, a mapping from monomials (sorted
tuples of predicate names, repeats allowed) to coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Union

import numpy as np


class LogicError(ValueError):
    pass


class UnsupportedSchema(LogicError):
    pass


class MissingActivation(LogicError):
    pass


class ParseError(LogicError):
    pass


# --- AST --------------------------------------------------------------------

@dataclass(frozen=True)
class Predicate:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    args: tuple


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Xor:
    lhs: "Formula"
    rhs: "Formula"


Formula = Union[Predicate, Not, And, Implies, Xor]


def predicates(f) -> set:
    if isinstance(f, Predicate):
        return {f.name}
    if isinstance(f, Not):
        return predicates(f.arg)
    if isinstance(f, And):
        return set().union(*(predicates(a) for a in f.args))
    return predicates(f.lhs) | predicates(f.rhs)


def truth(f, assignment: Mapping[str, bool]) -> bool:
    """Classical Boolean semantics, used as the reference for the compiler."""
    if isinstance(f, Predicate):
        return bool(assignment[f.name])
    if isinstance(f, Not):
        return not truth(f.arg, assignment)
    if isinstance(f, And):
        return all(truth(a, assignment) for a in f.args)
    if isinstance(f, Implies):
        return (not truth(f.lhs, assignment)) or truth(f.rhs, assignment)
    if isinstance(f, Xor):
        return truth(f.lhs, assignment) != truth(f.rhs, assignment)
    raise TypeError(f"not a formula: {f!r}")


def to_text(f) -> str:
    if isinstance(f, Predicate):
        return f.name
    if isinstance(f, Not):
        return f"(not {to_text(f.arg)})"
    if isinstance(f, And):
        return "(and " + " ".join(to_text(a) for a in f.args) + ")"
    op = "implies" if isinstance(f, Implies) else "xor"
    return f"({op} {to_text(f.lhs)} {to_text(f.rhs)})"


# --- polynomials --------------------------------------------------------------

class Poly(dict):
    """Expanded polynomial ``{monomial: coefficient}``."""

    @staticmethod
    def const(c: float) -> "Poly":
        return Poly({(): float(c)}) if c else Poly()

    @staticmethod
    def var(name: str) -> "Poly":
        return Poly({(name,): 1.0})

    def __add__(self, other):
        out = Poly(self)
        for m, c in other.items():
            out[m] = out.get(m, 0.0) + c
            if out[m] == 0.0:
                del out[m]
        return out

    def __neg__(self):
        return Poly({m: -c for m, c in self.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        out = Poly()
        for m1, c1 in self.items():
            for m2, c2 in other.items():
                m = tuple(sorted(m1 + m2))
                out[m] = out.get(m, 0.0) + c1 * c2
                if out[m] == 0.0:
                    del out[m]
        return out

    def variables(self) -> set:
        return {v for m in self for v in m}

    def __str__(self):
        if not self:
            return "0"
        terms = []
        for m in sorted(self, key=lambda m: (len(m), m)):
            c = self[m]
            body = "*".join(m)
            if not body:
                terms.append(f"{c:g}")
            elif c == 1.0:
                terms.append(body)
            elif c == -1.0:
                terms.append(f"-{body}")
            else:
                terms.append(f"{c:g}*{body}")
        return " + ".join(terms).replace("+ -", "- ")


@dataclass(frozen=True)
class PolyConstraint:
    """Vector of polynomial rows, each constrained ``= 0`` or ``<= 0``."""

    rows: tuple
    kind: str = "eq"
    source: object = None

    def __post_init__(self):
        if self.kind not in ("eq", "ineq"):
            raise ValueError(f"kind must be 'eq' or 'ineq', got {self.kind!r}")

    @property
    def arity(self) -> int:
        return len(self.rows)

    def variables(self) -> set:
        return set().union(*(r.variables() for r in self.rows))


def _conjunction(f) -> list:
    """Predicate names of ``f`` if it is a predicate or a flat conjunction of them."""
    if isinstance(f, Predicate):
        return [f.name]
    if isinstance(f, And) and len(f.args) >= 2 and all(isinstance(a, Predicate) for a in f.args):
        return [a.name for a in f.args]
    return None


def _product(names) -> Poly:
    p = Poly.const(1.0)
    for n in names:
        p = p * Poly.var(n)
    return p


def compile(formula, kind: str = "eq") -> PolyConstraint:  # noqa: A001
    """Translate one formula into its product T-norm polynomial constraint."""
    one = Poly.const(1.0)
    if isinstance(formula, Implies):
        a, b = _conjunction(formula.lhs), _conjunction(formula.rhs)
        if a is not None and b is not None:
            return PolyConstraint((_product(a) * (one - _product(b)),), kind, formula)
    elif isinstance(formula, Not):
        a = _conjunction(formula.arg)
        if a is not None and len(a) >= 2:
            return PolyConstraint((_product(a),), kind, formula)
    elif isinstance(formula, Xor):
        a, b = _conjunction(formula.lhs), _conjunction(formula.rhs)
        if a is not None and b is not None:
            pa, pb = _product(a), _product(b)
            return PolyConstraint((pa + pb - one, pa * pb), kind, formula)
    raise UnsupportedSchema(f"no product T-norm translation for {to_text(formula)}")


def compile_all(formulas, kind: str = "eq") -> list:
    return [compile(f, kind) for f in formulas]


# --- numeric evaluation -------------------------------------------------------

def _lookup(activations, names):
    try:
        return {n: np.asarray(activations[n], dtype=float) for n in names}
    except KeyError as e:
        raise MissingActivation(f"no activation for predicate {e.args[0]!r}") from None


def _monomial(vals, m, shape):
    out = np.ones(shape)
    for v in m:
        out = out * vals[v]
    return out


def evaluate(constraint: PolyConstraint, activations: Mapping) -> np.ndarray:
    """Row values at every data point.

    Activations are scalars or equally shaped arrays (one entry per sample).
    Returns shape ``(arity,)`` for scalars, otherwise ``(n_samples, arity)``.
    """
    vals = _lookup(activations, constraint.variables())
    shape = np.broadcast_shapes(*(v.shape for v in vals.values())) if vals else ()
    cols = []
    for row in constraint.rows:
        acc = np.zeros(shape)
        for m, c in row.items():
            acc = acc + c * _monomial(vals, m, shape)
        cols.append(acc)
    return np.stack(cols, axis=-1)


def jacobian_tvp(constraint: PolyConstraint, activations: Mapping, cotangent) -> dict:
    """``sum_r cotangent[..., r] * d row_r / d activation`` for every predicate."""
    names = constraint.variables()
    vals = _lookup(activations, names)
    shape = np.broadcast_shapes(*(v.shape for v in vals.values())) if vals else ()
    cot = np.broadcast_to(np.asarray(cotangent, dtype=float), shape + (constraint.arity,))
    out = {n: np.zeros(shape) for n in names}
    for r, row in enumerate(constraint.rows):
        w = cot[..., r]
        for m, c in row.items():
            for k, n in enumerate(m):
                out[n] = out[n] + c * w * _monomial(vals, m[:k] + m[k + 1:], shape)
    return out


# --- knowledge-base files -----------------------------------------------------

_OPS = {"not": 1, "and": None, "implies": 2, "xor": 2}


def _tokenize(text):
    return text.replace("(", " ( ").replace(")", " ) ").split()


def parse_formula(text: str):
    """Parse prefix syntax, e.g. ``implies (and running shoes) clothing``.

    The outermost parentheses may be omitted.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty formula")
    if tokens[0] != "(":
        tokens = ["("] + tokens + [")"] if tokens[0] in _OPS else tokens
    pos = 0

    def expr():
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError(f"unexpected end of {text!r}")
        tok = tokens[pos]
        pos += 1
        if tok == ")":
            raise ParseError(f"unexpected ')' in {text!r}")
        if tok != "(":
            if tok in _OPS:
                raise ParseError(f"operator {tok!r} used as a predicate in {text!r}")
            return Predicate(tok)
        if pos >= len(tokens):
            raise ParseError(f"unexpected end of {text!r}")
        op = tokens[pos]
        pos += 1
        if op not in _OPS:
            raise ParseError(f"unknown connective {op!r} in {text!r}")
        args = []
        while pos < len(tokens) and tokens[pos] != ")":
            args.append(expr())
        if pos >= len(tokens):
            raise ParseError(f"missing ')' in {text!r}")
        pos += 1
        want = _OPS[op]
        if (want is not None and len(args) != want) or (want is None and len(args) < 2):
            raise ParseError(f"{op!r} got {len(args)} operands in {text!r}")
        if op == "not":
            return Not(args[0])
        if op == "and":
            return And(tuple(args))
        return Implies(*args) if op == "implies" else Xor(*args)

    f = expr()
    if pos != len(tokens):
        raise ParseError(f"trailing tokens in {text!r}")
    return f


@dataclass(frozen=True)
class KbEntry:
    formula: object
    shared: bool
    nodes: tuple  # aware nodes for private entries
    kind: str = "eq"
    line: int = 0


def parse_kb(text: str) -> list:
    """Parse a knowledge base.

    One formula per line, prefixed by its visibility: ``shared`` or
    ``private:<id>[,<id>...]``.  An optional ``ineq`` keyword after the tag
    enforces the polynomial as ``<= 0`` instead of ``= 0``.  ``#`` starts a
    comment.
    """
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, _, rest = line.partition(" ")
        kind = "eq"
        rest = rest.strip()
        if rest.startswith("ineq "):
            kind, rest = "ineq", rest[5:].strip()
        if tag == "shared":
            shared, nodes = True, ()
        elif tag.startswith("private:"):
            try:
                nodes = tuple(int(v) for v in tag[8:].split(",") if v)
            except ValueError:
                raise ParseError(f"line {lineno}: bad node list in {tag!r}") from None
            if not nodes:
                raise ParseError(f"line {lineno}: empty node list")
            shared = False
        else:
            raise ParseError(f"line {lineno}: visibility tag must be 'shared' or 'private:<id>'")
        try:
            formula = parse_formula(rest)
        except ParseError as e:
            raise ParseError(f"line {lineno}: {e}") from None
        entries.append(KbEntry(formula, shared, nodes, kind, lineno))
    return entries


def read_kb(path) -> list:
    return parse_kb(Path(path).read_text())


def format_kb(entries) -> str:
    lines = []
    for e in entries:
        tag = "shared" if e.shared else "private:" + ",".join(str(n) for n in e.nodes)
        kind = " ineq" if e.kind == "ineq" else ""
        body = to_text(e.formula)
        lines.append(f"{tag}{kind} {body[1:-1] if body.startswith('(') else body}")
    return "\n".join(lines) + "\n"
