"""Vector fields given by expression trees, with exact derivatives and brackets.

The bracket convention is ``[f, g](q) = Dg(q) f(q) - Df(q) g(q)``, so that
``<p, [f, g]>`` is the Poisson bracket of the Hamiltonians ``<p, f>`` and
``<p, g>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence, Union

import numpy as np

from ..errors import EvaluationDomainError, WrongDimensions
from .dual import Dual
from .jet import Jet, as_jet
from .parser import BinOp, Neg, Node, Num, ScalarExpr, parse_node


@dataclass(frozen=True)
class VectorFieldExpr:
    components: tuple[ScalarExpr, ...]

    def __post_init__(self):
        ns = {c.n for c in self.components}
        if len(ns) > 1 or (ns and ns.pop() != len(self.components)):
            raise WrongDimensions(
                f"field has {len(self.components)} components over a chart of another dimension"
            )

    @property
    def n(self) -> int:
        return len(self.components)

    def __call__(self, q) -> np.ndarray:
        return eval_field(self, q)

    def texts(self) -> list[str]:
        return [c.text() for c in self.components]

    def evaluate_generic(self, x: Sequence) -> list:
        """Evaluate every component on arbitrary number types (Dual, Jet, arrays)."""
        return [c(x) for c in self.components]


FieldLike = Union[VectorFieldExpr, tuple]


def parse_field(texts: Sequence[str], n: int) -> VectorFieldExpr:
    if len(texts) != n:
        raise WrongDimensions(f"expected {n} component expressions, got {len(texts)}")
    return VectorFieldExpr(tuple(ScalarExpr(parse_node(t, n), n) for t in texts))


def constant_field(values: Sequence[float]) -> VectorFieldExpr:
    n = len(values)
    return VectorFieldExpr(tuple(ScalarExpr(_const(float(v)), n) for v in values))


def _const(v: float) -> Node:
    return Num(v) if v >= 0 else Neg(Num(-v))


def _scale(c: float, node: Node) -> Node | None:
    if c == 0.0:
        return None
    if isinstance(node, Num) and node.value == 0.0:
        return None
    if c == 1.0:
        return node
    if c == -1.0:
        return Neg(node)
    return BinOp("*", _const(c), node)


def linear_combination(
    coeffs: Sequence[float], fields: Sequence[VectorFieldExpr]
) -> VectorFieldExpr:
    """The field ``sum_i coeffs[i] * fields[i]`` as a new expression tree."""
    if not fields:
        raise ValueError("need at least one field")
    n = fields[0].n
    comps = []
    for r in range(n):
        node: Node | None = None
        for c, f in zip(coeffs, fields):
            term = _scale(float(c), f.components[r].node)
            if term is None:
                continue
            node = term if node is None else BinOp("+", node, term)
        comps.append(ScalarExpr(node if node is not None else Num(0.0), n))
    return VectorFieldExpr(tuple(comps))


def _check_point(f: VectorFieldExpr, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (f.n,):
        raise WrongDimensions(f"point of shape {q.shape} for a field on R^{f.n}")
    return q


def eval_field(f: VectorFieldExpr, q) -> np.ndarray:
    q = _check_point(f, q)
    x = [float(v) for v in q]
    out = np.array([float(c(x)) for c in f.components])
    if not np.all(np.isfinite(out)):
        raise EvaluationDomainError(f"non-finite field value at {q.tolist()}")
    return out


def eval_field_batch(f: VectorFieldExpr, Q: np.ndarray) -> np.ndarray:
    """Evaluate on an ``(m, n)`` array of points; returns ``(m, n)``."""
    Q = np.asarray(Q, dtype=float)
    cols = [Q[:, i] for i in range(f.n)]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.stack(
            [np.broadcast_to(np.asarray(c(cols), dtype=float), (Q.shape[0],)) for c in f.components],
            axis=1,
        )
    if not np.all(np.isfinite(out)):
        raise EvaluationDomainError("non-finite field value in batch evaluation")
    return out


def jacobian(f: VectorFieldExpr, q) -> np.ndarray:
    """``J[i, j] = d f_i / d x_j`` by one dual-number pass per column."""
    q = _check_point(f, q)
    n = f.n
    J = np.empty((n, n))
    for j in range(n):
        x = [Dual(q[i], 1.0 if i == j else 0.0) for i in range(n)]
        for i, c in enumerate(f.components):
            r = c(x)
            J[i, j] = r.der if isinstance(r, Dual) else 0.0
    if not np.all(np.isfinite(J)):
        raise EvaluationDomainError(f"non-finite Jacobian at {q.tolist()}")
    return J


def value_and_jacobian(f: VectorFieldExpr, q) -> tuple[np.ndarray, np.ndarray]:
    return eval_field(f, q), jacobian(f, q)


def _as_pair(f: FieldLike, q) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(f, VectorFieldExpr):
        return value_and_jacobian(f, q)
    val, jac = f
    return np.asarray(val, dtype=float), np.asarray(jac, dtype=float)


def lie_bracket(f: FieldLike, g: FieldLike, q) -> np.ndarray:
    """``[f, g](q) = Dg f - Df g``.

    ``f`` and ``g`` are expression fields or already-evaluated
    ``(value, jacobian)`` pairs at ``q``.
    """
    fv, fj = _as_pair(f, q)
    gv, gj = _as_pair(g, q)
    if fv.shape != gv.shape:
        raise WrongDimensions("bracket of fields on different charts")
    return gj @ fv - fj @ gv


# --- jets and nested brackets ------------------------------------------------

def field_jet(f: VectorFieldExpr, q, order: int) -> list[Jet]:
    q = _check_point(f, q)
    x = Jet.point(q, order)
    out = [as_jet(c(x), f.n, order) for c in f.components]
    for j in out:
        if not np.all(np.isfinite(j.c)):
            raise EvaluationDomainError(f"non-finite jet at {q.tolist()}")
    return out


def bracket_jet(F: list[Jet], G: list[Jet]) -> list[Jet]:
    """Jet of ``[F, G]``; the result is one order lower than the inputs."""
    n = len(F)
    out = []
    for i in range(n):
        acc = None
        for j in range(n):
            term = G[i].derivative(j) * F[j] - F[i].derivative(j) * G[j]
            acc = term if acc is None else acc + term
        out.append(acc)
    return out


def jet_value(F: list[Jet]) -> np.ndarray:
    return np.array([j.value for j in F])


def nested_bracket(fields: Sequence[VectorFieldExpr], word: Sequence[int], q) -> np.ndarray:
    """Right-nested bracket ``[f_w0, [f_w1, [..., f_wm]]]`` evaluated at ``q``."""
    word = tuple(word)
    order = len(word) - 1
    jets = {i: field_jet(fields[i], q, order) for i in set(word)}
    acc = jets[word[-1]]
    for i in reversed(word[:-1]):
        acc = bracket_jet(jets[i], acc)
    return jet_value(acc)


BracketWord = tuple[int, ...]


def iterated_brackets(
    fields: Sequence[VectorFieldExpr], q, depth: int | None = None
) -> list[tuple[BracketWord, np.ndarray]]:
    """All right-nested bracket words up to length ``depth``, evaluated at ``q``.

    Words whose two innermost letters coincide vanish identically and are
    omitted. Words are returned in order of length, then lexicographically.
    ``depth`` defaults to ``2n``.
    """
    if not fields:
        return []
    n = fields[0].n
    if depth is None:
        depth = 2 * n
    if depth < 1:
        raise ValueError("depth must be >= 1")
    order = depth - 1
    base = [field_jet(f, q, order) for f in fields]
    out: list[tuple[BracketWord, np.ndarray]] = []
    layer: dict[BracketWord, list[Jet]] = {}
    for m in range(1, depth + 1):
        new_layer: dict[BracketWord, list[Jet]] = {}
        for w in product(range(len(fields)), repeat=m):
            if m >= 2 and w[-1] == w[-2]:
                continue
            if m == 1:
                jet = base[w[0]]
            else:
                jet = bracket_jet(base[w[0]], layer[w[1:]])
            new_layer[w] = jet
            out.append((w, jet_value(jet)))
        layer = new_layer
    return out


def word_label(word: BracketWord) -> str:
    """Human-readable label, e.g. ``(0, 1, 2) -> '[f1,[f2,f3]]'``."""
    names = [f"f{i + 1}" for i in word]
    label = names[-1]
    for name in reversed(names[:-1]):
        label = f"[{name},{label}]"
    return label


def central_difference_jacobian(f: VectorFieldExpr, q, step: float = 1e-5) -> np.ndarray:
    q = _check_point(f, q)
    n = f.n
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        J[:, j] = (eval_field(f, q + e) - eval_field(f, q - e)) / (2 * step)
    return J


def field_norm_scale(fields: Sequence[VectorFieldExpr], q) -> float:
    return max((float(np.linalg.norm(eval_field(f, q))) for f in fields), default=0.0)


__all__ = [
    "VectorFieldExpr",
    "parse_field",
    "constant_field",
    "linear_combination",
    "eval_field",
    "eval_field_batch",
    "jacobian",
    "value_and_jacobian",
    "lie_bracket",
    "field_jet",
    "bracket_jet",
    "nested_bracket",
    "iterated_brackets",
    "word_label",
    "central_difference_jacobian",
]
