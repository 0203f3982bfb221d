"""Utility-expression DSL: parse, evaluate, differentiate, pretty-print.

Grammar (whitespace insignificant)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-')? base ('^' factor)?          # '^' right-associative
    base   := NUMBER | VAR | '(' expr ')' | FUNC '(' expr ')'
    VAR    := 'q' [1-4]
    FUNC   := 'ln' | 'exp' | 'sqrt'

Expressions are immutable after parse; evaluation, differentiation and
formatting are pure, so a parsed expression is safe to share across threads.
Differentiation is symbolic on the tree; finite differences are only a
cross-check (see numkit.central_diff).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParseError

MAX_GOODS = 4

# Interior guard: bundles are clamped this far off the axes before
# differentiation so ln/power singularities cannot be hit by a stencil.
EPSILON_Q = 1e-9

_FUNCS = ("ln", "exp", "sqrt")


@dataclass(frozen=True)
class Node:
    """One expression-tree node.

    kind is one of: num, var, add, sub, mul, div, pow, neg, ln, exp, sqrt.
    `value` is used by num nodes, `index` (1-based good index) by var nodes.
    """

    kind: str
    value: float = 0.0
    index: int = 0
    children: tuple["Node", ...] = ()

    def __repr__(self):  # compact, debugging only
        if self.kind == "num":
            return f"num({self.value:g})"
        if self.kind == "var":
            return f"q{self.index}"
        return f"{self.kind}({', '.join(map(repr, self.children))})"


# ---------------------------------------------------------------------------
# Lexer / parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _fail(self, message: str, pos: int | None = None):
        raise ParseError(message, self.pos if pos is None else pos)

    def parse(self) -> Node:
        node = self._expr()
        self._skip_ws()
        if self.pos < len(self.text):
            self._fail(f"unexpected trailing input {self.text[self.pos:]!r}")
        return node

    def _expr(self) -> Node:
        node = self._term()
        while True:
            ch = self._peek()
            if ch == "+":
                self.pos += 1
                node = Node("add", children=(node, self._term()))
            elif ch == "-":
                self.pos += 1
                node = Node("sub", children=(node, self._term()))
            else:
                return node

    def _term(self) -> Node:
        node = self._factor()
        while True:
            ch = self._peek()
            if ch == "*":
                if self.text[self.pos : self.pos + 2] == "**":
                    self._fail("'**' is not an operator, use '^' for powers")
                self.pos += 1
                node = Node("mul", children=(node, self._factor()))
            elif ch == "/":
                self.pos += 1
                node = Node("div", children=(node, self._factor()))
            else:
                return node

    def _factor(self) -> Node:
        negated = False
        if self._peek() == "-":
            self.pos += 1
            negated = True
        node = self._base()
        if self._peek() == "^":
            self.pos += 1
            node = Node("pow", children=(node, self._factor()))
        if negated:
            node = Node("neg", children=(node,))
        return node

    def _base(self) -> Node:
        ch = self._peek()
        start = self.pos
        if ch == "(":
            self.pos += 1
            node = self._expr()
            if self._peek() != ")":
                self._fail("expected ')'")
            self.pos += 1
            return node
        if ch.isdigit() or ch == ".":
            return self._number()
        if ch.isalpha():
            ident = self._ident()
            if ident in _FUNCS:
                if self._peek() != "(":
                    self._fail(f"expected '(' after {ident!r}")
                self.pos += 1
                arg = self._expr()
                if self._peek() != ")":
                    self._fail("expected ')'")
                self.pos += 1
                return Node(ident, children=(arg,))
            if ident.startswith("q") and ident[1:].isdigit():
                idx = int(ident[1:])
                if not 1 <= idx <= MAX_GOODS:
                    raise DomainError(
                        f"good index q{idx} out of range 1..{MAX_GOODS}"
                    )
                return Node("var", index=idx)
            self._fail(f"unknown symbol {ident!r}", start)
        if ch == "":
            self._fail("unexpected end of input")
        self._fail(f"unexpected character {ch!r}")

    def _number(self) -> Node:
        start = self.pos
        seen_dot = False
        while self.pos < len(self.text):
            c = self.text[self.pos]
            if c.isdigit():
                self.pos += 1
            elif c == "." and not seen_dot:
                seen_dot = True
                self.pos += 1
            else:
                break
        lit = self.text[start : self.pos]
        if lit in ("", "."):
            self._fail("malformed number", start)
        return Node("num", value=float(lit))

    def _ident(self) -> str:
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isalnum() or self.text[self.pos] == "_"
        ):
            self.pos += 1
        return self.text[start : self.pos]


# ---------------------------------------------------------------------------
# Simplifying constructors (constant folding only, no general CAS)
# ---------------------------------------------------------------------------


def _num(v: float) -> Node:
    return Node("num", value=float(v))


_ZERO = _num(0.0)
_ONE = _num(1.0)


def _is_num(n: Node, v: float | None = None) -> bool:
    return n.kind == "num" and (v is None or n.value == v)


def _add(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return _num(a.value + b.value)
    return Node("add", children=(a, b))


def _sub(a: Node, b: Node) -> Node:
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return _num(a.value - b.value)
    if _is_num(a, 0.0):
        return _neg(b)
    return Node("sub", children=(a, b))


def _mul(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return _ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return _num(a.value * b.value)
    return Node("mul", children=(a, b))


def _div(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0):
        return _ZERO
    if _is_num(b, 1.0):
        return a
    return Node("div", children=(a, b))


def _neg(a: Node) -> Node:
    if _is_num(a):
        return _num(-a.value)
    if a.kind == "neg":
        return a.children[0]
    return Node("neg", children=(a,))


def _pow(a: Node, b: Node) -> Node:
    if _is_num(b, 1.0):
        return a
    if _is_num(b, 0.0):
        return _ONE
    return Node("pow", children=(a, b))


# ---------------------------------------------------------------------------
# Evaluation / differentiation
# ---------------------------------------------------------------------------


def _eval_node(node: Node, q) -> float:
    k = node.kind
    if k == "num":
        return node.value
    if k == "var":
        return float(q[node.index - 1])
    if k == "neg":
        return -_eval_node(node.children[0], q)
    if k in ("ln", "exp", "sqrt"):
        x = _eval_node(node.children[0], q)
        if k == "ln":
            if x <= 0.0:
                raise DomainError(f"ln of nonpositive value {x:g}")
            return math.log(x)
        if k == "exp":
            return math.exp(x)
        if x < 0.0:
            raise DomainError(f"sqrt of negative value {x:g}")
        return math.sqrt(x)
    a = _eval_node(node.children[0], q)
    b = _eval_node(node.children[1], q)
    if k == "add":
        return a + b
    if k == "sub":
        return a - b
    if k == "mul":
        return a * b
    if k == "div":
        if b == 0.0:
            raise DomainError("division by zero")
        return a / b
    if k == "pow":
        if a == 0.0 and b < 0.0:
            raise DomainError("zero raised to a negative power")
        try:
            return math.pow(a, b)
        except (ValueError, OverflowError) as exc:
            raise DomainError(f"invalid power {a:g}^{b:g}") from exc
    raise AssertionError(f"unknown node kind {k!r}")


def _diff(node: Node, i: int) -> Node:
    """Partial derivative of the tree with respect to q_i (symbolic)."""
    k = node.kind
    if k == "num":
        return _ZERO
    if k == "var":
        return _ONE if node.index == i else _ZERO
    if k == "neg":
        return _neg(_diff(node.children[0], i))
    if k == "ln":
        (a,) = node.children
        return _div(_diff(a, i), a)
    if k == "exp":
        (a,) = node.children
        return _mul(Node("exp", children=(a,)), _diff(a, i))
    if k == "sqrt":
        (a,) = node.children
        return _div(_diff(a, i), _mul(_num(2.0), Node("sqrt", children=(a,))))
    a, b = node.children
    da, db = _diff(a, i), _diff(b, i)
    if k == "add":
        return _add(da, db)
    if k == "sub":
        return _sub(da, db)
    if k == "mul":
        return _add(_mul(da, b), _mul(a, db))
    if k == "div":
        return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, _num(2.0)))
    if k == "pow":
        if _is_num(b):
            # b * a^(b-1) * da, the common literal-exponent case
            return _mul(_mul(b, _pow(a, _num(b.value - 1.0))), da)
        # general rule: a^b * (db ln a + b da / a)
        inner = _add(_mul(db, Node("ln", children=(a,))), _div(_mul(b, da), a))
        return _mul(Node("pow", children=(a, b)), inner)
    raise AssertionError(f"unknown node kind {k!r}")


def _max_index(node: Node) -> int:
    if node.kind == "var":
        return node.index
    return max((_max_index(c) for c in node.children), default=0)


# ---------------------------------------------------------------------------
# Tape compilation (consumed by kernels.eval_tape)
# ---------------------------------------------------------------------------

OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_POW = 6
OP_NEG = 7
OP_LN = 8
OP_EXP = 9
OP_SQRT = 10

_OPCODES = {
    "add": OP_ADD,
    "sub": OP_SUB,
    "mul": OP_MUL,
    "div": OP_DIV,
    "pow": OP_POW,
    "neg": OP_NEG,
    "ln": OP_LN,
    "exp": OP_EXP,
    "sqrt": OP_SQRT,
}


def compile_tape(node: Node) -> tuple[np.ndarray, np.ndarray]:
    """Flatten the tree into postfix (codes, args) arrays for the kernels."""
    codes: list[int] = []
    args: list[float] = []

    def walk(n: Node):
        if n.kind == "num":
            codes.append(OP_CONST)
            args.append(n.value)
        elif n.kind == "var":
            codes.append(OP_VAR)
            args.append(float(n.index - 1))
        else:
            for c in n.children:
                walk(c)
            codes.append(_OPCODES[n.kind])
            args.append(0.0)

    walk(node)
    return np.asarray(codes, dtype=np.int64), np.asarray(args, dtype=np.float64)


# ---------------------------------------------------------------------------
# Public expression object
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UtilityExpr:
    """A parsed utility function over goods q1..qn (2 <= n <= 4).

    Immutable; derivative trees and compiled tapes are cached lazily.
    """

    root: Node
    n_goods: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- scalar paths -------------------------------------------------------

    def value(self, q) -> float:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n_goods,):
            raise DomainError(
                f"bundle has {q.size} components, expected {self.n_goods}"
            )
        return _eval_node(self.root, q)

    def gradient(self, q) -> np.ndarray:
        """Vector of partials dU/dq_i, clamped to the interior guard."""
        q = np.maximum(np.asarray(q, dtype=float), EPSILON_Q)
        return np.array(
            [_eval_node(self.partial(i), q) for i in range(1, self.n_goods + 1)]
        )

    def hessian(self, q) -> np.ndarray:
        q = np.maximum(np.asarray(q, dtype=float), EPSILON_Q)
        n = self.n_goods
        h = np.empty((n, n))
        for i in range(1, n + 1):
            for j in range(i, n + 1):
                h[i - 1, j - 1] = h[j - 1, i - 1] = _eval_node(
                    self.second_partial(i, j), q
                )
        return h

    # -- cached derived structures -----------------------------------------

    def partial(self, i: int) -> Node:
        key = ("d", i)
        if key not in self._cache:
            self._cache[key] = _diff(self.root, i)
        return self._cache[key]

    def second_partial(self, i: int, j: int) -> Node:
        i, j = min(i, j), max(i, j)
        key = ("dd", i, j)
        if key not in self._cache:
            self._cache[key] = _diff(self.partial(i), j)
        return self._cache[key]

    def tape(self):
        if "tape" not in self._cache:
            self._cache["tape"] = compile_tape(self.root)
        return self._cache["tape"]

    def partial_tape(self, i: int):
        key = ("dtape", i)
        if key not in self._cache:
            self._cache[key] = compile_tape(self.partial(i))
        return self._cache[key]

    # -- batch paths (NaN-tolerant, used by lattice scans) ------------------

    def eval_many(self, bundles: np.ndarray) -> np.ndarray:
        """Evaluate U at an (N, n_goods) array; invalid points come back NaN/inf."""
        from . import kernels

        codes, args = self.tape()
        return kernels.eval_tape(codes, args, np.ascontiguousarray(bundles, dtype=float))

    def gradient_many(self, bundles: np.ndarray) -> np.ndarray:
        """(N, n_goods) array of partials, batch-evaluated from derivative tapes."""
        from . import kernels

        bundles = np.ascontiguousarray(bundles, dtype=float)
        out = np.empty_like(bundles)
        for i in range(1, self.n_goods + 1):
            codes, args = self.partial_tape(i)
            out[:, i - 1] = kernels.eval_tape(codes, args, bundles)
        return out


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------


def parse_utility(text: str) -> UtilityExpr:
    """Parse expression text into a UtilityExpr.

    Raises ParseError on malformed input and DomainError when a good index
    exceeds 4 or fewer than two goods appear.
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    root = _Parser(text).parse()
    n = _max_index(root)
    if n < 2:
        raise DomainError("utility must involve at least two goods (q1, q2)")
    return UtilityExpr(root=root, n_goods=n)


def eval_utility(expr: UtilityExpr, q) -> float:
    return expr.value(q)


def gradient(expr: UtilityExpr, q) -> np.ndarray:
    return expr.gradient(q)


_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _fmt(node: Node, parent_prec: int, right_side: bool = False) -> str:
    k = node.kind
    if k == "num":
        s = _fmt_num(node.value)
        if node.value < 0 and parent_prec > 1:
            return f"({s})"
        return s
    if k == "var":
        return f"q{node.index}"
    if k in _FUNCS:
        return f"{k}({_fmt(node.children[0], 0)})"
    if k == "neg":
        # a directly nested negation must re-parenthesize ("--x" is invalid)
        inner = _fmt(node.children[0], _PREC["neg"] + 1)
        s = f"-{inner}"
        return f"({s})" if parent_prec > _PREC["neg"] else s
    prec = _PREC[k]
    if k == "pow":
        base = _fmt(node.children[0], prec + 1)
        expo = _fmt(node.children[1], prec)  # right-assoc: same prec ok
        s = f"{base}^{expo}"
    else:
        left = _fmt(node.children[0], prec)
        # the right operand needs parens at equal precedence to reproduce
        # right-nested trees under a left-associative grammar; sub/div get
        # a full precedence bump (a-(b+c) still needs them one level up)
        bump = 1 if k in ("sub", "div") else 0
        right = _fmt(node.children[1], prec + bump, right_side=(bump == 0))
        op = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[k]
        s = f"{left}{op}{right}"
    if prec < parent_prec or (right_side and prec == parent_prec):
        return f"({s})"
    return s


def format_expr(expr: UtilityExpr) -> str:
    """Render to text such that parsing the result gives a structurally
    identical tree (parenthesis-normalized round trip)."""
    return _fmt(expr.root, 0)
