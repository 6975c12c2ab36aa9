"""Infix expression parsing and forward-mode differentiation.

Coefficient functions entered as text ("k*(theta - x)", "sigma*sqrt(x)")
are parsed into a small tree and evaluated either on plain floats/arrays
or on second-order dual numbers, which yields exact (to rounding) first
and second derivatives in a single pass.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := unary (('*'|'/') unary)*
    unary  := '-' unary | power
    power  := atom (('^'|'**') unary)?        right-associative
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

``x`` is the free variable; any other NAME is a bound parameter or, when
followed by '(', one of sqrt/exp/log/sin/cos.  Conditionals and piecewise
forms are deliberately not part of the grammar so that every expression
stays twice differentiable wherever it is finite.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = ("sqrt", "exp", "log", "sin", "cos")


class ExpressionError(ValueError):
    """Syntax error, unbound parameter, or unsupported function.

    ``position`` is the 0-based character offset in the source text.
    """

    def __init__(self, message, position):
        super().__init__(f"{message} (position {position})")
        self.position = position


class Dual2:
    """Second-order dual number: value, first and second derivative.

    Components may be scalars or numpy arrays of a common shape.
    """

    __slots__ = ("v", "d", "dd")

    def __init__(self, v, d=0.0, dd=0.0):
        self.v = v
        self.d = d
        self.dd = dd

    @staticmethod
    def variable(x):
        return Dual2(x, np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0, 0.0)

    @staticmethod
    def lift(c):
        return c if isinstance(c, Dual2) else Dual2(c)

    def __add__(self, other):
        o = Dual2.lift(other)
        return Dual2(self.v + o.v, self.d + o.d, self.dd + o.dd)

    __radd__ = __add__

    def __sub__(self, other):
        o = Dual2.lift(other)
        return Dual2(self.v - o.v, self.d - o.d, self.dd - o.dd)

    def __rsub__(self, other):
        return Dual2.lift(other) - self

    def __mul__(self, other):
        o = Dual2.lift(other)
        return Dual2(
            self.v * o.v,
            self.d * o.v + self.v * o.d,
            self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Dual2.lift(other)
        q = self.v / o.v
        qd = (self.d - q * o.d) / o.v
        qdd = (self.dd - 2.0 * qd * o.d - q * o.dd) / o.v
        return Dual2(q, qd, qdd)

    def __rtruediv__(self, other):
        return Dual2.lift(other) / self

    def __neg__(self):
        return Dual2(-self.v, -self.d, -self.dd)

    def __pow__(self, other):
        if isinstance(other, Dual2) and not (np.ndim(other.d) == 0 and other.d == 0 and other.dd == 0):
            # variable exponent: f**g = exp(g*log(f))
            return dual_exp(other * dual_log(self))
        c = other.v if isinstance(other, Dual2) else other
        if c == 0:
            return Dual2(np.ones_like(self.v) if np.ndim(self.v) else 1.0)
        if c == 1:
            return Dual2(self.v, self.d, self.dd)
        f1 = c * self.v ** (c - 1)
        f2 = c * (c - 1) * self.v ** (c - 2)
        return self._compose(self.v**c, f1, f2)

    def __rpow__(self, other):
        return Dual2.lift(other) ** self

    def _compose(self, fv, f1, f2):
        """Chain rule for a scalar function applied to this dual."""
        return Dual2(fv, f1 * self.d, f2 * self.d * self.d + f1 * self.dd)


def dual_sqrt(u):
    u = Dual2.lift(u)
    r = np.sqrt(u.v)
    return u._compose(r, 0.5 / r, -0.25 / (r * u.v))


def dual_exp(u):
    u = Dual2.lift(u)
    e = np.exp(u.v)
    return u._compose(e, e, e)


def dual_log(u):
    u = Dual2.lift(u)
    return u._compose(np.log(u.v), 1.0 / u.v, -1.0 / (u.v * u.v))


def dual_sin(u):
    u = Dual2.lift(u)
    return u._compose(np.sin(u.v), np.cos(u.v), -np.sin(u.v))


def dual_cos(u):
    u = Dual2.lift(u)
    return u._compose(np.cos(u.v), -np.sin(u.v), -np.cos(u.v))


_DUAL_FUNCS = {
    "sqrt": dual_sqrt,
    "exp": dual_exp,
    "log": dual_log,
    "sin": dual_sin,
    "cos": dual_cos,
}

_PLAIN_FUNCS = {
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
}


# ---------------------------------------------------------------------------
# tree nodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float

    def eval(self, x, dual):
        return self.value

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True)
class Var:
    def eval(self, x, dual):
        return x

    def __str__(self):
        return "x"


@dataclass(frozen=True)
class Param:
    name: str
    value: float

    def eval(self, x, dual):
        return self.value

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg:
    arg: object

    def eval(self, x, dual):
        return -self.arg.eval(x, dual)

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object

    def eval(self, x, dual):
        a = self.left.eval(x, dual)
        b = self.right.eval(x, dual)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        if self.op == "^":
            if dual and not isinstance(a, Dual2):
                a = Dual2.lift(a)
            return a**b
        raise AssertionError(self.op)

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call:
    func: str
    arg: object

    def eval(self, x, dual):
        a = self.arg.eval(x, dual)
        if dual:
            return _DUAL_FUNCS[self.func](a)
        return _PLAIN_FUNCS[self.func](a)

    def __str__(self):
        return f"{self.func}({self.arg})"


# ---------------------------------------------------------------------------
# tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise ExpressionError(f"unexpected character {text[at]!r}", at)
        if m.group("num"):
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.group("name"):
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            op = m.group("op")
            tokens.append(("op", "^" if op == "**" else op, m.start("op")))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text, params):
        self.text = text
        self.tokens = _tokenize(text)
        self.params = params
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r}", pos)
        self.advance()

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                node = BinOp(val, node, self.term())
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                node = BinOp(val, node, self.unary())
            else:
                return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.advance()
        if kind == "num":
            return Const(val)
        if kind == "name":
            nk, nv, _ = self.peek()
            if nk == "op" and nv == "(":
                if val not in FUNCTIONS:
                    raise ExpressionError(f"unsupported function {val!r}", pos)
                self.advance()
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            if val == "x":
                return Var()
            if val not in self.params:
                raise ExpressionError(f"unbound parameter {val!r}", pos)
            return Param(val, float(self.params[val]))
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        what = "end of input" if kind == "end" else f"token {val!r}"
        raise ExpressionError(f"unexpected {what}", pos)


def parse_tree(text, params=None):
    """Parse ``text`` into an expression tree with parameters bound."""
    return _Parser(text, dict(params or {})).parse()


def eval_tree(tree, x):
    """Evaluate the tree at x (float or array)."""
    val = tree.eval(x, dual=False)
    if np.ndim(x) and np.ndim(val) == 0:
        val = np.full(np.shape(x), float(val))
    return val


def eval_tree_dual(tree, x):
    """Evaluate the tree on a dual seeded at x; returns a Dual2."""
    out = tree.eval(Dual2.variable(x), dual=True)
    out = Dual2.lift(out)
    if np.ndim(x):
        v, d, dd = (np.broadcast_to(np.asarray(c, dtype=float), np.shape(x)) for c in (out.v, out.d, out.dd))
        return Dual2(v.copy(), d.copy(), dd.copy())
    return out
