"""Small expression language for scalar fields on a chart.

Expressions are immutable trees over the variables x and y, real literals,
arithmetic operators and a fixed set of unary functions.  They support
vectorised evaluation (numpy arrays broadcast through every operation) and
exact symbolic differentiation, which is what the tensor layer relies on for
Christoffel symbols and curvature.

Grammar, in decreasing precedence:

    power   :=  atom ['^' unary]          (right associative)
    unary   :=  '-' unary | power
    term    :=  unary (('*' | '/') unary)*
    sum     :=  term (('+' | '-') term)*
    atom    :=  NUMBER | 'x' | 'y' | FUNC '(' sum ')' | '(' sum ')'

Angles are radians.  Evaluation is plain IEEE double arithmetic with no
hidden reordering, so repeated runs are reproducible bit for bit.
"""

from __future__ import annotations

import math
import re

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Neg",
    "Call",
    "ExprError",
    "ExprSyntaxError",
    "ExprNameError",
    "ExprDomainError",
    "parse",
    "evaluate",
    "differentiate",
    "to_source",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "atan")
VARIABLES = ("x", "y")


class ExprError(Exception):
    """Base class for everything this module raises on purpose."""


class ExprSyntaxError(ExprError):
    """Malformed input text. `offset` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ExprNameError(ExprError):
    """An identifier that is neither a variable nor a known function."""

    def __init__(self, name: str, offset: int):
        super().__init__(
            f"unknown identifier {name!r} (at offset {offset}); "
            f"variables are x, y and functions are {', '.join(FUNCTIONS)}"
        )
        self.name = name
        self.offset = offset


class ExprDomainError(ExprError):
    """Evaluation left the domain (log of a non-positive value and friends)."""

    def __init__(self, reason: str, subexpr: "Expr", point):
        self.reason = reason
        self.subexpr = subexpr
        self.point = point
        super().__init__(
            f"{reason} in {to_source(subexpr)!r} at (x, y) = ({point[0]!r}, {point[1]!r})"
        )


class Expr:
    __slots__ = ()

    def __call__(self, x, y):
        return evaluate(self, x, y)

    def __str__(self) -> str:
        return to_source(self)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({to_source(self)!r})"

    def diff(self, var: str) -> "Expr":
        return differentiate(self, var)

    # Operator overloads build folded nodes; the tensor layer leans on these.
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return neg(self)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        object.__setattr__(self, "value", float(value))

    def __setattr__(self, *a):  # immutability guard
        raise AttributeError("expressions are immutable")


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        if name not in VARIABLES:
            raise ValueError(f"variable must be one of {VARIABLES}, got {name!r}")
        object.__setattr__(self, "name", name)

    __setattr__ = Const.__setattr__


class _Binary(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a: Expr, b: Expr):
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    __setattr__ = Const.__setattr__


class Add(_Binary):
    __slots__ = ()


class Sub(_Binary):
    __slots__ = ()


class Mul(_Binary):
    __slots__ = ()


class Div(_Binary):
    __slots__ = ()


class Pow(_Binary):
    __slots__ = ()


class Neg(Expr):
    __slots__ = ("a",)

    def __init__(self, a: Expr):
        object.__setattr__(self, "a", a)

    __setattr__ = Const.__setattr__


class Call(Expr):
    __slots__ = ("fn", "a")

    def __init__(self, fn: str, a: Expr):
        if fn not in FUNCTIONS:
            raise ValueError(f"unknown function {fn!r}")
        object.__setattr__(self, "fn", fn)
        object.__setattr__(self, "a", a)

    __setattr__ = Const.__setattr__


ZERO = Const(0.0)
ONE = Const(1.0)
X = Var("x")
Y = Var("y")


def _coerce(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float)):
        return Const(v)
    raise TypeError(f"cannot use {type(v).__name__} in an expression")


def _const_value(e: Expr):
    return e.value if isinstance(e, Const) else None


# ---------------------------------------------------------------------------
# Folding constructors.  These keep derivative trees from ballooning; they
# fold literals and drop additive/multiplicative identities but never touch
# anything that could change a finite result.


def add(a: Expr, b: Expr) -> Expr:
    ca, cb = _const_value(a), _const_value(b)
    if ca is not None and cb is not None and math.isfinite(ca + cb):
        return Const(ca + cb)
    if ca == 0.0:
        return b
    if cb == 0.0:
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    ca, cb = _const_value(a), _const_value(b)
    if ca is not None and cb is not None and math.isfinite(ca - cb):
        return Const(ca - cb)
    if cb == 0.0:
        return a
    if ca == 0.0:
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    ca, cb = _const_value(a), _const_value(b)
    if ca is not None and cb is not None and math.isfinite(ca * cb):
        return Const(ca * cb)
    if ca == 0.0 or cb == 0.0:
        return ZERO
    if ca == 1.0:
        return b
    if cb == 1.0:
        return a
    if ca == -1.0:
        return neg(b)
    if cb == -1.0:
        return neg(a)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    ca, cb = _const_value(a), _const_value(b)
    if cb is not None and cb != 0.0:
        if ca is not None and math.isfinite(ca / cb):
            return Const(ca / cb)
        if cb == 1.0:
            return a
    if ca == 0.0:
        return ZERO
    return Div(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def pow_(a: Expr, b: Expr) -> Expr:
    ca, cb = _const_value(a), _const_value(b)
    if cb == 1.0:
        return a
    if cb == 0.0:
        return ONE
    if ca is not None and cb is not None:
        try:
            v = ca**cb
        except (OverflowError, ValueError, ZeroDivisionError):
            v = None
        if v is not None and isinstance(v, float) and math.isfinite(v):
            return Const(v)
    return Pow(a, b)


def call(fn: str, a: Expr) -> Expr:
    return Call(fn, a)


# ---------------------------------------------------------------------------
# Parsing

_WS_RE = re.compile(r"\s*")
_NUM_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self):
        self.pos = _WS_RE.match(self.text, self.pos).end()

    def peek(self) -> str:
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            raise ExprSyntaxError(f"expected {ch!r}", self.pos)
        self.pos += 1

    def parse(self) -> Expr:
        e = self.sum_()
        self._skip_ws()
        if self.pos != len(self.text):
            raise ExprSyntaxError(
                f"unexpected trailing input {self.text[self.pos:]!r}", self.pos
            )
        return e

    def sum_(self) -> Expr:
        e = self.term()
        while True:
            ch = self.peek()
            if ch == "+":
                self.pos += 1
                e = Add(e, self.term())
            elif ch == "-":
                self.pos += 1
                e = Sub(e, self.term())
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            ch = self.peek()
            if ch == "*":
                self.pos += 1
                e = Mul(e, self.unary())
            elif ch == "/":
                self.pos += 1
                e = Div(e, self.unary())
            else:
                return e

    def unary(self) -> Expr:
        if self.peek() == "-":
            self.pos += 1
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek() == "^":
            self.pos += 1
            return Pow(base, self.unary())
        return base

    def atom(self) -> Expr:
        ch = self.peek()
        if ch == "":
            raise ExprSyntaxError("unexpected end of input", self.pos)
        if ch == "(":
            self.pos += 1
            e = self.sum_()
            self.expect(")")
            return e
        m = _NUM_RE.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return Const(float(m.group()))
        m = _NAME_RE.match(self.text, self.pos)
        if m:
            name = m.group()
            start = self.pos
            self.pos = m.end()
            if name in VARIABLES:
                return Var(name)
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.sum_()
                self.expect(")")
                return Call(name, arg)
            raise ExprNameError(name, start)
        raise ExprSyntaxError(f"unexpected character {ch!r}", self.pos)


def parse(text: str) -> Expr:
    """Parse source text into an expression tree.

    Raises ExprSyntaxError or ExprNameError with the byte offset of the
    first problem.
    """
    if not isinstance(text, str):
        raise TypeError("expression source must be a string")
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Printing

_PREC_ATOM = 5
_PREC_POW = 4
_PREC_NEG = 3
_PREC_TERM = 2
_PREC_SUM = 1


def _prec(e: Expr) -> int:
    if isinstance(e, (Add, Sub)):
        return _PREC_SUM
    if isinstance(e, (Mul, Div)):
        return _PREC_TERM
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Const) and e.value < 0:
        return _PREC_NEG  # prints with a leading minus sign
    if isinstance(e, Pow):
        return _PREC_POW
    return _PREC_ATOM


def _wrap(e: Expr, needed: int) -> str:
    s = to_source(e)
    return f"({s})" if _prec(e) < needed else s


def to_source(e: Expr) -> str:
    """Render an expression as parseable source.

    parse(to_source(e)) evaluates identically to e; parentheses are inserted
    exactly where the grammar requires them.
    """
    if isinstance(e, Const):
        v = e.value
        if v < 0 or (v == 0 and math.copysign(1.0, v) < 0):
            return "-" + repr(-v)
        return repr(v)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Add):
        return f"{_wrap(e.a, _PREC_SUM)}+{_wrap(e.b, _PREC_SUM + 1)}"
    if isinstance(e, Sub):
        return f"{_wrap(e.a, _PREC_SUM)}-{_wrap(e.b, _PREC_SUM + 1)}"
    if isinstance(e, Mul):
        return f"{_wrap(e.a, _PREC_TERM)}*{_wrap(e.b, _PREC_TERM + 1)}"
    if isinstance(e, Div):
        return f"{_wrap(e.a, _PREC_TERM)}/{_wrap(e.b, _PREC_TERM + 1)}"
    if isinstance(e, Neg):
        return "-" + _wrap(e.a, _PREC_NEG)
    if isinstance(e, Pow):
        return f"{_wrap(e.a, _PREC_ATOM)}^{_wrap(e.b, _PREC_NEG)}"
    if isinstance(e, Call):
        return f"{e.fn}({to_source(e.a)})"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Evaluation

_SAFE_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "atan": np.arctan,
}


def _first_bad_point(mask, x, y):
    mask = np.asarray(mask)
    bx, by, bm = np.broadcast_arrays(np.asarray(x), np.asarray(y), mask)
    if bm.ndim == 0:
        return (float(bx), float(by))
    idx = np.argwhere(bm)[0]
    return (float(bx[tuple(idx)]), float(by[tuple(idx)]))


def evaluate(e: Expr, x, y):
    """Evaluate at a point or over broadcastable numpy arrays.

    Scalar inputs give a float back; array inputs give an array.  Domain
    violations raise ExprDomainError naming the offending subexpression and
    one offending point.
    """
    scalar = np.isscalar(x) and np.isscalar(y)
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    memo: dict[int, np.ndarray] = {}

    def ev(node: Expr):
        key = id(node)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if isinstance(node, Const):
            out = np.float64(node.value)
        elif isinstance(node, Var):
            out = xv if node.name == "x" else yv
        elif isinstance(node, Add):
            out = ev(node.a) + ev(node.b)
        elif isinstance(node, Sub):
            out = ev(node.a) - ev(node.b)
        elif isinstance(node, Mul):
            out = ev(node.a) * ev(node.b)
        elif isinstance(node, Div):
            den = ev(node.b)
            bad = den == 0.0
            if np.any(bad):
                raise ExprDomainError(
                    "division by zero", node, _first_bad_point(bad, xv, yv)
                )
            out = ev(node.a) / den
        elif isinstance(node, Neg):
            out = -ev(node.a)
        elif isinstance(node, Pow):
            base = ev(node.a)
            expo = ev(node.b)
            integral = expo == np.round(expo)
            bad = ~integral & ~(base > 0.0)
            if np.any(bad):
                raise ExprDomainError(
                    "non-integer power of a non-positive base",
                    node,
                    _first_bad_point(bad, xv, yv),
                )
            bad = integral & (expo < 0) & (base == 0.0)
            if np.any(bad):
                raise ExprDomainError(
                    "zero raised to a negative power",
                    node,
                    _first_bad_point(bad, xv, yv),
                )
            out = np.power(base, expo)
        elif isinstance(node, Call):
            arg = ev(node.a)
            if node.fn == "log":
                bad = ~(arg > 0.0)
                if np.any(bad):
                    raise ExprDomainError(
                        "log of a non-positive value",
                        node,
                        _first_bad_point(bad, xv, yv),
                    )
                out = np.log(arg)
            elif node.fn == "sqrt":
                bad = arg < 0.0
                if np.any(bad):
                    raise ExprDomainError(
                        "square root of a negative value",
                        node,
                        _first_bad_point(bad, xv, yv),
                    )
                out = np.sqrt(arg)
            else:
                out = _SAFE_FUNCS[node.fn](arg)
        else:
            raise TypeError(f"not an expression: {node!r}")
        memo[key] = out
        return out

    result = ev(e)
    if scalar:
        return float(result)
    return np.asarray(result, dtype=np.float64)


# ---------------------------------------------------------------------------
# Differentiation

def differentiate(e: Expr, var: str) -> Expr:
    """Exact symbolic partial derivative with respect to 'x' or 'y'.

    Shared subtrees stay shared in the result, so repeated differentiation
    of field expressions does not blow up the node count.
    """
    if var not in VARIABLES:
        raise ValueError(f"variable must be one of {VARIABLES}, got {var!r}")
    memo: dict[int, Expr] = {}

    def d(node: Expr) -> Expr:
        key = id(node)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if isinstance(node, Const):
            out = ZERO
        elif isinstance(node, Var):
            out = ONE if node.name == var else ZERO
        elif isinstance(node, Add):
            out = add(d(node.a), d(node.b))
        elif isinstance(node, Sub):
            out = sub(d(node.a), d(node.b))
        elif isinstance(node, Mul):
            out = add(mul(d(node.a), node.b), mul(node.a, d(node.b)))
        elif isinstance(node, Div):
            out = div(
                sub(mul(d(node.a), node.b), mul(node.a, d(node.b))),
                mul(node.b, node.b),
            )
        elif isinstance(node, Neg):
            out = neg(d(node.a))
        elif isinstance(node, Pow):
            cb = _const_value(node.b)
            if cb is not None:
                # power rule; keeps negative bases legal for integer powers
                out = mul(mul(node.b, pow_(node.a, Const(cb - 1.0))), d(node.a))
            else:
                out = mul(
                    node,
                    add(
                        mul(d(node.b), call("log", node.a)),
                        div(mul(node.b, d(node.a)), node.a),
                    ),
                )
        elif isinstance(node, Call):
            da = d(node.a)
            fn = node.fn
            if fn == "sin":
                out = mul(call("cos", node.a), da)
            elif fn == "cos":
                out = neg(mul(call("sin", node.a), da))
            elif fn == "tan":
                c = call("cos", node.a)
                out = div(da, mul(c, c))
            elif fn == "exp":
                out = mul(node, da)
            elif fn == "log":
                out = div(da, node.a)
            elif fn == "sqrt":
                out = div(da, mul(Const(2.0), node))
            elif fn == "atan":
                out = div(da, add(ONE, mul(node.a, node.a)))
            else:  # pragma: no cover
                raise TypeError(fn)
        else:
            raise TypeError(f"not an expression: {node!r}")
        memo[key] = out
        return out

    return d(e)
