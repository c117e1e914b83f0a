"""Charts and scalar fields.

A chart is an axis-aligned rectangle with a sampling grid.  Scalar fields on
a chart come in two flavours behind one interface:

* ExprField wraps an expression and differentiates symbolically, so derived
  quantities (Christoffel symbols, curvature) carry no discretisation error;
* NumericField wraps a plain callable and falls back to fourth-order central
  differences for partials.  This is the entry point for fields that only
  exist as samplers, such as metrics pulled back from the sphere.

Arithmetic between fields stays symbolic whenever every operand is an
ExprField and otherwise composes callables, so mixed pipelines degrade
gracefully instead of failing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex

__all__ = [
    "Chart",
    "ScalarField",
    "ExprField",
    "NumericField",
    "as_field",
    "constant_field",
    "sqrt_field",
    "log_field",
]

DEFAULT_FD_STEP = 1e-3


@dataclass(frozen=True)
class Chart:
    """Open rectangle (x0, x1) x (y0, y1) with an nx-by-ny sampling grid."""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int = 64
    ny: int = 64

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError("chart rectangle must have positive extent")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 points per axis")

    def grid(self):
        X, Y = np.meshgrid(
            np.linspace(self.x0, self.x1, self.nx),
            np.linspace(self.y0, self.y1, self.ny),
            indexing="ij",
        )
        return X, Y

    def contains(self, x, y) -> bool:
        return bool(
            np.all((x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1))
        )

    def random_points(self, rng: np.random.Generator, n: int):
        return (
            rng.uniform(self.x0, self.x1, n),
            rng.uniform(self.y0, self.y1, n),
        )

    def with_grid(self, nx: int, ny: int) -> "Chart":
        return Chart(self.x0, self.x1, self.y0, self.y1, nx, ny)


class ScalarField:
    """Common interface: values on arrays plus first partials as fields."""

    def values(self, X, Y):
        raise NotImplementedError

    def partial(self, var: str) -> "ScalarField":
        raise NotImplementedError

    def __call__(self, X, Y):
        return self.values(X, Y)

    def __add__(self, other):
        return _combine(np.add, ex.add, self, as_field(other))

    def __radd__(self, other):
        return _combine(np.add, ex.add, as_field(other), self)

    def __sub__(self, other):
        return _combine(np.subtract, ex.sub, self, as_field(other))

    def __rsub__(self, other):
        return _combine(np.subtract, ex.sub, as_field(other), self)

    def __mul__(self, other):
        return _combine(np.multiply, ex.mul, self, as_field(other))

    def __rmul__(self, other):
        return _combine(np.multiply, ex.mul, as_field(other), self)

    def __truediv__(self, other):
        return _combine(np.divide, ex.div, self, as_field(other))

    def __rtruediv__(self, other):
        return _combine(np.divide, ex.div, as_field(other), self)

    def __neg__(self):
        if isinstance(self, ExprField):
            return ExprField(ex.neg(self.expr))
        return NumericField(lambda X, Y, f=self: -f.values(X, Y))


class ExprField(ScalarField):
    def __init__(self, e):
        if isinstance(e, str):
            e = ex.parse(e)
        if isinstance(e, (int, float)):
            e = ex.Const(e)
        if not isinstance(e, ex.Expr):
            raise TypeError("ExprField needs an expression or source text")
        self.expr = e
        self._partials: dict[str, ExprField] = {}

    def values(self, X, Y):
        return ex.evaluate(self.expr, X, Y)

    def partial(self, var: str) -> "ExprField":
        f = self._partials.get(var)
        if f is None:
            f = ExprField(ex.differentiate(self.expr, var))
            self._partials[var] = f
        return f

    def __repr__(self):
        return f"ExprField({ex.to_source(self.expr)!r})"


def _fd4(fn, X, Y, var: str, h: float):
    # five point fourth-order central stencil in one chart direction
    if var == "x":
        f2p = fn(X + 2 * h, Y)
        f1p = fn(X + h, Y)
        f1m = fn(X - h, Y)
        f2m = fn(X - 2 * h, Y)
    else:
        f2p = fn(X, Y + 2 * h)
        f1p = fn(X, Y + h)
        f1m = fn(X, Y - h)
        f2m = fn(X, Y - 2 * h)
    return (-f2p + 8.0 * f1p - 8.0 * f1m + f2m) / (12.0 * h)


class NumericField(ScalarField):
    """Field backed by a vectorised callable (X, Y) -> values.

    Values are memoised per grid-object identity. Derived quantities ask
    the same node for the same grid many times while a decomposition is
    assembled, and without the memo the whole sampler tree would be
    recomputed on every visit; callers must treat returned arrays as
    read-only, which the rest of the package already does.
    """

    _CACHE_SLOTS = 12

    def __init__(self, fn, fd_step: float = DEFAULT_FD_STEP):
        self.fn = fn
        self.fd_step = float(fd_step)
        self._cache = {}

    def values(self, X, Y):
        key = (id(X), id(Y))
        hit = self._cache.get(key)
        if hit is not None and hit[0] is X and hit[1] is Y:
            return hit[2]
        out = self.fn(X, Y)
        self._cache[key] = (X, Y, out)
        if len(self._cache) > self._CACHE_SLOTS:
            del self._cache[next(iter(self._cache))]
        return out

    def partial(self, var: str) -> "NumericField":
        if var not in ("x", "y"):
            raise ValueError(f"unknown variable {var!r}")
        return NumericField(
            lambda X, Y: _fd4(self.values, X, Y, var, self.fd_step),
            fd_step=self.fd_step,
        )


def as_field(v) -> ScalarField:
    if isinstance(v, ScalarField):
        return v
    if isinstance(v, (int, float)):
        return ExprField(ex.Const(v))
    if isinstance(v, ex.Expr):
        return ExprField(v)
    if isinstance(v, str):
        return ExprField(ex.parse(v))
    raise TypeError(f"cannot interpret {type(v).__name__} as a scalar field")


def constant_field(c: float) -> ExprField:
    return ExprField(ex.Const(c))


def _combine(np_op, expr_op, a: ScalarField, b: ScalarField) -> ScalarField:
    if isinstance(a, ExprField) and isinstance(b, ExprField):
        return ExprField(expr_op(a.expr, b.expr))
    return NumericField(lambda X, Y: np_op(a.values(X, Y), b.values(X, Y)))


def sqrt_field(f: ScalarField) -> ScalarField:
    if isinstance(f, ExprField):
        return ExprField(ex.call("sqrt", f.expr))
    return NumericField(lambda X, Y: np.sqrt(f.values(X, Y)))


def log_field(f: ScalarField) -> ScalarField:
    if isinstance(f, ExprField):
        return ExprField(ex.call("log", f.expr))
    return NumericField(lambda X, Y: np.log(f.values(X, Y)))
