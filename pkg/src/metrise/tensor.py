"""Tensor fields on a chart and the operations the decomposition needs.

Index conventions used throughout:

* connection and cubic-tensor components A^i_{jk} are symmetric in the lower
  pair and stored once per unordered (j, k);
* the trace contracts the upper index with the second lower one,
  (tr A)_j = A^k_{jk}; for symmetric lower pairs the alternative contraction
  gives the same covector, which the tests assert;
* sym embeds a 1-form by Sym(xi)^i_{jk} = delta^i_j xi_k + delta^i_k xi_j.

Components are ScalarFields, so everything here works unchanged for
expression-backed fields (exact derivatives) and sampler-backed fields
(finite-difference derivatives), and mixtures of the two.
"""

from __future__ import annotations

import numpy as np

from .fields import (
    Chart,
    ExprField,
    NumericField,
    ScalarField,
    as_field,
    log_field,
    sqrt_field,
)

__all__ = [
    "DegenerateMetricError",
    "OneForm",
    "VectorField",
    "VolumeForm",
    "MetricField",
    "ConnectionField",
    "CubicTensor",
    "sym",
    "trace",
    "trace_free",
    "levi_civita",
    "curvature",
    "gauss_curvature",
    "volume_derivative",
    "lower_index",
    "metric_outer_vector",
    "euclidean_metric",
    "round_gnomonic_metric",
    "round_stereographic_metric",
    "flat_connection",
]

# storage order for the symmetric lower pair: (1,1), (1,2), (2,2)
_PAIRS = ((0, 0), (0, 1), (1, 1))
_PAIR_INDEX = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 2}


class DegenerateMetricError(ValueError):
    """Metric failed the positive-definiteness sweep on the chart grid."""


class OneForm:
    def __init__(self, c1, c2):
        self.components = (as_field(c1), as_field(c2))

    def values(self, X, Y):
        a = np.asarray(self.components[0].values(X, Y), dtype=float)
        b = np.asarray(self.components[1].values(X, Y), dtype=float)
        a, b = np.broadcast_arrays(a, b)
        return np.stack([a, b], axis=-1)

    def __add__(self, other):
        return OneForm(
            self.components[0] + other.components[0],
            self.components[1] + other.components[1],
        )

    def __sub__(self, other):
        return OneForm(
            self.components[0] - other.components[0],
            self.components[1] - other.components[1],
        )

    def scaled(self, c):
        return OneForm(self.components[0] * c, self.components[1] * c)


class VectorField:
    def __init__(self, c1, c2):
        self.components = (as_field(c1), as_field(c2))

    def values(self, X, Y):
        a = np.asarray(self.components[0].values(X, Y), dtype=float)
        b = np.asarray(self.components[1].values(X, Y), dtype=float)
        a, b = np.broadcast_arrays(a, b)
        return np.stack([a, b], axis=-1)


class VolumeForm:
    """Area form s(x, y) dx ^ dy with s positive on the chart."""

    def __init__(self, density):
        self.density = as_field(density)

    def values(self, X, Y):
        return self.density.values(X, Y)

    def validate_on(self, chart: Chart):
        X, Y = chart.grid()
        s = np.asarray(self.density.values(X, Y))
        if not np.all(s > 0):
            bad = np.argwhere(~(s > 0))[0]
            raise DegenerateMetricError(
                f"volume density not positive at grid point "
                f"({X[tuple(bad)]:.6g}, {Y[tuple(bad)]:.6g})"
            )


class _SymmetricCubic:
    """Shared storage for connection-like objects: six component fields."""

    def __init__(self, comps):
        comps = tuple(tuple(as_field(c) for c in row) for row in comps)
        if len(comps) != 2 or any(len(r) != 3 for r in comps):
            raise ValueError("need components [i][jk] with i in 0..1, jk in 0..2")
        self.comps = comps

    def component(self, i: int, j: int, k: int) -> ScalarField:
        return self.comps[i][_PAIR_INDEX[(j, k)]]

    def values(self, X, Y):
        """Component array with shape (..., 2, 2, 2), symmetric in (j, k)."""
        flat = [np.asarray(f.values(X, Y), dtype=float) for row in self.comps for f in row]
        flat = np.broadcast_arrays(*flat)
        base = np.shape(flat[0])
        out = np.zeros(base + (2, 2, 2))
        for i in range(2):
            for (j, k) in ((0, 0), (0, 1), (1, 0), (1, 1)):
                out[..., i, j, k] = flat[3 * i + _PAIR_INDEX[(j, k)]]
        return out

    def _pairwise(self, other, op):
        return [
            [op(a, b) for a, b in zip(ra, rb)]
            for ra, rb in zip(self.comps, other.comps)
        ]


class CubicTensor(_SymmetricCubic):
    """Difference-of-connections tensor A^i_{jk}, symmetric in (j, k)."""

    def __add__(self, other):
        if isinstance(other, ConnectionField):
            return ConnectionField(self._pairwise(other, lambda a, b: a + b))
        return CubicTensor(self._pairwise(other, lambda a, b: a + b))

    def __sub__(self, other):
        return CubicTensor(self._pairwise(other, lambda a, b: a - b))

    def scaled(self, c) -> "CubicTensor":
        return CubicTensor([[f * c for f in row] for row in self.comps])


class ConnectionField(_SymmetricCubic):
    """Torsion-free connection by its Christoffel symbols Gamma^i_{jk}."""

    def __add__(self, other):
        if not isinstance(other, CubicTensor):
            raise TypeError("can only add a CubicTensor to a connection")
        return ConnectionField(self._pairwise(other, lambda a, b: a + b))

    def __sub__(self, other):
        if isinstance(other, ConnectionField):
            return CubicTensor(self._pairwise(other, lambda a, b: a - b))
        if isinstance(other, CubicTensor):
            return ConnectionField(self._pairwise(other, lambda a, b: a - b))
        raise TypeError(f"cannot subtract {type(other).__name__} from a connection")

    @staticmethod
    def from_sources(texts) -> "ConnectionField":
        """Build from six expression strings ordered
        (1,11), (1,12), (1,22), (2,11), (2,12), (2,22)."""
        if len(texts) != 6:
            raise ValueError("expected six connection components")
        f = [as_field(t) for t in texts]
        return ConnectionField([[f[0], f[1], f[2]], [f[3], f[4], f[5]]])


class MetricField:
    """Riemannian metric by components g11, g12, g22."""

    def __init__(self, g11, g12, g22):
        self.g11 = as_field(g11)
        self.g12 = as_field(g12)
        self.g22 = as_field(g22)
        self._levi_civita = None

    @property
    def is_expression_backed(self) -> bool:
        return all(
            isinstance(f, ExprField) for f in (self.g11, self.g12, self.g22)
        )

    def det_field(self) -> ScalarField:
        return self.g11 * self.g22 - self.g12 * self.g12

    def area_density(self) -> ScalarField:
        return sqrt_field(self.det_field())

    def area_form(self) -> VolumeForm:
        return VolumeForm(self.area_density())

    def values(self, X, Y):
        a = np.asarray(self.g11.values(X, Y), dtype=float)
        b = np.asarray(self.g12.values(X, Y), dtype=float)
        c = np.asarray(self.g22.values(X, Y), dtype=float)
        a, b, c = np.broadcast_arrays(a, b, c)
        out = np.zeros(np.shape(a) + (2, 2))
        out[..., 0, 0] = a
        out[..., 0, 1] = b
        out[..., 1, 0] = b
        out[..., 1, 1] = c
        return out

    def inverse_values(self, X, Y):
        g = self.values(X, Y)
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
        out = np.empty_like(g)
        out[..., 0, 0] = g[..., 1, 1] / det
        out[..., 1, 1] = g[..., 0, 0] / det
        out[..., 0, 1] = -g[..., 0, 1] / det
        out[..., 1, 0] = out[..., 0, 1]
        return out

    def jet(self, X, Y):
        """Metric values and first partials: (g, dg/dx, dg/dy), each (..., 2, 2)."""
        g = self.values(X, Y)
        gx = np.zeros_like(g)
        gy = np.zeros_like(g)
        for field, (j, k) in zip((self.g11, self.g12, self.g22), _PAIRS):
            px = np.asarray(field.partial("x").values(X, Y), dtype=float)
            py = np.asarray(field.partial("y").values(X, Y), dtype=float)
            gx[..., j, k] = px
            gx[..., k, j] = px
            gy[..., j, k] = py
            gy[..., k, j] = py
        return g, gx, gy

    def validate_on(self, chart: Chart):
        X, Y = chart.grid()
        a = np.asarray(self.g11.values(X, Y))
        det = np.asarray(self.det_field().values(X, Y))
        ok = (a > 0) & (det > 0)
        if not np.all(ok):
            bad = np.argwhere(~ok)[0]
            raise DegenerateMetricError(
                f"metric not positive definite at grid point "
                f"({X[tuple(bad)]:.6g}, {Y[tuple(bad)]:.6g}): "
                f"g11 = {a[tuple(bad)]:.6g}, det = {det[tuple(bad)]:.6g}"
            )

    def levi_civita(self) -> ConnectionField:
        if self._levi_civita is None:
            self._levi_civita = levi_civita(self)
        return self._levi_civita


def sym(xi: OneForm) -> CubicTensor:
    """Embed a 1-form: Sym(xi)^i_{jk} = delta^i_j xi_k + delta^i_k xi_j."""
    x1, x2 = xi.components
    return CubicTensor(
        [
            [x1 * 2.0, x2, as_field(0.0)],
            [as_field(0.0), x1, x2 * 2.0],
        ]
    )


def trace(a) -> OneForm:
    """(tr A)_j = A^k_{jk}."""
    return OneForm(
        a.component(0, 0, 0) + a.component(1, 0, 1),
        a.component(0, 1, 0) + a.component(1, 1, 1),
    )


def trace_free(a: CubicTensor) -> CubicTensor:
    """Projection onto the kernel of the trace: A - (1/3) Sym(tr A)."""
    return a - sym(trace(a)).scaled(1.0 / 3.0)


def levi_civita(g: MetricField) -> ConnectionField:
    """Christoffel symbols Gamma^i_{jk} = (1/2) g^{il} (d_j g_{lk} + d_k g_{lj} - d_l g_{jk}).

    Expression-backed metrics give expression-backed symbols (derivatives are
    exact); sampler-backed metrics get finite-difference partials.
    """
    comp = {(0, 0): g.g11, (0, 1): g.g12, (1, 0): g.g12, (1, 1): g.g22}
    det = g.det_field()
    inv = {
        (0, 0): g.g22 / det,
        (0, 1): (-1.0) * g.g12 / det,
        (1, 1): g.g11 / det,
    }
    inv[(1, 0)] = inv[(0, 1)]
    var = ("x", "y")

    def dg(l, j, k):
        return comp[(j, k)].partial(var[l])

    rows = []
    for i in range(2):
        row = []
        for (j, k) in _PAIRS:
            terms = None
            for l in range(2):
                t = (dg(j, l, k) + dg(k, l, j) - dg(l, j, k)) * inv[(i, l)]
                terms = t if terms is None else terms + t
            row.append(terms * 0.5)
        rows.append(row)
    return ConnectionField(rows)


def curvature(conn: ConnectionField, X, Y):
    """Curvature R^i_{jkl} of a connection, shape (..., 2, 2, 2, 2).

    R^i_{jkl} = d_k Gamma^i_{lj} - d_l Gamma^i_{kj}
              + Gamma^i_{km} Gamma^m_{lj} - Gamma^i_{lm} Gamma^m_{kj}
    """
    G = conn.values(X, Y)
    var = ("x", "y")
    dG = np.zeros(G.shape[:-3] + (2, 2, 2, 2))  # dG[..., l, i, j, k] = d_l Gamma^i_{jk}
    for i in range(2):
        for (j, k) in _PAIRS:
            f = conn.component(i, j, k)
            for l in range(2):
                d = np.asarray(f.partial(var[l]).values(X, Y), dtype=float)
                dG[..., l, i, j, k] = d
                dG[..., l, i, k, j] = d
    R = (
        np.einsum("...kilj->...ijkl", dG)
        - np.einsum("...likj->...ijkl", dG)
        + np.einsum("...ikm,...mlj->...ijkl", G, G)
        - np.einsum("...ilm,...mkj->...ijkl", G, G)
    )
    return R


def gauss_curvature(g: MetricField, X, Y):
    """Gauss curvature K = (1/2) g^{jl} R^i_{jil} of the Levi-Civita connection."""
    R = curvature(g.levi_civita(), X, Y)
    ricci = np.einsum("...ijil->...jl", R)
    ginv = g.inverse_values(X, Y)
    return 0.5 * np.einsum("...jl,...jl->...", ginv, ricci)


def volume_derivative(conn: ConnectionField, vol: VolumeForm) -> OneForm:
    """The 1-form alpha with nabla sigma = alpha (x) sigma for sigma = s dx ^ dy.

    Componentwise alpha_k = d_k log s - Gamma^m_{km}.
    """
    logs = log_field(vol.density)
    return OneForm(
        logs.partial("x") - (conn.component(0, 0, 0) + conn.component(1, 0, 1)),
        logs.partial("y") - (conn.component(0, 1, 0) + conn.component(1, 1, 1)),
    )


def lower_index(v: VectorField, g: MetricField) -> OneForm:
    """beta_i = g_ij v^j."""
    v1, v2 = v.components
    return OneForm(g.g11 * v1 + g.g12 * v2, g.g12 * v1 + g.g22 * v2)


def metric_outer_vector(g: MetricField, v: VectorField) -> CubicTensor:
    """(g (x) B)^i_{jk} = g_{jk} B^i."""
    v1, v2 = v.components
    return CubicTensor(
        [
            [g.g11 * v1, g.g12 * v1, g.g22 * v1],
            [g.g11 * v2, g.g12 * v2, g.g22 * v2],
        ]
    )


# ---------------------------------------------------------------------------
# Stock fields used by the CLI builtins and throughout the tests.


def euclidean_metric() -> MetricField:
    return MetricField("1", "0", "1")


def round_gnomonic_metric() -> MetricField:
    """Round unit-sphere metric in gnomonic coordinates.

    Pullback of the ambient metric under (x, y) -> (x, y, 1)/sqrt(1+x^2+y^2);
    its geodesics are the straight chart lines (images of great circles).
    """
    s4 = "(1+x^2+y^2)^2"
    return MetricField(
        f"(1+y^2)/{s4}",
        f"-(x*y)/{s4}",
        f"(1+x^2)/{s4}",
    )


def round_stereographic_metric() -> MetricField:
    """Round unit-sphere metric in stereographic coordinates, 4/(1+x^2+y^2)^2 delta."""
    c = "4/(1+x^2+y^2)^2"
    return MetricField(c, "0", c)


def flat_connection() -> ConnectionField:
    return ConnectionField.from_sources(["0", "0", "0", "0", "0", "0"])
