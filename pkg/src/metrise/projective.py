"""Metrisability analysis for projective structures on plane charts.

A projective structure is the class of torsion-free connections sharing
unparametrised geodesics; representatives differ by Sym(xi) for a
one-form xi.  Against a background metric the difference to the
Levi-Civita connection splits into a vector part B and a totally
trace-free cubic part phi, and the class is metrised by the metric
exactly when both vanish.  Reading B and phi in an orthonormal coframe
compresses them into two complex scalars a and b whose sup-norms are the
residuals reported by :func:`check_metrisable_by`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Chart, ScalarField
from .tensor import (
    ConnectionField,
    CubicTensor,
    MetricField,
    OneForm,
    VectorField,
    VolumeForm,
    flat_connection,
    lower_index,
    metric_outer_vector,
    sym,
    trace,
    trace_free,
    volume_derivative,
)


class ProjectiveStructure:
    """Projective equivalence class, held by one representative connection."""

    def __init__(self, connection: ConnectionField):
        self.connection = connection

    @classmethod
    def flat(cls) -> "ProjectiveStructure":
        return cls(flat_connection())

    @classmethod
    def of_metric(cls, g: MetricField) -> "ProjectiveStructure":
        return cls(g.levi_civita())

    def changed_by(self, xi: OneForm) -> "ProjectiveStructure":
        """Same class, different representative: Gamma + Sym(xi)."""
        return ProjectiveStructure(self.connection + sym(xi))


def _connection_of(obj) -> ConnectionField:
    if isinstance(obj, ProjectiveStructure):
        return obj.connection
    if isinstance(obj, ConnectionField):
        return obj
    raise TypeError(f"expected a connection or projective structure, got {type(obj).__name__}")


def equivalence_one_form(a, b) -> OneForm:
    """The unique xi with Gamma' - Gamma = Sym(xi), if the two are equivalent.

    Contracting Sym(xi) gives 3 xi, so xi is a third of the trace of the
    difference whether or not the residual below vanishes.
    """
    return trace(_connection_of(b) - _connection_of(a)).scaled(1.0 / 3.0)


def equivalence_residual(a, b, chart: Chart) -> float:
    """Sup-norm of (Gamma' - Gamma) - Sym(xi) over the chart grid."""
    diff = _connection_of(b) - _connection_of(a)
    resid = diff - sym(equivalence_one_form(a, b))
    X, Y = chart.grid()
    return float(np.max(np.abs(resid.values(X, Y))))


def projectively_equivalent(a, b, chart: Chart, tol: float = 1e-10) -> bool:
    return equivalence_residual(a, b, chart) < tol


def volume_normalize(conn, vol: VolumeForm) -> ConnectionField:
    """Representative of [conn] that parallel-transports the volume form.

    If alpha measures the failure (alpha = d log s - contracted symbols),
    adding Sym(alpha)/3 shifts alpha by -alpha.  The result is the unique
    volume-preserving representative, so the map is idempotent.
    """
    conn = _connection_of(conn)
    alpha = volume_derivative(conn, vol)
    return conn + sym(alpha).scaled(1.0 / 3.0)


@dataclass(frozen=True)
class WeylDecomposition:
    """Split of a representative against a metric.

    difference       Gamma - Gamma_g, the raw difference tensor
    b_vector, beta   vector part and its lowering by the metric
    phi              trace-free, metric-traceless cubic part
    weyl             Gamma_g + g (x) B - Sym(beta), the Weyl connection the
                     class induces on the conformal structure of the metric
    normalized       the representative of the class preserving the metric
                     area form, Gamma_g + g (x) B - Sym(beta)/3 + phi
    """

    metric: MetricField
    levi_civita: ConnectionField
    difference: CubicTensor
    b_vector: VectorField
    beta: OneForm
    phi: CubicTensor
    weyl: ConnectionField
    normalized: ConnectionField


def weyl_decompose(conn, g: MetricField) -> WeylDecomposition:
    """Decompose Gamma = Gamma_g + g (x) B + phi + Sym(mu) against g.

    B is pinned by requiring phi to be traceless for the metric as well:
    contracting the trace-free part of g (x) B with the inverse metric
    returns 4B/3, hence the 3/4.
    """
    conn = _connection_of(conn)
    lc = g.levi_civita()
    d = conn - lc
    d0 = trace_free(d)

    det = g.det_field()
    inv11 = g.g22 / det
    inv12 = -g.g12 / det
    inv22 = g.g11 / det

    def contract(i: int) -> ScalarField:
        return (
            inv11 * d0.component(i, 0, 0)
            + inv12 * d0.component(i, 0, 1) * 2.0
            + inv22 * d0.component(i, 1, 1)
        ) * 0.75

    b_vec = VectorField(contract(0), contract(1))
    beta = lower_index(b_vec, g)
    g_outer_b = metric_outer_vector(g, b_vec)
    phi = trace_free(d - g_outer_b)
    weyl = lc + (g_outer_b - sym(beta))
    normalized = lc + (g_outer_b - sym(beta).scaled(1.0 / 3.0) + phi)
    return WeylDecomposition(
        metric=g,
        levi_civita=lc,
        difference=d,
        b_vector=b_vec,
        beta=beta,
        phi=phi,
        weyl=weyl,
        normalized=normalized,
    )


def normalized_representative_residual(conn, g: MetricField, chart: Chart) -> float:
    """Check two routes to the area-form-preserving representative agree.

    Normalizing the given representative directly must match assembling
    Gamma_g + g (x) B - Sym(beta)/3 + phi from the decomposition; both
    describe the unique volume-preserving connection in the class.
    """
    conn = _connection_of(conn)
    direct = volume_normalize(conn, g.area_form())
    assembled = weyl_decompose(conn, g).normalized
    X, Y = chart.grid()
    return float(np.max(np.abs((direct - assembled).values(X, Y))))


def gram_schmidt_frame(g: MetricField, X, Y) -> np.ndarray:
    """Orthonormal frame (columns) with e1 along d/dx, shape (..., 2, 2)."""
    gv = g.values(X, Y)
    g11 = gv[..., 0, 0]
    g12 = gv[..., 0, 1]
    det = g11 * gv[..., 1, 1] - g12**2
    u = np.zeros_like(gv)
    u[..., 0, 0] = 1.0 / np.sqrt(g11)
    u[..., 0, 1] = -g12 / np.sqrt(g11 * det)
    u[..., 1, 1] = np.sqrt(g11 / det)
    return u


def frame_residuals(decomp: WeylDecomposition, X, Y):
    """Complex residuals (a, b) of the decomposition in an orthonormal frame.

    phi has two pointwise degrees of freedom; conjugating by the frame and
    averaging the slots that repeat each of them is exact for a tensor that
    is trace-free both ways and damps finite-difference noise otherwise.
    b packs the frame components of beta as (b1 - i b2) / 2.
    """
    u = gram_schmidt_frame(decomp.metric, X, Y)
    uinv = np.zeros_like(u)
    uinv[..., 0, 0] = 1.0 / u[..., 0, 0]
    uinv[..., 0, 1] = -u[..., 0, 1] / (u[..., 0, 0] * u[..., 1, 1])
    uinv[..., 1, 1] = 1.0 / u[..., 1, 1]

    phi = decomp.phi.values(X, Y)
    framed = np.einsum("...il,...lmn,...mj,...nk->...ijk", uinv, phi, u, u)
    a1 = (framed[..., 0, 0, 0] - framed[..., 0, 1, 1] - framed[..., 1, 0, 1]) / 3.0
    a2 = (framed[..., 1, 1, 1] - framed[..., 0, 0, 1] - framed[..., 1, 0, 0]) / 3.0

    beta = decomp.beta.values(X, Y)
    b1 = beta[..., 0] * u[..., 0, 0]
    b2 = beta[..., 0] * u[..., 0, 1] + beta[..., 1] * u[..., 1, 1]
    return a1 + 1j * a2, 0.5 * (b1 - 1j * b2)


def residual_fields(conn, g: MetricField):
    """Point evaluators for the metrisability residuals of [conn] against g.

    Returns two callables (X, Y) -> complex array: the cubic residual a
    and the one-form residual b.  The class is metrised by g where both
    vanish, and contains a Weyl connection for the conformal class of g
    where a alone vanishes.
    """
    decomp = weyl_decompose(conn, g)

    def a_field(X, Y):
        return frame_residuals(decomp, X, Y)[0]

    def b_field(X, Y):
        return frame_residuals(decomp, X, Y)[1]

    return a_field, b_field


def check_metrisable_by(conn, g: MetricField, chart: Chart, tol: float = 1e-6) -> dict:
    """Grid sweep of the frame residuals, reported with a verdict.

    The verdict is a numerical statement about this grid and tolerance,
    not a symbolic proof: residuals below tol everywhere on the grid.
    """
    decomp = weyl_decompose(_connection_of(conn), g)
    X, Y = chart.grid()
    a, b = frame_residuals(decomp, X, Y)
    sup_a = float(np.max(np.abs(a)))
    sup_b = float(np.max(np.abs(b)))
    return {
        "verdict": bool(sup_a < tol and sup_b < tol),
        "weyl_only_verdict": bool(sup_a < tol),
        "sup_a": sup_a,
        "sup_b": sup_b,
        "grid": [chart.nx, chart.ny],
        "tol": tol,
    }
