"""Weyl decomposition, volume normalization and metrisability residuals.

Hand-checked oracles:
* the constant difference D111=-1, D122=1, D212=-1 over the flat metric
  decomposes with B = (1, 0) and phi = 0;
* a difference built from the trace-free, flat-traceless pattern
  (a1, a2) -> (a1, -a2, -a1; -a2, -a1, a2) reproduces a = a1 + i a2;
* conformal rescaling g -> e^{2f} g leaves phi untouched, scales the
  frame residual a pointwise by e^{-f}, and shifts beta by exactly df.
"""

import numpy as np
import pytest

from metrise.fields import Chart, ExprField
from metrise import projective as pj
from metrise import tensor as tn

RNG = np.random.default_rng(7)
CHART = Chart(-1.0, 1.0, -1.0, 1.0, nx=21, ny=19)


def messy_connection():
    return tn.ConnectionField.from_sources(
        ["x*y", "sin(x)", "y^2", "cos(y)", "x", "x+y"]
    )


def phi_pattern(a1: str, a2: str) -> tn.CubicTensor:
    f1, f2 = ExprField(a1), ExprField(a2)
    return tn.CubicTensor([[f1, -f2, -f1], [-f2, -f1, f2]])


def test_equivalence_recovers_one_form():
    base = pj.ProjectiveStructure.flat()
    xi = tn.OneForm("x", "y^2")
    other = base.changed_by(xi)
    assert pj.projectively_equivalent(base, other, CHART)
    assert pj.equivalence_residual(base, other, CHART) < 1e-14
    rec = pj.equivalence_one_form(base, other)
    X, Y = CHART.grid()
    assert np.allclose(rec.values(X, Y), xi.values(X, Y), atol=1e-14)


def test_equivalence_rejects_non_symmetric_change():
    base = tn.flat_connection()
    other = base + phi_pattern("1", "0")
    assert not pj.projectively_equivalent(base, other, CHART)
    assert pj.equivalence_residual(base, other, CHART) > 1e-2


def test_volume_shift_under_symmetric_change():
    conn = messy_connection()
    vol = tn.VolumeForm("exp(x)")
    xi = tn.OneForm("y", "x*x")
    a0 = tn.volume_derivative(conn, vol)
    a1 = tn.volume_derivative(conn + tn.sym(xi), vol)
    X, Y = CHART.grid()
    assert np.max(np.abs((a1 - a0 + xi.scaled(3.0)).values(X, Y))) < 1e-12


def test_volume_normalize_is_idempotent_and_preserving():
    conn = messy_connection()
    vol = tn.VolumeForm("1+x^2")
    once = pj.volume_normalize(conn, vol)
    twice = pj.volume_normalize(once, vol)
    X, Y = CHART.grid()
    assert np.max(np.abs(tn.volume_derivative(once, vol).values(X, Y))) < 1e-12
    assert np.max(np.abs((twice - once).values(X, Y))) < 1e-12


def test_decomposition_recovers_pure_vector_part():
    d = tn.CubicTensor([["-1", "0", "1"], ["0", "-1", "0"]])
    conn = tn.flat_connection() + d
    dec = pj.weyl_decompose(conn, tn.euclidean_metric())
    X, Y = CHART.grid()
    bv = dec.b_vector.values(X, Y)
    assert np.allclose(bv[..., 0], 1.0, atol=1e-12)
    assert np.allclose(bv[..., 1], 0.0, atol=1e-12)
    assert np.max(np.abs(dec.phi.values(X, Y))) < 1e-12
    report = pj.check_metrisable_by(conn, tn.euclidean_metric(), CHART)
    assert not report["verdict"]
    assert report["weyl_only_verdict"]
    assert report["sup_b"] == pytest.approx(0.5, abs=1e-12)


def test_decomposition_recovers_pure_cubic_part():
    conn = tn.flat_connection() + phi_pattern("1", "0")
    a_field, b_field = pj.residual_fields(conn, tn.euclidean_metric())
    X, Y = CHART.grid()
    assert np.allclose(a_field(X, Y), 1.0 + 0.0j, atol=1e-12)
    assert np.max(np.abs(b_field(X, Y))) < 1e-12

    conn2 = tn.flat_connection() + phi_pattern("0", "2")
    a2, _ = pj.residual_fields(conn2, tn.euclidean_metric())
    assert np.allclose(a2(X, Y), 2.0j, atol=1e-12)


def test_levi_civita_class_is_metrisable_with_any_representative():
    g = tn.round_stereographic_metric()
    base = pj.ProjectiveStructure.of_metric(g)
    report = pj.check_metrisable_by(base, g, CHART, tol=1e-8)
    assert report["verdict"] and report["weyl_only_verdict"]
    changed = base.changed_by(tn.OneForm("sin(x)", "y"))
    report2 = pj.check_metrisable_by(changed, g, CHART, tol=1e-8)
    assert report2["verdict"]
    assert report2["sup_a"] < 1e-12 and report2["sup_b"] < 1e-12


def test_residuals_are_projectively_invariant():
    conn = messy_connection()
    g = tn.round_gnomonic_metric()
    a0, b0 = pj.residual_fields(conn, g)
    a1, b1 = pj.residual_fields(conn + tn.sym(tn.OneForm("x*y", "cos(x)")), g)
    X, Y = CHART.grid()
    assert np.max(np.abs(a1(X, Y) - a0(X, Y))) < 1e-8
    assert np.max(np.abs(b1(X, Y) - b0(X, Y))) < 1e-8


def test_conformal_rescaling_scales_residuals_pointwise():
    g = tn.euclidean_metric()
    f = "0.3*x + 0.1*y^2"
    scale = ExprField(f"exp(2*({f}))")
    g_hat = tn.MetricField(g.g11 * scale, g.g12 * scale, g.g22 * scale)
    conn = messy_connection()
    dec = pj.weyl_decompose(conn, g)
    dec_hat = pj.weyl_decompose(conn, g_hat)
    X, Y = CHART.grid()
    assert np.max(np.abs(dec.phi.values(X, Y) - dec_hat.phi.values(X, Y))) < 1e-10
    a, _ = pj.frame_residuals(dec, X, Y)
    ah, _ = pj.frame_residuals(dec_hat, X, Y)
    ef = np.exp(-np.asarray(ExprField(f).values(X, Y)))
    assert np.max(np.abs(ah - ef * a)) < 1e-10
    df = tn.OneForm(ExprField(f).partial("x"), ExprField(f).partial("y"))
    shift = dec_hat.beta - dec.beta - df
    assert np.max(np.abs(shift.values(X, Y))) < 1e-10


def test_normalized_representative_two_routes_agree():
    conn = messy_connection()
    for g in (tn.round_gnomonic_metric(), tn.round_stereographic_metric()):
        assert pj.normalized_representative_residual(conn, g, CHART) < 1e-12


def test_normalized_representative_preserves_area_form():
    g = tn.round_stereographic_metric()
    dec = pj.weyl_decompose(messy_connection(), g)
    alpha = tn.volume_derivative(dec.normalized, g.area_form())
    X, Y = CHART.grid()
    assert np.max(np.abs(alpha.values(X, Y))) < 1e-12


def test_report_shape_and_grid_fields():
    report = pj.check_metrisable_by(tn.flat_connection(), tn.euclidean_metric(), CHART)
    assert set(report) == {"verdict", "weyl_only_verdict", "sup_a", "sup_b", "grid", "tol"}
    assert report["grid"] == [21, 19]
    assert report["verdict"] is True
