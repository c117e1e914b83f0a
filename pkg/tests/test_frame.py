"""Frame-bundle forms: hand values, equivariance, projective shear shift."""

import numpy as np

from metrise import frame as fr
from metrise import tensor as tn


def messy_connection():
    return tn.ConnectionField.from_sources(
        ["x*y", "sin(x)", "y^2", "cos(y)", "x", "x+y"]
    )


def point_tangent(x, u, xdot, udot):
    return fr.FramePoint(np.asarray(x, float), np.asarray(u, float)), fr.FrameTangent(
        np.asarray(xdot, float), np.asarray(udot, float)
    )


def test_forms_at_identity_frame():
    pt, tg = point_tangent([0, 0], np.eye(2), [1, 0], np.zeros((2, 2)))
    om = fr.tautological_form(pt, tg)
    assert np.allclose(om, [1, 0])
    assert fr.complex_tautological(pt, tg) == 1 + 0j
    th = fr.connection_form(tn.flat_connection(), pt, tg)
    assert np.allclose(th, 0)


def test_connection_form_picks_up_symbols():
    conn = tn.ConnectionField.from_sources(["2", "0", "0", "0", "0", "0"])
    pt, tg = point_tangent([0.3, -0.2], np.eye(2), [1, 0], np.zeros((2, 2)))
    th = fr.connection_form(conn, pt, tg)
    assert np.allclose(th, [[2, 0], [0, 0]])
    assert fr.shear_component(th) == 2 + 0j


def test_shear_ignores_trace_and_rotation_parts():
    theta = np.array([[0.7, 0.3], [-0.3, 0.7]])
    assert fr.shear_component(theta) == 0j


def test_frame_scaling_only_rescales_omega_and_fixes_shear():
    conn = messy_connection()
    pt, tg = point_tangent(
        [0.4, 0.1], [[1.0, 0.3], [-0.2, 0.9]], [0.5, -1.2], [[0.1, 0.0], [0.7, -0.4]]
    )
    a = 1.7 * np.eye(2)
    pt2, tg2 = fr.right_translate(pt, tg, a)
    assert np.allclose(
        fr.tautological_form(pt2, tg2), fr.tautological_form(pt, tg) / 1.7
    )
    z1 = fr.shear_component(fr.connection_form(conn, pt, tg))
    z2 = fr.shear_component(fr.connection_form(conn, pt2, tg2))
    assert abs(z1 - z2) < 1e-14


def test_quarter_turn_flips_signs():
    conn = messy_connection()
    pt, tg = point_tangent(
        [-0.6, 0.2], [[0.8, 0.1], [0.0, 1.1]], [1.0, 0.4], [[0.2, -0.3], [0.5, 0.1]]
    )
    rot = fr.complex_matrix(1j)
    pt2, tg2 = fr.right_translate(pt, tg, rot)
    assert (
        abs(fr.complex_tautological(pt2, tg2) + 1j * fr.complex_tautological(pt, tg))
        < 1e-14
    )
    z1 = fr.shear_component(fr.connection_form(conn, pt, tg))
    z2 = fr.shear_component(fr.connection_form(conn, pt2, tg2))
    assert abs(z2 + z1) < 1e-14  # e^{-2 i pi/2} = -1


def test_equivariance_sweep_is_exact():
    report = fr.equivariance_sweep(messy_connection(), n=100, seed=3)
    assert report["samples"] == 100
    for key in (
        "omega_right_translation",
        "theta_right_translation",
        "omega_complex_scaling",
        "shear_complex_scaling",
    ):
        assert report[key] < 1e-12, key


def test_projective_change_of_shear_matches_closed_form():
    resid = fr.projective_change_residual(
        messy_connection(), tn.OneForm("x", "sin(y)"), n=100, seed=5
    )
    assert resid < 1e-10


def test_projective_change_leaves_tautological_form_alone():
    pt, tg = point_tangent(
        [0.2, 0.5], [[1.2, 0.0], [0.3, 0.8]], [0.7, -0.1], [[0.0, 0.4], [-0.2, 0.6]]
    )
    om = fr.tautological_form(pt, tg)
    assert np.allclose(om, np.linalg.solve(pt.u, tg.xdot))
