"""Geodesic integration and unparametrised comparison of trajectories."""

import numpy as np
import pytest

from metrise import geodesic as gd
from metrise import tensor as tn
from metrise.fields import Chart
from metrise.tensor import OneForm, sym

CHART = Chart(-1.0, 1.0, -1.0, 1.0)


def test_flat_connection_gives_straight_lines():
    path = gd.integrate(tn.flat_connection(), [0.1, -0.2], [0.3, 0.4], 1.0, step=1e-2)
    expect = np.array([0.1, -0.2]) + np.outer(path.times, [0.3, 0.4])
    assert np.max(np.abs(path.points - expect)) < 1e-12
    assert not path.left_chart and not path.diverged


def test_round_gnomonic_geodesics_through_origin_are_lines():
    conn = tn.round_gnomonic_metric().levi_civita()
    direction = np.array([0.6, 0.8])
    path = gd.integrate(conn, [0.0, 0.0], direction, 0.8, step=2e-3)
    cross = path.points[:, 0] * direction[1] - path.points[:, 1] * direction[0]
    assert np.max(np.abs(cross)) < 1e-10


def test_projective_change_same_path_different_clock():
    conn = tn.round_stereographic_metric().levi_civita()
    changed = conn + sym(OneForm("0.4", "0.2*x"))
    start, vel = [0.05, -0.1], [0.55, 0.3]
    a = gd.integrate(conn, start, vel, 1.2, step=2e-3, chart=CHART)
    b = gd.integrate(changed, start, vel, 1.2, step=2e-3, chart=CHART)
    assert gd.unparametrized_distance(a, b) < 1e-5
    assert np.linalg.norm(a.end - b.end) > 1e-3


def test_chart_exit_sets_flag_and_keeps_prefix_inside():
    path = gd.integrate(
        tn.flat_connection(), [0.9, 0.0], [1.0, 0.0], 1.0, step=1e-2, chart=CHART
    )
    assert path.left_chart and not path.diverged
    assert np.all(np.abs(path.points) <= 1.0)
    assert path.times[-1] < 1.0


def test_divergence_sets_flag():
    conn = tn.ConnectionField.from_sources(["-10", "0", "0", "0", "0", "0"])
    path = gd.integrate(conn, [0.0, 0.0], [1.0, 0.0], 0.5, step=1e-3)
    assert path.diverged
    assert np.all(np.isfinite(path.points))


def test_integrate_rejects_bad_arguments():
    with pytest.raises(ValueError):
        gd.integrate(tn.flat_connection(), [0, 0], [1, 0], -1.0)
    with pytest.raises(ValueError):
        gd.integrate(tn.flat_connection(), [0, 0], [1, 0], 1.0, step=0.0)


def line_path(start, direction, t_end, n=101):
    times = np.linspace(0.0, t_end, n)
    points = np.asarray(start) + np.outer(times, direction)
    vel = np.tile(direction, (n, 1)).astype(float)
    return gd.GeodesicPath(times, points, vel)


def test_distance_is_symmetric_and_detects_separation():
    a = line_path([0.0, 0.0], [1.0, 0.0], 1.0)
    b = line_path([0.0, 0.2], [1.0, 0.0], 1.0)
    dab = gd.unparametrized_distance(a, b)
    dba = gd.unparametrized_distance(b, a)
    assert dab == pytest.approx(0.2, rel=1e-9)
    assert dab == pytest.approx(dba, rel=1e-12)


def test_distance_ignores_speed_and_extra_length():
    a = line_path([0.0, 0.0], [1.0, 0.0], 1.0)
    slow = line_path([0.0, 0.0], [0.5, 0.0], 1.0)  # same ray, half the length
    assert gd.unparametrized_distance(a, slow) < 1e-12
    dense = line_path([0.0, 0.0], [1.0, 0.0], 1.0, n=13)
    assert gd.unparametrized_distance(a, dense) < 1e-12


def test_arc_length_reported():
    a = line_path([0.0, 0.0], [3.0, 4.0], 1.0)
    assert a.arc_length() == pytest.approx(5.0, rel=1e-12)
