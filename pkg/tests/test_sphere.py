"""Unit tangent bundle machinery and great-circle residuals.

The load-bearing oracle: the metric carried by a transported solution
built from a linear map A must agree pointwise with the round metric
pulled back through the projective action of A^{-1}.  The two routes
share no code (matrix conjugation and layout on one side, derivative of
a normalised linear map on the other), so agreement pins the frame
convention, the sign epsilon, and the component layout all at once.
"""

import numpy as np
import pytest

from metrise import sphere as sp
from metrise import tensor as tn
from metrise.fields import Chart

RNG = np.random.default_rng(12)


def random_sl3(rng, lowest_det=0.1):
    while True:
        A = rng.uniform(-1.0, 1.0, (3, 3))
        d = np.linalg.det(A)
        if abs(d) >= lowest_det:
            return A / abs(d) ** (1.0 / 3.0)


def test_unit_tangent_validation():
    pts = sp.random_unit_tangents(RNG, 50)
    pts.validate()
    with pytest.raises(ValueError):
        sp.UnitTangent(np.array([1.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])).validate()


def test_flows_stay_on_bundle_and_compose():
    pts = sp.random_unit_tangents(RNG, 20)
    for name, (flow, _) in sp.FLOWS.items():
        flow(pts, 0.7).validate(tol=1e-12)
        once = flow(flow(pts, 0.3), 0.4)
        direct = flow(pts, 0.7)
        assert np.max(np.abs(once.x - direct.x)) < 1e-14, name
        assert np.max(np.abs(once.v - direct.v)) < 1e-14, name


def test_flow_differentials_match_finite_differences():
    pts = sp.random_unit_tangents(RNG, 10)
    dx = RNG.standard_normal(pts.x.shape)
    dv = RNG.standard_normal(pts.v.shape)
    eps, t = 1e-6, 0.6
    for name, (flow, diff) in sp.FLOWS.items():
        shifted = sp.UnitTangent(pts.x + eps * dx, pts.v + eps * dv)
        back = sp.UnitTangent(pts.x - eps * dx, pts.v - eps * dv)
        fd_x = (flow(shifted, t).x - flow(back, t).x) / (2 * eps)
        fd_v = (flow(shifted, t).v - flow(back, t).v) / (2 * eps)
        ex_x, ex_v = diff(pts, t, dx, dv)
        assert np.max(np.abs(fd_x - ex_x)) < 1e-9, name
        assert np.max(np.abs(fd_v - ex_v)) < 1e-9, name


def test_bracket_relations():
    pts = sp.random_unit_tangents(RNG, 15)
    cases = (
        (("geodesic", "transverse"), sp.FIELDS["fiber"]),
        (("fiber", "geodesic"), sp.FIELDS["transverse"]),
        (("transverse", "fiber"), sp.FIELDS["geodesic"]),
    )
    for (na, nb), target in cases:
        bx, bv = sp.flow_bracket(na, nb, pts, 1e-4)
        tx, tv = target(pts)
        assert np.max(np.abs(bx - tx)) < 1e-7, (na, nb)
        assert np.max(np.abs(bv - tv)) < 1e-7, (na, nb)


def test_structure_equations_and_order():
    assert sp.structure_equation_residual(n=20, h=1e-3, seed=1) < 1e-5
    _, ratios = sp.structure_equation_order_check(h0=1e-3, halvings=3, n=20, seed=1)
    assert len(ratios) == 3
    for r in ratios:
        assert 3.5 < r < 4.5, ratios


def test_frame_convention_search():
    conv = sp.frame_convention()
    assert conv["columns"] == ["x", "v", "x cross v"]
    assert conv["candidates"] == 12
    assert conv["search_residual"] < 1e-12
    pts = sp.random_unit_tangents(RNG, 25)
    xi = sp.rotation_frame(pts)
    eye = np.einsum("...ji,...jk->...ik", xi, xi)
    assert np.max(np.abs(eye - np.eye(3))) < 1e-13
    assert np.max(np.abs(np.linalg.det(xi) - 1.0)) < 1e-13


def test_solution_constructor_validation():
    with pytest.raises(ValueError):
        sp.LiouvilleSolution(np.arange(9.0).reshape(3, 3))  # not symmetric
    with pytest.raises(ValueError):
        sp.LiouvilleSolution.from_linear_map(np.zeros((3, 3)))


def test_transport_law_holds_for_any_symmetric_matrix():
    for _ in range(5):
        C = RNG.uniform(-2.0, 2.0, (3, 3))
        C = C + C.T  # possibly indefinite; the transport law does not care
        assert sp.LiouvilleSolution(C).transport_residual(n=40) < 1e-12


def test_identity_map_gives_round_metric():
    sol = sp.LiouvilleSolution.from_linear_map(np.eye(3))
    pts = sp.random_unit_tangents(RNG, 30)
    g11, g12, g22 = sol.metric_components(pts)
    assert np.max(np.abs(g11 - 1.0)) < 1e-10
    assert np.max(np.abs(g12)) < 1e-10
    assert np.max(np.abs(g22 - 1.0)) < 1e-10
    assert sol.epsilon == -1.0
    assert np.max(np.abs(sol.beltrami(pts))) < 1e-10


def test_solution_metric_equals_projective_pullback():
    pts = sp.random_unit_tangents(RNG, 40)
    for _ in range(6):
        A = random_sl3(RNG)
        sol = sp.LiouvilleSolution.from_linear_map(A)
        ours = np.stack(sol.metric_components(pts), -1)
        pulled = sp.pullback_frame_components(np.linalg.inv(A))
        theirs = np.stack(pulled(pts.x, pts.v), -1)
        assert np.max(np.abs(ours - theirs)) < 1e-12


def test_constant_rescaling_is_conformal():
    A = random_sl3(RNG)
    pts = sp.random_unit_tangents(RNG, 20)
    base = sp.LiouvilleSolution.from_linear_map(A)
    scaled = sp.LiouvilleSolution(2.0 * base.C)
    a = np.stack(base.metric_components(pts), -1)
    b = np.stack(scaled.metric_components(pts), -1)
    assert np.max(np.abs(b - a / 8.0)) < 1e-12  # lambda^{-3} with lambda = 2
    assert np.max(np.abs(base.beltrami(pts) - scaled.beltrami(pts))) < 1e-13


def test_liouville_residual_accepts_great_circle_metrics():
    pts = sp.random_unit_tangents(RNG, 300)
    assert sp.liouville_residual(sp.round_components, pts) < 1e-12
    A = random_sl3(RNG)
    sol = sp.LiouvilleSolution.from_linear_map(A)
    assert sp.liouville_residual(sol.frame_components_fn(), pts) < 1e-4
    pulled = sp.pullback_frame_components(np.linalg.inv(A))
    assert sp.liouville_residual(pulled, pts) < 1e-4


def test_liouville_residual_rejects_stretched_round_metric():
    pts = sp.random_unit_tangents(RNG, 300)

    def stretched(x, v):
        factor = 1.0 + 0.2 * x[..., 0]
        return tuple(factor * c for c in sp.round_components(x, v))

    assert sp.liouville_residual(stretched, pts) > 1e-2


def test_beltrami_frozen_values_and_bound():
    assert abs(sp.beltrami_coefficient(2.0, 0.0, 1.0) - (3 - 2 * np.sqrt(2))) < 1e-12
    assert abs(sp.beltrami_coefficient(1.0, 0.5, 1.0) - 1j / (2 + np.sqrt(3))) < 1e-12
    ell = RNG.uniform(0.05, 2.0, (10_000, 3))
    g11 = ell[:, 0] ** 2
    g12 = ell[:, 0] * ell[:, 1]
    g22 = ell[:, 1] ** 2 + ell[:, 2] ** 2  # Cholesky squares: positive definite
    mu = sp.beltrami_coefficient(g11, g12, g22)
    assert np.max(np.abs(mu)) < 1.0


def test_chart_points_and_jacobians():
    X = RNG.uniform(-1.0, 1.0, 40)
    Y = RNG.uniform(-1.0, 1.0, 40)
    eps = 1e-6
    for name, (point_fn, jac_fn) in sp.CHARTS.items():
        n = point_fn(X, Y)
        assert np.max(np.abs(np.sum(n * n, -1) - 1.0)) < 1e-12, name
        J = jac_fn(X, Y)
        fd_x = (point_fn(X + eps, Y) - point_fn(X - eps, Y)) / (2 * eps)
        fd_y = (point_fn(X, Y + eps) - point_fn(X, Y - eps)) / (2 * eps)
        assert np.max(np.abs(J[..., 0] - fd_x)) < 1e-8, name
        assert np.max(np.abs(J[..., 1] - fd_y)) < 1e-8, name


def test_round_pullback_matches_symbolic_charts():
    X = RNG.uniform(-1.0, 1.0, 30)
    Y = RNG.uniform(-1.0, 1.0, 30)
    pairs = (
        ("gnomonic", tn.round_gnomonic_metric()),
        ("stereographic", tn.round_stereographic_metric()),
    )
    for chart, symbolic in pairs:
        values = sp.chart_metric_values(sp.round_components, chart, X, Y)
        assert np.max(np.abs(values - symbolic.values(X, Y))) < 1e-12, chart
        field = sp.pullback_to_chart(sp.round_components, chart)
        assert np.max(np.abs(field.values(X, Y) - symbolic.values(X, Y))) < 1e-12
        field.validate_on(Chart(-1, 1, -1, 1))


def test_pullback_to_chart_rejects_unknown_chart():
    with pytest.raises(ValueError):
        sp.pullback_to_chart(sp.round_components, "mercator")


def test_rotation_taking():
    for _ in range(20):
        a = RNG.standard_normal(3)
        a /= np.linalg.norm(a)
        b = RNG.standard_normal(3)
        b /= np.linalg.norm(b)
        R = sp.rotation_taking(a, b)
        assert np.max(np.abs(R @ R.T - np.eye(3))) < 1e-12
        assert abs(np.linalg.det(R) - 1.0) < 1e-12
        assert np.max(np.abs(R @ a - b)) < 1e-12
    R = sp.rotation_taking([0.0, 0.0, 1.0], [0.0, 0.0, -1.0])
    assert np.max(np.abs(R @ np.array([0.0, 0.0, 1.0]) - np.array([0.0, 0.0, -1.0]))) < 1e-12
    assert np.max(np.abs(R @ R.T - np.eye(3))) < 1e-12


def test_great_circles_survive_shooting_and_recharting():
    A = random_sl3(np.random.default_rng(5))
    resid = sp.great_circle_residual(A, n_curves=3, t_total=np.pi, step=2e-3, seed=6)
    assert resid < 1e-8


def test_great_circle_residual_accepts_matrix_stacks():
    rng = np.random.default_rng(9)
    stack = np.stack([random_sl3(rng), np.eye(3)])
    resid = sp.great_circle_residual(stack, n_curves=2, t_total=1.0, step=2e-3, seed=3)
    assert resid < 1e-8


def test_chart_sources_reproduce_the_pullback_exactly():
    from metrise.fields import ExprField
    from metrise import expr

    rng = np.random.default_rng(13)
    for chart in ("gnomonic", "stereographic"):
        A = random_sl3(rng)
        sources = sp.pullback_chart_sources(A, chart)
        X = rng.uniform(-0.9, 0.9, 50)
        Y = rng.uniform(-0.9, 0.9, 50)
        G = sp.chart_metric_values(
            sp.pullback_frame_components(np.linalg.inv(A)), chart, X, Y
        )
        for name, (i, j) in (("g11", (0, 0)), ("g12", (0, 1)), ("g22", (1, 1))):
            field = ExprField(expr.parse(sources[name]))
            assert np.max(np.abs(field.values(X, Y) - G[..., i, j])) < 1e-10
    with pytest.raises(ValueError):
        sp.pullback_chart_sources(np.eye(3), "mercator")
    with pytest.raises(ValueError):
        sp.pullback_chart_sources(np.eye(4))


def test_traces_share_the_residual_integration():
    A = random_sl3(np.random.default_rng(21))
    times, points, worst = sp.great_circle_traces(
        A, n_curves=2, t_total=1.0, step=2e-3, seed=3, sample_every=50
    )
    assert worst == sp.great_circle_residual(A, n_curves=2, t_total=1.0, step=2e-3, seed=3)
    assert times[0] == 0.0 and times[-1] <= 1.0
    assert points.shape == (2, len(times), 3)
    assert np.max(np.abs(np.linalg.norm(points, axis=-1) - 1.0)) < 1e-12
    with pytest.raises(ValueError):
        sp.great_circle_traces(A, sample_every=0)
