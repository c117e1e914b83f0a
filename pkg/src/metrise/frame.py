"""Linear frames over a chart and the forms a connection induces on them.

A point of the frame bundle is a chart point together with an invertible
matrix whose columns frame the tangent plane.  The tautological form
reads a tangent of the bundle in that frame; the connection form measures
how the frame fails to be parallel.  Both obey exact equivariance laws
under right translation by a matrix, and under complex scalars (acting as
rotation-scalings) the shear component of the connection form picks up a
pure phase.  Everything here is pointwise linear algebra, so the sweeps
below hold to machine precision; they are the identity checks behind the
`verify-identities` report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ConnectionField, OneForm, sym


@dataclass(frozen=True)
class FramePoint:
    x: np.ndarray  # chart point(s), shape (..., 2)
    u: np.ndarray  # frame matrix(es), shape (..., 2, 2)


@dataclass(frozen=True)
class FrameTangent:
    xdot: np.ndarray
    udot: np.ndarray


def right_translate(point: FramePoint, tangent: FrameTangent, a: np.ndarray):
    """Push (point, tangent) along u -> u a; the base point stays put."""
    return (
        FramePoint(point.x, point.u @ a),
        FrameTangent(tangent.xdot, tangent.udot @ a),
    )


def complex_matrix(z: complex) -> np.ndarray:
    """The 2x2 matrix acting as multiplication by z on column vectors."""
    return np.array([[z.real, -z.imag], [z.imag, z.real]])


def tautological_form(point: FramePoint, tangent: FrameTangent) -> np.ndarray:
    """omega(w) = u^{-1} xdot: the base velocity read in the frame."""
    return np.einsum(
        "...ij,...j->...i", np.linalg.inv(point.u), tangent.xdot
    )


def connection_form(
    conn: ConnectionField, point: FramePoint, tangent: FrameTangent
) -> np.ndarray:
    """theta(w) = u^{-1} (udot + Gamma(xdot) u), shape (..., 2, 2)."""
    x = np.asarray(point.x)
    gam = conn.values(x[..., 0], x[..., 1])
    gam_u = np.einsum("...klm,...l,...mj->...kj", gam, tangent.xdot, point.u)
    return np.einsum(
        "...ij,...jk->...ik", np.linalg.inv(point.u), tangent.udot + gam_u
    )


def complex_tautological(point: FramePoint, tangent: FrameTangent):
    om = tautological_form(point, tangent)
    return om[..., 0] + 1j * om[..., 1]


def shear_component(theta: np.ndarray):
    """The symmetric trace-free part of theta packed as one complex number."""
    return (theta[..., 0, 0] - theta[..., 1, 1]) + 1j * (
        theta[..., 0, 1] + theta[..., 1, 0]
    )


def _random_batch(rng: np.random.Generator, n: int):
    """Random frame points and tangents with frames kept away from singular."""
    x = rng.uniform(-1.0, 1.0, (n, 2))
    u = rng.uniform(-1.0, 1.0, (n, 2, 2))
    det = np.linalg.det(u)
    while np.any(np.abs(det) < 0.3):
        bad = np.abs(det) < 0.3
        u[bad] = rng.uniform(-1.0, 1.0, (int(bad.sum()), 2, 2))
        det = np.linalg.det(u)
    u[det < 0] = u[det < 0][:, :, ::-1]  # swap columns: orient positively
    xdot = rng.standard_normal((n, 2))
    udot = rng.standard_normal((n, 2, 2))
    return FramePoint(x, u), FrameTangent(xdot, udot)


def equivariance_sweep(conn: ConnectionField, n: int = 100, seed: int = 0) -> dict:
    """Max residuals of the right-translation laws over random triples.

    omega_right_translation   omega(R_a w) - a^{-1} omega(w)
    theta_right_translation   theta(R_a w) - a^{-1} theta(w) a
    omega_complex_scaling     omega_C(R_z w) - z^{-1} omega_C(w)
    shear_complex_scaling     zeta(R_z w) - e^{-2 i arg z} zeta(w)
    """
    rng = np.random.default_rng(seed)
    point, tangent = _random_batch(rng, n)
    a = _random_batch(rng, n)[0].u

    om = tautological_form(point, tangent)
    th = connection_form(conn, point, tangent)
    pt_a, tg_a = right_translate(point, tangent, a)
    ainv = np.linalg.inv(a)
    r_omega = tautological_form(pt_a, tg_a) - np.einsum("...ij,...j->...i", ainv, om)
    r_theta = connection_form(conn, pt_a, tg_a) - ainv @ th @ a

    radius = rng.uniform(0.5, 2.0, n)
    angle = rng.uniform(0.0, 2.0 * np.pi, n)
    z = radius * np.exp(1j * angle)
    zmat = np.zeros((n, 2, 2))
    zmat[:, 0, 0] = zmat[:, 1, 1] = z.real
    zmat[:, 1, 0] = z.imag
    zmat[:, 0, 1] = -z.imag
    pt_z, tg_z = right_translate(point, tangent, zmat)
    r_omega_c = complex_tautological(pt_z, tg_z) - complex_tautological(point, tangent) / z
    zeta = shear_component(th)
    zeta_z = shear_component(connection_form(conn, pt_z, tg_z))
    r_shear = zeta_z - np.exp(-2j * angle) * zeta

    return {
        "omega_right_translation": float(np.max(np.abs(r_omega))),
        "theta_right_translation": float(np.max(np.abs(r_theta))),
        "omega_complex_scaling": float(np.max(np.abs(r_omega_c))),
        "shear_complex_scaling": float(np.max(np.abs(r_shear))),
        "samples": n,
    }


def projective_change_residual(
    conn: ConnectionField, xi: OneForm, n: int = 100, seed: int = 0
) -> float:
    """Shear shift under Gamma -> Gamma + Sym(xi) against its closed form.

    The connection form changes by omega xvec^T + (xvec . omega) I with
    xvec = u^T xi(x), so the shear shifts by (xvec_1 + i xvec_2) omega_C.
    """
    rng = np.random.default_rng(seed)
    point, tangent = _random_batch(rng, n)
    changed = conn + sym(xi)
    dtheta = connection_form(changed, point, tangent) - connection_form(
        conn, point, tangent
    )
    xi_val = xi.values(point.x[..., 0], point.x[..., 1])
    xvec = np.einsum("...mj,...m->...j", point.u, xi_val)
    predicted = (xvec[..., 0] + 1j * xvec[..., 1]) * complex_tautological(point, tangent)
    return float(np.max(np.abs(shear_component(dtheta) - predicted)))
