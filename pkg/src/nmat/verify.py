"""Independent checks of a solved boundary.

* the variational equation U(z) = W(z) - 2 int log|z - w| dsigma(w) = C on E,
  U >= C on a collar outside E;
* the contour identity P'(z) = (1/2 pi i) oint_{dE} I(|w|^2) / (w (w - z)) dw;
* the total mass of sigma by direct 2D quadrature;
* comparison of sampled eigenvalues against the predicted support.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import directed_hausdorff
from scipy.stats import qmc

from . import boundary as bnd
from .errors import EmptyInput, InvalidArgument, PoleProximity
from .quadrature import inside_curve, polar_integral, ray_nodes

__all__ = [
    "VerificationReport",
    "variational_field",
    "check_equilibrium",
    "contour_cauchy",
    "support_compare",
    "quadrature_mass",
    "predicted_centroid",
    "interior_probes",
    "exterior_probes",
    "curve_centroid",
    "curve_scale",
    "sector_hull",
    "empirical_centroid",
]

QUAD_TARGET = 1e-4
_DENSE = 2048


def _dense_curve(sol, n=_DENSE):
    return bnd.boundary_curve(sol.map, n, check=False)


def curve_centroid(curve):
    """Area centroid of a closed polygon (shoelace)."""
    z = np.asarray(curve, dtype=complex)
    x, y = z.real, z.imag
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    area = 0.5 * cr.sum()
    if abs(area) < 1e-300:
        return complex(z.mean())
    cx = ((x + xn) * cr).sum() / (6 * area)
    cy = ((y + yn) * cr).sum() / (6 * area)
    return complex(cx, cy)


def curve_scale(curve):
    z = np.asarray(curve, dtype=complex)
    return float(np.abs(z - curve_centroid(z)).max())


def _profile(sol, pot=None):
    if pot is not None:
        return pot.radial
    if sol.profile is not None:
        return sol.profile
    return sol.potential.radial


def _density_fn(profile):
    return lambda w, rho: profile.density((w * np.conj(w)).real)


def _inner_center(sol, curve):
    """Origin if it lies inside E (g may be singular there), else the centroid."""
    if inside_curve(curve, [0.0])[0]:
        return 0j
    return curve_centroid(curve)


# -- variational field ---------------------------------------------------------


def _log_potential_inside(sol, profile, z, target):
    # polar about z itself: log|z - w| = log rho, handled by the rho = R u^2 rule
    g = _density_fn(profile)
    val, _ = polar_integral(sol.map, z, lambda w, rho: np.log(rho) * g(w, rho),
                            target=target, split_origin=True)
    return float(val)


def _log_potential_outside(sol, profile, zs, center, target):
    """int log|z - w| g d^2w for several exterior z, sharing one node set."""
    zs = np.asarray(zs, dtype=complex)
    g = _density_fn(profile)
    n_psi, n_rho = 256, 16
    prev = None
    for _ in range(7):
        nodes = ray_nodes(sol.map, center, n_psi, n_rho, split_origin=True)
        gw = nodes.weight * g(nodes.w, nodes.rho)
        cur = np.array([np.sum(gw * np.log(np.abs(z - nodes.w))) for z in zs])
        if prev is not None and np.max(np.abs(cur - prev)) <= target:
            return cur
        prev = cur
        n_psi, n_rho = 2 * n_psi, 2 * n_rho
    from .errors import QuadratureFailure

    raise QuadratureFailure("exterior log potential did not reach the error target")


def variational_field(sol, pot, probes, target=QUAD_TARGET):
    """[(z, U(z))] with U(z) = W(z) - 2 int_E log|z - w| g(|w|^2) d^2w."""
    probes = [complex(p) for p in probes]
    if not probes:
        return []
    profile = _profile(sol, pot)
    curve = _dense_curve(sol)
    inside = inside_curve(curve, probes)
    out = np.empty(len(probes))
    pz = np.array(probes)
    for k in np.nonzero(inside)[0]:
        out[k] = _log_potential_inside(sol, profile, pz[k], 0.25 * target)
    if (~inside).any():
        center = _inner_center(sol, curve)
        out[~inside] = _log_potential_outside(sol, profile, pz[~inside], center, 0.25 * target)
    U = np.asarray(pot.W(pz), dtype=float) - 2.0 * out
    return list(zip(probes, U.tolist()))


# -- probes --------------------------------------------------------------------


def interior_probes(sol, n=128, margin=0.03):
    """Halton points inside the curve, at least margin * scale away from it."""
    curve = _dense_curve(sol)
    scale = curve_scale(curve)
    lo = np.array([curve.real.min(), curve.imag.min()])
    hi = np.array([curve.real.max(), curve.imag.max()])
    sampler = qmc.Halton(d=2, scramble=False)
    out = []
    while len(out) < n:
        pts = qmc.scale(sampler.random(4 * n), lo, hi)
        z = pts[:, 0] + 1j * pts[:, 1]
        z = z[inside_curve(curve, z)]
        dist = np.abs(z[:, None] - curve[None, :]).min(axis=1)
        out.extend(z[dist >= margin * scale].tolist())
    return np.array(out[:n])


def exterior_probes(sol, dilations=(1.05, 1.1, 1.2, 1.3, 1.4, 1.5), per_ring=48, radius=None):
    """Points of the curve dilated about its centroid; optionally kept in |z| < radius."""
    curve = bnd.boundary_curve(sol.map, per_ring, check=False)
    c = curve_centroid(_dense_curve(sol))
    pts = np.concatenate([c + s * (curve - c) for s in dilations])
    if radius is not None:
        pts = pts[np.abs(pts) < radius]
    return pts


# -- report --------------------------------------------------------------------


@dataclass
class VerificationReport:
    variational_inside_dev: float
    variational_outside_margin: float
    contour_max_err: float
    mass_err: float
    selfcons_err: float
    sample_outside_fraction: float | None = None
    mass_total: float = float("nan")
    c_hat: float = float("nan")
    tolerances: dict = field(default_factory=dict)
    passed: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.passed.values())

    def to_dict(self):
        d = asdict(self)
        d["ok"] = self.ok
        return d


def check_equilibrium(sol, pot, tol_inside=5e-3, tol_outside=5e-3, n_inside=128,
                      dilations=(1.05, 1.1, 1.2, 1.3, 1.4, 1.5), per_ring=48,
                      n_contour=20, tol_contour=1e-6, tol_mass=1e-6, tol_selfcons=1e-8):
    profile = _profile(sol, pot)
    inner = interior_probes(sol, n_inside)
    U_in = np.array([u for _, u in variational_field(sol, pot, inner)])
    c_hat = float(U_in.mean())
    inside_dev = float(np.abs(U_in - c_hat).max())
    outer = exterior_probes(sol, dilations, per_ring, radius=pot.domain_radius)
    U_out = np.array([u for _, u in variational_field(sol, pot, outer)])
    margin = float((U_out - c_hat).min()) if U_out.size else float("inf")

    cz = inner[:: max(1, len(inner) // n_contour)][:n_contour]
    contour_err = max(abs(contour_cauchy(sol, profile, z) - complex(pot.dP(z))) for z in cz)
    m_quad = quadrature_mass(sol, profile)
    mass_err = abs(m_quad - bnd.mass(sol.theta, sol.map))
    selfcons = bnd.self_consistency(sol.map, sol.theta, profile)

    tol = {"inside": tol_inside, "outside": tol_outside, "contour": tol_contour,
           "mass": tol_mass, "selfcons": tol_selfcons}
    passed = {
        "inside": inside_dev <= tol_inside,
        "outside": margin >= -tol_outside,
        "contour": contour_err <= tol_contour,
        "mass": mass_err <= tol_mass,
        # sigma is a probability measure
        "normalization": abs(m_quad - 1.0) <= tol_mass,
        "selfcons": selfcons <= tol_selfcons,
    }
    return VerificationReport(inside_dev, margin, float(contour_err), float(mass_err), float(selfcons),
                              None, float(m_quad), c_hat, tol, passed)


# -- contour identity ------------------------------------------------------------


def contour_cauchy(sol, profile, z):
    """(1/2 pi i) oint_{dE} I(w conj w) / (w (w - z)) dw by the trapezoid rule in zeta.

    The boundary is traversed counterclockwise when arg(zeta) decreases, so
    with w = f(u), u = e^{i phi}, the integral is
    -(1/2 pi) int I(|f|^2) (u f'/f) / (f - z) dphi.
    """
    z = complex(z)
    fmap = sol.map
    w = fmap.on_circle()
    scale = curve_scale(w)
    if np.abs(w - z).min() < 1e-3 * scale:
        raise PoleProximity(f"z = {z} lies within 1e-3 scale of the boundary")
    if profile is None:
        profile = _profile(sol)
    Iv = profile.moment((w * np.conj(w)).real)
    log_deriv = -1.0 + fmap.zeta_series_prime_on_circle()
    return complex(-np.mean(Iv * log_deriv / (w - z)))


# -- mass and centroid by direct quadrature ----------------------------------------


def quadrature_mass(sol, profile=None, target=1e-11):
    """int_E g(|w|^2) d^2w by polar quadrature (independent of the contour mass)."""
    profile = _profile(sol) if profile is None else profile
    curve = _dense_curve(sol)
    val, _ = polar_integral(sol.map, _inner_center(sol, curve), _density_fn(profile),
                            target=target, split_origin=True, max_doublings=8)
    return float(val)


def predicted_centroid(sol, profile=None, target=1e-8):
    """sigma-weighted mean of w over E."""
    profile = _profile(sol) if profile is None else profile
    curve = _dense_curve(sol)
    g = _density_fn(profile)
    center = _inner_center(sol, curve)
    num, _ = polar_integral(sol.map, center, lambda w, r: w * g(w, r), target=target, split_origin=True)
    den, _ = polar_integral(sol.map, center, g, target=target, split_origin=True)
    return complex(num / den)


# -- samples vs support -------------------------------------------------------------


def _pool(snapshots):
    zs = []
    for s in snapshots:
        zs.append(np.asarray(getattr(s, "z", s), dtype=complex).ravel())
    if not zs or sum(z.size for z in zs) == 0:
        raise EmptyInput("no eigenvalues to compare")
    return np.concatenate(zs)


def sector_hull(points, center, sectors=64, q=99.0):
    """Per angular sector about ``center``, the point at the q-th radial percentile."""
    rel = points - center
    ang = np.floor((np.angle(rel) + np.pi) / (2 * np.pi) * sectors).astype(int) % sectors
    out = []
    for k in range(sectors):
        r = rel[ang == k]
        if r.size == 0:
            continue
        mag = np.abs(r)
        target = np.percentile(mag, q)
        out.append(r[np.argmin(np.abs(mag - target))] + center)
    return np.array(out)


def support_compare(sol, snapshots, eps):
    """(fraction of pooled samples outside the (1 + eps) dilation of E about its
    centroid, directed distance from the 99% sector hull to the curve / scale)."""
    if eps < 0:
        raise InvalidArgument("eps must be nonnegative")
    z = _pool(snapshots)
    curve = _dense_curve(sol)
    c = curve_centroid(curve)
    dil = c + (1.0 + eps) * (curve - c)
    outside = 1.0 - inside_curve(dil, z).mean()
    hull = sector_hull(z, c)
    d = directed_hausdorff(np.column_stack([hull.real, hull.imag]),
                           np.column_stack([curve.real, curve.imag]))[0]
    return float(outside), float(d / curve_scale(curve))


def empirical_centroid(snapshots):
    return complex(_pool(snapshots).mean())
