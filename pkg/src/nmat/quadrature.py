"""Polar quadrature over the droplet E bounded by f(|zeta| = 1).

Rays from a center inside E are cut against a dense polyline of the boundary,
each crossing is polished by Newton's method on the smooth parametrization
f(exp(-i phi)), and every inside segment of every ray carries Gauss-Legendre
nodes. The angular rule is the periodic trapezoid. Segments that start at the
center use rho = R u^2, which absorbs rho log rho and rho^(2b-1) behaviour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from matplotlib.path import Path

from .errors import QuadratureFailure

__all__ = ["RayNodes", "ray_nodes", "polar_integral", "inside_curve"]

_POLY_POINTS = 2048
_RAY_CHUNK = 256


def inside_curve(curve, points, radius=0.0):
    """Boolean mask of points strictly inside the closed polyline."""
    curve = np.asarray(curve)
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    path = Path(np.column_stack([curve.real, curve.imag]))
    return path.contains_points(np.column_stack([pts.real, pts.imag]), radius=radius)


def _cross(a, b):
    return (np.conj(a) * b).imag


def _polyline(fmap, n=_POLY_POINTS):
    phi = 2 * np.pi * np.arange(n) / n
    return phi, fmap(np.exp(-1j * phi))


def _crossings(center, psi, phi, poly):
    """All (ray index, t, phi) with center + t e^{i psi} on the polyline."""
    n = poly.size
    q = poly - center
    d = np.roll(poly, -1) - poly
    rays, ts, phis = [], [], []
    dphi = 2 * np.pi / n
    for start in range(0, psi.size, _RAY_CHUNK):
        e = np.exp(1j * psi[start:start + _RAY_CHUNK])[:, None]
        # side of each vertex relative to the ray line; zero counts as positive
        # so a vertex on the line is assigned to exactly one edge
        side = _cross(e, q[None, :]) >= 0
        den = _cross(e, d[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            t = _cross(q[None, :], d[None, :]) / den
            s = np.clip(_cross(q[None, :], e) / den, 0.0, 1.0)
        hit = (side != np.roll(side, -1, axis=1)) & (t > 0) & np.isfinite(t)
        r, k = np.nonzero(hit)
        rays.append(r + start)
        ts.append(t[r, k])
        phis.append(phi[k] + s[r, k] * dphi)
    return np.concatenate(rays), np.concatenate(ts), np.concatenate(phis)


def _polish(fmap, center, e, phi, iters=6):
    # solve Im((f(exp(-i phi)) - center) conj e) = 0 for phi
    for _ in range(iters):
        zeta = np.exp(-1j * phi)
        w = fmap(zeta)
        dw = fmap.derivative(zeta) * (-1j * zeta)
        g = ((w - center) * np.conj(e)).imag
        dg = (dw * np.conj(e)).imag
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(np.abs(dg) > 0, g / dg, 0.0)
        phi = phi - np.clip(step, -0.05, 0.05)
    w = fmap(np.exp(-1j * phi))
    return ((w - center) * np.conj(e)).real


@dataclass
class RayNodes:
    """Quadrature nodes w with weights so that sum(weight * F(w)) ~ int_E F d^2w."""

    center: complex
    w: np.ndarray
    rho: np.ndarray
    weight: np.ndarray

    def integrate(self, fn):
        return np.sum(self.weight * fn(self.w, self.rho))


def ray_nodes(fmap, center, n_psi, n_rho, split_origin=False, poly=None):
    """Build polar nodes about ``center`` (which must lie inside E)."""
    phi, pts = poly if poly is not None else _polyline(fmap)
    v = 2 * np.pi * (np.arange(n_psi) + 0.5) / n_psi
    graded_angle = split_origin and abs(center) > 0
    if graded_angle:
        # psi - psi0 ~ v^3 / 6 clusters rays around the one through w = 0,
        # where a singular g makes the angular integrand logarithmic
        v = v - np.pi
        psi = np.angle(-center) + v - np.sin(v)
        dpsi_k = (2 * np.pi / n_psi) * (1 - np.cos(v))
    else:
        psi = v
        dpsi_k = np.full(n_psi, 2 * np.pi / n_psi)
    ray, t, ph = _crossings(center, psi, phi, pts)
    if ray.size == 0:
        raise QuadratureFailure("no ray meets the boundary; is the center inside E?")
    t = _polish(fmap, center, np.exp(1j * psi[ray]), ph)
    order = np.lexsort((t, ray))
    ray, t = ray[order], t[order]
    first = np.r_[True, ray[1:] != ray[:-1]]
    rank = np.arange(ray.size) - np.maximum.accumulate(np.where(first, np.arange(ray.size), 0))
    # inside segments: [0, t_0], [t_1, t_2], [t_3, t_4], ...
    keep = rank % 2 == 0
    lo = np.where(rank == 0, 0.0, np.r_[0.0, t[:-1]])
    seg_ray, seg_lo, seg_hi = ray[keep], lo[keep], t[keep]
    if np.unique(ray).size != n_psi:
        raise QuadratureFailure("some rays never leave E; center outside the curve?")

    x, wx = np.polynomial.legendre.leggauss(n_rho)
    u, wu = 0.5 * (x + 1), 0.5 * wx
    e = np.exp(1j * psi[seg_ray])
    pieces = []
    from_center = seg_lo == 0.0
    if split_origin:
        # closest approach of each ray to w = 0; split there so a singular g
        # at the origin sits at a segment end
        rstar = -(np.conj(e) * center).real
        inner = (rstar > seg_lo) & (rstar < seg_hi) & (abs(center) > 0)
    else:
        rstar, inner = np.zeros_like(seg_lo), np.zeros(seg_lo.shape, bool)

    def graded(a, b, toward_b):
        # rho runs from a to b, nodes clustered at b (or a) quadratically
        L = (b - a)[:, None]
        if toward_b:
            rho = b[:, None] - L * u[None, :] ** 2
        else:
            rho = a[:, None] + L * u[None, :] ** 2
        return rho, 2 * L * u[None, :] * wu[None, :]

    def add(mask, rho, jac):
        pieces.append((e[mask][:, None], rho, jac * dpsi_k[seg_ray[mask]][:, None]))

    for fc in (True, False):
        for split in (False, True):
            m = (from_center == fc) & (inner == split)
            if not m.any():
                continue
            a, b = seg_lo[m], seg_hi[m]
            if not split:
                if fc:
                    rho, jac = graded(a, b, toward_b=False)
                else:
                    L = (b - a)[:, None]
                    rho, jac = a[:, None] + L * u[None, :], L * wu[None, :]
                add(m, rho, jac)
            else:
                r = rstar[m]
                if fc:
                    # cluster at both ends of [0, r]: split once more at r/2
                    rho1, jac1 = graded(a, 0.5 * r, toward_b=False)
                    rho2, jac2 = graded(0.5 * r, r, toward_b=True)
                    add(m, rho1, jac1)
                    add(m, rho2, jac2)
                else:
                    add(m, *graded(a, r, toward_b=True))
                add(m, *graded(r, b, toward_b=False))

    ws, rhos, wts = [], [], []
    for ee, rho, jac in pieces:
        ws.append((center + rho * ee).ravel())
        rhos.append(rho.ravel())
        wts.append((rho * jac).ravel())
    return RayNodes(center, np.concatenate(ws), np.concatenate(rhos), np.concatenate(wts))


def polar_integral(fmap, center, fn, target=1e-4, n_psi=128, n_rho=16, max_doublings=6,
                   split_origin=False):
    """int_E fn(w, rho) d^2w with rho = |w - center|, refined until two
    successive levels agree to ``target``. Returns (value, error estimate)."""
    poly = _polyline(fmap)
    prev = ray_nodes(fmap, center, n_psi, n_rho, split_origin, poly).integrate(fn)
    err = math.inf
    for _ in range(max_doublings):
        n_psi, n_rho = 2 * n_psi, 2 * n_rho
        cur = ray_nodes(fmap, center, n_psi, n_rho, split_origin, poly).integrate(fn)
        err = float(np.max(np.abs(cur - prev)))
        prev = cur
        if err <= target:
            return cur, err
    raise QuadratureFailure(f"quadrature error {err:.2e} above target {target:.1e}")
