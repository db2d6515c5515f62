"""Support boundary of the equilibrium measure by the singular-point method.

The exterior conformal map f of the unit disk onto the complement of the
droplet E (f(0) = infinity) is parametrized through the Laurent polynomial

    theta(zeta) = I(f(zeta) * conj(f(1/conj(zeta)))) = sum_{j=-d}^{d} b_j zeta^j,

which is real on |zeta| = 1. Given theta, log(zeta f(zeta)) is the analytic
projection of log I^{-1}(theta) on the circle, so

    f(zeta) = a / zeta * exp(sum_{k>=0} c_k zeta^k),    a = exp(-c_0 / 2),

with c_k the nonnegative Fourier coefficients of log I^{-1}(theta). Note
zeta f(zeta) -> 1/a at the origin, i.e. a = (1/f)'(0).

The coefficients b_j solve: principal part of theta - f P'(f) at zeta = 0
vanishes (2d real equations) and the total mass is one (1 equation).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (
    BoundaryBreakdown,
    EvaluationOverflow,
    InvalidArgument,
    NoConvergence,
    NonFinite,
    NoRealRoot,
    RootInsideDisk,
    SelfIntersection,
    ThetaNonPositive,
)
from .potential import Potential, RadialProfile

__all__ = [
    "ThetaCoefficients",
    "ConformalMap",
    "BoundarySolution",
    "SolverOptions",
    "cauchy_project",
    "build_map",
    "self_consistency",
    "singular_mismatch",
    "mass",
    "solve",
    "closed_form_power",
    "closed_form_map",
    "closed_form_theta",
    "boundary_curve",
    "is_simple_curve",
]

THETA_FLOOR = 1e-12
PROBE_RADII = (0.5, 0.3, 0.7)


def _check_grid_size(M):
    if M < 4 or M & (M - 1):
        raise InvalidArgument(f"grid size must be a power of two >= 4, got {M}")


def circle_grid(M, shift=0.0):
    return np.exp(1j * (2.0 * np.pi * np.arange(M) / M + shift))


@dataclass(frozen=True)
class ThetaCoefficients:
    """theta(zeta) = b_0 + sum_{j=1}^d (b_j zeta^j + conj(b_j) zeta^{-j}).

    Only b_0 (real) and b_1..b_d are stored; b_{-j} = conj(b_j).
    """

    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=complex).ravel()
        if b.size == 0:
            raise InvalidArgument("theta needs at least b_0")
        b[0] = b[0].real
        object.__setattr__(self, "b", b)

    @property
    def d(self):
        return self.b.size - 1

    def coefficient(self, j):
        if abs(j) > self.d:
            return 0j
        return self.b[j] if j >= 0 else np.conj(self.b[-j])

    def full(self):
        """Coefficients for j = -d..d."""
        return np.array([self.coefficient(j) for j in range(-self.d, self.d + 1)])

    def __call__(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        out = np.full(zeta.shape, self.b[0], dtype=complex)
        for j in range(1, self.d + 1):
            out = out + self.b[j] * zeta**j + np.conj(self.b[j]) * zeta ** (-j)
        return out

    def on_circle(self, M, shift=0.0):
        u = circle_grid(M, shift)
        return self(u).real

    def params(self):
        """Real parameter vector [b_0, Re b_1, Im b_1, ..., Re b_d, Im b_d]."""
        out = [self.b[0].real]
        for bj in self.b[1:]:
            out.extend([bj.real, bj.imag])
        return np.array(out)

    @classmethod
    def from_params(cls, p):
        p = np.asarray(p, dtype=float)
        d = (p.size - 1) // 2
        b = np.empty(d + 1, dtype=complex)
        b[0] = p[0]
        b[1:] = p[1::2] + 1j * p[2::2]
        return cls(b)

    @classmethod
    def constant(cls, value, d=0):
        b = np.zeros(d + 1, dtype=complex)
        b[0] = value
        return cls(b)


@dataclass(frozen=True)
class ConformalMap:
    """f(zeta) = a / zeta * exp(sum_k c_k zeta^k) on the closed unit disk."""

    a: float
    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=complex).ravel()
        _check_grid_size(c.size)
        object.__setattr__(self, "c", c)

    @property
    def grid_size(self):
        return self.c.size

    @property
    def pole_amplitude(self):
        """lim zeta -> 0 of zeta f(zeta)."""
        return self.a * math.exp(self.c[0].real)

    def _trimmed(self):
        mag = np.abs(self.c)
        nz = np.nonzero(mag > 1e-18 * max(1.0, mag.max()))[0]
        return self.c[: (nz[-1] + 1 if nz.size else 1)]

    def series(self, zeta):
        return np.polyval(self._trimmed()[::-1], np.asarray(zeta, dtype=complex))

    def series_prime(self, zeta):
        c = self._trimmed()
        if c.size < 2:
            return np.zeros_like(np.asarray(zeta, dtype=complex))
        return np.polyval((np.arange(1, c.size) * c[1:])[::-1], np.asarray(zeta, dtype=complex))

    def __call__(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        return self.a / zeta * np.exp(self.series(zeta))

    def derivative(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        return self(zeta) * (-1.0 / zeta + self.series_prime(zeta))

    # Grid evaluations are exact trigonometric interpolation through the FFT.

    def series_on_circle(self, radius=1.0, shift=0.0):
        M = self.grid_size
        k = np.arange(M)
        return M * np.fft.ifft(self.c * radius**k * np.exp(1j * k * shift))

    def zeta_series_prime_on_circle(self, shift=0.0):
        """zeta S'(zeta) on the (shifted) unit-circle grid."""
        M = self.grid_size
        k = np.arange(M)
        return M * np.fft.ifft(k * self.c * np.exp(1j * k * shift))

    def on_circle(self, radius=1.0, shift=0.0):
        u = radius * circle_grid(self.grid_size, shift)
        return self.a / u * np.exp(self.series_on_circle(radius, shift))


def cauchy_project(samples):
    """Nonnegative Fourier coefficients of a real function sampled on the circle.

    For |zeta| < 1, (1/2 pi i) \\oint h(u) / (u - zeta) du = sum_{k>=0} c_k zeta^k.
    The Nyquist coefficient is split evenly between +-M/2 so that
    2 Re(sum c_k u^k) - c_0 reproduces the samples exactly on the grid.
    """
    h = np.asarray(samples, dtype=float)
    M = h.size
    _check_grid_size(M)
    if not np.all(np.isfinite(h)):
        raise NonFinite("non-finite sample passed to cauchy_project")
    c = np.fft.fft(h) / M
    c[M // 2] *= 0.5
    c[M // 2 + 1:] = 0.0
    c[0] = c[0].real
    return c


def _theta_samples(theta, M, shift=0.0):
    vals = theta.on_circle(M, shift)
    top = np.abs(vals).max()
    floor = THETA_FLOOR * top
    if not np.all(np.isfinite(vals)) or vals.min() <= floor:
        raise ThetaNonPositive(f"theta reaches {vals.min():.3e} on the unit circle", vals.min() / max(top, 1e-300))
    return vals


def build_map(theta, profile, M=1024):
    _check_grid_size(M)
    vals = _theta_samples(theta, M)
    h = np.log(profile.moment_inv(vals))
    c = cauchy_project(h)
    return ConformalMap(math.exp(-0.5 * c[0].real), c)


def self_consistency(fmap, theta, profile):
    """max |f(zeta) conj f(zeta) - I^{-1}(theta(zeta))| on the grid and the
    half-shifted grid (the latter tests the interpolant, not just the nodes)."""
    M = fmap.grid_size
    err = 0.0
    for shift in (0.0, math.pi / M):
        fv = fmap.on_circle(shift=shift)
        target = profile.moment_inv(np.maximum(theta.on_circle(M, shift), 0.0))
        err = max(err, float(np.abs(np.abs(fv) ** 2 - target).max()))
    return err


def _principal_part_fpf(fmap, pot, d, radius):
    """Coefficients of zeta^{-d..-1} of f(zeta) P'(f(zeta)), from the Taylor
    coefficients of zeta^d f P'(f) sampled on |zeta| = radius."""
    M = fmap.grid_size
    u = radius * circle_grid(M)
    with np.errstate(over="ignore", invalid="ignore"):
        fv = fmap.a / u * np.exp(fmap.series_on_circle(radius))
        F = u**d * fv * pot.dP(fv)
    if not np.all(np.isfinite(F)):
        raise EvaluationOverflow(f"f P'(f) overflows on |zeta| = {radius}")
    t = np.fft.fft(F)[:d] / M / radius ** np.arange(d)
    # zeta^{k-d} coefficient is t_k, so zeta^{-j} is t_{d-j}
    return np.array([t[d - j] for j in range(1, d + 1)])


def singular_mismatch(theta, fmap, pot, radius=None):
    """Coefficients of zeta^{-j}, j = 1..d, of theta(zeta) - f(zeta) P'(f(zeta))."""
    d = pot.degree
    if d == 0:
        return np.zeros(0, dtype=complex)
    radii = (radius,) if radius is not None else PROBE_RADII
    last = None
    for rho in radii:
        try:
            fpf = _principal_part_fpf(fmap, pot, d, rho)
            break
        except EvaluationOverflow as exc:
            last = exc
    else:
        raise last
    th = np.array([theta.coefficient(-j) for j in range(1, d + 1)])
    return th - fpf


def mass(theta, fmap, return_imag=False):
    """-(1/2 pi i) \\oint theta(u) f'(u) / f(u) du over |u| = 1 (trapezoidal)."""
    M = fmap.grid_size
    th = theta.on_circle(M)
    # u f'(u)/f(u) = -1 + u S'(u)
    val = np.mean(th * (1.0 - fmap.zeta_series_prime_on_circle()))
    if return_imag:
        return float(val.real), float(val.imag)
    return float(val.real)


def is_simple_curve(points):
    from shapely.geometry import LinearRing

    pts = np.asarray(points)
    if pts.size < 3:
        return True
    return LinearRing(np.column_stack([pts.real, pts.imag])).is_simple


def boundary_curve(fmap, n_points, check=True):
    """Points f(exp(-2 pi i k / n)), k = 0..n-1, counterclockwise around E."""
    if n_points is None or int(n_points) < 1:
        raise InvalidArgument("n_points must be a positive integer")
    n = int(n_points)
    zeta = np.exp(-2j * np.pi * np.arange(n) / n)
    curve = fmap(zeta)
    if check and n >= 3 and not is_simple_curve(curve):
        raise SelfIntersection("boundary polyline intersects itself", curve=curve)
    return curve


@dataclass
class SolverOptions:
    M: int = 1024
    tol: float = 1e-10
    max_iter: int = 50
    continuation_steps: int = 8
    curve_points: int = 512
    max_subdivisions: int = 6


@dataclass
class BoundarySolution:
    theta: ThetaCoefficients
    map: ConformalMap
    fingerprint: str
    residuals: dict
    curve: np.ndarray
    profile: RadialProfile = None
    potential: Potential = field(default=None, repr=False)

    @property
    def a(self):
        return self.map.a

    def to_json(self):
        d = self.theta.d
        fourier = [[k, float(ck.real), float(ck.imag)] for k, ck in enumerate(self.map.c) if ck != 0 or k == 0]
        return {
            "a": float(self.map.a),
            "grid_size": int(self.map.grid_size),
            "theta": [[j, float(self.theta.coefficient(j).real), float(self.theta.coefficient(j).imag)]
                      for j in range(-d, d + 1)],
            "fourier": fourier,
            "curve": [[float(w.real), float(w.imag)] for w in self.curve],
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "config_fingerprint": self.fingerprint,
        }

    @classmethod
    def from_json(cls, doc, potential=None):
        theta_rows = doc["theta"]
        d = max(int(r[0]) for r in theta_rows)
        b = np.zeros(d + 1, dtype=complex)
        for j, re, im in theta_rows:
            if j >= 0:
                b[int(j)] = complex(re, im)
        c = np.zeros(int(doc["grid_size"]), dtype=complex)
        for k, re, im in doc["fourier"]:
            c[int(k)] = complex(re, im)
        curve = np.array([complex(x, y) for x, y in doc["curve"]])
        return cls(
            theta=ThetaCoefficients(b),
            map=ConformalMap(float(doc["a"]), c),
            fingerprint=doc.get("config_fingerprint", ""),
            residuals=dict(doc.get("residuals", {})),
            curve=curve,
            profile=potential.radial if potential is not None else None,
            potential=potential,
        )


def potential_fingerprint(pot):
    doc = {
        "radial": pot.radial.to_dict(),
        "poly": [[p.real, p.imag] for p in pot.poly],
        "domain_radius": pot.domain_radius,
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


# -- Newton solver with continuation in the perturbation strength -------------


def _residual(p, pot, profile, M):
    theta = ThetaCoefficients.from_params(p)
    fmap = build_map(theta, profile, M)
    mm = singular_mismatch(theta, fmap, pot)
    r = np.empty(p.size)
    r[0] = mass(theta, fmap) - 1.0
    r[1::2] = mm.real
    r[2::2] = mm.imag
    return r


def _jacobian(p, pot, profile, M):
    n = p.size
    J = np.empty((n, n))
    for i in range(n):
        h = 1e-7 * (1.0 + abs(p[i]))
        e = np.zeros(n)
        e[i] = h
        J[:, i] = (_residual(p + e, pot, profile, M) - _residual(p - e, pot, profile, M)) / (2 * h)
    return J


def _polish(p, r, pot, profile, M):
    # one extra Newton step, kept only if it lowers the residual
    try:
        trial = p + np.linalg.solve(_jacobian(p, pot, profile, M), -r)
        if np.abs(_residual(trial, pot, profile, M)).max() < np.abs(r).max():
            return trial
    except (ThetaNonPositive, np.linalg.LinAlgError):
        pass
    return p


def _newton(p0, pot, profile, opts):
    """Damped Newton; returns (p, residual, converged, hit_theta_floor)."""
    p = p0.copy()
    hit_floor = False
    try:
        r = _residual(p, pot, profile, opts.M)
    except ThetaNonPositive:
        return p, None, False, True
    for _ in range(opts.max_iter):
        norm = np.abs(r).max()
        if norm < opts.tol:
            return _polish(p, r, pot, profile, opts.M), r, True, hit_floor
        try:
            J = _jacobian(p, pot, profile, opts.M)
            step = np.linalg.solve(J, -r)
        except (ThetaNonPositive, np.linalg.LinAlgError):
            hit_floor = True
            return p, r, False, hit_floor
        lam = 1.0
        for _ in range(20):
            trial = p + lam * step
            try:
                rt = _residual(trial, pot, profile, opts.M)
                if np.abs(rt).max() < norm:
                    break
            except ThetaNonPositive:
                hit_floor = True
            lam *= 0.5
        else:
            return p, r, False, hit_floor
        p, r = trial, rt
    return p, r, np.abs(r).max() < opts.tol, hit_floor


def _theta_margin(p, M):
    vals = ThetaCoefficients.from_params(p).on_circle(M)
    return vals.min() / np.abs(vals).max()


def solve(pot, opts=None, fingerprint=None, **kwargs):
    """Find theta and the exterior map for `pot`.

    The perturbation P is switched on along t = 1/steps, ..., 1 from the
    P = 0 disk (theta = 1), warm-starting Newton with a secant predictor.
    A failed step is bisected; persistent failure near theta = 0 is
    reported as BoundaryBreakdown.
    """
    opts = opts or SolverOptions()
    for k, v in kwargs.items():
        setattr(opts, k, v)
    _check_grid_size(opts.M)
    profile = pot.radial
    d = pot.degree
    p = np.zeros(2 * d + 1)
    p[0] = 1.0

    if d == 0:
        ts = [1.0]
    else:
        ts = [k / opts.continuation_steps for k in range(1, opts.continuation_steps + 1)]
    t_prev, p_prev, p_older, t_older = 0.0, p.copy(), None, None
    queue = list(ts)
    depth = 0
    last_r = None
    while queue:
        t = queue[0]
        guess = p_prev.copy()
        if p_older is not None and t_prev > t_older:
            guess = p_prev + (p_prev - p_older) * (t - t_prev) / (t_prev - t_older)
            if _theta_margin(guess, opts.M) <= THETA_FLOOR:
                guess = p_prev.copy()
        p_new, r, ok, hit_floor = _newton(guess, pot.scaled(t), profile, opts)
        if not ok and guess is not p_prev:
            p_new, r, ok, hit_floor2 = _newton(p_prev.copy(), pot.scaled(t), profile, opts)
            hit_floor = hit_floor or hit_floor2
        if ok:
            p_older, t_older = p_prev, t_prev
            p_prev, t_prev = p_new, t
            queue.pop(0)
            depth = max(depth - 1, 0)
            continue
        last_r = r
        depth += 1
        if depth > opts.max_subdivisions:
            margin = _theta_margin(p_new, opts.M)
            residuals = None if r is None else np.abs(r).max()
            if hit_floor or margin < 1e-3:
                raise BoundaryBreakdown(
                    f"boundary breakdown near t = {t:.4g}: theta loses positivity "
                    f"(relative min {margin:.3e})", residuals=residuals, t=t)
            raise NoConvergence(f"Newton failed to converge at t = {t:.4g}", residuals=residuals)
        queue.insert(0, 0.5 * (t_prev + t))

    theta = ThetaCoefficients.from_params(p_prev)
    fmap = build_map(theta, profile, opts.M)
    mm = singular_mismatch(theta, fmap, pot)
    mass_val = mass(theta, fmap)
    try:
        curve = boundary_curve(fmap, opts.curve_points)
    except SelfIntersection as exc:
        raise BoundaryBreakdown("boundary breakdown: the boundary curve self-intersects") from exc
    residuals = {
        "singular": float(np.abs(mm).max()) if mm.size else 0.0,
        "mass": abs(mass_val - 1.0),
        "self_consistency": self_consistency(fmap, theta, profile),
    }
    del last_r
    return BoundarySolution(
        theta=theta,
        map=fmap,
        fingerprint=fingerprint or potential_fingerprint(pot),
        residuals=residuals,
        curve=curve,
        profile=profile,
        potential=pot,
    )


# -- closed forms for Phi(s) = C s^b -------------------------------------------


def _power_map(a, beta_roots, b, M):
    """Series form of f(zeta) = (a zeta)^{-1} prod_j (1 - zeta / zeta_j)^{1/b}."""
    c = np.zeros(M, dtype=complex)
    c[0] = -2.0 * math.log(a)
    k = np.arange(1, M // 2)
    for zj in beta_roots:
        c[1:M // 2] += -(zj ** (-k.astype(float))) / k / b
    return ConformalMap(a, c)


def closed_form_map(C, b, a, zeta_roots, M=1024):
    """f(zeta) = (a zeta)^{-1} prod (1 - zeta/zeta_j)^{1/b}; C is carried for
    signature symmetry with closed_form_power and does not enter f."""
    del C
    roots = [complex(z) for z in zeta_roots]
    for zj in roots:
        if abs(zj) <= 1.0:
            raise RootInsideDisk(f"root {zj} lies in the closed unit disk")
    return _power_map(a, roots, b, M)


def closed_form_power(C, b, K, M=1024):
    """Degree-one perturbation P(z) = K z for Phi(s) = C s^b.

    Solves C b a^{-2b} + |K|^2 a^{2b-2} (1 - 1/b) / (C b) = 1 on the branch
    continued from K = 0, then beta = conj(K) a^{2b-1} / (C b) and
    f(zeta) = (a zeta)^{-1} (1 + beta zeta)^{1/b}.
    """
    C, b = float(C), float(b)
    K = complex(K)
    Cb = C * b
    a0 = Cb ** (1.0 / (2.0 * b))
    k2 = abs(K) ** 2

    def F(a):
        return Cb * a ** (-2.0 * b) + k2 * a ** (2.0 * b - 2.0) * (1.0 - 1.0 / b) / Cb - 1.0

    if k2 == 0.0 or b == 1.0:
        a = a0
    else:
        sign0 = np.sign(F(a0))
        factor = 1.01 if b > 1 else 1.0 / 1.01
        lo, flo = a0, F(a0)
        a = None
        for _ in range(5000):
            hi = lo * factor
            fhi = F(hi)
            if np.sign(fhi) != sign0:
                a = brentq(F, min(lo, hi), max(lo, hi), xtol=1e-16, rtol=1e-15, maxiter=200)
                break
            if abs(fhi) > abs(flo) and abs(hi / a0 - 1) > 0.05:
                break
            lo, flo = hi, fhi
        if a is None:
            raise NoRealRoot(f"no admissible root for C={C}, b={b}, K={K}")
    beta = np.conj(K) * a ** (2.0 * b - 1.0) / Cb
    if abs(beta) >= 1.0:
        raise NoRealRoot(f"|beta| = {abs(beta):.4g} >= 1: theta vanishes on the circle")
    if beta.imag == 0:
        beta = float(beta.real)
    fmap = _power_map(a, [-1.0 / beta] if beta != 0 else [], b, M)
    return a, beta, fmap


def closed_form_theta(C, b, a, beta):
    """theta for the degree-one closed form: C b a^{-2b} (1 + beta zeta)(1 + conj(beta)/zeta)."""
    s = C * b * a ** (-2.0 * b)
    return ThetaCoefficients(np.array([s * (1 + abs(beta) ** 2), s * beta]))
