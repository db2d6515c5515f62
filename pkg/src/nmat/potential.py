"""Potentials W(z) = Phi(|z|^2) - 2 Re P(z) and their radial profiles.

Two radial families are supported:

* ``power``: Phi(s) = C s**b.
* ``generalized``: Phi(s) = m * coupling * Q^{-1}(s) with Q(x) = prod(x + alpha_i),
  which is the radial profile induced by the block ("generalized") normal
  matrix model with the quadratic weight Tr(M M^dagger).

For either family the moment function I(s) = s Phi'(s) and the density
g(s) = I'(s) / pi are available in closed form, and I is inverted numerically
when no closed form exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InversionFailure, NonFinite, NonPositiveDensity, OutOfDomain

__all__ = [
    "RadialProfile",
    "Potential",
    "eval_W",
    "density_g",
    "moment_I",
    "moment_I_inv",
    "q_eval",
    "q_prime",
    "q_inv",
]

_MAX_DOUBLINGS = 200


def _monotone_solve(fn, dfn, target, lo, width, rtol=1e-15, maxiter=200):
    """Solve fn(x) = target for increasing fn on [lo, inf), elementwise.

    Safeguarded Newton: the bracket [lo, hi] is grown geometrically until it
    contains the root, Newton steps that leave the bracket are replaced by
    bisection.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = lo + width
    for _ in range(_MAX_DOUBLINGS):
        short = fn(hi) < target
        if not short.any():
            break
        lo = np.where(short, hi, lo)
        hi = np.where(short, lo + 2.0 * (hi - lo) + width, hi)
    else:
        raise InversionFailure("could not bracket the root of a monotone function")

    x = 0.5 * (lo + hi)
    for _ in range(maxiter):
        r = fn(x) - target
        lo = np.where(r < 0, x, lo)
        hi = np.where(r > 0, x, hi)
        d = dfn(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = x - r / d
        bad = ~np.isfinite(x_new) | (x_new <= lo) | (x_new >= hi)
        x_new = np.where(bad, 0.5 * (lo + hi), x_new)
        step = np.abs(x_new - x)
        x = x_new
        if np.all((step <= rtol * (1.0 + np.abs(x))) | (r == 0) | (hi - lo <= rtol * (1.0 + np.abs(x)))):
            break
    return x


@dataclass(frozen=True)
class RadialProfile:
    """Rotationally invariant part Phi of the potential."""

    kind: str
    C: float = 1.0
    b: float = 1.0
    alphas: tuple = ()
    coupling: float = 1.0
    _poly: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "power":
            if not (self.C > 0 and self.b > 0):
                raise ValueError("power profile needs C > 0 and b > 0")
        elif self.kind == "generalized":
            if len(self.alphas) < 1:
                raise ValueError("generalized profile needs at least one alpha")
            if not self.coupling > 0:
                raise ValueError("coupling must be positive")
            alphas = tuple(float(a) for a in self.alphas)
            object.__setattr__(self, "alphas", alphas)
            # coefficients of Q(x) = prod(x + alpha_i), highest degree first
            object.__setattr__(self, "_poly", np.poly([-a for a in alphas]).real)
        else:
            raise ValueError(f"unknown radial profile kind {self.kind!r}")

    @classmethod
    def power(cls, C=1.0, b=1.0):
        return cls("power", C=float(C), b=float(b))

    @classmethod
    def generalized(cls, alphas, coupling=1.0):
        return cls("generalized", alphas=tuple(alphas), coupling=float(coupling))

    @property
    def m(self):
        return 1 if self.kind == "power" else len(self.alphas)

    @property
    def alpha(self):
        """min alpha_i; Q is increasing on [-alpha, inf)."""
        return min(self.alphas)

    @property
    def lambdas(self):
        """lambda_i = alpha_i - alpha_{i-1} (indices mod m)."""
        a = np.asarray(self.alphas)
        return a - np.roll(a, 1)

    def to_dict(self):
        if self.kind == "power":
            return {"kind": "power", "C": self.C, "b": self.b}
        return {"kind": "generalized", "alphas": list(self.alphas), "coupling": self.coupling}

    # -- Q and derivatives (generalized kind) ---------------------------------

    def _require_generalized(self):
        if self.kind != "generalized":
            raise TypeError("Q is only defined for the generalized profile")

    # Internally the generalized profile works with u = x + alpha >= 0 and the
    # offsets delta_i = alpha_i - alpha >= 0, so Q = prod(u + delta_i) keeps full
    # relative precision near s = 0 where x is close to -alpha.

    @property
    def _deltas(self):
        return [a - self.alpha for a in self.alphas]

    def _q_u(self, u):
        out = np.ones_like(u)
        for d in self._deltas:
            out = out * (u + d)
        return out

    def _q_prime_u(self, u):
        # sum_i prod_{j != i} (u + delta_j): no division, exact at u = 0
        ds = self._deltas
        out = np.zeros_like(u)
        for i in range(len(ds)):
            term = np.ones_like(u)
            for j, d in enumerate(ds):
                if j != i:
                    term = term * (u + d)
            out = out + term
        return out

    def _u_of_s(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 1e-300)
        if self.m == 1:
            return s
        if self.m == 2:
            delta = max(self._deltas)
            return 2.0 * s / (delta + np.sqrt(delta * delta + 4.0 * s))
        return _monotone_solve(self._q_u, self._q_prime_u, s, 0.0, 1.0)

    def _weights(self, u):
        # w_i = (u + delta_min) / (u + delta_i) in (0, 1]; delta_min = 0
        return [u / (u + d) if d > 0 else np.ones_like(u) for d in self._deltas]

    def _moment_u(self, u):
        # I = m c / sum 1/(u + delta_i) = m c u / sum w_i
        return self.m * self.coupling * u / sum(self._weights(u))

    def _moment_u_prime(self, u):
        # dI/du = m c sum (u+delta)^-2 / (sum (u+delta)^-1)^2 = m c sum w^2 / (sum w)^2
        w = self._weights(u)
        return self.m * self.coupling * sum(x * x for x in w) / sum(w) ** 2

    def q(self, x):
        self._require_generalized()
        return self._q_u(np.asarray(x, dtype=float) + self.alpha)

    def q_prime(self, x):
        self._require_generalized()
        return self._q_prime_u(np.asarray(x, dtype=float) + self.alpha)

    def q_second(self, x):
        self._require_generalized()
        if len(self._poly) < 3:
            return np.zeros_like(np.asarray(x, dtype=float))
        return np.polyval(np.polyder(self._poly, 2), x)

    def q_inv(self, s):
        """Unique x >= -alpha with Q(x) = s."""
        self._require_generalized()
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise OutOfDomain("Q^{-1} is only defined for s >= 0")
        x = self._u_of_s(s) - self.alpha
        return x if x.ndim else float(x)

    # -- Phi, I, g ------------------------------------------------------------

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "power":
            return self.C * s**self.b
        return self.m * self.coupling * self.q_inv(s)

    def phi_prime(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "power":
            return self.C * self.b * s ** (self.b - 1.0)
        return self.m * self.coupling / self._q_prime_u(self._u_of_s(s))

    def moment(self, s):
        """I(s) = s Phi'(s) = pi * int_0^s g."""
        s = np.asarray(s, dtype=float)
        if self.kind == "power":
            return self.C * self.b * s**self.b
        out = np.where(s == 0, 0.0, self._moment_u(self._u_of_s(s)))
        return out if out.ndim else float(out)

    def moment_inv(self, y):
        """s >= 0 with I(s) = y."""
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise OutOfDomain("I^{-1} is only defined for y >= 0")
        if self.kind == "power":
            out = (y / (self.C * self.b)) ** (1.0 / self.b)
            return out if out.ndim else float(out)
        u = _monotone_solve(self._moment_u, self._moment_u_prime, y, 0.0, 1.0)
        out = np.where(y == 0, 0.0, self._q_u(u))
        return out if out.ndim else float(out)

    def density(self, s):
        """g(s) = (s Phi'(s))' / pi, without the positivity check."""
        s = np.asarray(s, dtype=float)
        if self.kind == "power":
            with np.errstate(divide="ignore"):
                return self.C * self.b**2 * s ** (self.b - 1.0) / math.pi
        # g = m c / pi * Q^2 / Q'^3 * sum (x + alpha_i)^-2 = m c / pi * (sum w^2 / (sum w)^2) / Q'
        u = self._u_of_s(s)
        w = self._weights(u)
        ratio = sum(x * x for x in w) / sum(w) ** 2
        with np.errstate(divide="ignore"):
            return self.m * self.coupling * ratio / self._q_prime_u(u) / math.pi

    def disk_radius(self):
        """Radius of the support when P = 0: sqrt(I^{-1}(1))."""
        return math.sqrt(self.moment_inv(1.0))

    def validate(self, n=256):
        """Check g > 0 on a log grid spanning the support scale."""
        s = np.logspace(-8, math.log10(4.0 * self.moment_inv(1.0)), n)
        g = self.density(s)
        if not np.all(g > 0):
            raise NonPositiveDensity(f"g(s) <= 0 at s = {s[~(g > 0)][0]:.3e}")
        return True


@dataclass(frozen=True)
class Potential:
    """W(z) = Phi(|z|^2) - P(z) - conj(P(z)) on the disk D(domain_radius)."""

    radial: RadialProfile
    poly: tuple = ()
    domain_radius: float | None = None

    def __post_init__(self):
        poly = tuple(complex(p) for p in self.poly)
        # drop trailing zero coefficients so degree is meaningful
        while poly and poly[-1] == 0:
            poly = poly[:-1]
        object.__setattr__(self, "poly", poly)
        if self.domain_radius is None:
            object.__setattr__(self, "domain_radius", 2.0 * self.radial.disk_radius())
        elif not self.domain_radius > 0:
            raise ValueError("domain_radius must be positive")

    @property
    def degree(self):
        return len(self.poly)

    def scaled(self, t):
        """Same potential with P replaced by t * P."""
        return Potential(self.radial, tuple(t * p for p in self.poly), self.domain_radius)

    def P(self, z):
        z = np.asarray(z, dtype=complex)
        return np.polyval(list(reversed(self.poly)) + [0.0], z) if self.poly else np.zeros_like(z)

    def dP(self, z):
        """P'(z) = sum k p_k z^{k-1}."""
        z = np.asarray(z, dtype=complex)
        if not self.poly:
            return np.zeros_like(z)
        coeffs = [k * p for k, p in enumerate(self.poly, start=1)]
        return np.polyval(coeffs[::-1], z)

    def W(self, z):
        z = np.asarray(z, dtype=complex)
        if not np.all(np.isfinite(z)):
            raise NonFinite("W evaluated at a non-finite point")
        s = (z * z.conj()).real
        return self.radial.phi(s) - 2.0 * self.P(z).real


def eval_W(pot, z):
    out = pot.W(z)
    return float(out) if np.ndim(out) == 0 else out


def density_g(profile, s):
    g = profile.density(s)
    s_arr = np.asarray(s, dtype=float)
    if np.any((g <= 0) & (s_arr > 0)) or np.any(np.isnan(g)):
        raise NonPositiveDensity("density g is not positive")
    return float(g) if np.ndim(g) == 0 else g


def moment_I(profile, s):
    out = profile.moment(s)
    return float(out) if np.ndim(out) == 0 else out


def moment_I_inv(profile, y):
    return profile.moment_inv(y)


def q_eval(profile, x):
    out = profile.q(x)
    return float(out) if np.ndim(out) == 0 else out


def q_prime(profile, x):
    out = profile.q_prime(x)
    return float(out) if np.ndim(out) == 0 else out


def q_inv(profile, s):
    return profile.q_inv(s)
