"""Generalized normal matrices: block-cyclic A with [A, A^dagger] = diag(lambda_i I_N).

A is stored through its m nonzero N x N blocks A_i = A_{i,i+1} (indices mod m).
Eigen-data live on the surface |z|^2 = Q(x), Q(x) = prod(x + alpha_i), and the
block structure is recovered by chaining eigenspaces of A_i A_i^dagger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from .errors import InvalidSurfacePoint, OutOfDomain

__all__ = [
    "SurfacePoint",
    "GeneralizedMatrix",
    "build_from_eigendata",
    "commutator_defect",
    "block_diagonalize",
    "monodromy_spectrum",
    "vandermonde_block_det",
    "jacobian_weight",
]


@dataclass(frozen=True)
class SurfacePoint:
    z: complex
    x: float
    phases: tuple

    def radii(self, alphas):
        return np.sqrt(np.maximum(self.x + np.asarray(alphas, dtype=float), 0.0))

    def check(self, alphas, rtol=1e-12):
        alphas = np.asarray(alphas, dtype=float)
        if len(self.phases) != len(alphas):
            raise InvalidSurfacePoint("need one phase per block")
        if np.any(self.x + alphas < -rtol * (1.0 + abs(self.x))):
            raise InvalidSurfacePoint(f"x = {self.x} is below -alpha")
        q = float(np.prod(self.x + alphas))
        zz = abs(self.z) ** 2
        if abs(zz - q) > rtol * max(1.0, abs(q)) * 10:
            raise InvalidSurfacePoint(f"|z|^2 = {zz} but Q(x) = {q}")
        arg = (sum(self.phases) - np.angle(self.z)) % (2 * math.pi)
        if abs(self.z) > 0 and min(arg, 2 * math.pi - arg) > 1e-9:
            raise InvalidSurfacePoint("phases do not add up to arg z")


@dataclass
class GeneralizedMatrix:
    blocks: list
    lambdas: np.ndarray

    @property
    def m(self):
        return len(self.blocks)

    @property
    def N(self):
        return self.blocks[0].shape[0]

    def dense(self):
        """The full mN x mN matrix."""
        m, N = self.m, self.N
        A = np.zeros((m * N, m * N), dtype=complex)
        for i, Ai in enumerate(self.blocks):
            j = (i + 1) % m
            A[i * N:(i + 1) * N, j * N:(j + 1) * N] += Ai
        return A

    def norm(self):
        return math.sqrt(sum(np.linalg.norm(b) ** 2 for b in self.blocks))


def build_from_eigendata(points, alphas, rotations=None):
    """Block-diagonal representative D_1..D_m conjugated by (S_1, ..., S_m).

    Block i has entries sqrt(x_j + alpha_i) * exp(1j * phases_j[i]); the
    rotations act as A_i -> S_i A_i S_{i+1}^dagger.
    """
    alphas = np.asarray(alphas, dtype=float)
    m, N = len(alphas), len(points)
    for p in points:
        p.check(alphas)
    radii = np.array([p.radii(alphas) for p in points])  # N x m
    phases = np.array([p.phases for p in points], dtype=float)
    diag = radii * np.exp(1j * phases)
    blocks = [np.diag(diag[:, i]).astype(complex) for i in range(m)]
    if rotations is not None:
        if len(rotations) != m:
            raise ValueError("need one unitary per block")
        blocks = [rotations[i] @ blocks[i] @ rotations[(i + 1) % m].conj().T for i in range(m)]
    return GeneralizedMatrix(blocks, alphas - np.roll(alphas, 1))


def commutator_defect(M):
    """Frobenius norm of [A, A^dagger] - diag(lambda_i I_N).

    Only the diagonal blocks of the commutator can be nonzero, and block i is
    A_i A_i^dagger - A_{i-1}^dagger A_{i-1}.
    """
    m, N = M.m, M.N
    total = 0.0
    eye = np.eye(N)
    for i in range(m):
        Ai, Aprev = M.blocks[i], M.blocks[i - 1]
        c = Ai @ Ai.conj().T - Aprev.conj().T @ Aprev - M.lambdas[i] * eye
        total += np.linalg.norm(c) ** 2
    return math.sqrt(total)


def monodromy(M):
    T = M.blocks[0].copy()
    for B in M.blocks[1:]:
        T = T @ B
    return T


def monodromy_spectrum(M):
    return np.linalg.eigvals(monodromy(M))


def _clusters(values, tol):
    groups, start = [], 0
    for k in range(1, len(values) + 1):
        if k == len(values) or values[k] - values[k - 1] > tol:
            groups.append(slice(start, k))
            start = k
    return groups


def _complete_columns(S, good):
    """Replace columns not flagged `good` by an orthonormal complement."""
    if good.all():
        return S
    keep = S[:, good]
    n = S.shape[0]
    q, _ = np.linalg.qr(np.hstack([keep, np.eye(n, dtype=complex)]))
    comp = q[:, keep.shape[1]:n]
    out = S.copy()
    out[:, ~good] = comp
    return out


def block_diagonalize(M, alphas, rtol=1e-8):
    """Recover eigen-data ((z_j, x_j), unitaries S_i) with M = (S_i) . diag form.

    Eigenvectors of A_1 A_1^dagger fix S_1 (clusters are split by diagonalizing
    the monodromy, which is normal on each cluster); S_m, ..., S_2 follow
    from A_{i} S_{i+1} = S_i D_i with real positive D_i for i >= 2, and the
    phase of z_j is carried entirely by D_1.
    """
    alphas = np.asarray(alphas, dtype=float)
    m, N = M.m, M.N
    H = M.blocks[0] @ M.blocks[0].conj().T
    nu, U = np.linalg.eigh(H)
    tol = rtol * max(1.0, np.abs(nu).max())
    T = monodromy(M)
    for sl in _clusters(nu, tol):
        if sl.stop - sl.start > 1:
            Uc = U[:, sl]
            _, Z = schur(Uc.conj().T @ T @ Uc, output="complex")
            U[:, sl] = Uc @ Z
    xs = nu - alphas[0]
    S = [None] * m
    S[0] = U
    nxt = U
    # backward chain: S_i = A_i S_{i+1} / r_i for i = m, ..., 2
    for i in range(m - 1, 0, -1):
        r = np.sqrt(np.maximum(xs + alphas[i], 0.0))
        good = r > 1e-12 * max(1.0, r.max())
        cols = M.blocks[i] @ nxt
        with np.errstate(divide="ignore", invalid="ignore"):
            Si = np.where(good, cols / np.where(good, r, 1.0), 0.0)
        Si = _complete_columns(Si, good)
        S[i] = Si
        nxt = Si
    D1 = S[0].conj().T @ M.blocks[0] @ (S[1] if m > 1 else S[0])
    d1 = np.diag(D1)
    rest = np.ones(N)
    for i in range(1, m):
        rest = rest * np.sqrt(np.maximum(xs + alphas[i], 0.0))
    zs = d1 * rest
    th1 = np.angle(d1) % (2 * math.pi)
    points = [SurfacePoint(complex(zs[j]), float(xs[j]), (float(th1[j]),) + (0.0,) * (m - 1)) for j in range(N)]
    return points, S


def vandermonde_block_det(zi, zj, m=None):
    """Determinant of the m x m cyclic matrix with diagonal z_j^s and
    off-diagonal -z_i^s; equals prod(z_j^s) - prod(z_i^s).

    ``zi`` and ``zj`` are the per-block factors; a scalar is read as the
    factor list (z, 1, ..., 1).
    """
    if np.ndim(zi) == 0:
        if m is None:
            raise ValueError("m is required for scalar inputs")
        zi = [zi] + [1.0] * (m - 1)
        zj = [zj] + [1.0] * (m - 1)
    zi = np.asarray(zi, dtype=complex)
    zj = np.asarray(zj, dtype=complex)
    m = len(zi)
    if m == 1:
        return complex(zj[0] - zi[0])
    J = np.diag(zj)
    J[np.arange(m - 1), np.arange(1, m)] = -zi[:-1]
    J[m - 1, 0] = -zi[m - 1]
    return complex(np.linalg.det(J))


def jacobian_weight(xs, profile):
    """log prod sqrt(Q'(x_i))."""
    xs = np.asarray(xs, dtype=float)
    if np.any(xs <= -profile.alpha) and profile.m > 1:
        raise OutOfDomain("x must exceed -alpha")
    if profile.m == 1:
        return 0.0
    return float(0.5 * np.sum(np.log(profile.q_prime(xs))))
