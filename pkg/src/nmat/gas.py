"""Metropolis sampling of the eigenvalue log-gas.

The joint eigenvalue density of the normal matrix model is

    exp(-N sum_i W(z_i)) prod_{i<j} |z_i - z_j|^2

on D(R)^N; the generalized (block) model multiplies it by prod_i sqrt(Q'(x_i))
with x_i = Q^{-1}(|z_i|^2). Chains are single-particle random-walk
Metropolis with the step size tuned during burn-in only, seeded and
checkpointable so that a resumed chain is bit-identical to an unbroken one.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import CheckpointCorrupt, EmptyInput, InvalidArgument
from .genmat import SurfacePoint
from .potential import RadialProfile

__all__ = [
    "GasModel",
    "EigenConfiguration",
    "Snapshot",
    "GridSpec",
    "DensityGrid",
    "log_weight",
    "incremental_delta",
    "init_configuration",
    "mh_sweep",
    "run_chain",
    "run_chains",
    "estimate_density",
    "radial_cdf",
    "cdf_sup_distance",
    "surface_lift",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_sweep",
]

TARGET_ACCEPT = 0.35
ADAPT_WINDOW = 25
MIN_DIST2 = 1e-28  # proposals closer than 1e-14 to another particle are rejected
CHECKPOINT_MAGIC = b"NMGAS1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GasModel:
    """``standard`` or ``generalized``; the latter carries the profile whose Q
    enters the sqrt(Q') factor.

    With ``planar_measure`` the factor is taken with respect to d^2 z, i.e.
    multiplied by the Jacobian 2/Q'(x) of (x, theta) -> z, which flips the
    exponent of Q' from +1/2 to -1/2.
    """

    kind: str = "standard"
    profile: RadialProfile | None = None
    planar_measure: bool = False

    def __post_init__(self):
        if self.kind not in ("standard", "generalized"):
            raise InvalidArgument(f"unknown model {self.kind!r}")
        if self.kind == "generalized" and (self.profile is None or self.profile.kind != "generalized"):
            raise InvalidArgument("generalized model needs a generalized profile")

    @classmethod
    def standard(cls):
        return cls("standard")

    @classmethod
    def generalized(cls, profile, planar_measure=False):
        return cls("generalized", profile, planar_measure)

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "generalized":
            out["profile"] = self.profile.to_dict()
            out["planar_measure"] = self.planar_measure
        return out

    def jacobian_term(self, z):
        """+-(1/2) log Q'(Q^{-1}(|z|^2)) per particle (zero for the standard model)."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "standard":
            return np.zeros(z.shape)
        prof = self.profile
        x = np.asarray(prof.q_inv(np.abs(z) ** 2), dtype=float)
        alphas = np.asarray(prof.alphas)
        if np.sum(alphas == alphas.min()) > 1:
            x = np.maximum(x, -prof.alpha + 1e-12)
        sign = -0.5 if self.planar_measure else 0.5
        return sign * np.log(prof.q_prime(x))


def one_body(z, pot, model):
    """Per-particle part of the log-weight: -N W(z_i) + jacobian term."""
    z = np.asarray(z, dtype=complex)
    return -z.size * pot.W(z) + model.jacobian_term(z)


def _one_body_n(z, n, pot, model):
    return -n * pot.W(z) + model.jacobian_term(z)


def log_weight(z, pot, model):
    """log of the unnormalized joint density; -inf outside D(R) or at collisions."""
    z = np.asarray(z, dtype=complex).ravel()
    if np.any(np.abs(z) > pot.domain_radius):
        return -math.inf
    diff = np.abs(z[:, None] - z[None, :])
    iu = np.triu_indices(z.size, 1)
    pair = diff[iu]
    if np.any(pair == 0):
        return -math.inf
    return float(np.sum(one_body(z, pot, model)) + 2.0 * np.sum(np.log(pair)))


def incremental_delta(z, i, w, pot, model):
    """log_weight(z with z_i -> w) - log_weight(z), in O(N)."""
    z = np.asarray(z, dtype=complex)
    others = np.delete(z, i)
    n = z.size
    dw = _one_body_n(np.array([w, z[i]]), n, pot, model)
    return float(dw[0] - dw[1] + np.sum(np.log(np.abs(w - others) ** 2 / np.abs(z[i] - others) ** 2)))


@numba.njit(cache=True)
def _sweep_kernel(z, zp, dw1, logu, r2max, min_d2):
    n = z.shape[0]
    acc = 0
    dlog = 0.0
    for i in range(n):
        w = zp[i]
        if w.real * w.real + w.imag * w.imag > r2max:
            continue
        s = dw1[i]
        zi = z[i]
        ok = True
        for j in range(n):
            if j == i:
                continue
            zj = z[j]
            dx = w.real - zj.real
            dy = w.imag - zj.imag
            dn = dx * dx + dy * dy
            if dn < min_d2:
                ok = False
                break
            ex = zi.real - zj.real
            ey = zi.imag - zj.imag
            s += math.log(dn / (ex * ex + ey * ey))
        if not ok:
            continue
        if logu[i] < s:
            z[i] = w
            acc += 1
            dlog += s
    return acc, dlog


@dataclass
class EigenConfiguration:
    z: np.ndarray
    model: GasModel
    cached_logw: float
    step_sigma: float
    rng: np.random.Generator
    sweep_count: int = 0
    adapt_accepted: int = 0
    adapt_proposed: int = 0
    total_accepted: int = 0
    total_proposed: int = 0

    @property
    def N(self):
        return self.z.size

    @property
    def acceptance(self):
        return self.total_accepted / self.total_proposed if self.total_proposed else float("nan")


def init_configuration(pot, model, N, rng, sigma=None):
    """N distinct points uniform in the P = 0 support disk."""
    if N < 1:
        raise InvalidArgument("N must be positive")
    r0 = min(pot.radial.disk_radius(), 0.9 * pot.domain_radius)
    u = rng.random(N)
    v = rng.random(N)
    z = r0 * np.sqrt(u) * np.exp(2j * np.pi * v)
    if sigma is None:
        sigma = 0.5 * r0 / math.sqrt(N)
    return EigenConfiguration(z=z, model=model, cached_logw=log_weight(z, pot, model), step_sigma=float(sigma), rng=rng)


def mh_sweep(cfg, pot, adapt=False):
    """N sequential single-particle Metropolis updates (in place; returns cfg)."""
    n = cfg.z.size
    noise = cfg.rng.standard_normal(2 * n)
    logu = np.log(cfg.rng.random(n))
    zp = cfg.z + cfg.step_sigma * (noise[:n] + 1j * noise[n:])
    # particle i is still at its sweep-start position when its turn comes
    with np.errstate(over="ignore", invalid="ignore"):
        dw1 = _one_body_n(zp, n, pot, cfg.model) - _one_body_n(cfg.z, n, pot, cfg.model)
    dw1 = np.where(np.isfinite(dw1), dw1, -np.inf)
    acc, dlog = _sweep_kernel(cfg.z, zp, dw1, logu, pot.domain_radius**2, MIN_DIST2)
    cfg.cached_logw += dlog
    cfg.sweep_count += 1
    cfg.total_accepted += acc
    cfg.total_proposed += n
    if adapt:
        cfg.adapt_accepted += acc
        cfg.adapt_proposed += n
        if cfg.sweep_count % ADAPT_WINDOW == 0:
            rate = cfg.adapt_accepted / cfg.adapt_proposed
            cfg.step_sigma *= math.exp(2.0 * (rate - TARGET_ACCEPT))
            cfg.adapt_accepted = cfg.adapt_proposed = 0
    return cfg


# -- checkpoints ----------------------------------------------------------------


def chain_hash(pot, model, N, burn_in, thin):
    from .boundary import potential_fingerprint

    doc = {"potential": potential_fingerprint(pot), "model": model.to_dict(), "N": N, "burn_in": burn_in, "thin": thin}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def save_checkpoint(path, cfg, model_hash):
    header = {
        "version": CHECKPOINT_VERSION,
        "N": cfg.N,
        "model_hash": model_hash,
        "sweep": cfg.sweep_count,
        "sigma": cfg.step_sigma,
        "cached_logw": cfg.cached_logw,
        "rng_state": cfg.rng.bit_generator.state,
        "counters": [cfg.adapt_accepted, cfg.adapt_proposed, cfg.total_accepted, cfg.total_proposed],
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(hbytes)))
    buf.write(hbytes)
    buf.write(np.ascontiguousarray(cfg.z, dtype="<c16").tobytes())
    body = buf.getvalue()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(body)
        fh.write(hashlib.sha256(body).digest())
    os.replace(tmp, path)


def _read_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 8 + 32 or not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointCorrupt(f"{path}: not a gas checkpoint")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointCorrupt(f"{path}: checksum mismatch")
    off = len(CHECKPOINT_MAGIC)
    version, hlen = struct.unpack_from("<II", body, off)
    if version != CHECKPOINT_VERSION:
        raise CheckpointCorrupt(f"{path}: unsupported version {version}")
    off += 8
    header = json.loads(body[off:off + hlen])
    off += hlen
    return header, body[off:]


def checkpoint_sweep(path):
    """Sweep count stored in a checkpoint (validates the checksum)."""
    return int(_read_checkpoint(path)[0]["sweep"])


def load_checkpoint(path, model, model_hash=None):
    header, zbytes = _read_checkpoint(path)
    if model_hash is not None and header["model_hash"] != model_hash:
        raise CheckpointCorrupt(f"{path}: checkpoint belongs to a different chain setup")
    z = np.frombuffer(zbytes, dtype="<c16").astype(complex)
    if z.size != header["N"]:
        raise CheckpointCorrupt(f"{path}: expected {header['N']} particles, found {z.size}")
    bitgen = np.random.PCG64()
    bitgen.state = header["rng_state"]
    aa, ap, ta, tp = header["counters"]
    return EigenConfiguration(
        z=z.copy(), model=model, cached_logw=header["cached_logw"], step_sigma=header["sigma"],
        rng=np.random.Generator(bitgen), sweep_count=header["sweep"],
        adapt_accepted=aa, adapt_proposed=ap, total_accepted=ta, total_proposed=tp,
    )


# -- chains -----------------------------------------------------------------


@dataclass
class Snapshot:
    sweep: int
    z: np.ndarray
    chain: int = 0

    def to_record(self):
        return {"chain": self.chain, "sweep": self.sweep, "z": [[float(w.real), float(w.imag)] for w in self.z]}

    @classmethod
    def from_record(cls, rec):
        return cls(int(rec["sweep"]), np.array([complex(x, y) for x, y in rec["z"]]), int(rec.get("chain", 0)))


def _make_rng(seed):
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def run_chain(pot, model, N, sweeps, burn_in, thin, seed, checkpoint_path=None,
              checkpoint_every=None, resume=True, stop_after=None, chain=0, state=None):
    """Yield a Snapshot every `thin` sweeps after burn-in.

    Sweep s (1-based) is emitted when s > burn_in and (s - burn_in) % thin == 0.
    With `checkpoint_path`, the state is saved every `checkpoint_every` sweeps
    (default `thin`) and at the end; with `resume`, an existing checkpoint is
    loaded and the chain continues from it. `stop_after` ends this call after
    that many total sweeps (for interrupted runs). `state`, if given, is a
    list that receives the final EigenConfiguration.
    """
    if thin is None or thin < 1:
        raise InvalidArgument("thin must be a positive integer")
    if not sweeps > burn_in >= 0:
        raise InvalidArgument("need sweeps > burn_in >= 0")
    mhash = chain_hash(pot, model, N, burn_in, thin)
    cfg = None
    if checkpoint_path is not None and resume and os.path.exists(checkpoint_path):
        cfg = load_checkpoint(checkpoint_path, model, mhash)
    if cfg is None:
        cfg = init_configuration(pot, model, N, _make_rng(seed))
    every = checkpoint_every or thin
    end = sweeps if stop_after is None else min(sweeps, stop_after)
    while cfg.sweep_count < end:
        mh_sweep(cfg, pot, adapt=cfg.sweep_count < burn_in)
        s = cfg.sweep_count
        if s > burn_in and (s - burn_in) % thin == 0:
            yield Snapshot(s, cfg.z.copy(), chain)
        if checkpoint_path is not None and (s % every == 0 or s == end):
            save_checkpoint(checkpoint_path, cfg, mhash)
    if state is not None:
        state.append(cfg)


def _chain_worker(args):
    pot, model, N, sweeps, burn_in, thin, seed, k, ckpt, every, stop_after = args
    snaps = list(run_chain(pot, model, N, sweeps, burn_in, thin, seed, checkpoint_path=ckpt,
                           checkpoint_every=every, stop_after=stop_after, chain=k))
    return snaps


def chain_seeds(seed, chains):
    """Independent child seeds from a master seed."""
    return np.random.SeedSequence(seed).spawn(chains)


def run_chains(pot, model, N, sweeps, burn_in, thin, seed, chains=1, workers=1,
               checkpoint_paths=None, checkpoint_every=None, stop_after=None):
    """Run independent chains (in parallel when workers > 1); results are
    ordered by chain index regardless of completion order."""
    seeds = chain_seeds(seed, chains)
    paths = checkpoint_paths or [None] * chains
    jobs = [(pot, model, N, sweeps, burn_in, thin, seeds[k], k, paths[k], checkpoint_every, stop_after)
            for k in range(chains)]
    if workers > 1 and chains > 1:
        with ProcessPoolExecutor(max_workers=min(workers, chains)) as ex:
            return list(ex.map(_chain_worker, jobs))
    return [_chain_worker(j) for j in jobs]


# -- density estimates -----------------------------------------------------------


def _pool(snapshots):
    snapshots = list(snapshots)
    if not snapshots:
        raise EmptyInput("no snapshots")
    return np.concatenate([np.asarray(s.z if isinstance(s, Snapshot) else s, dtype=complex).ravel()
                           for s in snapshots])


@dataclass(frozen=True)
class GridSpec:
    center: complex = 0j
    extent: float = 2.0  # half-width of the square
    n: int = 64

    @property
    def cell_area(self):
        return (2.0 * self.extent / self.n) ** 2

    def edges(self):
        c = complex(self.center)
        return (np.linspace(c.real - self.extent, c.real + self.extent, self.n + 1),
                np.linspace(c.imag - self.extent, c.imag + self.extent, self.n + 1))

    def centers(self):
        ex, ey = self.edges()
        return 0.5 * (ex[1:] + ex[:-1]), 0.5 * (ey[1:] + ey[:-1])


@dataclass
class DensityGrid:
    grid: GridSpec
    counts: np.ndarray
    total: float
    meta: dict = field(default_factory=dict)

    def density(self):
        """Normalized histogram; sums to the in-grid fraction after multiplying by cell area."""
        if self.total == 0:
            return np.zeros_like(self.counts, dtype=float)
        return self.counts / (self.total * self.grid.cell_area)

    def mass(self):
        return float(self.density().sum() * self.grid.cell_area)

    def merge(self, other):
        if other.grid != self.grid:
            raise InvalidArgument("cannot merge densities on different grids")
        meta = dict(self.meta)
        meta["snapshots"] = self.meta.get("snapshots", 0) + other.meta.get("snapshots", 0)
        return DensityGrid(self.grid, self.counts + other.counts, self.total + other.total, meta)

    def rows(self):
        """(x, y, density) per cell, x fastest."""
        cx, cy = self.grid.centers()
        dens = self.density()
        for iy, y in enumerate(cy):
            for ix, x in enumerate(cx):
                yield float(x), float(y), float(dens[ix, iy])


def estimate_density(snapshots, grid):
    snapshots = list(snapshots)
    z = _pool(snapshots)
    ex, ey = grid.edges()
    counts, _, _ = np.histogram2d(z.real, z.imag, bins=[ex, ey])
    return DensityGrid(grid, counts, float(z.size), {"snapshots": len(snapshots)})


def radial_cdf(snapshots, center=0j, knots=256):
    """Empirical CDF of |z - center| tabulated at `knots` quantiles (order statistics)."""
    r = np.sort(np.abs(_pool(snapshots) - center))
    probs = (np.arange(knots) + 1.0) / knots
    rk = np.quantile(r, probs, method="inverted_cdf")
    F = np.searchsorted(r, rk, side="right") / r.size
    return np.column_stack([rk, F])


def cdf_sup_distance(a, b):
    """sup_r |F_a(r) - F_b(r)| of two empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptyInput("empty sample")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.abs(fa - fb).max())


def surface_lift(z, profile, rng):
    """Point of the surface |z|^2 = Q(x) over z, with random per-block phases
    summing to arg z."""
    m = profile.m
    x = float(profile.q_inv(abs(z) ** 2))
    x = max(x, -profile.alpha)
    head = rng.uniform(0.0, 2.0 * math.pi, m - 1)
    last = (np.angle(z) - head.sum()) % (2.0 * math.pi)
    # recompute z from radii so that |z|^2 = Q(x) holds to rounding
    r = float(np.prod(np.sqrt(np.maximum(x + np.asarray(profile.alphas), 0.0))))
    zz = r * np.exp(1j * np.angle(z)) if z != 0 else 0j
    return SurfacePoint(complex(zz), x, tuple(float(t) for t in head) + (float(last),))
