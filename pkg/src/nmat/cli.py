"""Command-line driver: ``nmat <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 boundary breakdown
or solver failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import gas, verify
from .boundary import BoundarySolution, boundary_curve, closed_form_power, solve
from .config import ConfigError, canonical_json, load_config
from .errors import BoundaryBreakdown, NMatError, NoConvergence, NoRealRoot, SelfIntersection

EXIT_OK, EXIT_USAGE, EXIT_BREAKDOWN, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- small I/O helpers -----------------------------------------------------------


def _dump(doc):
    # json writes floats with repr: shortest string that round-trips
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _write_json(path, doc):
    with open(path, "w") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=1))
        fh.write("\n")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def read_snapshots(path):
    """(header, [Snapshot]) from a snapshot JSONL file."""
    header, snaps = None, []
    try:
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if "fingerprint" in rec and "z" not in rec:
                    header = rec
                else:
                    snaps.append(gas.Snapshot.from_record(rec))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read snapshots {path}: {exc}") from None
    return header, snaps


def _config(args):
    if not args.config:
        raise UsageError("--config is required for this command")
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.override("sampler", "seed", args.seed)
    if getattr(args, "chains", None) is not None:
        cfg = cfg.override("sampler", "chains", args.chains)
    return cfg


def _out(args, cfg, key, default):
    if args.out:
        return args.out
    if cfg is not None and key in cfg["output"]:
        return cfg["output"][key]
    return default


def _svg(args, cfg):
    if args.svg:
        return args.svg
    if cfg is not None:
        return cfg["output"].get("svg")
    return None


def _check_fingerprint(cfg, found, what):
    if found != cfg.fingerprint:
        raise UsageError(f"{what} was produced with config fingerprint {found!r}, "
                         f"but the given config has {cfg.fingerprint!r}")


# -- commands ----------------------------------------------------------------------


def cmd_boundary(args):
    cfg = _config(args)
    if args.tol is not None:
        cfg = cfg.override("solver", "tol", args.tol)
    pot = cfg.potential()
    sol = solve(pot, cfg.solver_options(), fingerprint=cfg.fingerprint)
    out = _out(args, cfg, "boundary", "boundary.json")
    _write_json(out, sol.to_json())
    svg = _svg(args, cfg)
    if svg:
        from .plotting import curve_svg

        curve_svg(sol.curve, svg)
    print(f"a = {sol.a!r}; residuals {sol.residuals}; wrote {out}")
    return EXIT_OK


def _part_paths(out, k):
    return f"{out}.chain{k}.part", f"{out}.chain{k}.ckpt"


def _truncate_part(part, ckpt):
    """Keep only snapshots the checkpoint has already passed."""
    upto = 0
    if os.path.exists(ckpt):
        upto = gas.checkpoint_sweep(ckpt)
    lines = []
    if os.path.exists(part):
        with open(part) as fh:
            lines = [ln for ln in fh if ln.strip() and json.loads(ln)["sweep"] <= upto]
    with open(part, "w") as fh:
        fh.writelines(lines)


def _sample_worker(job):
    pot, model, s, seed, k, part, ckpt, stop_after = job
    _truncate_part(part, ckpt)
    with open(part, "a") as fh:
        for snap in gas.run_chain(pot, model, s["N"], s["sweeps"], s["burn_in"], s["thin"], seed,
                                  checkpoint_path=ckpt, checkpoint_every=s["checkpoint_every"],
                                  resume=True, stop_after=stop_after, chain=k):
            fh.write(_dump(snap.to_record()) + "\n")
            fh.flush()
    return gas.checkpoint_sweep(ckpt)


def _workers(chains):
    cap = os.environ.get("NMAT_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, int(cap))
        except ValueError:
            raise UsageError(f"NMAT_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(n, chains))


def cmd_sample(args):
    cfg = _config(args)
    s = cfg["sampler"]
    pot, model = cfg.potential(), cfg.gas_model()
    out = _out(args, cfg, "snapshots", "snapshots.jsonl")
    chains = s["chains"]
    paths = [_part_paths(out, k) for k in range(chains)]
    if not args.resume:
        for part, ckpt in paths:
            for p in (part, ckpt):
                if os.path.exists(p):
                    os.remove(p)
    seeds = gas.chain_seeds(s["seed"], chains)
    jobs = [(pot, model, s, seeds[k], k, paths[k][0], paths[k][1], args.stop_after) for k in range(chains)]
    workers = _workers(chains)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            reached = list(ex.map(_sample_worker, jobs))
    else:
        reached = [_sample_worker(j) for j in jobs]
    if min(reached) < s["sweeps"]:
        print(f"stopped at sweep {min(reached)} of {s['sweeps']}; rerun with --resume to continue")
        return EXIT_OK

    header = {"fingerprint": cfg.fingerprint, "N": s["N"], "chains": chains, "sweeps": s["sweeps"],
              "burn_in": s["burn_in"], "thin": s["thin"], "seed": s["seed"], "model": s["model"]}
    snaps = []
    with open(out + ".tmp", "w") as fo:
        fo.write(_dump(header) + "\n")
        for part, _ in paths:
            with open(part) as fh:
                for line in fh:
                    fo.write(line)
                    snaps.append(gas.Snapshot.from_record(json.loads(line)))
    os.replace(out + ".tmp", out)
    for part, ckpt in paths:
        os.remove(part)
        os.remove(ckpt)
    dens_path = cfg["output"].get("density")
    if dens_path or args.svg:
        grid = gas.estimate_density(snaps, cfg.grid())
        if dens_path:
            write_density_csv(dens_path, grid, cfg.fingerprint)
        if args.svg:
            from .plotting import density_svg

            density_svg(grid, args.svg)
    print(f"wrote {len(snaps)} snapshots from {chains} chain(s) to {out}")
    return EXIT_OK


def write_density_csv(path, grid, fingerprint):
    with open(path, "w") as fh:
        fh.write(f"# fingerprint {fingerprint}\n")
        fh.write("x,y,density\n")
        for x, y, d in grid.rows():
            fh.write(f"{x!r},{y!r},{d!r}\n")


def cmd_density(args):
    cfg = _config(args)
    header, snaps = read_snapshots(args.snapshots)
    if header is not None:
        _check_fingerprint(cfg, header.get("fingerprint"), args.snapshots)
    grid = gas.estimate_density(snaps, cfg.grid())
    out = _out(args, cfg, "density", "density.csv")
    write_density_csv(out, grid, cfg.fingerprint)
    svg = _svg(args, cfg)
    if svg:
        from .plotting import density_svg

        density_svg(grid, svg)
    print(f"density mass {grid.mass():.6f} on grid; wrote {out}")
    return EXIT_OK


def _load_boundary(path, cfg):
    doc = _read_json(path)
    _check_fingerprint(cfg, doc.get("config_fingerprint"), path)
    return BoundarySolution.from_json(doc, cfg.potential())


def cmd_verify(args):
    cfg = _config(args)
    sol = _load_boundary(args.boundary, cfg)
    v = cfg["verify"]
    tin = args.tol if args.tol is not None else v["tol_inside"]
    tout = args.tol if args.tol is not None else v["tol_outside"]
    report = verify.check_equilibrium(sol, cfg.potential(), tol_inside=tin, tol_outside=tout,
                                      tol_contour=v["tol_contour"])
    doc = report.to_dict()
    doc["fingerprint"] = cfg.fingerprint
    out = _out(args, cfg, "report", "report.json")
    _write_json(out, doc)
    print(f"verification {'passed' if report.ok else 'FAILED'}: {report.passed}; wrote {out}")
    return EXIT_OK if report.ok else EXIT_VERIFY


def cmd_compare(args):
    cfg = _config(args)
    sol = _load_boundary(args.boundary, cfg)
    header, snaps = read_snapshots(args.snapshots)
    if header is not None:
        _check_fingerprint(cfg, header.get("fingerprint"), args.snapshots)
    v = cfg["verify"]
    eps = args.eps if args.eps is not None else v["eps"]
    frac, dist = verify.support_compare(sol, snaps, eps)
    emp = verify.empirical_centroid(snaps)
    pred = verify.predicted_centroid(sol)
    cerr = abs(emp - pred)
    passed = {"outside_fraction": frac < v["max_outside_fraction"], "centroid": cerr < v["max_centroid_error"]}
    doc = {
        "fingerprint": cfg.fingerprint,
        "eps": eps,
        "outside_fraction": frac,
        "directed_distance": dist,
        "empirical_centroid": [emp.real, emp.imag],
        "predicted_centroid": [pred.real, pred.imag],
        "centroid_error": cerr,
        "passed": passed,
        "ok": all(passed.values()),
    }
    out = _out(args, cfg, "report", "compare.json")
    _write_json(out, doc)
    svg = _svg(args, cfg)
    if svg:
        from .plotting import overlay_svg

        overlay_svg(sol.curve, np.concatenate([s.z for s in snaps]), svg)
    print(f"outside fraction {frac:.4f} at eps {eps}; centroid error {cerr:.4f}; wrote {out}")
    return EXIT_OK if doc["ok"] else EXIT_VERIFY


def cmd_closed_form(args):
    if args.C is None or args.b is None or args.K is None:
        raise UsageError("closed-form needs --C, --b and --K")
    K = complex(args.K.replace(" ", ""))
    a, beta, fmap = closed_form_power(args.C, args.b, K)
    curve = boundary_curve(fmap, args.points)
    params = {"C": args.C, "b": args.b, "K": [K.real, K.imag]}
    doc = {
        "a": a,
        "beta": [complex(beta).real, complex(beta).imag],
        "params": params,
        "curve": [[w.real, w.imag] for w in curve.tolist()],
        "config_fingerprint": hashlib.sha256(canonical_json(params).encode()).hexdigest(),
    }
    out = args.out or "closed_form.json"
    _write_json(out, doc)
    if args.svg:
        from .plotting import curve_svg

        curve_svg(curve, args.svg, title="closed-form boundary")
    print(f"a = {a!r}")
    print(f"beta = {complex(beta)!r}")
    return EXIT_OK


def cmd_genmat_demo(args):
    from scipy.optimize import linear_sum_assignment
    from scipy.stats import unitary_group

    from . import genmat

    cfg = _config(args)
    profile = cfg.profile()
    if profile.kind != "generalized":
        raise UsageError("genmat-demo needs a generalized radial profile in the config")
    rng = np.random.default_rng(cfg["sampler"]["seed"])
    if args.snapshots:
        _, snaps = read_snapshots(args.snapshots)
        if not snaps:
            raise UsageError(f"{args.snapshots} holds no snapshots")
        z = snaps[-1].z
    else:
        n = min(cfg["sampler"]["N"], 8)
        r0 = profile.disk_radius()
        z = r0 * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
    pts = [gas.surface_lift(w, profile, rng) for w in z]
    rots = [unitary_group.rvs(len(pts), random_state=rng) for _ in range(profile.m)]
    M = genmat.build_from_eigendata(pts, profile.alphas, rots)
    spec = genmat.monodromy_spectrum(M)
    zs = np.array([p.z for p in pts])
    cost = np.abs(zs[:, None] - spec[None, :])
    i, j = linear_sum_assignment(cost)
    back, _ = genmat.block_diagonalize(M, profile.alphas)
    zb = np.array([p.z for p in back])
    cost2 = np.abs(zs[:, None] - zb[None, :])
    i2, j2 = linear_sum_assignment(cost2)
    diag = {
        "N": M.N,
        "m": M.m,
        "commutator_defect": genmat.commutator_defect(M),
        "monodromy_spectrum_error": float(cost[i, j].max()),
        "round_trip_error": float(cost2[i2, j2].max()),
        "fingerprint": cfg.fingerprint,
    }
    print(json.dumps(diag, sort_keys=True, indent=1))
    if args.out:
        _write_json(args.out, diag)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="nmat", description="Droplet boundaries and eigenvalue gases of normal matrix models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=False):
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--out", metavar="PATH")
        sp.add_argument("--svg", metavar="PATH")
        if seed:
            sp.add_argument("--seed", type=int, metavar="U64")
            sp.add_argument("--chains", type=int, metavar="INT")

    sp = sub.add_parser("boundary", help="solve for the droplet boundary")
    common(sp)
    sp.add_argument("--tol", type=float, metavar="FLOAT")
    sp.set_defaults(func=cmd_boundary)

    sp = sub.add_parser("sample", help="run Metropolis chains and write snapshots")
    common(sp, seed=True)
    sp.add_argument("--resume", action="store_true", help="continue from existing checkpoints")
    sp.add_argument("--stop-after", type=int, metavar="SWEEPS", help="stop each chain at this sweep")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("density", help="histogram density from snapshots")
    common(sp)
    sp.add_argument("snapshots")
    sp.set_defaults(func=cmd_density)

    sp = sub.add_parser("verify", help="check a boundary against the variational equation")
    common(sp)
    sp.add_argument("boundary")
    sp.add_argument("--tol", type=float, metavar="FLOAT")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("compare", help="compare samples with the predicted support")
    common(sp)
    sp.add_argument("boundary")
    sp.add_argument("snapshots")
    sp.add_argument("--eps", type=float, metavar="FLOAT")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("closed-form", help="closed-form droplet for Phi = C s^b, P = K z")
    sp.add_argument("--C", type=float)
    sp.add_argument("--b", type=float)
    sp.add_argument("--K", type=str, help="complex, e.g. 0.2 or 0.1+0.05j")
    sp.add_argument("--points", type=int, default=512)
    sp.add_argument("--out", metavar="PATH")
    sp.add_argument("--svg", metavar="PATH")
    sp.set_defaults(func=cmd_closed_form)

    sp = sub.add_parser("genmat-demo", help="build a generalized normal matrix from eigendata")
    common(sp, seed=True)
    sp.add_argument("snapshots", nargs="?")
    sp.set_defaults(func=cmd_genmat_demo)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "chains", None) is not None and args.chains < 1:
            raise UsageError("--chains must be positive")
        if getattr(args, "stop_after", None) is not None and args.stop_after < 1:
            raise UsageError("--stop-after must be positive")
        if getattr(args, "eps", None) is not None and args.eps < 0:
            raise UsageError("--eps must be nonnegative")
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except BoundaryBreakdown as exc:
        msg = str(exc)
        if "boundary breakdown" not in msg:
            msg = f"boundary breakdown: {msg}"
        print(msg, file=sys.stderr)
        return EXIT_BREAKDOWN
    except (NoConvergence, NoRealRoot, SelfIntersection) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except (NMatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
