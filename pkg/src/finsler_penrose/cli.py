"""Command-line front end.

    finsler-penrose <command> --scenario FILE [--out DIR] [--seed N] [--tol-rtol X ...]

Commands: validate, geodesic, jacobi, focal, trapped, ricci-scan, penrose.
Exit codes: 0 pass, 1 hypothesis or check failed, 2 error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .connection import null_ricci_scan
from .errors import GeometryToolkitError
from .geodesic import completeness_probe, integrate_geodesic
from .pipeline import PipelineSettings, ray_system, run_penrose
from .scenario import TOLERANCE_KEYS, Scenario, check_model_dimensions, load_scenario
from .spacetime import AxiomSampler, validate_axioms
from .submanifold import mean_curvature, null_normals
from .spacetime import metric_matrix
from .variational import check_focal_bound, find_focal_points

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _dump(obj, out, name):
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, name)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _points(sc: Scenario, section: str):
    spec = sc.data.get(section, {})
    if "points" in spec:
        return [np.array(p, dtype=float) for p in spec["points"]]
    pid = spec.get("patch") or sc.data.get("penrose", {}).get("patch")
    if pid is None and sc.data.get("patches"):
        pid = sorted(sc.data["patches"])[0]
    if pid is not None:
        p = sc.patch(pid)
        return [p.point(u) for u in p.grid]
    rays = sc.data.get("rays", [])
    if rays:
        return [np.array(r["x"], dtype=float) for r in rays]
    raise GeometryToolkitError(f"scenario gives no sample points for {section}")


def _settings(sc: Scenario, args) -> PipelineSettings:
    tol = sc.tolerances
    spec = sc.data.get("penrose", {})
    kw = dict(budget=spec.get("budget", 10.0), normals=tuple(spec.get("normals", ("plus", "minus"))),
              max_rays=spec.get("max_rays"), workers=spec.get("workers", 1), seed=sc.seed,
              eps_trap=tol["eps_trap"], eps_ric=tol["eps_ric"], eps_focal=tol["eps_focal"],
              tol=sc.geodesic_tolerances())
    for key in ("vectors_per_point", "ricci_rays_per_point"):
        if key in spec:
            kw[key] = spec[key]
    if getattr(args, "workers", None):
        kw["workers"] = args.workers
    if getattr(args, "budget", None):
        kw["budget"] = args.budget
    return PipelineSettings(**kw)


def cmd_validate(sc, model, args):
    pts = _points(sc, "validation")
    vpp = sc.data.get("validation", {}).get("vectors_per_point", 20)
    rep = validate_axioms(model, AxiomSampler(tuple(tuple(map(float, p)) for p in pts), vpp, sc.seed))
    path = _dump(rep.to_dict(), args.out, "validation.json")
    print(f"validation {'passed' if rep.passed else 'FAILED: ' + ', '.join(rep.failed())} -> {path}")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_geodesic(sc, model, args):
    rays = sc.data.get("rays", [])
    if args.ray:
        rays = [r for r in rays if r["id"] == args.ray]
        if not rays:
            raise GeometryToolkitError(f"no ray with id {args.ray!r}")
    if not rays:
        raise GeometryToolkitError("scenario has no rays")
    tol = sc.geodesic_tolerances()
    code = EXIT_PASS
    for ray in rays:
        T = ray.get("T", 10.0)
        if ray.get("probe"):
            res = completeness_probe(model, ray["x"], ray["v"], T, tol=tol)
            path = res.path
            rec = {"id": ray["id"], "probe": res.to_dict(), "geodesic": path.termination_record()}
        else:
            path = integrate_geodesic(model, ray["x"], ray["v"], T, tol)
            rec = {"id": ray["id"], "geodesic": path.termination_record()}
            if path.termination != "reached-T":
                code = max(code, EXIT_FAIL)
        os.makedirs(args.out, exist_ok=True)
        path.write_csv(os.path.join(args.out, f"geodesic_{ray['id']}.csv"), ricci=args.ricci)
        out = _dump(rec, args.out, f"geodesic_{ray['id']}.json")
        summary = rec.get("probe", {}).get("kind") or path.termination
        print(f"ray {ray['id']}: {summary}, t_end = {path.t_end:.12g} -> {out}")
    return code


def _ray_setup(sc, model, args):
    spec = dict(sc.data.get("jacobi", {}))
    pid = args.patch or spec.get("patch")
    if pid is None:
        raise GeometryToolkitError("jacobi/focal need a patch (scenario 'jacobi' block or --patch)")
    patch = sc.patch(pid)
    idx = args.point if args.point is not None else spec.get("point", 0)
    if not 0 <= idx < len(patch.grid):
        raise GeometryToolkitError(f"point index {idx} outside the patch grid (size {len(patch.grid)})")
    which = args.normal or spec.get("normal", "minus")
    u = patch.grid[idx]
    pair = null_normals(model, patch, u)
    z = getattr(pair, which)
    H = mean_curvature(model, patch, u, z)
    k = float(H @ metric_matrix(model, pair.x, z) @ z)
    settings = _settings(sc, args)
    if "T" in spec:
        settings.budget = float(spec["T"])
    probe, system, T_star = ray_system(model, patch, u, z, k / patch.r, settings)
    meta = {"patch": pid, "point": idx, "u": list(u), "normal": which, "z0": z.tolist(), "k": k,
            "k_mean": k / patch.r, "probe": probe.to_dict()}
    return system, T_star, meta, settings, spec


def cmd_jacobi(sc, model, args):
    system, _, meta, _, _ = _ray_setup(sc, model, args)
    os.makedirs(args.out, exist_ok=True)
    system.write_csv(os.path.join(args.out, "jacobi.csv"))
    meta.update({"t_end": system.t_end, "status": system.status, "lagrange_drift": system.lagrange_drift(),
                 "frame_gram_drift": system.frame_gram_drift(), "S": system.init.S.tolist()})
    path = _dump(meta, args.out, "jacobi.json")
    print(f"jacobi system on [0, {system.t_end:.6g}], Lagrange drift {meta['lagrange_drift']:.2e} -> {path}")
    return EXIT_PASS


def cmd_focal(sc, model, args):
    system, T_star, meta, settings, spec = _ray_setup(sc, model, args)
    window = spec.get("window")
    rep = find_focal_points(system, window=window, eps_focal=settings.focal_bracket,
                            geodesic_id=f"{meta['patch']}-{meta['point']}-{meta['normal']}",
                            breakdown_T=T_star, breakdown_tol=settings.breakdown_tol)
    check_focal_bound(rep, meta["k_mean"], settings.eps_focal, True, breakdown_T=T_star)
    out = rep.to_dict()
    out["ray"] = meta
    path = _dump(out, args.out, "focal.json")
    print(f"focal points {[round(f.r, 12) for f in rep.focal]}, bound {rep.bound['status']} -> {path}")
    return EXIT_PASS


def cmd_trapped(sc, model, args):
    from .submanifold import trapped_test

    pid = args.patch or sc.data.get("penrose", {}).get("patch") or sorted(sc.data.get("patches", {}) or [None])[0]
    if pid is None:
        raise GeometryToolkitError("scenario has no patches")
    rep = trapped_test(model, sc.patch(pid), eps_trap=sc.tolerances["eps_trap"])
    path = _dump(rep.to_dict(), args.out, f"trapped_{pid}.json")
    print(f"patch {pid}: {'trapped' if rep.trapped else 'not trapped'} (min k = {rep.k_min:.6g}) -> {path}")
    return EXIT_PASS if rep.trapped else EXIT_FAIL


def cmd_ricci_scan(sc, model, args):
    pts = _points(sc, "ricci_scan")
    rpp = sc.data.get("ricci_scan", {}).get("rays_per_point", 8)
    rep = null_ricci_scan(model, pts, rpp, sc.seed, sc.tolerances["eps_ric"])
    path = _dump(rep.to_dict(), args.out, "null_ricci.json")
    print(f"null Ricci min {rep.minimum:.6g} over {rep.samples} samples: "
          f"{'nonnegative' if rep.passed else 'NEGATIVE'} -> {path}")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_penrose(sc, model, args):
    spec = sc.data.get("penrose")
    if not spec:
        raise GeometryToolkitError("scenario has no 'penrose' block")
    rep = run_penrose(model, sc.patch(spec["patch"]), _settings(sc, args), sc.asserted, args.out)
    print(f"verdict: {rep.verdict} -> {os.path.join(args.out, 'penrose_report.json')}")
    return rep.exit_code


COMMANDS = {"validate": cmd_validate, "geodesic": cmd_geodesic, "jacobi": cmd_jacobi, "focal": cmd_focal,
            "trapped": cmd_trapped, "ricci-scan": cmd_ricci_scan, "penrose": cmd_penrose}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="finsler-penrose", description="Lorentz-Finsler geometry toolkit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario JSON file")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    for key in TOLERANCE_KEYS:
        common.add_argument(f"--tol-{key.replace('_', '-')}", dest=f"tol_{key}",
                            type=int if key == "max_steps" else float, help=f"override tolerance {key}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "geodesic":
            p.add_argument("--ray", help="only this ray id")
            p.add_argument("--ricci", action="store_true", help="add a Ric column to the CSV")
        if name in ("jacobi", "focal", "trapped"):
            p.add_argument("--patch", help="patch id")
        if name in ("jacobi", "focal"):
            p.add_argument("--point", type=int, help="grid point index on the patch")
            p.add_argument("--normal", choices=("plus", "minus"))
        if name == "penrose":
            p.add_argument("--workers", type=int, help="worker processes for the per-ray stage")
            p.add_argument("--budget", type=float, help="affine parameter budget per ray")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        if args.seed is not None:
            sc.overrides["seed"] = args.seed
        for key in TOLERANCE_KEYS:
            val = getattr(args, f"tol_{key}")
            if val is not None:
                sc.overrides[key] = val
        model = sc.model()
        check_model_dimensions(sc, model)
        return COMMANDS[args.command](sc, model, args)
    except GeometryToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
