"""Penrose pipeline: axioms, trapped patch, null Ricci, focal points and completeness per ray."""

from __future__ import annotations

import json
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .connection import jacobi_operator, null_ricci_scan, ricci_scalar
from .errors import GeometryToolkitError
from .geodesic import GeodesicTolerances, completeness_probe
from .spacetime import AxiomSampler, SpacetimeModel, validate_axioms
from .submanifold import SurfacePatch, trapped_test
from .variational import check_focal_bound, find_focal_points, p_jacobi_init, solve_jacobi

VERDICT_WITNESSED = "hypotheses-supported + incompleteness-witnessed"
VERDICT_NO_WITNESS = "hypotheses-supported + no-witness-in-budget"


@dataclass
class PipelineSettings:
    budget: float = 10.0
    normals: tuple = ("plus", "minus")
    max_rays: Optional[int] = None  # per normal, taken in grid order
    vectors_per_point: int = 12
    ricci_rays_per_point: int = 8
    ricci_samples_along_ray: int = 12
    eps_trap: float = 1e-10
    eps_ric: float = 1e-8
    eps_focal: float = 1e-4  # slack in the bound r <= 1/k
    focal_bracket: float = 1e-8
    jacobi_fraction: float = 0.9
    breakdown_tol: float = 1e-2
    workers: int = 1
    seed: int = 0
    tol: GeodesicTolerances = field(default_factory=GeodesicTolerances)


def penrose_verdict(axioms_passed: bool, trapped: bool, ricci_passed: bool, rays: list) -> str:
    """Pure function of the component reports."""
    if not axioms_passed:
        return "hypothesis-failed(axioms)"
    if not trapped:
        return "hypothesis-failed(trapped)"
    if not ricci_passed:
        return "hypothesis-failed(null-ricci)"
    if any(r.get("probe", {}).get("kind") == "incomplete" for r in rays):
        return VERDICT_WITNESSED
    return VERDICT_NO_WITNESS


@dataclass
class PenroseReport:
    model: str
    patch: str
    validation: dict
    trapped: dict
    ricci: dict
    rays: list
    verdict: str
    asserted: dict
    settings: dict

    @property
    def exit_code(self) -> int:
        return 0 if self.verdict.startswith("hypotheses-supported") else 1

    def to_dict(self):
        return {"schema_version": 1, "model": self.model, "patch": self.patch, "verdict": self.verdict,
                "validation": self.validation, "trapped": self.trapped, "null_ricci": self.ricci,
                "rays": self.rays, "settings": self.settings,
                "asserted_global_hypotheses": {"status": "asserted, not verified", "values": self.asserted}}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _ricci_along(model, path, t_max, samples):
    """(Ric, |Jop|) at evenly spaced parameters; Ric is judged relative to |Jop|."""
    out = []
    for t in np.linspace(0.0, t_max, samples):
        x, v = path(t)
        try:
            ric = ricci_scalar(model, x, v, rng=np.random.default_rng(0))
            out.append((ric, float(np.linalg.norm(jacobi_operator(model, x, v).matrix))))
        except GeometryToolkitError:
            continue
    return out


def ricci_nonnegative(values, eps_ric) -> bool:
    return bool(values) and all(r >= -eps_ric * max(1.0, k) for r, k in values)


def ray_system(model: SpacetimeModel, patch: SurfacePatch, u, z, k_mean: float, settings: PipelineSettings):
    """Completeness probe plus P-Jacobi system along the null normal z at u.

    The Jacobi solve stops at min(path end, jacobi_fraction * T*, 1.05 / k)
    so that the focal search sees [0, 1/k] without resolving the final
    approach to a curvature blowup.
    """
    probe = completeness_probe(model, np.array(patch.point(u)), z, settings.budget, tol=settings.tol)
    T_star = probe.T_star if probe.kind == "incomplete" else None
    t_jac = probe.path.t_end
    if T_star is not None:
        t_jac = min(t_jac, settings.jacobi_fraction * T_star)
    if k_mean > 0:
        t_jac = min(t_jac, 1.05 / k_mean + 10 * settings.eps_focal)
    init = p_jacobi_init(model, patch, u, z)
    system = solve_jacobi(model, probe.path, init, tol=settings.tol, t_end=t_jac)
    return probe, system, T_star


def run_ray(model: SpacetimeModel, patch: SurfacePatch, point: dict, which: str, settings: PipelineSettings,
            ray_id: str) -> dict:
    """Probe, Jacobi system, focal search and bound check for one orthogonal null ray."""
    u = point["u"]
    z = np.array(point[f"z_{which}"])
    k_mean = point[f"k_{which}"] / patch.r
    rec = {"id": ray_id, "u": list(u), "normal": which, "x0": point["x"], "z0": z.tolist(),
           "k": point[f"k_{which}"], "k_mean": k_mean}
    try:
        probe, system, T_star = ray_system(model, patch, u, z, k_mean, settings)
        rec["probe"] = probe.to_dict()
        ric = _ricci_along(model, probe.path, system.t_end, settings.ricci_samples_along_ray)
        ricci_ok = ricci_nonnegative(ric, settings.eps_ric)
        rec["ricci_along"] = {"min": min(r for r, _ in ric) if ric else None, "samples": len(ric),
                              "nonnegative": ricci_ok}
        rep = find_focal_points(system, eps_focal=settings.focal_bracket, geodesic_id=ray_id,
                                breakdown_T=T_star, breakdown_tol=settings.breakdown_tol)
        check_focal_bound(rep, k_mean, settings.eps_focal, ricci_ok, breakdown_T=T_star)
        rec["focal"] = rep.to_dict()
        rec["lagrange_drift"] = system.lagrange_drift()
    except GeometryToolkitError as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


_CTX: dict = {}


def _worker(i):
    c = _CTX
    return run_ray(c["model"], c["patch"], *c["tasks"][i], c["settings"], c["ids"][i])


def run_penrose(model: SpacetimeModel, patch: SurfacePatch, settings: PipelineSettings | None = None,
                asserted: dict | None = None, out_dir: str | None = None) -> PenroseReport:
    """validate -> trapped -> null Ricci scan -> both null congruences -> verdict.

    Rays are independent and may run in a fork-based worker pool; results
    are merged in index order so reports do not depend on scheduling.
    """
    s = settings or PipelineSettings()
    grid_x = [np.asarray(patch.point(u)) for u in patch.grid]
    validation = validate_axioms(model, AxiomSampler(tuple(tuple(x) for x in grid_x), s.vectors_per_point, s.seed))
    trapped = trapped_test(model, patch, eps_trap=s.eps_trap)
    ricci = null_ricci_scan(model, grid_x, s.ricci_rays_per_point, s.seed, s.eps_ric)
    tpd = trapped.to_dict()
    tasks, ids = [], []
    for which in s.normals:
        pts = tpd["points"] if s.max_rays is None else tpd["points"][: s.max_rays]
        for j, p in enumerate(pts):
            tasks.append((p, which))
            ids.append(f"{which}-{j:03d}")
    rays = []
    if validation.passed:
        if s.workers > 1 and len(tasks) > 1:
            _CTX.update(model=model, patch=patch, tasks=tasks, settings=s, ids=ids)
            try:
                with ProcessPoolExecutor(max_workers=s.workers, mp_context=mp.get_context("fork")) as ex:
                    rays = list(ex.map(_worker, range(len(tasks))))
            finally:
                _CTX.clear()
        else:
            rays = [run_ray(model, patch, p, w, s, i) for (p, w), i in zip(tasks, ids)]
    ricci_ok = ricci.passed and all((r.get("ricci_along") or {}).get("nonnegative", True) for r in rays)
    verdict = penrose_verdict(validation.passed, trapped.trapped, ricci_ok, rays)
    settings_rec = {"budget": s.budget, "normals": list(s.normals), "max_rays": s.max_rays,
                    "eps_trap": s.eps_trap, "eps_ric": s.eps_ric, "eps_focal": s.eps_focal, "seed": s.seed,
                    "rtol": s.tol.rtol, "atol": s.tol.atol}
    report = PenroseReport(model.name, patch.name, validation.to_dict(), tpd, ricci.to_dict(), rays, verdict,
                           dict(asserted or {}), settings_rec)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for name, obj in (("validation.json", report.validation), ("trapped.json", report.trapped),
                          ("null_ricci.json", report.ricci)):
            with open(os.path.join(out_dir, name), "w") as fh:
                json.dump(obj, fh, indent=2, sort_keys=True)
        report.write_json(os.path.join(out_dir, "penrose_report.json"))
    return report
