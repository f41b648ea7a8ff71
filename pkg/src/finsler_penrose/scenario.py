"""Scenario files: JSON with a versioned schema, resolved into models and patches."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from . import models, submanifold
from .errors import GeometryToolkitError, InputError, ScenarioError
from .geodesic import GeodesicTolerances

TOLERANCE_KEYS = ("rtol", "atol", "eps_L", "eps_cone", "eps_deg", "eps_trap", "eps_ric", "eps_focal",
                  "h_max", "max_steps")
DEFAULT_TOLERANCES = {"rtol": 1e-10, "atol": 1e-12, "eps_L": 1e-8, "eps_cone": 1e-9, "eps_deg": 1e-10,
                      "eps_trap": 1e-10, "eps_ric": 1e-8, "eps_focal": 1e-4}


def load_schema() -> dict:
    with resources.files("finsler_penrose").joinpath("schemas/scenario.schema.json").open() as fh:
        return json.load(fh)


def _line_of(text: str, path) -> int | None:
    """Best-effort line number of a JSON path (keys searched in document order)."""
    pos = 0
    found = None
    for part in path:
        if isinstance(part, str):
            m = re.compile(r'"%s"\s*:' % re.escape(part)).search(text, pos)
            if m is None:
                break
            pos = m.end()
            found = pos
        else:
            # skip to the part-th element of the array that starts after pos
            depth, idx, i = 0, -1, text.find("[", pos)
            if i < 0:
                break
            j = i + 1
            idx = 0
            while j < len(text) and idx < part:
                c = text[j]
                if c in "[{":
                    depth += 1
                elif c in "]}":
                    depth -= 1
                elif c == "," and depth == 0:
                    idx += 1
                j += 1
            while j < len(text) and text[j].isspace():
                j += 1
            pos = j
            found = pos
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


@dataclass
class Scenario:
    data: dict
    source: str = "<memory>"
    overrides: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return int(self.overrides.get("seed", self.data["seed"]))

    @property
    def tolerances(self) -> dict:
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.data.get("tolerances", {}))
        tol.update({k: v for k, v in self.overrides.items() if k in TOLERANCE_KEYS})
        for k, v in tol.items():
            if not v > 0:
                raise ScenarioError(f"tolerance {k} must be positive", path=f"tolerances/{k}")
        return tol

    def geodesic_tolerances(self) -> GeodesicTolerances:
        t = self.tolerances
        kw = {k: t[k] for k in ("rtol", "atol", "eps_L", "h_max", "max_steps") if k in t}
        if "max_steps" in kw:
            kw["max_steps"] = int(kw["max_steps"])
        return GeodesicTolerances(**kw)

    @property
    def asserted(self) -> dict:
        return dict(self.data.get("asserted", {}))

    def model(self):
        spec = self.data["model"]
        tol = self.tolerances
        try:
            if "builtin" in spec:
                m = models.builtin(spec["builtin"], **spec.get("params", {}))
                if spec.get("sign_flipped"):
                    m = models.sign_flipped(m)
            else:
                m = models.expression_model(spec["expression"], spec["dim"], spec.get("params"), spec.get("tau"),
                                            spec.get("time_covector"), spec.get("smooth"), spec.get("in_chart"),
                                            spec.get("name", "expression"), spec.get("reversible", False))
        except InputError as exc:
            raise ScenarioError(str(exc), line=self._line(["model"]), path="model") from None
        from dataclasses import replace

        return replace(m, eps_cone=tol["eps_cone"], eps_deg=tol["eps_deg"])

    def patch(self, pid: str) -> submanifold.SurfacePatch:
        patches = self.data.get("patches", {})
        if pid not in patches:
            raise ScenarioError(f"unknown patch {pid!r}; defined: {sorted(patches)}", path=f"patches/{pid}")
        spec = dict(patches[pid])
        kind = spec.pop("type")
        try:
            if kind == "sphere":
                p = submanifold.sphere_patch(spec.get("center", (0.0, 0.0, 0.0)), spec.get("radius", 1.0),
                                             spec.get("t0", 0.0), tuple(spec.get("grid", (4, 8))))
            elif kind == "circle":
                p = submanifold.circle_patch(spec.get("center", (0.0, 0.0)), spec.get("radius", 1.0),
                                             spec.get("t0", 0.0), int(spec.get("grid", 8)))
            elif kind == "plane":
                p = submanifold.plane_patch(spec.get("n", 4), spec.get("t0", 0.0), spec.get("offset", 0.0),
                                            tuple(spec.get("grid", (3, 3))), spec.get("extent", 1.0))
            elif kind == "torus":
                p = submanifold.torus_patch(spec.get("R", 2.0), spec.get("a", 0.5), spec.get("t0", 0.0),
                                            spec.get("center", (0.0, 0.0, 0.0)), tuple(spec.get("grid", (4, 6))))
            else:
                if "components" not in spec or "points" not in spec:
                    raise InputError("expression patch needs 'components' and 'points'")
                p = submanifold.expression_patch(spec["components"], len(spec["components"]), spec["points"],
                                                 spec.get("params"), spec.get("closed", False), pid)
        except (InputError, TypeError, ValueError) as exc:
            raise ScenarioError(f"patch {pid!r}: {exc}", line=self._line(["patches", pid]),
                                path=f"patches/{pid}") from None
        return p

    def _line(self, path):
        text = self.data.get("__text__")
        return _line_of(text, path) if text else None


def parse_scenario(text: str, source: str = "<memory>") -> Scenario:
    """Parse and schema-validate; errors carry the line of the offending entry."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        raise ScenarioError(f"schema violation: {err.message}", line=_line_of(text, path),
                            path="/".join(str(p) for p in path) or "<root>")
    _check_references(data, text)
    data["__text__"] = text
    return Scenario(data, source)


def _check_references(data, text):
    patches = data.get("patches", {})
    for section in ("validation", "ricci_scan", "jacobi", "penrose"):
        pid = data.get(section, {}).get("patch")
        if pid is not None and pid not in patches:
            raise ScenarioError(f"{section} refers to unknown patch {pid!r}",
                                line=_line_of(text, [section, "patch"]), path=f"{section}/patch")
    seen = set()
    for i, ray in enumerate(data.get("rays", [])):
        if ray["id"] in seen:
            raise ScenarioError(f"duplicate ray id {ray['id']!r}", line=_line_of(text, ["rays", i]), path=f"rays/{i}")
        seen.add(ray["id"])


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    sc = parse_scenario(text, path)
    sc.source = path
    return sc


def check_model_dimensions(sc: Scenario, model) -> None:
    """Every referenced point, ray and patch must live in the model's dimension."""
    n = model.dim
    for i, ray in enumerate(sc.data.get("rays", [])):
        for key in ("x", "v"):
            if len(ray[key]) != n:
                raise ScenarioError(f"ray {ray['id']!r}: {key} must have {n} components",
                                    line=sc._line(["rays", i]), path=f"rays/{i}/{key}")
    for section in ("validation", "ricci_scan"):
        for j, p in enumerate(sc.data.get(section, {}).get("points", [])):
            if len(p) != n:
                raise ScenarioError(f"{section} point {j} must have {n} components",
                                    line=sc._line([section, "points"]), path=f"{section}/points/{j}")
    for pid in sc.data.get("patches", {}):
        try:
            p = sc.patch(pid)
        except GeometryToolkitError:
            raise
        if p.n != n:
            raise ScenarioError(f"patch {pid!r} lives in dimension {p.n}, model has {n}",
                                line=sc._line(["patches", pid]), path=f"patches/{pid}")
