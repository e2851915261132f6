"""Scenario documents: strict JSON schema, unit handling, fixture access.

A scenario bundles the medium, an optional element array, source/focus
lists, and optional pulse/imaging blocks.  The schema is strict: unknown
keys anywhere are rejected, and the ``units`` block must state the length
unit explicitly (millimeters or meters; everything is converted to SI on
load).  Frequencies and times are always hertz and seconds.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import __version__
from .errors import ScenarioError
from .focusing import ElementArray, linear_array
from .goatsolve import SolverOptions
from .imaging import ImageGrid, Pulse
from .medium import (
    Constant,
    Ellipse,
    Linear,
    Medium,
    Point2,
    SampledC1,
    validate_medium,
)

_LENGTH_SCALE = {"mm": 1e-3, "m": 1.0}


@dataclass(frozen=True)
class ImagingSpec:
    grid: ImageGrid
    sample_rate: float
    scatterers: tuple[tuple[Point2, float], ...]


@dataclass(frozen=True)
class Scenario:
    medium: Medium
    sources: tuple[Point2, ...]
    foci: tuple[Point2, ...]
    array: ElementArray | None
    pulse: Pulse | None
    imaging: ImagingSpec | None
    solver: SolverOptions
    length_scale: float
    sha256: str

    @property
    def provenance(self) -> str:
        return f"goatfocus {__version__} scenario={self.sha256[:12]}"


def _require_keys(obj, required, optional, where):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise ScenarioError(f"{where}: missing keys {sorted(missing)}")


def _number(v, where):
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ScenarioError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _point(v, scale, where) -> Point2:
    if not (isinstance(v, list) and len(v) == 2):
        raise ScenarioError(f"{where}: expected [x, z]")
    return Point2(_number(v[0], where) * scale, _number(v[1], where) * scale)


def _boundary(spec, scale, domain, where):
    _require_keys(spec, {"kind"}, {"depth", "slope", "intercept", "a", "b",
                                   "center", "sign", "x", "z"}, where)
    kind = spec["kind"]
    if kind == "constant":
        _require_keys(spec, {"kind", "depth"}, set(), where)
        return Constant(_number(spec["depth"], where) * scale, domain)
    if kind == "linear":
        _require_keys(spec, {"kind", "slope", "intercept"}, set(), where)
        return Linear(_number(spec["slope"], where),
                      _number(spec["intercept"], where) * scale, domain)
    if kind == "ellipse":
        _require_keys(spec, {"kind", "a", "b", "center", "sign"}, set(), where)
        sign = {"+": +1, "-": -1}.get(spec["sign"])
        if sign is None:
            raise ScenarioError(f"{where}: sign must be '+' or '-'")
        return Ellipse(_number(spec["a"], where) * scale,
                       _number(spec["b"], where) * scale,
                       _point(spec["center"], scale, where), sign, domain)
    if kind == "sampled":
        _require_keys(spec, {"kind", "x", "z"}, set(), where)
        try:
            return SampledC1(np.asarray(spec["x"], dtype=float) * scale,
                             np.asarray(spec["z"], dtype=float) * scale, domain)
        except ValueError as exc:
            raise ScenarioError(f"{where}: {exc}") from exc
    raise ScenarioError(f"{where}: unknown boundary kind {kind!r}")


def loads(text: str | bytes) -> Scenario:
    raw = text.encode() if isinstance(text, str) else text
    sha = hashlib.sha256(raw).hexdigest()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from exc

    _require_keys(doc, {"units", "medium", "sources", "foci"},
                  {"array", "pulse", "imaging", "solver"}, "scenario")
    units = doc["units"]
    _require_keys(units, {"length"}, {"speed", "time"}, "units")
    if units.get("speed", "m/s") != "m/s" or units.get("time", "s") != "s":
        raise ScenarioError("units: only m/s speeds and second times are supported")
    scale = _LENGTH_SCALE.get(units["length"])
    if scale is None:
        raise ScenarioError(f"units: unknown length unit {units['length']!r}")

    med_spec = doc["medium"]
    _require_keys(med_spec, {"speeds", "domain", "boundaries"}, set(), "medium")
    dom_raw = med_spec["domain"]
    if not (isinstance(dom_raw, list) and len(dom_raw) == 2):
        raise ScenarioError("medium.domain: expected [x_lo, x_hi]")
    domain = (_number(dom_raw[0], "medium.domain") * scale,
              _number(dom_raw[1], "medium.domain") * scale)
    speeds = tuple(_number(c, "medium.speeds") for c in med_spec["speeds"])
    boundaries = tuple(
        _boundary(b, scale, domain, f"medium.boundaries[{i}]")
        for i, b in enumerate(med_spec["boundaries"]))
    medium = Medium(speeds, boundaries, domain)
    report = validate_medium(medium)
    if not report.ok:
        raise ScenarioError("invalid medium: " + "; ".join(report.violations))

    sources = tuple(_point(p, scale, f"sources[{i}]")
                    for i, p in enumerate(doc["sources"]))
    foci = tuple(_point(p, scale, f"foci[{i}]")
                 for i, p in enumerate(doc["foci"]))

    array = None
    if "array" in doc:
        spec = doc["array"]
        _require_keys(spec, {"num_elements", "pitch"}, {"center_x", "z"}, "array")
        n = spec["num_elements"]
        if not isinstance(n, int) or n < 2:
            raise ScenarioError("array.num_elements: need an integer >= 2")
        array = linear_array(n, _number(spec["pitch"], "array") * scale,
                             _number(spec.get("center_x", 0.0), "array") * scale,
                             _number(spec.get("z", 0.0), "array") * scale)

    pulse = None
    if "pulse" in doc:
        spec = doc["pulse"]
        _require_keys(spec, {"center_frequency_hz"}, {"fractional_bandwidth"},
                      "pulse")
        try:
            pulse = Pulse(_number(spec["center_frequency_hz"], "pulse"),
                          _number(spec.get("fractional_bandwidth", 0.6), "pulse"))
        except ValueError as exc:
            raise ScenarioError(f"pulse: {exc}") from exc

    imaging = None
    if "imaging" in doc:
        spec = doc["imaging"]
        _require_keys(spec, {"grid", "sample_rate_hz", "scatterers"}, set(),
                      "imaging")
        g = spec["grid"]
        _require_keys(g, {"x", "z", "spacing"}, set(), "imaging.grid")
        grid = ImageGrid.from_extent(
            _number(g["x"][0], "grid") * scale, _number(g["x"][1], "grid") * scale,
            _number(g["z"][0], "grid") * scale, _number(g["z"][1], "grid") * scale,
            _number(g["spacing"], "grid") * scale)
        scatterers = []
        for i, s in enumerate(spec["scatterers"]):
            if not (isinstance(s, list) and len(s) == 3):
                raise ScenarioError(f"imaging.scatterers[{i}]: expected [x, z, amp]")
            scatterers.append((_point(s[:2], scale, "scatterer"),
                               _number(s[2], "scatterer")))
        imaging = ImagingSpec(grid, _number(spec["sample_rate_hz"], "imaging"),
                              tuple(scatterers))

    solver = SolverOptions()
    if "solver" in doc:
        spec = doc["solver"]
        _require_keys(spec, set(), {"tol_residual", "max_newton_iters",
                                    "max_backtracks", "bisection_fallback"},
                      "solver")
        try:
            solver = SolverOptions(
                tol_residual=float(spec.get("tol_residual", 1e-12)),
                max_newton_iters=int(spec.get("max_newton_iters", 25)),
                max_backtracks=int(spec.get("max_backtracks", 8)),
                bisection_fallback=bool(spec.get("bisection_fallback", True)))
        except ValueError as exc:
            raise ScenarioError(f"solver: {exc}") from exc

    return Scenario(medium, sources, foci, array, pulse, imaging, solver,
                    scale, sha)


def load(path) -> Scenario:
    """Load a scenario from a file path or a shipped fixture name."""
    name = str(path)
    if "/" not in name and "\\" not in name and not name.endswith(".json"):
        res = resources.files("goatfocus").joinpath(f"fixtures/{name}.json")
        if res.is_file():
            return loads(res.read_bytes())
        raise ScenarioError(f"no such fixture: {name!r} "
                            f"(available: {', '.join(fixture_names())})")
    try:
        with open(path, "rb") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc


def fixture_names() -> list[str]:
    root = resources.files("goatfocus").joinpath("fixtures")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))
