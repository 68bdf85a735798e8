"""Problem documents (JSON) and the built-in convergence families.

A problem document mirrors ProblemSpec plus an optional ``config`` block
mirroring SolverConfig; see the README for the schema.
"""
import json
from dataclasses import fields
from importlib import resources

import numpy as np

from .conformal import BoundaryData
from .errors import ParameterError
from .grid import BoxGrid, RadialGrid
from .references import reference_from_dict
from .solver import ProblemSpec, SolverConfig, reference_field, with_manufactured_rhs

BUNDLED = ("hemisphere_radial.json", "caseB_ball.json", "box_manufactured.json")


def bundled_path(name):
    return resources.files("sigmak").joinpath("data", name)


def load_document(path):
    """Read a problem document; bare bundled names resolve to package data."""
    try:
        if str(path) in BUNDLED:
            text = bundled_path(str(path)).read_text()
        else:
            with open(path) as fh:
                text = fh.read()
    except OSError as exc:
        raise ParameterError(f"cannot read {path}: {exc.strerror}", path=str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"malformed JSON in {path}: {exc}", path=str(path)) from exc
    if not isinstance(doc, dict):
        raise ParameterError("problem document must be a JSON object", path=str(path))
    return doc


def _require(doc, key):
    if key not in doc:
        raise ParameterError(f"problem document is missing {key!r}")
    return doc[key]


def grid_from_dict(d, n):
    kind = _require(d, "type")
    try:
        if kind == "radial":
            return RadialGrid(float(_require(d, "R")), int(_require(d, "points")), n)
        if kind == "box":
            ext = d.get("extents")
            return BoxGrid(n, tuple(np.broadcast_to(_require(d, "points"), (n,)).tolist()),
                           None if ext is None else tuple(map(tuple, ext)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"bad grid block: {exc}") from exc
    raise ParameterError(f"unknown grid type {kind!r}")


def config_from_dict(d):
    d = dict(d or {})
    known = {f.name for f in fields(SolverConfig)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ParameterError(f"unknown solver config keys {unknown}")
    if "t_schedule" in d:
        d["t_schedule"] = tuple(d["t_schedule"])
    return SolverConfig(**d)


def problem_from_dict(doc):
    """(ProblemSpec, SolverConfig, regression bound or None) from a document."""
    try:
        n, k = int(_require(doc, "n")), int(_require(doc, "k"))
    except (TypeError, ValueError) as exc:
        raise ParameterError("n and k must be integers") from exc
    grid = grid_from_dict(_require(doc, "grid"), n)
    b = doc.get("boundary", {})
    mu = b.get("mu", 1.0 / grid.R if grid.kind == "radial" and doc.get("frame") is None else 0.0)
    bd = BoundaryData(float(mu), float(b.get("mu_hat", 0.0)))
    ref = doc.get("reference")
    ref = None if ref is None else reference_from_dict(ref, n)
    frame = doc.get("frame")
    if frame is not None:
        if frame != "reference" or ref is None:
            raise ParameterError('frame must be "reference" and needs a reference solution')
        frame = reference_field(ref, grid)
    f = doc.get("f", 1.0)
    manufactured = f == "manufactured"
    if manufactured:
        if ref is None:
            raise ParameterError("a manufactured right side needs a reference solution")
        f = 1.0
    A_g = doc.get("A_g")
    spec = ProblemSpec(n, k, grid, bd, A_g=A_g, f=f, frame=frame, reference=ref)
    if manufactured:
        spec = with_manufactured_rhs(spec, float(doc.get("manufacture_t", 1.0)))
    return spec, config_from_dict(doc.get("config")), doc.get("regression_bound")


# -- convergence families -----------------------------------------------------

FAMILIES = {
    "hemisphere-radial": {
        "n": 3, "k": 2, "grid": {"type": "radial", "R": 0.5}, "base": 257,
        "boundary": {"mu": 0.0, "mu_hat": 0.0}, "reference": {"name": "hemisphere"},
        "frame": "reference", "f": 1.0},
    "caseB-radial": {
        "n": 3, "k": 2, "grid": {"type": "radial", "R": 1.0}, "base": 257,
        "boundary": {"mu": 1.0, "mu_hat": 1.0},
        "reference": {"name": "radial_poly", "b": 0.3, "c": 0.05, "R": 1.0, "mu_hat": 1.0},
        "f": "manufactured"},
    "box-manufactured": {
        "n": 3, "k": 2, "grid": {"type": "box"}, "base": 17,
        "boundary": {"mu": 0.0, "mu_hat": 0.0}, "reference": {"name": "box_poly"},
        "frame": "reference", "f": "manufactured"},
}


def family_document(family, level, base=None):
    """Problem document for refinement ``level`` (0 = coarsest) of a family."""
    if family not in FAMILIES:
        raise ParameterError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}")
    doc = json.loads(json.dumps(FAMILIES[family]))
    default = doc.pop("base")
    doc["grid"]["points"] = ((base or default) - 1) * 2**level + 1
    return doc


def observed_orders(hs, errors):
    hs, errors = np.asarray(hs, dtype=float), np.asarray(errors, dtype=float)
    return np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])
