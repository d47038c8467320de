"""Scenario files: YAML documents validated against a bundled JSON schema."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .dirac_solver import Grid2D
from .errors import ConfigurationError
from .mass_geometry import MassModel

DEFAULTS = {
    "grid": {"N1": "auto", "N2": "auto"},
    "chart": {"x0": [0.0, 0.0], "ds": 1e-3, "tube_cap": 1.5, "delta0": 1.0},
    "solver": {"dt_over_eps": 0.1, "snapshot_every": 0.1, "hf_radii": [1.0, 2.0],
               "box_halfwidth": 0.5, "track_box": True},
    "extraction": {"n_modes": 8, "s_step": 0.05, "sigma_window": [-3.0, 3.0], "sigma_step": 0.05,
                   "report_modes": [0, 1]},
    "transport": {"dt": 1e-3, "bandwidth": [0.1, 0.1], "threshold": 1e-6, "jitter": False},
    "output": {"dir": "out", "figures": True},
}


def load_schema():
    text = resources.files("diracedge.schema").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def bundled_scenarios():
    d = resources.files("diracedge.scenarios")
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".yaml"))


def bundled_path(name):
    return Path(str(resources.files("diracedge.scenarios").joinpath(f"{name}.yaml")))


def _path_str(err):
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate_document(doc):
    v = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(v.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        msg = "; ".join(f"{_path_str(e)}: {e.message}" for e in errors)
        raise ConfigurationError(f"invalid scenario: {msg}")


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _auto_n(L, eps):
    n = 1 << int(np.ceil(np.log2(L / (np.sqrt(eps) / 4))))
    return max(n, 16)


@dataclass
class Scenario:
    doc: dict          # fully resolved document (defaults merged)
    source: str | None = None

    @property
    def name(self):
        return self.doc["name"]

    @property
    def eps_list(self):
        e = self.doc["eps"]
        return [float(v) for v in (e if isinstance(e, list) else [e])]

    def model(self):
        return MassModel.from_dict(self.doc["mass"])

    def grid(self, eps):
        m = self.model()
        g = self.doc["grid"]
        n1 = _auto_n(m.L1, eps) if g["N1"] == "auto" else int(g["N1"])
        n2 = _auto_n(m.L2, eps) if g["N2"] == "auto" else int(g["N2"])
        return Grid2D(m.L1, m.L2, n1, n2)

    def dt(self, eps):
        return self.doc["solver"]["dt_over_eps"] * eps

    def check(self):
        """Cross-field constraints the schema cannot express."""
        try:
            model = self.model()
        except ConfigurationError as exc:
            raise ConfigurationError(f"mass: {exc}") from None
        init = self.doc["initial"]
        if init["type"] == "packet" and "x0" not in init:
            raise ConfigurationError("initial/x0: required for packet initial data")
        if init["type"] == "mode_superposition" and not init.get("modes"):
            raise ConfigurationError("initial/modes: at least one mode required")
        nm = self.doc["extraction"]["n_modes"]
        for n in self.doc["extraction"]["report_modes"]:
            if abs(n) > nm:
                raise ConfigurationError(f"extraction/report_modes: |{n}| exceeds n_modes = {nm}")
        if self.doc["solver"]["dt_over_eps"] > 0.25:
            raise ConfigurationError("solver/dt_over_eps: dt <= eps/4 required")
        for eps in self.eps_list:
            g = self.grid(eps)
            if not g.resolves(eps):
                raise ConfigurationError(
                    f"grid: dx = {max(g.dx1, g.dx2):.4g} exceeds sqrt(eps)/4 = {np.sqrt(eps) / 4:.4g} at eps = {eps}")
            se = self.doc["solver"]["snapshot_every"]
            if abs(se / self.dt(eps) - round(se / self.dt(eps))) > 1e-6:
                raise ConfigurationError("solver/snapshot_every: must be a multiple of dt")
        return model

    def to_dict(self):
        return copy.deepcopy(self.doc)


def scenario_from_dict(doc, eps_override=None, source=None):
    if not isinstance(doc, dict):
        raise ConfigurationError("scenario must be a mapping")
    validate_document(doc)
    full = _merge(DEFAULTS, doc)
    if eps_override is not None:
        full["eps"] = [float(eps_override)]
    scn = Scenario(full, source)
    scn.check()
    return scn


def load_scenario(path, eps_override=None):
    path = Path(path)
    if not path.exists():
        # bundled scenario name
        cand = bundled_path(str(path))
        if cand.exists():
            path = cand
        else:
            raise ConfigurationError(f"no scenario file {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return scenario_from_dict(doc, eps_override, str(path))
