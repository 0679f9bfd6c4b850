"""INI configuration: parsing, overrides and construction of model objects.

Sections and keys (all optional unless noted):

    [species]     masses (required, comma separated), densities
    [kernel]      gamma, cphi (scalar, or rows "a, b; c, d"), angular (constant | sincos | tabulated),
                  angular_c, angular_table (CSV file with columns u, b)
    [weight]      kind (polynomial | exponential), k, kappa1, kappa2
    [grid]        n, v_max, sphere_degree, method (auto | direct | fourier), interp (wquad | trilinear)
    [simulation]  mode, integrator, dt, t_end, monitor_every, frequency, fit_window, initial
                  (maxwellian | bimaxwellian | perturbation), drift, amplitude, delta, projection,
                  nonlinear, moment_correction
    [audit]       delta, deltas, samples, beta, kappa2_prime, slack
    [majorant]    pairs, radii, mc_samples
    [nu]          points, speed_max
    [afunc]       points ("a1, a2, a3, a4; ...")
    [split]       samples, deltas
"""

from __future__ import annotations

import configparser
import csv
import math
from pathlib import Path

import numpy as np

from .collision import SphereRule
from .equilibrium import VelocityGrid
from .mixture import AngularPart, KernelModel, Mixture, Weight

DEFAULTS = {
    "kernel": {"gamma": "1.0", "cphi": "1.0", "angular": "constant", "angular_c": "1.0"},
    "weight": {"kind": "polynomial", "k": "7", "kappa1": "1.0", "kappa2": "1.0"},
    "grid": {"n": "16", "sphere_degree": "17", "method": "auto", "interp": "wquad"},
    "simulation": {"mode": "full-F", "integrator": "exponential-euler", "dt": "0.25", "t_end": "5.0",
                   "monitor_every": "1", "frequency": "uniform", "fit_window": "0.6",
                   "initial": "bimaxwellian", "drift": "0.4, 0, 0", "amplitude": "1e-3",
                   "delta": "0.05", "projection": "nullspace", "nonlinear": "true",
                   "moment_correction": "false"},
    "audit": {"delta": "0.05", "deltas": "0.2, 0.1, 0.05", "samples": "50", "beta": "2.0",
              "slack": "0.15"},
    "majorant": {"pairs": "100", "radii": "0.5, 1, 2", "mc_samples": "200000"},
    "nu": {"points": "20", "speed_max": "5.0"},
    "afunc": {"points": "4, 3, 2, 1; 10, 1, 1, 1"},
    "split": {"samples": "20", "deltas": "0.2, 0.1"},
}


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


def floats(text: str) -> list:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def matrix(text: str) -> list:
    return [floats(row) for row in text.split(";") if row.strip()]


def load(path=None, overrides=()) -> configparser.ConfigParser:
    """Read an INI file (if given), fill defaults and apply ``section.key=value`` overrides."""
    cp = configparser.ConfigParser()
    cp.read_dict(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            with open(p, encoding="utf-8") as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        section, name = key.strip().split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, name.strip(), value.strip())
    return cp


def as_dict(cp: configparser.ConfigParser) -> dict:
    return {s: dict(cp.items(s)) for s in cp.sections()}


def build_mixture(cp) -> Mixture:
    if not cp.has_option("species", "masses"):
        raise ConfigError("[species] masses is required")
    masses = floats(cp.get("species", "masses"))
    dens = floats(cp.get("species", "densities")) if cp.has_option("species", "densities") else None
    return Mixture(masses, dens)


def _angular(cp) -> AngularPart:
    kind = cp.get("kernel", "angular")
    c = cp.getfloat("kernel", "angular_c")
    if kind == "constant":
        return AngularPart.constant(c)
    if kind == "sincos":
        return AngularPart.sincos(c)
    if kind == "tabulated":
        path = cp.get("kernel", "angular_table", fallback=None)
        if not path:
            raise ConfigError("angular = tabulated needs [kernel] angular_table")
        with open(path, encoding="utf-8") as fh:
            rows = [r for r in csv.DictReader(fh)]
        return AngularPart.tabulated([float(r["u"]) for r in rows], [float(r["b"]) for r in rows])
    raise ConfigError(f"unknown angular kind {kind!r}")


def build_kernel(cp, n_species: int) -> KernelModel:
    gamma = cp.getfloat("kernel", "gamma")
    rows = matrix(cp.get("kernel", "cphi"))
    if len(rows) == 1 and len(rows[0]) == 1:
        cphi = np.full((n_species, n_species), rows[0][0])
    else:
        cphi = np.asarray(rows, dtype=float)
        if cphi.shape != (n_species, n_species):
            raise ConfigError(f"cphi must be {n_species}x{n_species}, got {cphi.shape}")
    b = _angular(cp)
    return KernelModel(gamma, cphi, [[b] * n_species for _ in range(n_species)])


def build_weight(cp) -> Weight:
    kind = cp.get("weight", "kind")
    if kind == "polynomial":
        return Weight.polynomial(cp.getfloat("weight", "k"))
    if kind == "exponential":
        return Weight.exponential(cp.getfloat("weight", "kappa1"), cp.getfloat("weight", "kappa2"))
    raise ConfigError(f"unknown weight kind {kind!r}")


def build_grid(cp, mixture: Mixture) -> VelocityGrid:
    v_max = cp.getfloat("grid", "v_max") if cp.has_option("grid", "v_max") else None
    return VelocityGrid.for_mixture(mixture, cp.getint("grid", "n"), v_max)


def build_sphere(cp) -> SphereRule:
    return SphereRule.product(cp.getint("grid", "sphere_degree"))


def getbool(cp, section, key) -> bool:
    return cp.getboolean(section, key)


def positive(name: str, value: float) -> float:
    if not (value > 0 and math.isfinite(value)):
        raise ConfigError(f"{name} must be positive, got {value}")
    return value
