"""Velocity grids, gridded distributions, Maxwellians, moments, entropy and norms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .mixture import Mixture, Weight


@dataclass(frozen=True)
class VelocityGrid:
    """Cell-centred cubic lattice on [-v_max, v_max]^3 with ``n`` nodes per axis.

    Nodes sit at ``-v_max + (l + 1/2) h`` with ``h = 2 v_max / n``, so the node set is
    symmetric under ``v -> -v``. Flattened arrays use C (lexicographic) order.
    """

    v_max: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.v_max) and self.v_max > 0):
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 4, got {self.n}")
        object.__setattr__(self, "v_max", float(self.v_max))
        object.__setattr__(self, "n", int(self.n))

    @classmethod
    def for_mixture(cls, mixture: Mixture, n: int, v_max: float | None = None) -> "VelocityGrid":
        """Default half-width 6 / sqrt(min m_i) resolves the lightest Maxwellian."""
        if v_max is None:
            v_max = 6.0 / math.sqrt(min(mixture.masses))
        return cls(v_max, n)

    @property
    def h(self) -> float:
        return 2.0 * self.v_max / self.n

    @property
    def x0(self) -> float:
        """Coordinate of the first node on each axis."""
        return -self.v_max + 0.5 * self.h

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def size(self) -> int:
        return self.n**3

    @property
    def shape(self) -> tuple:
        return (self.n, self.n, self.n)

    @cached_property
    def axis(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.n)

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape (n^3, 3)."""
        X, Y, Z = np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    @cached_property
    def speed2(self) -> np.ndarray:
        return np.sum(self.points**2, axis=1)

    @cached_property
    def speed(self) -> np.ndarray:
        return np.sqrt(self.speed2)


class DistributionVec:
    """Per-species values on a velocity grid, stored as an array of shape (N, n^3)."""

    def __init__(self, grid: VelocityGrid, values):
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        values = values.reshape(values.shape[0], -1)
        if values.shape[1] != grid.size:
            raise ValueError(f"expected {grid.size} values per species, got {values.shape[1]}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite value for species {bad[0]} at node {bad[1]}")
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid: VelocityGrid, n_species: int) -> "DistributionVec":
        return cls(grid, np.zeros((n_species, grid.size)))

    @property
    def n_species(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.values[i]

    def cube(self, i: int) -> np.ndarray:
        return self.values[i].reshape(self.grid.shape)

    def copy(self) -> "DistributionVec":
        return DistributionVec(self.grid, self.values.copy())

    def _wrap(self, values) -> "DistributionVec":
        return DistributionVec(self.grid, values)

    def __add__(self, other):
        return self._wrap(self.values + _vals(other))

    def __sub__(self, other):
        return self._wrap(self.values - _vals(other))

    def __mul__(self, s):
        return self._wrap(self.values * _vals(s))

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def to_csv(self, path) -> None:
        """Columns: species, node, vx, vy, vz, value (species-major, node lexicographic)."""
        pts = self.grid.points
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# v_max={self.grid.v_max!r} n={self.grid.n}\n")
            w = csv.writer(fh)
            w.writerow(["species", "node", "vx", "vy", "vz", "value"])
            for s in range(self.n_species):
                for a in range(self.grid.size):
                    w.writerow([s, a, repr(pts[a, 0]), repr(pts[a, 1]), repr(pts[a, 2]),
                                repr(float(self.values[s, a]))])

    @classmethod
    def from_csv(cls, path) -> "DistributionVec":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().lstrip("#").split()
            meta = dict(item.split("=") for item in header)
            grid = VelocityGrid(float(meta["v_max"]), int(meta["n"]))
            rows = list(csv.DictReader(fh))
        n_species = 1 + max(int(r["species"]) for r in rows)
        values = np.zeros((n_species, grid.size))
        for r in rows:
            values[int(r["species"]), int(r["node"])] = float(r["value"])
        return cls(grid, values)

    def to_binary(self, path) -> None:
        """``.npz`` archive holding ``values`` (N, n^3), ``v_max`` and ``n``."""
        np.savez(path, values=self.values, v_max=self.grid.v_max, n=self.grid.n)

    @classmethod
    def from_binary(cls, path) -> "DistributionVec":
        data = np.load(Path(path))
        return cls(VelocityGrid(float(data["v_max"]), int(data["n"])), data["values"])


def _vals(x):
    return x.values if isinstance(x, DistributionVec) else x


def maxwellian_values(mass: float, density: float, grid: VelocityGrid, drift=(0.0, 0.0, 0.0),
                      temperature: float = 1.0) -> np.ndarray:
    d = grid.points - np.asarray(drift, dtype=float)
    a = mass / temperature
    return density * (a / (2.0 * math.pi)) ** 1.5 * np.exp(-0.5 * a * np.sum(d * d, axis=1))


def maxwellian(mixture: Mixture, grid: VelocityGrid) -> DistributionVec:
    """mu_i(v) = c_i (m_i / 2 pi)^{3/2} exp(-m_i |v|^2 / 2) at the nodes."""
    return DistributionVec(grid, np.stack([
        maxwellian_values(m, c, grid) for m, c in zip(mixture.masses, mixture.densities)
    ]))


def conserved_moments(mixture: Mixture, F: DistributionVec):
    """(per-species mass, total momentum, total energy) by the midpoint rule.

    Energy is sum_i int m_i |v|^2 F_i (no factor 1/2).
    """
    grid = F.grid
    h3 = grid.cell_volume
    m = mixture.mass_array[:, None]
    mass = F.values.sum(axis=1) * h3
    momentum = (m * F.values).sum(axis=0) @ grid.points * h3
    energy = float(((m * F.values).sum(axis=0) @ grid.speed2) * h3)
    return mass, momentum, energy


def entropy(F: DistributionVec) -> float:
    """H(F) = sum_i sum_v F_i log F_i h^3 with 0 log 0 = 0."""
    vals = F.values
    if np.any(vals < 0):
        s, a = np.argwhere(vals < 0)[0]
        raise ValueError(f"negative value {vals[s, a]:.3e} for species {s} at node {a}")
    pos = vals > 0
    out = np.zeros_like(vals)
    out[pos] = vals[pos] * np.log(vals[pos])
    return float(out.sum() * F.grid.cell_volume)


def weight_field(weight: Weight, mixture: Mixture, grid: VelocityGrid) -> np.ndarray:
    """w_i at every node, shape (N, n^3)."""
    return np.stack([weight.radial(m, grid.speed) for m in mixture.masses])


def weighted_sup_norm(weight: Weight, mixture: Mixture, f: DistributionVec) -> float:
    """sum_i max_v |f_i(v)| w_i(v)."""
    w = weight_field(weight, mixture, f.grid)
    return float(np.sum(np.max(np.abs(f.values) * w, axis=1)))
