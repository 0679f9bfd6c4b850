"""Species data, collision-kernel models, weights and derived kernel constants.

A kernel between species ``i`` and ``j`` has the product form

    B_ij(|v - v*|, cos theta) = C^Phi_ij |v - v*|^gamma b_ij(cos theta)

with ``gamma`` in [0, 1] and a bounded angular part ``b_ij``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import integrate

ANGULAR_KINDS = ("constant", "sincos", "tabulated")
_KIND_CODE = {"constant": 0, "sincos": 1, "tabulated": 2}


@dataclass(frozen=True)
class Mixture:
    """Species masses ``m_i`` and equilibrium number densities ``c_inf,i``."""

    masses: tuple
    densities: tuple

    def __init__(self, masses: Sequence[float], densities: Sequence[float] | None = None):
        masses = tuple(float(m) for m in np.atleast_1d(masses))
        if densities is None:
            densities = (1.0,) * len(masses)
        densities = tuple(float(c) for c in np.atleast_1d(densities))
        if len(masses) == 0:
            raise ValueError("a mixture needs at least one species")
        if len(densities) != len(masses):
            raise ValueError("masses and densities must have the same length")
        if not all(np.isfinite(m) and m > 0 for m in masses):
            raise ValueError(f"masses must be positive and finite, got {masses}")
        if not all(np.isfinite(c) and c > 0 for c in densities):
            raise ValueError(f"densities must be positive and finite, got {densities}")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "densities", densities)

    @property
    def n_species(self) -> int:
        return len(self.masses)

    @property
    def rho_inf(self) -> float:
        """Global mass density sum_i m_i c_inf,i."""
        return float(sum(m * c for m, c in zip(self.masses, self.densities)))

    @property
    def mass_array(self) -> np.ndarray:
        return np.asarray(self.masses)

    @property
    def density_array(self) -> np.ndarray:
        return np.asarray(self.densities)


@dataclass(frozen=True, eq=False)
class AngularPart:
    """Angular factor ``b(u)`` with ``u = cos theta``.

    kind ``constant``: b(u) = c.
    kind ``sincos``: b(u) = c |u| sqrt(1 - u^2), i.e. c |sin theta||cos theta|.
    kind ``tabulated``: piecewise-linear interpolation of samples on [-1, 1].
    """

    kind: str = "constant"
    c: float = 1.0
    u_table: np.ndarray | None = field(default=None, repr=False)
    b_table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ANGULAR_KINDS:
            raise ValueError(f"unknown angular kind {self.kind!r}; expected one of {ANGULAR_KINDS}")
        if self.kind == "tabulated":
            if self.u_table is None or self.b_table is None:
                raise ValueError("tabulated angular part needs u_table and b_table")
            u = np.asarray(self.u_table, dtype=float)
            b = np.asarray(self.b_table, dtype=float)
            if u.ndim != 1 or u.shape != b.shape or u.size < 2:
                raise ValueError("u_table and b_table must be 1D arrays of equal length >= 2")
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(b))):
                raise ValueError("tabulated angular part contains non-finite samples")
            if np.any(np.diff(u) <= 0):
                raise ValueError("u_table must be strictly increasing")
            if abs(u[0] + 1.0) > 1e-12 or abs(u[-1] - 1.0) > 1e-12:
                raise ValueError("u_table must span [-1, 1]")
            if np.any(b < 0):
                raise ValueError("angular part must be non-negative")
            object.__setattr__(self, "u_table", u)
            object.__setattr__(self, "b_table", b)
        else:
            if not (np.isfinite(self.c) and self.c > 0):
                raise ValueError(f"angular scale c must be positive and finite, got {self.c}")

    @classmethod
    def constant(cls, c: float = 1.0) -> "AngularPart":
        return cls("constant", float(c))

    @classmethod
    def sincos(cls, c: float = 1.0) -> "AngularPart":
        return cls("sincos", float(c))

    @classmethod
    def tabulated(cls, u, b) -> "AngularPart":
        return cls("tabulated", 1.0, np.asarray(u, float), np.asarray(b, float))

    @classmethod
    def from_function(cls, func, n_nodes: int = 2001) -> "AngularPart":
        u = np.linspace(-1.0, 1.0, n_nodes)
        return cls.tabulated(u, func(u))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "constant":
            return np.full(u.shape, self.c)
        if self.kind == "sincos":
            uc = np.clip(u, -1.0, 1.0)
            return self.c * np.abs(uc) * np.sqrt(1.0 - uc * uc)
        return np.interp(u, self.u_table, self.b_table)

    @property
    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "tabulated":
            return bool(np.all(self.b_table == self.b_table[0]))
        return False

    @property
    def constant_value(self) -> float:
        if not self.is_constant:
            raise ValueError("angular part is not constant")
        return float(self.c if self.kind == "constant" else self.b_table[0])

    def same_as(self, other: "AngularPart", n_samples: int = 100, seed: int = 0) -> bool:
        """Pointwise equality on random samples of u (exact comparison)."""
        u = np.random.default_rng(seed).uniform(-1.0, 1.0, n_samples)
        return bool(np.array_equal(self(u), other(u)))

    def numba_args(self):
        """(kind code, scale, u table, b table) for the compiled kernels."""
        if self.kind == "tabulated":
            return _KIND_CODE[self.kind], 1.0, self.u_table, self.b_table
        empty = np.zeros(2)
        return _KIND_CODE[self.kind], float(self.c), empty, empty


def b_sup(angular: AngularPart) -> float:
    """b_inf = sup over u in [-1, 1] of |b(u)|."""
    if angular.kind == "constant":
        return float(angular.c)
    if angular.kind == "sincos":
        # u sqrt(1 - u^2) peaks at u = 1/sqrt(2) with value 1/2
        return 0.5 * float(angular.c)
    # piecewise-linear interpolant: the sup sits on a table node, dense sampling
    # only confirms it
    dense = np.abs(angular(np.linspace(-1.0, 1.0, 20001)))
    return float(max(np.max(np.abs(angular.b_table)), dense.max()))


def b_l1_sphere(angular: AngularPart, rtol: float = 1e-10) -> float:
    """l_b = integral of b(sigma . e) over the unit sphere = 2 pi int_{-1}^{1} b(u) du."""
    if angular.kind == "constant":
        return 4.0 * math.pi * float(angular.c)
    if angular.kind == "tabulated":
        # exact integral of the piecewise-linear interpolant
        u, b = angular.u_table, angular.b_table
        return 2.0 * math.pi * float(np.sum(0.5 * (b[1:] + b[:-1]) * np.diff(u)))
    total, err = 0.0, 0.0
    for a, b in ((-1.0, 0.0), (0.0, 1.0)):
        val, e = integrate.quad(lambda u: float(angular(u)), a, b, epsabs=0.0, epsrel=rtol, limit=200)
        total += val
        err += e
    if err > 10 * rtol * abs(total):
        raise RuntimeError(f"angular quadrature did not converge: estimate {total}, error {err}")
    return 2.0 * math.pi * total


def audit_angular(angular: AngularPart, n_samples: int = 20001) -> dict:
    """Estimate the constants of the strong cutoff bound and flag violations.

    Returns ``c_b1`` = sup b(u) / (|u| sqrt(1-u^2)) over interior samples (inf if b
    does not vanish at u in {-1, 0, 1}), ``c_b2`` = max finite-difference slope, and
    whether b stays positive on (-1, 1).
    """
    u = np.linspace(-1.0, 1.0, n_samples)[1:-1]
    b = angular(u)
    sc = np.abs(u) * np.sqrt(1.0 - u * u)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sc > 0, b / sc, np.where(b > 0, np.inf, 0.0))
    c_b1 = float(np.max(ratio))
    if angular.kind == "tabulated":
        c_b2 = float(np.max(np.diff(angular.b_table) / np.diff(angular.u_table)))
    else:
        c_b2 = float(np.max(np.diff(b) / np.diff(u)))
    positive = bool(np.all(b[u != 0.0] > 0))
    violations = []
    if not np.isfinite(c_b1):
        violations.append("b is not bounded by C |sin||cos| near grazing or orthogonal angles")
    if not positive:
        violations.append("b vanishes somewhere in (-1, 1)")
    return {"c_b1": c_b1, "c_b2": c_b2, "positive": positive, "violations": violations}


def polar_azimuthal_design(n_polar: int, n_azimuth: int, offset: float = 0.0) -> np.ndarray:
    """Unit vectors on a Gauss-Legendre (in cos theta) by uniform-azimuth product set."""
    x, _ = np.polynomial.legendre.leggauss(n_polar)
    phi = 2.0 * math.pi * (np.arange(n_azimuth) + 0.5 + offset) / n_azimuth
    ct = np.repeat(x, n_azimuth)
    st = np.sqrt(1.0 - ct * ct)
    ph = np.tile(phi, n_polar)
    return np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=1)


def _design_for(size: int, offset: float) -> np.ndarray:
    # split the point budget as evenly as possible between polar and azimuthal counts
    n_polar = max(1, int(round(math.sqrt(size / 2.0))))
    while size % n_polar:
        n_polar -= 1
    return polar_azimuthal_design(n_polar, size // n_polar, offset)


@dataclass(frozen=True, eq=False)
class KernelModel:
    """Collision kernels B_ij = C^Phi_ij |v - v*|^gamma b_ij(cos theta)."""

    gamma: float
    cphi: np.ndarray
    angular: tuple

    def __init__(self, gamma: float, cphi, angular):
        gamma = float(gamma)
        if not (0.0 <= gamma <= 1.0):
            raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
        cphi = np.array(cphi, dtype=float, ndmin=2)
        if cphi.ndim != 2 or cphi.shape[0] != cphi.shape[1]:
            raise ValueError("cphi must be a square matrix")
        n = cphi.shape[0]
        if not np.all(np.isfinite(cphi)) or np.any(cphi <= 0):
            raise ValueError("cphi entries must be positive and finite")
        if not np.array_equal(cphi, cphi.T):
            raise ValueError("cphi must be symmetric")
        if isinstance(angular, AngularPart):
            angular = [[angular] * n for _ in range(n)]
        rows = tuple(tuple(row) for row in angular)
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ValueError("angular must be an N x N array of AngularPart")
        for i in range(n):
            for j in range(i + 1, n):
                if rows[i][j] is not rows[j][i] and not rows[i][j].same_as(rows[j][i]):
                    raise ValueError(f"angular parts b_{i}{j} and b_{j}{i} differ")
        cphi.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "cphi", cphi)
        object.__setattr__(self, "angular", rows)

    @classmethod
    def hard_spheres(cls, n_species: int = 1, cphi=1.0) -> "KernelModel":
        return cls(1.0, np.broadcast_to(np.asarray(cphi, float), (n_species, n_species)), AngularPart.constant())

    @classmethod
    def maxwell_molecules(cls, n_species: int = 1, cphi=1.0) -> "KernelModel":
        return cls(0.0, np.broadcast_to(np.asarray(cphi, float), (n_species, n_species)), AngularPart.constant())

    @property
    def n_species(self) -> int:
        return self.cphi.shape[0]

    @cached_property
    def b_inf(self) -> np.ndarray:
        n = self.n_species
        return np.array([[b_sup(self.angular[i][j]) for j in range(n)] for i in range(n)])

    @cached_property
    def l_b(self) -> np.ndarray:
        n = self.n_species
        return np.array([[b_l1_sphere(self.angular[i][j]) for j in range(n)] for i in range(n)])

    @property
    def isotropic(self) -> bool:
        """True when every angular part is constant."""
        return all(b.is_constant for row in self.angular for b in row)

    def check_compatible(self, mixture: Mixture) -> None:
        if mixture.n_species != self.n_species:
            raise ValueError(
                f"kernel has {self.n_species} species but mixture has {mixture.n_species}"
            )

    def grad_cutoff_cb(self, design=(32, 32), sphere_degree: int = 17) -> float:
        return grad_cutoff_cb(self, design, sphere_degree)["value"]


def grad_cutoff_cb(kernel: KernelModel, design=(32, 32), sphere_degree: int = 17) -> dict:
    """Discretized C^b = min_i inf_{s1,s2} int min{b_ii(s1.s3), b_ii(s2.s3)} ds3.

    ``s1`` runs over a ``design[0]``-point and ``s2`` over a ``design[1]``-point
    polar-azimuthal set together with the antipodes of ``s1``; the s3 integral uses a product rule of the given degree.
    The returned value is the minimum over the discrete pairs, an upper estimate of
    the true infimum. ``violation`` is set when the value is not positive.
    """
    from .collision import SphereRule

    rule = SphereRule.product(sphere_degree)
    s1 = _design_for(design[0], 0.0)
    # the antipodes of s1 are added so that pairs sigma2 = -sigma1 are always probed
    s2 = np.concatenate([_design_for(design[1], 0.25), -s1])
    u1 = s1 @ rule.nodes.T
    u2 = s2 @ rule.nodes.T
    values = []
    for i in range(kernel.n_species):
        b = kernel.angular[i][i]
        b1 = b(u1)
        b2 = b(u2)
        vals = np.minimum(b1[:, None, :], b2[None, :, :]) @ rule.weights
        values.append(float(vals.min()))
    value = max(0.0, min(values))
    return {"value": value, "per_species": values, "violation": not value > 0.0}


@dataclass(frozen=True)
class Weight:
    """Per-species weight: ``<sqrt(m) v>^k`` or ``exp(kappa1 (sqrt(m)|v|)^kappa2)``."""

    kind: str = "polynomial"
    k: float = 0.0
    kappa1: float = 0.0
    kappa2: float = 0.0

    def __post_init__(self):
        if self.kind == "polynomial":
            if not (np.isfinite(self.k) and self.k > 0):
                raise ValueError(f"polynomial weight needs k > 0, got {self.k}")
        elif self.kind == "exponential":
            if not (self.kappa1 > 0):
                raise ValueError(f"exponential weight needs kappa1 > 0, got {self.kappa1}")
            if not (0.0 < self.kappa2 < 2.0):
                raise ValueError(f"exponential weight needs kappa2 in (0, 2), got {self.kappa2}")
        else:
            raise ValueError(f"unknown weight kind {self.kind!r}")

    @classmethod
    def polynomial(cls, k: float) -> "Weight":
        return cls("polynomial", k=float(k))

    @classmethod
    def exponential(cls, kappa1: float, kappa2: float) -> "Weight":
        return cls("exponential", kappa1=float(kappa1), kappa2=float(kappa2))

    def radial(self, mass: float, r):
        """Weight as a function of the speed ``r = |v|``."""
        r = np.abs(np.asarray(r, dtype=float))
        x = math.sqrt(mass) * r
        if self.kind == "polynomial":
            return (1.0 + x * x) ** (self.k / 2.0)
        return np.exp(self.kappa1 * x**self.kappa2)


def weight_eval(weight: Weight, mass: float, v) -> np.ndarray | float:
    """w_i(v) for a velocity ``v`` (shape (3,) or (..., 3))."""
    if mass <= 0:
        raise ValueError("mass must be positive")
    v = np.asarray(v, dtype=float)
    r = np.sqrt(np.sum(v * v, axis=-1))
    out = weight.radial(mass, r)
    return float(out) if np.ndim(out) == 0 else out
