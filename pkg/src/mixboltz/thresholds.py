"""Stability constant C_B(w) of the remainder operator and the minimal weight exponent k0."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mixture import KernelModel, Mixture, Weight

K_FLOOR = 6
# C_B within this relative distance of 1 counts as equal to 1 (not admissible)
EQUALITY_RTOL = 1e-12


def _species_factors(mixture: Mixture, kernel: KernelModel):
    """Per-species (inner j-sum, l-sum) whose product enters C_B."""
    kernel.check_compatible(mixture)
    m = mixture.mass_array
    g = kernel.gamma
    cphi = kernel.cphi
    binf = kernel.b_inf
    lb = kernel.l_b
    N = mixture.n_species
    inner = np.zeros(N)
    outer = np.zeros(N)
    for i in range(N):
        inner[i] = sum(cphi[i, j] * binf[i, j] * (m[i] + m[j]) ** 2
                       / (m[i] ** (2.0 - g / 2.0) * m[j] ** ((5.0 + g) / 2.0)) for j in range(N))
        outer[i] = sum(math.sqrt(m[l]) / (cphi[i, l] * lb[i, l]) for l in range(N))
    return inner, outer


def c_b_polynomial(mixture: Mixture, kernel: KernelModel, k: float) -> float:
    """C_B for the weight <sqrt(m_i) v>^k:

    4 pi / (k - 1 - gamma) max_i [sum_j C_ij b_ij (m_i + m_j)^2 / (m_i^{2 - gamma/2} m_j^{(5 + gamma)/2})]
                                  [sum_l sqrt(m_l) / (C_il l_b_il)].
    """
    if not k > 1.0 + kernel.gamma:
        raise ValueError(f"k must exceed 1 + gamma = {1.0 + kernel.gamma}, got {k}")
    inner, outer = _species_factors(mixture, kernel)
    return float(4.0 * math.pi / (k - 1.0 - kernel.gamma) * np.max(inner * outer))


def c_b(mixture: Mixture, kernel: KernelModel, weight: Weight) -> float:
    """C_B(w): the polynomial formula, or 0 for exponential weights."""
    if weight.kind == "exponential":
        return 0.0
    return c_b_polynomial(mixture, kernel, weight.k)


@dataclass
class ThresholdReport:
    k0: int
    floor_binding: bool
    argmax_species: int
    inner: np.ndarray
    outer: np.ndarray
    ks: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def recommended_k(self) -> int:
        """Smallest integer strictly above k0."""
        return self.k0 + 1

    def as_dict(self) -> dict:
        return {
            "k0": self.k0,
            "recommended_k": self.recommended_k,
            "floor_binding": self.floor_binding,
            "argmax_species": self.argmax_species,
            "inner_sum": self.inner.tolist(),
            "outer_sum": self.outer.tolist(),
        }


def find_k0(mixture: Mixture, kernel: KernelModel, k_max: int = 100000) -> int:
    """Smallest integer k with C_B(k) < 1, floored at 6.

    Values of C_B within a relative 1e-12 of 1 are treated as equality, so rounding
    cannot admit a k at which the exact constant equals 1.
    """
    return threshold_report(mixture, kernel, k_max=k_max).k0


def threshold_report(mixture: Mixture, kernel: KernelModel, ks=None, k_max: int = 100000) -> ThresholdReport:
    """k0, its ingredients and C_B tabulated on ``ks`` (default 3..20 intersected with k > 1 + gamma)."""
    inner, outer = _species_factors(mixture, kernel)
    prod = inner * outer
    const = 4.0 * math.pi * float(np.max(prod))
    g = kernel.gamma
    # C_B(k) = const / (k - 1 - g) < 1  <=>  k > 1 + g + const
    k = max(int(math.floor(1.0 + g)) + 1, int(math.floor(1.0 + g + const)) - 1)
    while const / (k - 1.0 - g) >= 1.0 - EQUALITY_RTOL:
        k += 1
        if k > k_max:
            raise RuntimeError("no k below k_max satisfies C_B(k) < 1")
    floor_binding = k < K_FLOOR
    k0 = max(k, K_FLOOR)
    if ks is None:
        ks = np.arange(3, 21)
    ks = np.asarray([x for x in np.atleast_1d(ks) if x > 1.0 + g], dtype=float)
    values = np.array([c_b_polynomial(mixture, kernel, x) for x in ks])
    return ThresholdReport(k0, floor_binding, int(np.argmax(prod)), inner, outer, ks, values)
