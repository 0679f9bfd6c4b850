import math

import numpy as np
import pytest

from mixboltz.mixture import AngularPart, KernelModel, Mixture, Weight
from mixboltz.thresholds import K_FLOOR, c_b, c_b_polynomial, find_k0, threshold_report


def brute_c_b(masses, gamma, cphi, b_inf, l_b, k):
    """Direct transcription of the constant with plain loops, as an independent oracle."""
    best = 0.0
    N = len(masses)
    for i in range(N):
        mi = masses[i]
        inner = 0.0
        for j in range(N):
            mj = masses[j]
            inner += cphi[i][j] * b_inf * (mi + mj) ** 2 / (mi ** (2 - gamma / 2) * mj ** ((5 + gamma) / 2))
        outer = sum(math.sqrt(masses[l]) / (cphi[i][l] * l_b) for l in range(N))
        best = max(best, inner * outer)
    return 4 * math.pi / (k - 1 - gamma) * best


def test_matches_brute_force_for_heavy_light_mixture():
    masses = [1.0, 10.0]
    mix = Mixture(masses)
    ker = KernelModel.hard_spheres(2, 1.0)
    for k in (3, 7.5, 20, 21):
        assert c_b_polynomial(mix, ker, k) == pytest.approx(
            brute_c_b(masses, 1.0, [[1, 1], [1, 1]], 1.0, 4 * math.pi, k), rel=1e-13)
    # scan oracle for the threshold
    k = 3
    while brute_c_b(masses, 1.0, [[1, 1], [1, 1]], 1.0, 4 * math.pi, k) >= 1.0:
        k += 1
    assert find_k0(mix, ker) == max(k, K_FLOOR) == 20


def test_invariant_under_uniform_cross_section_scaling():
    mix = Mixture([1.0, 3.0, 0.5])
    a = KernelModel(0.5, [[1.0, 0.4, 2.0], [0.4, 1.0, 1.0], [2.0, 1.0, 3.0]], AngularPart.sincos())
    b = KernelModel(0.5, 7.0 * a.cphi, AngularPart.sincos())
    assert c_b_polynomial(mix, a, 9.0) == pytest.approx(c_b_polynomial(mix, b, 9.0), rel=1e-14)


def test_strictly_decreasing_in_k():
    rep = threshold_report(Mixture([1.0, 2.0]), KernelModel.hard_spheres(2))
    assert rep.ks[0] == 3.0
    assert np.all(np.diff(rep.values) < 0)
    assert rep.recommended_k == rep.k0 + 1
    assert set(rep.as_dict()) >= {"k0", "floor_binding", "argmax_species"}


def test_rejects_k_at_or_below_one_plus_gamma():
    with pytest.raises(ValueError):
        c_b_polynomial(Mixture([1.0]), KernelModel.hard_spheres(1), 2.0)
    assert c_b_polynomial(Mixture([1.0]), KernelModel.maxwell_molecules(1), 1.5) > 0


def test_exponential_weight_constant_is_zero():
    mix = Mixture([1.0])
    assert c_b(mix, KernelModel.hard_spheres(1), Weight.exponential(1.0, 1.0)) == 0.0
    assert c_b(mix, KernelModel.hard_spheres(1), Weight.polynomial(7)) == pytest.approx(0.8, rel=1e-14)


def test_equality_is_not_admissible():
    # C_B(6) = 1 exactly for a single hard-sphere species; k0 must skip it
    rep = threshold_report(Mixture([1.0]), KernelModel.hard_spheres(1))
    assert rep.k0 == 7 and not rep.floor_binding
    # Maxwell molecules: C_B(k) = 4 / (k - 1), equality at 5, so k0 = 6 from the formula
    rep = threshold_report(Mixture([1.0]), KernelModel.maxwell_molecules(1))
    assert rep.k0 == 6 and not rep.floor_binding


def test_floor_binds_for_heavy_single_species():
    # C_B(k) = 1 / (k - 2) for m = 2, so the formula alone would give k = 4
    rep = threshold_report(Mixture([2.0]), KernelModel.hard_spheres(1))
    assert rep.floor_binding
    assert rep.k0 == K_FLOOR
