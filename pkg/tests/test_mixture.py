import math

import mpmath
import numpy as np
import pytest

from mixboltz.mixture import (AngularPart, KernelModel, Mixture, Weight, audit_angular, b_l1_sphere,
                              b_sup, grad_cutoff_cb, weight_eval)


def test_mixture_accessors():
    mix = Mixture([1.0, 4.0], [2.0, 0.5])
    assert mix.n_species == 2
    assert mix.rho_inf == 1.0 * 2.0 + 4.0 * 0.5
    assert Mixture([3.0]).densities == (1.0,)


@pytest.mark.parametrize("masses, dens", [([], None), ([1.0, -1.0], None), ([1.0], [0.0]),
                                          ([1.0, 2.0], [1.0]), ([float("nan")], None)])
def test_mixture_rejects_invalid(masses, dens):
    with pytest.raises(ValueError):
        Mixture(masses, dens)


def test_b_sup_examples():
    assert b_sup(AngularPart.constant()) == 1.0
    assert b_sup(AngularPart.sincos()) == pytest.approx(0.5, abs=1e-15)
    # dense sampling oracle for the closed form
    u = np.linspace(-1, 1, 200001)
    assert np.max(AngularPart.sincos()(u)) == pytest.approx(0.5, abs=1e-9)
    assert b_sup(AngularPart.tabulated([-1.0, 0.0, 1.0], [1.0, 1.0, 1.0])) == 1.0


def test_b_l1_sphere_examples():
    assert b_l1_sphere(AngularPart.constant()) == pytest.approx(4 * math.pi, rel=1e-14)
    # independent high-precision oracle: 2 pi int |u| sqrt(1 - u^2) du = 4 pi / 3
    mpmath.mp.dps = 30
    oracle = 2 * mpmath.pi * mpmath.quad(lambda u: abs(u) * mpmath.sqrt(1 - u * u), [-1, 0, 1])
    assert float(oracle) == pytest.approx(4 * math.pi / 3, rel=1e-14)
    assert b_l1_sphere(AngularPart.sincos()) == pytest.approx(float(oracle), rel=1e-10)
    tab = AngularPart.tabulated(np.linspace(-1, 1, 11), np.ones(11))
    assert b_l1_sphere(tab) == pytest.approx(4 * math.pi, abs=1e-6)


def test_angular_validation():
    with pytest.raises(ValueError):
        AngularPart("weird")
    with pytest.raises(ValueError):
        AngularPart.tabulated([-1.0, 0.5], [1.0, 1.0])
    with pytest.raises(ValueError):
        AngularPart.tabulated([-1.0, 1.0], [1.0, float("inf")])
    with pytest.raises(ValueError):
        AngularPart.tabulated([-1.0, 1.0], [-1.0, 1.0])
    with pytest.raises(ValueError):
        AngularPart.constant(0.0)


def test_audit_angular_flags_constant_kernel():
    # b = 1 does not vanish at grazing or orthogonal angles, so the strong bound fails
    rep = audit_angular(AngularPart.constant())
    assert not math.isfinite(rep["c_b1"])
    assert rep["violations"]
    rep = audit_angular(AngularPart.sincos(2.0))
    assert rep["c_b1"] == pytest.approx(2.0, rel=1e-12)
    assert rep["positive"]


def test_kernel_symmetry_checks():
    with pytest.raises(ValueError):
        KernelModel(1.0, [[1.0, 2.0], [3.0, 1.0]], AngularPart.constant())
    with pytest.raises(ValueError):
        KernelModel(1.0, [[1.0, 1.0], [1.0, 1.0]],
                    [[AngularPart.constant(), AngularPart.constant()],
                     [AngularPart.sincos(), AngularPart.constant()]])
    with pytest.raises(ValueError):
        KernelModel(1.5, [[1.0]], AngularPart.constant())
    ker = KernelModel(0.5, [[1.0, 2.0], [2.0, 3.0]], AngularPart.sincos())
    u = np.random.default_rng(0).uniform(-1, 1, 100)
    for i in range(2):
        for j in range(2):
            assert np.array_equal(ker.angular[i][j](u), ker.angular[j][i](u))
            assert ker.cphi[i, j] == ker.cphi[j, i]


def test_kernel_constants_cached():
    ker = KernelModel.hard_spheres(2, 0.5)
    assert np.allclose(ker.b_inf, 1.0)
    assert np.allclose(ker.l_b, 4 * math.pi)
    assert ker.isotropic
    with pytest.raises(ValueError):
        ker.check_compatible(Mixture([1.0]))


def test_grad_cutoff_constant_kernel():
    assert grad_cutoff_cb(KernelModel.hard_spheres(2))["value"] == pytest.approx(4 * math.pi, rel=1e-13)


def test_grad_cutoff_sincos_golden():
    # brute force over a 32 x 32 design; value frozen from the reference run
    rep = grad_cutoff_cb(KernelModel(1.0, [[1.0]], AngularPart.sincos()))
    assert rep["value"] > 0
    assert rep["value"] == pytest.approx(2.962785140872489, rel=1e-12)
    assert not rep["violation"]


def test_grad_cutoff_hemisphere_kernel_flags_violation():
    hemi = AngularPart.tabulated([-1.0, 0.0, 1e-9, 1.0], [0.0, 0.0, 1.0, 1.0])
    rep = grad_cutoff_cb(KernelModel(1.0, [[1.0]], hemi))
    assert rep["value"] == 0.0
    assert rep["violation"]


def test_weight_examples():
    assert weight_eval(Weight.polynomial(7), 1.0, [0.0, 0.0, 0.0]) == 1.0
    assert weight_eval(Weight.exponential(1.0, 1.0), 4.0, [3.0, 0.0, 0.0]) == pytest.approx(math.exp(6.0), rel=1e-14)
    assert weight_eval(Weight.polynomial(2), 1.0, [1.0, 1.0, 1.0]) == pytest.approx(4.0, rel=1e-14)


@pytest.mark.parametrize("weight", [Weight.polynomial(3.5), Weight.exponential(0.7, 1.3)])
def test_weight_monotone_and_at_least_one(weight):
    r = np.sort(np.random.default_rng(1).uniform(0, 10, 500))
    w = weight.radial(2.0, r)
    assert np.all(w >= 1.0)
    assert np.all(np.diff(w) >= 0)


def test_weight_validation():
    with pytest.raises(ValueError):
        Weight.polynomial(0.0)
    with pytest.raises(ValueError):
        Weight.exponential(1.0, 2.0)
    with pytest.raises(ValueError):
        weight_eval(Weight.polynomial(1), -1.0, [0, 0, 0])
