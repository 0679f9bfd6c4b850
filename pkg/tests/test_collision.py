import itertools
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import erf

from mixboltz.collision import (CollisionOperator, EscapeError, RadialProfile, SphereRule,
                                a_function, post_collision, q_plus_direct_mc,
                                q_plus_radial_majorant, random_radial_mixture)
from mixboltz.equilibrium import DistributionVec, VelocityGrid, maxwellian, maxwellian_values
from mixboltz.linear import nu_field
from mixboltz.mixture import AngularPart, KernelModel, Mixture

CPHI = 1.0 / (4.0 * math.pi)


def mean_abs_offset(r, m=1.0):
    """E|v - V| for V ~ N(0, I/m) and |v| = r (closed form)."""
    s = 1.0 / math.sqrt(m)
    x = np.asarray(r, dtype=float) / s
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(x > 0, (x + 1.0 / np.where(x > 0, x, 1.0)) * erf(x / math.sqrt(2))
                       + math.sqrt(2 / math.pi) * np.exp(-x * x / 2), 2 * math.sqrt(2 / math.pi))
    return s * val


@pytest.mark.parametrize("degree", [3, 7, 17])
def test_sphere_rule_monomials(degree):
    rule = SphereRule.product(degree)
    x, y, z = rule.nodes.T
    assert rule.weights.sum() == pytest.approx(4 * math.pi, rel=1e-14)
    assert np.dot(rule.weights, x * x) == pytest.approx(4 * math.pi / 3, rel=1e-13)
    assert abs(np.dot(rule.weights, x * y * z)) < 1e-13
    if degree >= 4:
        assert np.dot(rule.weights, z**4) == pytest.approx(4 * math.pi / 5, rel=1e-13)
        assert np.dot(rule.weights, x * x * y * y) == pytest.approx(4 * math.pi / 15, rel=1e-13)
    assert np.array_equal(rule.nodes[rule.antipode], -rule.nodes) or np.allclose(
        rule.nodes[rule.antipode], -rule.nodes, atol=1e-14)


def test_sphere_rule_validation():
    with pytest.raises(ValueError):
        SphereRule(np.array([[1.0, 0, 0]]), np.array([1.0]), 0)
    with pytest.raises(ValueError):
        SphereRule(np.array([[2.0, 0, 0]]), np.array([4 * math.pi]), 0)


def test_post_collision_conservation():
    rng = np.random.default_rng(0)
    v, vs = rng.standard_normal((2, 500, 3))
    s = rng.standard_normal((500, 3))
    s /= np.linalg.norm(s, axis=1)[:, None]
    mi, mj = 1.0, 3.5
    vp, vsp = post_collision(v, vs, s, mi, mj)
    assert np.allclose(mi * vp + mj * vsp, mi * v + mj * vs, atol=1e-13)
    e0 = mi * np.sum(v * v, 1) + mj * np.sum(vs * vs, 1)
    e1 = mi * np.sum(vp * vp, 1) + mj * np.sum(vsp * vsp, 1)
    assert np.allclose(e1, e0, rtol=1e-13)
    assert np.allclose(np.linalg.norm(vp - vsp, axis=1), np.linalg.norm(v - vs, axis=1), rtol=1e-13)
    with pytest.raises(ValueError):
        post_collision(v[0], vs[0], [1.0, 1.0, 0.0], mi, mj)


def test_a_function_examples():
    assert a_function(4, 3, 2, 1) == pytest.approx(2 * math.pi**2 / 3, abs=1e-12)
    vals = {a_function(*p) for p in itertools.permutations((0.3, 2.0, 1.1, 5.0))}
    assert len(vals) == 1
    assert a_function(10, 1, 1, 1) == 0.0
    with pytest.raises(ValueError):
        a_function(1, 2, 0, 1)


def test_direct_weighted_interpolant_annihilates_maxwellian():
    mix = Mixture([1.0, 2.0])
    ker = KernelModel.hard_spheres(2, CPHI)
    grid = VelocityGrid.for_mixture(mix, 8)
    mu = maxwellian(mix, grid)
    op = CollisionOperator(ker, mix, grid, SphereRule.product(5), method="direct", escape_cap=1.0)
    Q = op.apply(mu)
    assert np.abs(Q.values).max() <= 1e-10 * mu.values.max()


def test_direct_loss_frequency_matches_node_sum():
    mix = Mixture([1.0, 2.0])
    ker = KernelModel(1.0, [[1.0, 0.5], [0.5, 2.0]], AngularPart.sincos())
    grid = VelocityGrid.for_mixture(mix, 6)
    sphere = SphereRule.product(5)
    mu = maxwellian(mix, grid)
    op = CollisionOperator(ker, mix, grid, sphere, method="direct", escape_cap=1.0)
    _, _, info = op.q_full(mu)
    assert np.allclose(info["freq"], nu_field(ker, mix, grid, sphere), rtol=1e-12)


def truncated_frequency(r, radius):
    """int_{|u| <= R} |u| mu(v - u) du for the unit Maxwellian and |v| = r, by 1D quadrature."""
    c = 4 * math.pi * (2 * math.pi) ** -1.5

    def shell(p):
        if r == 0.0:
            return c * p**3 * math.exp(-p * p / 2)
        # sphere average of mu over radius p around v, written to avoid overflow
        return c * p**3 * math.exp(-(r - p) ** 2 / 2) * -math.expm1(-2 * r * p) / (2 * r * p)

    return quad(shell, 0.0, radius, epsabs=1e-14, epsrel=1e-13)[0]


def test_fourier_conserves_mass():
    mix = Mixture([1.0])
    ker = KernelModel.hard_spheres(1, CPHI)
    grid = VelocityGrid.for_mixture(mix, 16)
    rng = np.random.default_rng(3)
    F = DistributionVec(grid, maxwellian_values(1.0, 1.0, grid, drift=(0.5, 0.0, 0.0), temperature=1.2)
                        + 0.1 * maxwellian_values(1.0, 1.0, grid, drift=rng.uniform(-1, 1, 3), temperature=0.5))
    op = CollisionOperator(ker, mix, grid, SphereRule.product(9), method="fourier")
    gain, loss, _ = op.q_full(F)
    assert abs((gain.values - loss.values).sum()) <= 1e-13 * F.values.sum()


@pytest.mark.parametrize("n, tol_nu, tol_gain", [(16, 1e-5, 2e-4), (32, 1e-7, 1e-7)])
def test_fourier_matches_truncated_closed_form(n, tol_nu, tol_gain):
    # relative speeds are cut at R = 0.8 v_max; gain(mu, mu) = nu_R mu for Maxwellians
    mix = Mixture([1.0])
    ker = KernelModel.hard_spheres(1, CPHI)
    grid = VelocityGrid.for_mixture(mix, n)
    mu = maxwellian(mix, grid)
    op = CollisionOperator(ker, mix, grid, SphereRule.product(17), method="fourier")
    gain, _, info = op.q_full(mu)
    inner = np.flatnonzero(grid.speed < 2.0)
    exact = np.array([truncated_frequency(grid.speed[k], 0.8 * grid.v_max) for k in inner])
    assert np.abs(info["freq"][0][inner] / exact - 1).max() <= tol_nu
    err = np.abs(gain.values[0][inner] - exact * mu.values[0][inner]).max()
    assert err <= tol_gain * mu.values.max()


def test_escape_cap_raises():
    mix = Mixture([1.0])
    ker = KernelModel.hard_spheres(1, 1.0)
    grid = VelocityGrid(2.0, 4)
    f = np.ones(grid.size)
    op = CollisionOperator(ker, mix, grid, SphereRule.product(3), method="direct",
                           interp="trilinear", escape_cap=0.01)
    with pytest.raises(EscapeError):
        op.q_ij(0, 0, f, f)


def test_operator_rejects_unknown_options():
    mix = Mixture([1.0])
    ker = KernelModel(1.0, [[1.0]], AngularPart.sincos())
    grid = VelocityGrid(3.0, 4)
    with pytest.raises(ValueError):
        CollisionOperator(ker, mix, grid, method="spectral")
    with pytest.raises(ValueError):
        CollisionOperator(ker, mix, grid, interp="cubic")
    with pytest.raises(ValueError):
        CollisionOperator(ker, mix, grid, method="fourier").q_ij(0, 0, np.zeros(64), np.zeros(64))


def test_radial_profile_validation():
    with pytest.raises(ValueError):
        RadialProfile(np.array([0.1, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        RadialProfile(np.array([0.0, 1.0, 0.5]), np.ones(3))
    p = RadialProfile.from_function(lambda r: np.exp(-r * r), 3.0)
    assert p(4.0) == 0.0
    assert p.scaled(2.0)(0.0) == 2.0


def test_majorant_rejects_truncated_profiles():
    mix = Mixture([1.0, 2.0])
    ker = KernelModel.hard_spheres(2)
    F = RadialProfile.from_function(lambda r: np.exp(-r * r), 1.0)
    G = RadialProfile.from_function(lambda r: np.exp(-r * r), 8.0)
    with pytest.raises(ValueError):
        q_plus_radial_majorant(ker, mix, 0, 1, F, G, 1.0)


@pytest.mark.parametrize("i, j", [(0, 1), (1, 1)])
def test_monte_carlo_gain_matches_maxwellian_closed_form(i, j):
    # Q+(mu_i, mu_j) = mu_i(v) l_b int |v - v*| mu_j(v*) dv*  (no collision constant)
    mix = Mixture([1.0, 2.0])
    ker = KernelModel.hard_spheres(2)
    mi, mj = mix.masses[i], mix.masses[j]

    def radial_mu(m):
        return lambda r: (m / (2 * math.pi)) ** 1.5 * np.exp(-0.5 * m * np.asarray(r) ** 2)

    r = 0.7
    est, se = q_plus_direct_mc(ker, mix, i, j, radial_mu(mi), radial_mu(mj), r, 400_000, seed=1)
    exact = radial_mu(mi)(r) * 4 * math.pi * mean_abs_offset(r, mj)
    assert abs(est - exact) <= 4 * se
    assert se < 0.02 * exact


def test_majorant_dominates_monte_carlo_on_random_pairs():
    mix = Mixture([1.0, 3.0])
    ker = KernelModel(0.5, [[1.0, 1.0], [1.0, 1.0]], AngularPart.sincos())
    rng = np.random.default_rng(11)
    for p in range(4):
        F, G = random_radial_mixture(rng), random_radial_mixture(rng)
        for r in (0.5, 2.0):
            maj = q_plus_radial_majorant(ker, mix, 0, 1, F, G, r)
            est, se = q_plus_direct_mc(ker, mix, 0, 1, F, G, r, 50_000, seed=p)
            assert abs(est) <= maj + 3 * se
