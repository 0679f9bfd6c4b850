import math

import numpy as np
import pytest

from mixboltz.collision import CollisionOperator, SphereRule
from mixboltz.equilibrium import DistributionVec, VelocityGrid, maxwellian
from mixboltz.linear import (NU_LOWER, LinearizedOperator, Mollifier, audit_control_A, audit_control_Q,
                             gain_exponent, gaussian_bumps, nu_bounds, nu_field, nu_floor, nu_ij,
                             split_apply, split_residual, theta_delta)
from mixboltz.mixture import AngularPart, KernelModel, Mixture, Weight

CPHI = 1.0 / (4.0 * math.pi)


@pytest.fixture(scope="module")
def small_op():
    mix = Mixture([1.0, 2.0])
    ker = KernelModel(1.0, [[1.0, 0.5], [0.5, 1.5]], AngularPart.sincos())
    grid = VelocityGrid.for_mixture(mix, 6)
    return LinearizedOperator(ker, mix, grid, Mollifier(1.0 / 3.0), SphereRule.product(5))


def test_mollifier_plateau_and_support():
    m = Mollifier(0.1)
    z = np.zeros(3)
    ex, ey = np.eye(3)[:2]
    # plateau: |v| <= 10, 0.2 <= |u| <= 10, |cos| <= 0.8
    assert m(z, -1.0 * ex, ey) == 1.0
    assert m(9.0 * ey, 9.0 * ey - 0.25 * ex, (0.6 * ex + 0.8 * ey)) == pytest.approx(1.0, abs=1e-15)
    # outside the support of each factor
    assert m(21.0 * ey, 21.0 * ey - ex, ey) == 0.0
    assert m(z, -0.09 * ex, ey) == 0.0
    assert m(z, -21.0 * ex, ey) == 0.0
    assert m(z, -1.0 * ex, ex) == 0.0
    rng = np.random.default_rng(0)
    v, vs = rng.normal(scale=8.0, size=(2, 1000, 3))
    s = rng.standard_normal((1000, 3))
    s /= np.linalg.norm(s, axis=1)[:, None]
    vals = theta_delta(m, v, vs, s)
    assert np.all((vals >= 0.0) & (vals <= 1.0))
    assert 0.0 < vals.mean() < 1.0


def test_mollifier_transition_is_smooth():
    m = Mollifier(0.2)
    r = np.linspace(0.1, 0.5, 20001)
    y = m.relative(r)
    d = np.diff(y) / np.diff(r)
    # monotone ramp with bounded, continuous slope and flat ends
    assert np.all(d >= -1e-12)
    assert np.abs(np.diff(d)).max() < 1e-2
    assert y[0] == 0.0 and y[-1] == 1.0


@pytest.mark.parametrize("delta", [0.0, 0.4, 1.0])
def test_mollifier_validation(delta):
    with pytest.raises(ValueError):
        Mollifier(delta)


def test_theta_rejects_non_unit_sigma():
    with pytest.raises(ValueError):
        theta_delta(Mollifier(0.1), [0, 0, 0], [1, 0, 0], [0, 2, 0])


def test_nu_bounds_at_origin():
    mix = Mixture([1.0, 4.0])
    hs = KernelModel.hard_spheres(2, 1.0)
    lo, hi = nu_bounds(hs, mix, 0, 0, 0.0)
    P = 4 * math.pi
    assert lo == pytest.approx(P * NU_LOWER, rel=1e-15)
    assert hi == pytest.approx(2 * P, rel=1e-15)
    lo, hi = nu_bounds(hs, mix, 0, 1, np.array([[3.0, 4.0, 0.0]]))
    P = 4 * math.pi / 4.0
    assert lo[0] == pytest.approx(P * 2.0 * 5.0)
    assert hi[0] == pytest.approx(P * (10.0 + 2.0))
    speeds = np.linspace(0, 10, 101)
    for ker in (hs, KernelModel.maxwell_molecules(2, 1.0)):
        lo, hi = nu_bounds(ker, mix, 1, 0, speeds)
        assert np.all(lo <= hi)


def test_hard_sphere_frequency_inside_corridor_for_unit_mass():
    mix = Mixture([1.0])
    ker = KernelModel.hard_spheres(1, 1.0)
    grid = VelocityGrid(6.0, 24)
    speeds = np.linspace(0, 5, 11)
    pts = np.stack([speeds, np.zeros(11), np.zeros(11)], axis=1)
    nu = nu_ij(ker, mix, 0, 0, pts, SphereRule.product(7), grid)
    lo, hi = nu_bounds(ker, mix, 0, 0, speeds)
    assert np.all(nu >= 0.99 * lo) and np.all(nu <= 1.01 * hi)
    # closed form at the origin: 4 pi E|V| = 4 pi * 2 sqrt(2 / pi); the kink of |u| limits the node sum
    assert nu[0] == pytest.approx(8 * math.pi * math.sqrt(2 / math.pi), rel=1e-3)


def test_nu_floor_examples():
    assert nu_floor(KernelModel.hard_spheres(1, 1.0), Mixture([1.0])) == pytest.approx(4 * math.pi * NU_LOWER)
    # doubling C^Phi doubles the floor
    mix = Mixture([1.0, 3.0])
    a = nu_floor(KernelModel.hard_spheres(2, 1.0), mix)
    assert nu_floor(KernelModel.hard_spheres(2, 2.0), mix) == pytest.approx(2 * a, rel=1e-15)
    # brute force over rows
    ker = KernelModel(0.5, [[1.0, 2.0], [2.0, 0.5]], AngularPart.sincos())
    rows = [sum(ker.cphi[i, j] * ker.l_b[i, j] / mix.masses[j] ** 0.75 for j in range(2)) for i in range(2)]
    assert nu_floor(ker, mix) == pytest.approx(min(rows) * NU_LOWER, rel=1e-14)


def test_maxwell_molecule_frequency_is_a_lattice_sum():
    mix = Mixture([1.0, 2.0])
    ker = KernelModel.maxwell_molecules(2, 0.5)
    grid = VelocityGrid.for_mixture(mix, 6)
    mu = maxwellian(mix, grid).values
    nu = nu_field(ker, mix, grid, SphereRule.product(5), per_pair=True)
    h3 = grid.cell_volume
    for j in range(2):
        # the coincident node u = 0 is excluded from the sum
        expect = 0.5 * 4 * math.pi * (mu[j].sum() - mu[j]) * h3
        assert np.allclose(nu[0, j], expect, rtol=1e-13)


def test_fft_frequency_matches_direct_sum():
    mix = Mixture([1.0, 3.0])
    ker = KernelModel.hard_spheres(2, [[1.0, 0.3], [0.3, 2.0]])
    grid = VelocityGrid.for_mixture(mix, 6)
    sphere = SphereRule.product(5)
    fast = nu_field(ker, mix, grid, sphere, per_pair=True)
    for i in range(2):
        for j in range(2):
            slow = nu_ij(ker, mix, i, j, grid.points, sphere, grid)
            assert np.allclose(fast[i, j], slow, rtol=1e-12)


def test_split_of_zero_is_zero(small_op):
    z = np.zeros((1, 2, small_op.grid.size))
    for part in small_op.split_apply(z):
        assert not part.any()


def test_split_identity_and_matrix_agree(small_op):
    grid = small_op.grid
    samples = gaussian_bumps(grid, 2, 3, np.random.default_rng(1))
    F = np.stack([s.values for s in samples])
    A, B, nuf, L = small_op.split_apply(F)
    assert split_residual(A, B, nuf, L, F).max() <= 1e-12
    Am, Bm = small_op.matrices()
    flat = F.reshape(3, -1)
    assert np.allclose((flat @ Am.T).reshape(F.shape), A, rtol=0, atol=1e-12 * np.abs(A).max())
    assert np.allclose((flat @ Bm.T).reshape(F.shape), B, rtol=0, atol=1e-12 * np.abs(B).max())
    Lm = small_op.l_matrix()
    assert np.allclose((flat @ Lm.T).reshape(F.shape), L, rtol=0, atol=1e-11 * np.abs(L).max())


def test_split_apply_function_returns_distributions():
    mix = Mixture([1.0])
    ker = KernelModel.hard_spheres(1, 1.0)
    grid = VelocityGrid(4.0, 4)
    f = gaussian_bumps(grid, 1, 1, np.random.default_rng(2))[0]
    parts = split_apply(ker, mix, Mollifier(0.25), f, sphere=SphereRule.product(3))
    assert len(parts) == 4 and all(isinstance(p, DistributionVec) for p in parts)
    A, B, nuf, L = (p.values for p in parts)
    assert np.abs(A + B - nuf - L).max() <= 1e-12 * np.abs(f.values).max()


def test_compact_part_vanishes_outside_speed_support(small_op):
    # delta = 1/3: A f = 0 wherever |v| > 6, which includes the box corners
    samples = gaussian_bumps(small_op.grid, 2, 2, np.random.default_rng(3))
    res = audit_control_A(small_op.kernel, small_op.mixture, small_op.moll, Weight.polynomial(7), 2.0,
                          samples, op=small_op)
    assert (small_op.grid.speed > 6.0).any()
    assert res["outside_support_max"] == 0.0
    assert np.isfinite(res["constant"]) and res["constant"] > 0
    with pytest.raises(ValueError):
        audit_control_A(small_op.kernel, small_op.mixture, small_op.moll, Weight.polynomial(7), 1.5,
                        samples, op=small_op)


def test_weighted_interpolant_annihilates_collision_invariants():
    mix = Mixture([1.0, 2.0])
    ker = KernelModel.hard_spheres(2, CPHI)
    grid = VelocityGrid.for_mixture(mix, 6)
    op = LinearizedOperator(ker, mix, grid, Mollifier(0.1), SphereRule.product(5), interp="wquad")
    L = op.l_matrix()
    mu = op.mu
    m = np.array(mix.masses)[:, None]
    inv = [np.stack([mu[0], 0 * mu[1]]), np.stack([0 * mu[0], mu[1]])]
    inv += [m * grid.points[:, k] * mu for k in range(3)]
    inv.append(m * grid.speed2 * mu)
    for psi in inv:
        assert np.abs(L @ psi.ravel()).max() <= 1e-10 * np.abs(L).max() * np.abs(psi).max()


def test_gain_exponent_cases():
    hs = KernelModel.hard_spheres(1)
    assert gain_exponent(hs, Weight.polynomial(7)) == (0.0, None)
    c, flag = gain_exponent(KernelModel.maxwell_molecules(1), Weight.exponential(1.0, 1.0))
    assert c == 0.0 and flag
    c, flag = gain_exponent(KernelModel(0.5, [[1.0]], AngularPart.constant()), Weight.exponential(1.0, 1.0))
    assert c == pytest.approx(1.0) and flag is None
    with pytest.raises(ValueError):
        gain_exponent(hs, Weight.exponential(1.0, 1.0), kappa2_prime=1.0)


def test_audit_q_is_scale_invariant():
    mix = Mixture([1.0, 2.0])
    ker = KernelModel.hard_spheres(2, CPHI)
    grid = VelocityGrid.for_mixture(mix, 6)
    col = CollisionOperator(ker, mix, grid, SphereRule.product(5), method="direct", interp="trilinear",
                            escape_cap=1.0)
    rng = np.random.default_rng(4)
    b = gaussian_bumps(grid, 2, 4, rng)
    pairs = [(b[0], b[1]), (b[2], b[3])]
    scaled = [(3.0 * f, -0.5 * g) for f, g in pairs]
    w = Weight.polynomial(7)
    r1 = audit_control_Q(ker, mix, w, pairs, collision=col)
    r2 = audit_control_Q(ker, mix, w, scaled, collision=col)
    assert r1["constant"] > 0
    assert np.allclose(r1["per_sample"], r2["per_sample"], rtol=1e-12)
    assert r1["c_w"] == 0.0
