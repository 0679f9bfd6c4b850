import math

import numpy as np
import pytest

from mixboltz.equilibrium import (DistributionVec, VelocityGrid, conserved_moments, entropy,
                                  maxwellian, maxwellian_values, weight_field, weighted_sup_norm)
from mixboltz.mixture import Mixture, Weight


def test_grid_is_cell_centred_and_symmetric():
    g = VelocityGrid(3.0, 6)
    assert g.h == 1.0
    assert np.allclose(g.axis, [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5])
    assert np.allclose(np.sort(g.points, axis=0), np.sort(-g.points, axis=0))
    assert g.points.shape == (216, 3)
    # C order: last coordinate varies fastest
    assert np.allclose(g.points[1] - g.points[0], [0, 0, 1.0])


@pytest.mark.parametrize("v_max, n", [(0.0, 8), (1.0, 7), (1.0, 2), (float("inf"), 8)])
def test_grid_validation(v_max, n):
    with pytest.raises(ValueError):
        VelocityGrid(v_max, n)


def test_default_half_width_uses_lightest_species():
    g = VelocityGrid.for_mixture(Mixture([4.0, 9.0]), 8)
    assert g.v_max == pytest.approx(3.0)


def test_maxwellian_moments():
    # midpoint sums of a resolved Gaussian converge spectrally
    mix = Mixture([1.0, 2.0], [1.0, 0.5])
    grid = VelocityGrid.for_mixture(mix, 24)
    mu = maxwellian(mix, grid)
    mass, mom, en = conserved_moments(mix, mu)
    assert np.allclose(mass, [1.0, 0.5], rtol=1e-9)
    assert np.allclose(mom, 0.0, atol=1e-14)
    # int m |v|^2 mu = 3 c for unit temperature; the box cut-off at 6 sigma costs ~4e-8
    assert en == pytest.approx(3.0 * 1.5, rel=1e-7)


def test_drifting_maxwellian_momentum():
    grid = VelocityGrid(6.0, 24)
    vals = maxwellian_values(2.0, 1.0, grid, drift=(0.3, -0.1, 0.0))
    F = DistributionVec(grid, vals)
    _, mom, _ = conserved_moments(Mixture([2.0]), F)
    assert np.allclose(mom, [0.6, -0.2, 0.0], atol=1e-9)


def test_distribution_arithmetic_and_validation():
    grid = VelocityGrid(2.0, 4)
    a = DistributionVec(grid, np.ones((2, 64)))
    b = 2.0 * a - a
    assert np.array_equal(b.values, a.values)
    assert (-a).sup() == 1.0
    with pytest.raises(ValueError, match="species 1 at node 5"):
        vals = np.ones((2, 64))
        vals[1, 5] = np.nan
        DistributionVec(grid, vals)
    with pytest.raises(ValueError):
        DistributionVec(grid, np.ones(63))


def test_csv_and_binary_round_trip(tmp_path):
    grid = VelocityGrid(2.5, 4)
    rng = np.random.default_rng(0)
    F = DistributionVec(grid, rng.standard_normal((2, grid.size)))
    F.to_csv(tmp_path / "f.csv")
    G = DistributionVec.from_csv(tmp_path / "f.csv")
    assert G.grid == grid
    assert np.array_equal(G.values, F.values)
    F.to_binary(tmp_path / "f.npz")
    H = DistributionVec.from_binary(tmp_path / "f.npz")
    assert np.array_equal(H.values, F.values)


def test_entropy():
    grid = VelocityGrid(2.0, 4)
    F = DistributionVec(grid, np.full((1, 64), math.e))
    assert entropy(F) == pytest.approx(64 * math.e * grid.cell_volume)
    assert entropy(DistributionVec.zeros(grid, 1)) == 0.0
    vals = np.ones((2, 64))
    vals[1, 7] = -1e-3
    with pytest.raises(ValueError, match="species 1 at node 7"):
        entropy(DistributionVec(grid, vals))


def test_weighted_sup_norm():
    mix = Mixture([1.0, 4.0])
    grid = VelocityGrid(2.0, 4)
    f = DistributionVec(grid, np.ones((2, 64)))
    w = Weight.polynomial(2)
    r2 = grid.speed2.max()
    assert weighted_sup_norm(w, mix, f) == pytest.approx((1 + r2) + (1 + 4 * r2))
    assert weight_field(w, mix, grid).shape == (2, 64)
