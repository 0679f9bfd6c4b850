"""Collision frequency, the mollifier Theta_delta and the splitting L = -nu + A + B.

The linearized operator around the global Maxwellian is

    L_i(f) = sum_j Q_ij(mu_i, f_j) + Q_ij(f_i, mu_j),

with multiplicative part nu_i(v) = sum_j nu_ij(v). The remaining gain and cross
terms are split with a smooth cutoff Theta_delta(v, v*, sigma) into a compactly
supported part A (weight Theta_delta) and a remainder B (weight 1 - Theta_delta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from . import _kernels as K
from .collision import INTERP_MODES, CollisionOperator, SphereRule
from .equilibrium import DistributionVec, VelocityGrid, maxwellian, weight_field, weighted_sup_norm
from .mixture import KernelModel, Mixture, Weight

NU_LOWER = math.sqrt(2.0 / (math.e * math.pi))


def _step(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    out[s >= 1.0] = 1.0
    mid = (s > 0.0) & (s < 1.0)
    a = np.exp(-1.0 / s[mid])
    b = np.exp(-1.0 / (1.0 - s[mid]))
    out[mid] = a / (a + b)
    return out


@dataclass(frozen=True)
class Mollifier:
    """Theta_delta = chi_speed(|v|) chi_rel(|v - v*|) chi_angle(|cos theta|).

    Equal to 1 on {|v| <= 1/delta, 2 delta <= |v - v*| <= 1/delta, |cos| <= 1 - 2 delta}
    and 0 outside {|v| <= 2/delta, delta <= |v - v*| <= 2/delta, |cos| <= 1 - delta}.
    Each factor uses the C-infinity transition t(s) = e^{-1/s} / (e^{-1/s} + e^{-1/(1-s)}).
    """

    delta: float

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.delta > 1.0 / 3.0:
            # the plateau 2 delta <= |u| <= 1/delta and |cos| <= 1 - 2 delta is empty
            raise ValueError("delta must be at most 1/3 for a non-empty plateau")

    def speed(self, r):
        return _step((2.0 / self.delta - np.asarray(r, float)) * self.delta)

    def relative(self, r):
        r = np.asarray(r, float)
        d = self.delta
        return _step((r - d) / d) * _step((2.0 / d - r) * d)

    def angle(self, c):
        d = self.delta
        return _step((1.0 - d - np.abs(np.asarray(c, float))) / d)

    def __call__(self, v, v_star, sigma):
        v = np.asarray(v, float)
        u = v - np.asarray(v_star, float)
        ur = np.linalg.norm(u, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(ur > 0, np.sum(u * np.asarray(sigma, float), axis=-1) / ur, 1.0)
        out = self.speed(np.linalg.norm(v, axis=-1)) * self.relative(ur) * self.angle(c)
        return float(out) if np.ndim(out) == 0 else out


def theta_delta(moll: Mollifier, v, v_star, sigma):
    """Theta_delta(v, v*, sigma) in [0, 1]."""
    s = np.asarray(sigma, float)
    if np.any(np.abs(np.linalg.norm(s, axis=-1) - 1.0) > 1e-9):
        raise ValueError("sigma must be a unit vector")
    return moll(v, v_star, s)


def nu_ij(kernel: KernelModel, mixture: Mixture, i: int, j: int, v, sphere: SphereRule,
          grid: VelocityGrid):
    """nu_ij(v) = C^Phi_ij sum_{v*} sum_sigma w_sigma h^3 b_ij(cos) |v - v*|^gamma mu_j(v*)."""
    pts = np.atleast_2d(np.asarray(v, dtype=float))
    mu_j = maxwellian(mixture, grid)[j]
    code, c, ut, bt = kernel.angular[i][j].numba_args()
    out = np.zeros(pts.shape[0])
    K.nu_points(np.ascontiguousarray(pts), mu_j, grid.n, grid.h, grid.x0, kernel.gamma,
                float(kernel.cphi[i, j]), code, c, ut, bt, sphere.nodes, sphere.weights, out)
    return float(out[0]) if np.ndim(v) == 1 else out


def _prefactor(kernel: KernelModel, mixture: Mixture, i: int, j: int) -> float:
    m_j = mixture.masses[j]
    return kernel.cphi[i, j] * kernel.l_b[i, j] / m_j ** ((1.0 + kernel.gamma) / 2.0)


def nu_bounds(kernel: KernelModel, mixture: Mixture, i: int, j: int, v):
    """Explicit corridor (lower, upper) for nu_ij at velocity v (or speed |v|).

    lower = P max{m_j^{gamma/2} |v|^gamma, sqrt(2/(e pi))}, upper = P (m_j^{gamma/2} |v|^gamma + 2),
    with P = C^Phi_ij l_b_ij / m_j^{(1+gamma)/2}.
    """
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v, axis=-1) if v.ndim >= 1 and v.shape[-1:] == (3,) else np.abs(v)
    g = kernel.gamma
    pref = _prefactor(kernel, mixture, i, j)
    x = mixture.masses[j] ** (g / 2.0) * r**g
    lower = pref * np.maximum(x, NU_LOWER)
    upper = pref * (x + 2.0)
    if np.ndim(lower) == 0:
        return float(lower), float(upper)
    return lower, upper


def nu_floor(kernel: KernelModel, mixture: Mixture) -> float:
    """nu_0 = min_i sum_j C^Phi_ij l_b_ij / m_j^{(1+gamma)/2} sqrt(2/(e pi))."""
    N = mixture.n_species
    rows = [sum(_prefactor(kernel, mixture, i, j) for j in range(N)) for i in range(N)]
    return float(min(rows) * NU_LOWER)


def nu_field(kernel: KernelModel, mixture: Mixture, grid: VelocityGrid, sphere: SphereRule,
             per_pair: bool = False) -> np.ndarray:
    """nu_i at every node, shape (N, n^3) (or (N, N, n^3) per pair).

    Isotropic pairs use an exact zero-padded FFT convolution of the lattice kernel
    with mu_j, which equals the direct node sum up to rounding.
    """
    N = mixture.n_species
    mu = maxwellian(mixture, grid).values
    out = np.zeros((N, N, grid.size))
    n = grid.n
    lag = np.arange(-(n - 1), n) * grid.h
    X, Y, Z = np.meshgrid(lag, lag, lag, indexing="ij")
    dist = np.sqrt(X * X + Y * Y + Z * Z)
    for i in range(N):
        for j in range(N):
            b = kernel.angular[i][j]
            if b.is_constant:
                ker = np.where(dist > 0, dist**kernel.gamma, 0.0)
                ker *= kernel.cphi[i, j] * b.constant_value * sphere.weights.sum() * grid.h**3
                out[i, j] = fftconvolve(mu[j].reshape(grid.shape), ker, mode="valid").ravel()
            else:
                out[i, j] = nu_ij(kernel, mixture, i, j, grid.points, sphere, grid)
    return out if per_pair else out.sum(axis=1)


class LinearizedOperator:
    """Splitting of the linearized operator on a grid for a given mollifier.

    ``split_apply`` evaluates A, B, nu f and L on the fly (compiled node sums);
    ``matrices`` assembles A and B as dense matrices acting on the stacked vector
    (f_1, ..., f_N), which is practical for n <= 12.

    The default trilinear interpolant is well conditioned for arbitrary fields.
    The Maxwellian-weighted interpolant ("wquad") makes the discrete L annihilate
    mu times collision invariants and keeps its spectrum in the left half plane,
    which is what the perturbation dynamics need, but it amplifies fields whose
    tails are much heavier than mu by factors up to exp(m v_max h).
    """

    def __init__(self, kernel: KernelModel, mixture: Mixture, grid: VelocityGrid, moll: Mollifier,
                 sphere: SphereRule | None = None, interp: str = "trilinear"):
        kernel.check_compatible(mixture)
        self.kernel = kernel
        self.mixture = mixture
        self.grid = grid
        self.moll = moll
        self.sphere = sphere if sphere is not None else SphereRule.product(17)
        self.interp = interp
        self.collision = CollisionOperator(kernel, mixture, grid, self.sphere, method="direct",
                                           interp=interp, escape_cap=1.0)
        self.mu = maxwellian(mixture, grid).values
        self._nu = None
        self._mats = None

    @property
    def nu(self) -> np.ndarray:
        if self._nu is None:
            self._nu = nu_field(self.kernel, self.mixture, self.grid, self.sphere)
        return self._nu

    def _stack(self, fs) -> np.ndarray:
        """(batch, N, n^3) array from a DistributionVec or a list of them."""
        if isinstance(fs, DistributionVec):
            fs = [fs]
        return np.stack([f.values if isinstance(f, DistributionVec) else np.asarray(f, float)
                         for f in fs])

    def apply_AB(self, fs):
        """(A f, B f) for a batch, each of shape (batch, N, n^3), by direct node sums."""
        F = self._stack(fs)
        nb, N, N3 = F.shape
        A = np.zeros_like(F)
        B = np.zeros_like(F)
        for i in range(N):
            for j in range(N):
                fi = np.ascontiguousarray(F[:, i, :].T)
                fj = np.ascontiguousarray(F[:, j, :].T)
                ag, bg, af, bf = (np.zeros((N3, nb)) for _ in range(4))
                K.direct_split(fi, fj, self.mu[i], self.mu[j], *self.collision.kernel_args(i, j),
                               self.sphere.nodes, self.sphere.weights, INTERP_MODES[self.interp],
                               self.moll.delta, ag, bg, af, bf)
                A[:, i, :] += (ag - self.mu[i][:, None] * af).T
                B[:, i, :] += (bg - self.mu[i][:, None] * bf).T
        return A, B

    def apply_L(self, fs) -> np.ndarray:
        """L_i(f) = sum_j Q_ij(mu_i, f_j) + Q_ij(f_i, mu_j) through the collision operator."""
        F = self._stack(fs)
        nb, N, N3 = F.shape
        out = np.zeros_like(F)
        col = self.collision
        for i in range(N):
            mu_i = np.broadcast_to(self.mu[i], (nb, N3))
            for j in range(N):
                mu_j = np.broadcast_to(self.mu[j], (nb, N3))
                g1, fr1, _ = col.direct_batch(i, j, mu_i, F[:, j, :])
                g2, fr2, _ = col.direct_batch(i, j, F[:, i, :], mu_j)
                out[:, i, :] += g1 - mu_i * fr1 + g2 - F[:, i, :] * fr2
        return out

    def split_apply(self, fs, check: bool = True, rtol: float = 1e-9):
        """(A f, B f, nu f, L f) as arrays of shape (batch, N, n^3).

        With ``check`` the identity A + B - nu f = L f is enforced node-wise within
        ``rtol * ||f||_inf`` per sample; a violation raises RuntimeError.
        """
        F = self._stack(fs)
        A, B = self.apply_AB(F)
        nuf = self.nu[None] * F
        L = self.apply_L(F)
        if check:
            res = split_residual(A, B, nuf, L, F)
            bad = res > rtol
            if np.any(bad):
                raise RuntimeError(f"splitting identity violated: relative residual {res.max():.3e}")
        return A, B, nuf, L

    def matrices(self):
        """Dense (A, B) on the stacked unknown (f_1, ..., f_N); cached."""
        if self._mats is None:
            N = self.mixture.n_species
            N3 = self.grid.size
            A = np.zeros((N * N3, N * N3))
            B = np.zeros((N * N3, N * N3))
            for i in range(N):
                for j in range(N):
                    K.assemble_split(self.mu[i], self.mu[j], *self.collision.kernel_args(i, j),
                                     self.sphere.nodes, self.sphere.weights,
                                     INTERP_MODES[self.interp], self.moll.delta,
                                     i * N3, i * N3, j * N3, A, B)
            self._mats = (A, B)
        return self._mats

    def l_matrix(self) -> np.ndarray:
        A, B = self.matrices()
        return A + B - np.diag(self.nu.ravel())


def split_residual(A, B, nuf, L, F) -> np.ndarray:
    """Per-sample max |A + B - nu f - L| / max |f|."""
    res = np.abs(A + B - nuf - L).reshape(len(F), -1).max(axis=1)
    scale = np.abs(F).reshape(len(F), -1).max(axis=1)
    return np.where(scale > 0, res / np.where(scale > 0, scale, 1.0), 0.0)


def split_apply(kernel: KernelModel, mixture: Mixture, moll: Mollifier, f: DistributionVec,
                grid: VelocityGrid | None = None, sphere: SphereRule | None = None, **kwargs):
    """(A f, B f, nu f, L f) as DistributionVecs; see :class:`LinearizedOperator`."""
    grid = f.grid if grid is None else grid
    op = LinearizedOperator(kernel, mixture, grid, moll, sphere, **kwargs)
    A, B, nuf, L = op.split_apply(f)
    return tuple(DistributionVec(grid, x[0]) for x in (A, B, nuf, L))


def gaussian_bumps(grid: VelocityGrid, n_species: int, count: int, rng: np.random.Generator,
                   width_range=(0.3, 1.5), centre_radius: float | None = None) -> list:
    """Random anisotropic Gaussian bumps, one per species, with random signs.

    Centres satisfy |c| <= ``centre_radius`` (default v_max / 2) and per-axis widths
    lie in ``width_range``.
    """
    if centre_radius is None:
        centre_radius = grid.v_max / 2.0
    out = []
    pts = grid.points
    for _ in range(count):
        vals = np.zeros((n_species, grid.size))
        for i in range(n_species):
            d = rng.standard_normal(3)
            c = d / np.linalg.norm(d) * centre_radius * rng.uniform() ** (1.0 / 3.0)
            w = rng.uniform(*width_range, size=3)
            amp = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5)
            vals[i] = amp * np.exp(-0.5 * np.sum(((pts - c) / w) ** 2, axis=1))
        out.append(DistributionVec(grid, vals))
    return out


def _weighted_sup_per_sample(values, wfield):
    return np.sum(np.max(np.abs(values) * wfield[None], axis=2), axis=1)


def audit_control_B(kernel: KernelModel, mixture: Mixture, moll: Mollifier, weight: Weight,
                    samples, op: LinearizedOperator | None = None, grid: VelocityGrid | None = None,
                    use_matrix: bool = True) -> dict:
    """max over samples of sum_i sup_v w_i |B_i f| / nu_i, divided by ||f||_{L^inf(w)}."""
    F = np.stack([s.values for s in samples])
    grid = samples[0].grid if grid is None else grid
    if op is None:
        op = LinearizedOperator(kernel, mixture, grid, moll)
    if use_matrix:
        _, Bm = op.matrices()
        Bf = (F.reshape(len(F), -1) @ Bm.T).reshape(F.shape)
    else:
        _, Bf = op.apply_AB(F)
    w = weight_field(weight, mixture, grid)
    num = _weighted_sup_per_sample(Bf / op.nu[None], w)
    den = _weighted_sup_per_sample(F, w)
    if np.any(den == 0):
        raise ValueError("zero samples are not allowed")
    q = num / den
    return {"quotient": float(q.max()), "per_sample": q, "delta": moll.delta}


def audit_control_A(kernel: KernelModel, mixture: Mixture, moll: Mollifier, weight: Weight,
                    beta: float, samples, op: LinearizedOperator | None = None,
                    use_matrix: bool = True) -> dict:
    """max over samples of ||A f||_{L^inf(<v>^beta mu^{-1/2})} / ||f||_{L^inf(w)}.

    Also reports the largest |A f| found at nodes with |v| > 2/delta (zero by construction).
    """
    if not beta > 1.5:
        raise ValueError("beta must exceed 3/2")
    F = np.stack([s.values for s in samples])
    grid = samples[0].grid
    if op is None:
        op = LinearizedOperator(kernel, mixture, grid, moll)
    if use_matrix:
        Am, _ = op.matrices()
        Af = (F.reshape(len(F), -1) @ Am.T).reshape(F.shape)
    else:
        Af, _ = op.apply_AB(F)
    mu = op.mu
    wa = (1.0 + grid.speed2) ** (beta / 2.0) / np.sqrt(mu)
    num = _weighted_sup_per_sample(Af, wa)
    den = _weighted_sup_per_sample(F, weight_field(weight, mixture, grid))
    outside = grid.speed > 2.0 / moll.delta
    support = float(np.abs(Af[:, :, outside]).max()) if outside.any() else 0.0
    q = num / den
    return {"constant": float(q.max()), "per_sample": q, "outside_support_max": support}


def gain_exponent(kernel: KernelModel, weight: Weight, kappa2_prime: float | None = None):
    """c(w): 0 for polynomial weights, kappa2'/gamma for exponential weights with gamma > 0.

    Returns (c, flag) where ``flag`` notes the gamma = 0 exponential case (c forced to 0).
    """
    if weight.kind == "polynomial":
        return 0.0, None
    if kernel.gamma == 0.0:
        return 0.0, "gamma = 0 with exponential weight: gain exponent set to 0"
    k2p = 0.5 * weight.kappa2 if kappa2_prime is None else kappa2_prime
    if not (0.0 < k2p < weight.kappa2):
        raise ValueError("kappa2' must lie in (0, kappa2)")
    return k2p / kernel.gamma, None


def audit_control_Q(kernel: KernelModel, mixture: Mixture, weight: Weight, pairs,
                    collision: CollisionOperator | None = None, kappa2_prime: float | None = None,
                    sphere: SphereRule | None = None) -> dict:
    """Empirical sup of sum_i sup_v w_i nu_i^{-1+c(w)} |Q_i(f, g)| / (||f||_w ||g||_w).

    Q_i(f, g) = sum_j Q_ij(f_i, g_j).
    """
    grid = pairs[0][0].grid
    if collision is None:
        collision = CollisionOperator(kernel, mixture, grid, sphere)
    c, flag = gain_exponent(kernel, weight, kappa2_prime)
    nu = nu_field(kernel, mixture, grid, collision.sphere)
    w = weight_field(weight, mixture, grid)
    N = mixture.n_species
    quot = []
    for f, g in pairs:
        q = np.zeros((N, grid.size))
        for i in range(N):
            for j in range(N):
                q[i] += collision.q_ij(i, j, f[i], g[j]).total
        num = float(np.sum(np.max(w * nu ** (c - 1.0) * np.abs(q), axis=1)))
        quot.append(num / (weighted_sup_norm(weight, mixture, f) * weighted_sup_norm(weight, mixture, g)))
    quot = np.asarray(quot)
    return {"constant": float(quot.max()), "per_sample": quot, "c_w": c, "flag": flag}
