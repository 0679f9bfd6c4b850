"""Bi-species collision operators, the A-function and the radial gain majorant.

Two discretisations of Q_ij are available:

``direct``
    The node sum over v* and a sphere rule for sigma, with off-grid values
    f(v'), g(v'*) obtained by interpolation. Cost O(n^6 |sphere|); used for the
    linearized operators, anisotropic angular parts and small grids.
``fourier``
    The same integral evaluated with FFTs (see :mod:`mixboltz.spectral`), valid for
    constant angular parts. Relative speeds are truncated at R = 0.8 v_max.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gammaln, roots_jacobi

from . import _kernels as K
from .equilibrium import DistributionVec, VelocityGrid
from .mixture import KernelModel, Mixture
from .spectral import SpectralCollision

INTERP_MODES = {"wquad": K.INTERP_WQUAD, "trilinear": K.INTERP_TRILINEAR}


@dataclass(frozen=True, eq=False)
class SphereRule:
    """Quadrature on the unit sphere: unit ``nodes`` (S, 3) and positive ``weights``."""

    nodes: np.ndarray
    weights: np.ndarray
    degree: int = -1

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 3 or weights.shape != (nodes.shape[0],):
            raise ValueError("nodes must be (S, 3) and weights (S,)")
        if np.any(weights <= 0):
            raise ValueError("sphere weights must be positive")
        if abs(weights.sum() - 4.0 * math.pi) > 1e-12 * 4.0 * math.pi:
            raise ValueError(f"sphere weights sum to {weights.sum()!r}, expected 4 pi")
        if np.max(np.abs(np.linalg.norm(nodes, axis=1) - 1.0)) > 1e-12:
            raise ValueError("sphere nodes must be unit vectors")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def product(cls, degree: int = 17) -> "SphereRule":
        """Gauss-Legendre in cos(theta) times the trapezoid rule in phi.

        Exact for spherical harmonics up to ``degree``; the azimuth count is even
        and offset by half a step, which makes the node set antipodally symmetric.
        """
        if degree < 1:
            raise ValueError("degree must be >= 1")
        n_polar = degree // 2 + 1
        n_az = degree + 1 + (degree + 1) % 2
        x, w = np.polynomial.legendre.leggauss(n_polar)
        phi = 2.0 * math.pi * (np.arange(n_az) + 0.5) / n_az
        ct = np.repeat(x, n_az)
        st = np.sqrt(1.0 - ct * ct)
        ph = np.tile(phi, n_polar)
        nodes = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=1)
        weights = np.repeat(w, n_az) * (2.0 * math.pi / n_az)
        weights *= 4.0 * math.pi / weights.sum()
        return cls(nodes, weights, degree)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @cached_property
    def antipode(self) -> np.ndarray:
        """Index of -sigma for every node (raises if the rule is not symmetric)."""
        d = np.linalg.norm(self.nodes[:, None, :] + self.nodes[None, :, :], axis=2)
        idx = np.argmin(d, axis=1)
        if np.max(d[np.arange(self.size), idx]) > 1e-10:
            raise ValueError("sphere rule is not antipodally symmetric")
        return idx

    def integrate(self, func) -> float:
        return float(np.dot(self.weights, func(self.nodes)))


def post_collision(v, v_star, sigma, m_i: float, m_j: float):
    """Post-collision velocities (v', v'*) of an elastic (m_i, m_j) collision."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    norm = np.linalg.norm(sigma, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-9):
        raise ValueError("sigma must be a unit vector")
    M = m_i + m_j
    ur = np.linalg.norm(v - v_star, axis=-1)[..., None]
    centre = m_i * v + m_j * v_star
    vp = (centre + m_j * ur * sigma) / M
    vsp = (centre - m_i * ur * sigma) / M
    return vp, vsp


@dataclass
class CollisionResult:
    """Gain, loss = f * freq, and the loss frequency of one Q_ij evaluation (flat arrays)."""

    gain: np.ndarray
    loss: np.ndarray
    freq: np.ndarray
    escape_fraction: float = 0.0
    method: str = "direct"

    @property
    def total(self) -> np.ndarray:
        return self.gain - self.loss


class EscapeError(RuntimeError):
    """Too much collision weight leaves the velocity box."""


class CollisionOperator:
    """Evaluator of Q_ij and Q_i on a fixed grid and sphere rule.

    ``method`` is ``"direct"``, ``"fourier"`` or ``"auto"`` (Fourier whenever the
    angular part is constant). The Fourier engine is built lazily and reused.
    """

    def __init__(self, kernel: KernelModel, mixture: Mixture, grid: VelocityGrid,
                 sphere: SphereRule | None = None, method: str = "auto", interp: str = "wquad",
                 escape_cap: float = 0.2, n_radial: int = 16, radius_fraction: float = 0.8):
        kernel.check_compatible(mixture)
        if method not in ("auto", "direct", "fourier"):
            raise ValueError(f"unknown method {method!r}")
        if interp not in INTERP_MODES:
            raise ValueError(f"unknown interpolation {interp!r}")
        self.kernel = kernel
        self.mixture = mixture
        self.grid = grid
        self.sphere = sphere if sphere is not None else SphereRule.product(17)
        self.method = method
        self.interp = interp
        self.escape_cap = escape_cap
        self.n_radial = n_radial
        self.radius_fraction = radius_fraction
        self._spectral = None

    @property
    def spectral(self) -> SpectralCollision:
        if self._spectral is None:
            self._spectral = SpectralCollision(self.grid, self.sphere, self.kernel.gamma,
                                               self.n_radial, self.radius_fraction)
        return self._spectral

    def method_for(self, i: int, j: int) -> str:
        if self.method != "auto":
            if self.method == "fourier" and not self.kernel.angular[i][j].is_constant:
                raise ValueError("the Fourier method needs a constant angular part")
            return self.method
        return "fourier" if self.kernel.angular[i][j].is_constant else "direct"

    def node_table(self, i: int) -> np.ndarray:
        """exp(m_i x_l^2 / 2) on the grid axis, used by the weighted interpolant."""
        return node_table(self.grid, self.mixture.masses[i])

    def kernel_args(self, i: int, j: int):
        """Positional arguments shared by the compiled pair kernels."""
        grid = self.grid
        code, c, ut, bt = self.kernel.angular[i][j].numba_args()
        return (grid.n, grid.h, grid.x0, self.mixture.masses[i], self.mixture.masses[j],
                self.node_table(i), self.node_table(j), self.kernel.gamma,
                float(self.kernel.cphi[i, j]), code, c, ut, bt)

    def direct_batch(self, i, j, f, g, moll=K.MOLL_NONE, delta=1.0):
        """Direct Q_ij on batches f, g of shape (k, n^3): (gain, freq, escape fraction)."""
        f = np.ascontiguousarray(np.atleast_2d(f).T, dtype=float)
        g = np.ascontiguousarray(np.atleast_2d(g).T, dtype=float)
        gain = np.zeros_like(f)
        freq = np.zeros_like(f)
        stats = np.zeros(2)
        K.direct_q(f, g, *self.kernel_args(i, j), self.sphere.nodes, self.sphere.weights,
                   INTERP_MODES[self.interp], moll, float(delta), gain, freq, stats)
        esc = stats[0] / stats[1] if stats[1] > 0 else 0.0
        return gain.T, freq.T, esc

    def _direct(self, i, j, f, g, moll=K.MOLL_NONE, delta=1.0):
        gain, freq, esc = self.direct_batch(i, j, f, g, moll, delta)
        return gain[0], freq[0], esc

    def _check_escape(self, esc):
        if esc > self.escape_cap:
            raise EscapeError(f"domain-escape fraction {esc:.3f} exceeds cap {self.escape_cap}")

    def q_ij(self, i: int, j: int, f, g) -> CollisionResult:
        f = np.asarray(f, dtype=float).ravel()
        g = np.asarray(g, dtype=float).ravel()
        if self.method_for(i, j) == "direct":
            gain, freq, esc = self._direct(i, j, f, g)
            self._check_escape(esc)
            return CollisionResult(gain, f * freq, freq, esc, "direct")
        return self._fourier_pair(i, j, f, g, both=False)[0]

    def _fourier_pair(self, i, j, f, g, both):
        sp = self.spectral
        b0 = self.kernel.angular[i][j].constant_value
        cphi = float(self.kernel.cphi[i, j])
        mi, mj = self.mixture.masses[i], self.mixture.masses[j]
        same = both is False and i == j and np.array_equal(f, g)
        gi, gj = sp.gain_pair(f, g, mi, mj, cphi, b0, both=both, same=same)
        ff = sp.filtered(f)
        fg = sp.filtered(g)
        nu_g = sp.frequency(g, cphi, b0)
        res_i = CollisionResult(gi, ff * nu_g, nu_g, 0.0, "fourier")
        if not both:
            return res_i, None
        nu_f = sp.frequency(f, cphi, b0)
        return res_i, CollisionResult(gj, fg * nu_f, nu_f, 0.0, "fourier")

    def q_full(self, F: DistributionVec) -> tuple[DistributionVec, DistributionVec, dict]:
        """Q_i(F) = sum_j Q_ij(F_i, F_j); returns (gain, loss, info) as distributions.

        ``info["freq"]`` holds the loss frequency sum_j nu_{F_j} of every species and
        ``info["escape_fraction"]`` the escape fraction of every direct pair.
        """
        N = self.mixture.n_species
        gain = np.zeros((N, self.grid.size))
        loss = np.zeros((N, self.grid.size))
        freq = np.zeros((N, self.grid.size))
        escape = {}
        for i in range(N):
            for j in range(i, N):
                if self.method_for(i, j) == "fourier":
                    if i == j:
                        r, _ = self._fourier_pair(i, i, F[i], F[i], both=False)
                        pairs = ((i, r),)
                    else:
                        ri, rj = self._fourier_pair(i, j, F[i], F[j], both=True)
                        pairs = ((i, ri), (j, rj))
                else:
                    pairs = []
                    for a, b in ((i, j), (j, i)) if i != j else ((i, i),):
                        r = self.q_ij(a, b, F[a], F[b])
                        escape[(a, b)] = r.escape_fraction
                        pairs.append((a, r))
                for a, r in pairs:
                    gain[a] += r.gain
                    loss[a] += r.loss
                    freq[a] += r.freq
        return (DistributionVec(self.grid, gain), DistributionVec(self.grid, loss),
                {"escape_fraction": escape, "freq": freq})

    def apply(self, F: DistributionVec) -> DistributionVec:
        gain, loss, _ = self.q_full(F)
        return gain - loss


def node_table(grid: VelocityGrid, mass: float) -> np.ndarray:
    arg = 0.5 * mass * grid.axis**2
    if arg.max() > 700.0:
        raise ValueError("grid too wide for the weighted interpolant at this mass; "
                         "reduce v_max or use interp='trilinear'")
    return np.exp(arg)


def q_ij(kernel: KernelModel, mixture: Mixture, i: int, j: int, f, g, grid: VelocityGrid,
         sphere: SphereRule | None = None, method: str = "auto", **kwargs) -> CollisionResult:
    """Q_ij(f, g) on the grid; see :class:`CollisionOperator`."""
    return CollisionOperator(kernel, mixture, grid, sphere, method, **kwargs).q_ij(i, j, f, g)


def q_full(kernel: KernelModel, mixture: Mixture, F: DistributionVec, grid: VelocityGrid | None = None,
           sphere: SphereRule | None = None, method: str = "auto", **kwargs) -> DistributionVec:
    """Q_i(F) = sum_j Q_ij(F_i, F_j) for every species."""
    grid = F.grid if grid is None else grid
    return CollisionOperator(kernel, mixture, grid, sphere, method, **kwargs).apply(F)


def a_function(a1: float, a2: float, a3: float, a4: float) -> float:
    """Closed form of the triple sphere integral A(a1, a2, a3, a4), clamped at 0."""
    a = [float(x) for x in (a1, a2, a3, a4)]
    if not all(x > 0 and math.isfinite(x) for x in a):
        raise ValueError(f"a_function needs positive arguments, got {a}")
    s1, s2, s3, s4 = sorted(a, reverse=True)
    val = 8.0 * math.pi**2 / (s1 * s2 * s3 * s4) * (s4 + s3 - max(s1 - s2, s3 - s4))
    return max(0.0, val)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Samples of r -> F(r) on [0, r_max], linearly interpolated, zero beyond r_max."""

    r: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 2:
            raise ValueError("r and values must be 1D arrays of equal length >= 2")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ValueError("r must start at 0 and increase strictly")
        if not np.all(np.isfinite(v)):
            raise ValueError("profile values must be finite")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, func, r_max: float, n: int = 4001) -> "RadialProfile":
        r = np.linspace(0.0, r_max, n)
        return cls(r, func(r))

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def __call__(self, r):
        return np.interp(np.abs(r), self.r, self.values, right=0.0)

    def scaled(self, lam: float) -> "RadialProfile":
        return RadialProfile(self.r, lam * self.values)

    def truncated(self, rel: float = 1e-10) -> bool:
        """True when the tail at r_max has not decayed below ``rel`` of the peak."""
        peak = np.max(np.abs(self.values))
        return bool(peak > 0 and abs(self.values[-1]) > rel * peak)


def _legendre_panels(a: float, b: float, width: float, order: int):
    if b <= a:
        return np.zeros(0), np.zeros(0)
    m = max(1, int(math.ceil((b - a) / width)))
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, m + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _sqrt_panel(a: float, b: float, order: int):
    # t = a + (b - a) s^2 removes a square-root endpoint behaviour at t = a
    if b <= a:
        return np.zeros(0), np.zeros(0)
    x, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (x + 1.0)
    return a + (b - a) * s * s, (b - a) * s * w


def random_radial_mixture(rng: np.random.Generator, max_components: int = 3, n: int = 4001,
                          signed: bool = True) -> RadialProfile:
    """Random radial Gaussian mixture sum_k a_k exp(-(r - c_k)^2 / (2 s_k^2)) on [0, r_max].

    Centres c_k lie in [0, 2], widths s_k in [0.3, 1.2] and amplitudes |a_k| in
    [0.2, 1]; r_max is chosen so every component has decayed below 1e-12.
    """
    k = int(rng.integers(1, max_components + 1))
    c = rng.uniform(0.0, 2.0, k)
    s = rng.uniform(0.3, 1.2, k)
    a = rng.uniform(0.2, 1.0, k)
    if signed:
        a *= rng.choice([-1.0, 1.0], k)
    r_max = float(np.max(c + 8.0 * s))

    def func(r):
        r = np.asarray(r, dtype=float)[..., None]
        return np.sum(a * np.exp(-0.5 * ((r - c) / s) ** 2), axis=-1)

    return RadialProfile.from_function(func, r_max, n)


def q_plus_radial_majorant(kernel: KernelModel, mixture: Mixture, i: int, j: int,
                           F: RadialProfile, G: RadialProfile, r: float, panel_width: float = 0.25,
                           order: int = 8, strict: bool = False) -> float:
    """Radial upper bound for |Q+_ij(F, G)(v)| at |v| = r.

    Integrates 1{m_i r'^2 + m_j r'*^2 >= m_i r^2} B(r, r', r'*) |F|(r') |G|(r'*) over
    [0, r_max(F)] x [0, r_max(G)]. The inner variable r'* is split at the diagonal
    r'* = r', where |r' - r'*|^(gamma - 1) is integrated by Gauss-Jacobi rules that
    carry the singular factor exactly, and at the edge of the indicator, where a
    square-root substitution absorbs the behaviour of r*. The collision constant
    C^Phi_ij is not included.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    for prof, name in ((F, "F"), (G, "G")):
        if prof.truncated():
            raise ValueError(f"profile {name} is truncated before decaying below 1e-10 of its peak")
    mi, mj = mixture.masses[i], mixture.masses[j]
    gamma = kernel.gamma
    binf = kernel.b_inf[i, j]
    pref = 16.0 * math.pi**2 * binf * (mi + mj) ** 2 / (mi * mj**2) / r
    ratio = mi / mj
    rG = G.r_max
    alpha = gamma - 1.0
    if gamma < 1.0:
        xj, wj = roots_jacobi(order, 0.0, alpha)  # weight (1 + x)^alpha on [-1, 1]

    def smooth(rp, rs):
        rstar = np.sqrt(np.maximum(ratio * rp * rp + rs * rs - ratio * r * r, 0.0))
        mn = np.minimum(np.minimum(mi * r, mj * rstar), np.minimum(mi * rp, mj * rs))
        return rp * rs * mn * np.abs(F(rp)) * np.abs(G(rs))

    def inner(rp):
        lo = math.sqrt(max(ratio * (r * r - rp * rp), 0.0))
        if lo >= rG:
            return 0.0
        total = 0.0
        pieces = []
        if gamma < 1.0 and lo < rp < rG:
            pieces = [(lo, rp, "left"), (rp, rG, "right")]
        else:
            pieces = [(lo, rG, "plain")]
        for a, b, kind in pieces:
            if b <= a:
                continue
            if kind == "plain" or gamma == 1.0:
                ts, ws = _segment_nodes(a, b, lo, panel_width, order)
                total += np.sum(ws * smooth(rp, ts) * np.abs(rp - ts) ** alpha) if ts.size else 0.0
                continue
            # panel adjacent to the diagonal uses Gauss-Jacobi with the singular weight
            width = min(panel_width, b - a)
            if kind == "left":
                sa, sb = rp - width, rp
                t = rp - 0.5 * width * (1.0 + xj)  # distance to diagonal d = width (1 + x) / 2
            else:
                sa, sb = rp, rp + width
                t = rp + 0.5 * width * (1.0 + xj)
            total += (0.5 * width) ** (1.0 + alpha) * np.sum(wj * smooth(rp, t))
            ra, rb = (a, sa) if kind == "left" else (sb, b)
            ts, ws = _segment_nodes(ra, rb, lo, panel_width, order)
            if ts.size:
                total += np.sum(ws * smooth(rp, ts) * np.abs(rp - ts) ** alpha)
        return total

    rF = F.r_max
    cuts = sorted({0.0, min(r, rF), rF})
    outer_t, outer_w = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        t, w = _legendre_panels(a, b, panel_width, order)
        outer_t.append(t)
        outer_w.append(w)
    outer_t = np.concatenate(outer_t)
    outer_w = np.concatenate(outer_w)
    vals = np.array([inner(t) for t in outer_t])
    return float(pref * np.dot(outer_w, vals))


def _segment_nodes(a, b, lo, width, order):
    """Composite rule on [a, b], using a square-root panel when a is the indicator edge."""
    if b <= a:
        return np.zeros(0), np.zeros(0)
    if lo > 0.0 and a == lo:
        first = min(b, a + width)
        t1, w1 = _sqrt_panel(a, first, order)
        t2, w2 = _legendre_panels(first, b, width, order)
        return np.concatenate([t1, t2]), np.concatenate([w1, w2])
    return _legendre_panels(a, b, width, order)


def q_plus_direct_mc(kernel: KernelModel, mixture: Mixture, i: int, j: int, F, G, r: float,
                     n_samples: int = 200_000, seed: int = 0, scale: float | None = None):
    """Monte Carlo estimate of Q+_ij(F, G)(v) at v = (r, 0, 0) for radial F, G.

    Samples v* from a Student-t proposal (5 degrees of freedom, radial ``scale``) and
    sigma uniformly; C^Phi_ij is omitted as in the majorant. Returns (mean, standard error).
    """
    rng = np.random.default_rng(seed)
    mi, mj = mixture.masses[i], mixture.masses[j]
    b = kernel.angular[i][j]
    gamma = kernel.gamma
    if scale is None:
        scale = 1.5 / math.sqrt(min(mi, mj))
    nu = 5.0
    z = rng.standard_normal((n_samples, 3))
    chi = rng.chisquare(nu, n_samples)
    vs = scale * z / np.sqrt(chi / nu)[:, None]
    # multivariate t density in 3D
    q = np.sum(vs * vs, axis=1) / scale**2
    logc = gammaln((nu + 3) / 2) - gammaln(nu / 2) - 1.5 * math.log(nu * math.pi) - 3 * math.log(scale)
    dens = np.exp(logc - 0.5 * (nu + 3) * np.log1p(q / nu))
    sig = rng.standard_normal((n_samples, 3))
    sig /= np.linalg.norm(sig, axis=1)[:, None]
    v = np.array([r, 0.0, 0.0])
    u = v - vs
    ur = np.linalg.norm(u, axis=1)
    cos = np.einsum("ij,ij->i", sig, u) / np.where(ur > 0, ur, 1.0)
    vp, vsp = post_collision(np.broadcast_to(v, vs.shape), vs, sig, mi, mj)
    vals = b(cos) * ur**gamma * F(np.linalg.norm(vp, axis=1)) * G(np.linalg.norm(vsp, axis=1))
    est = 4.0 * math.pi * vals / dens
    return float(est.mean()), float(est.std(ddof=1) / math.sqrt(n_samples))
