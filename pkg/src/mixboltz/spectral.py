"""Fourier evaluation of Q_ij for angular parts that are constant.

For b_ij = b0 the gain term can be rewritten with y = v - alpha u, alpha = m_j / M,
beta = m_i / M and rho = |u| as

    Q+(v) = C b0 int_0^R rho^{2+gamma} E_{alpha rho}[ P_rho ](v) d rho,
    P_rho(y) = int_{S^2} f(y + alpha rho sigma) g(y - beta rho sigma) d sigma,

where E_a[P](v) is the average of P over the sphere of radius ``a`` around ``v``.
Shifts and sphere averages are diagonal in Fourier space on the periodised grid,
so every term costs a few FFTs. The loss frequency is the convolution of g with
C l_b |u|^gamma restricted to |u| <= R. Using the same sphere rule for the shift
directions and the averages makes the discrete gain and loss have identical
totals, so mass is conserved to rounding.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.fft as sfft


class SpectralCollision:
    """Fourier-space collision engine on a cell-centred grid.

    ``radius_fraction`` sets the truncation R = radius_fraction * v_max of the relative
    speed; values below 0.906 avoid aliasing of the periodised convolution.
    """

    def __init__(self, grid, sphere, gamma: float, n_radial: int = 16, radius_fraction: float = 0.8,
                 chunk: int = 64):
        self.grid = grid
        self.sphere = sphere
        self.gamma = float(gamma)
        n = grid.n
        self.n = n
        self.full_shape = (n, n, n)
        L = grid.v_max
        k = np.fft.fftfreq(n, d=1.0 / n)
        self.xi = math.pi * k / L
        self.xir = math.pi * np.arange(n // 2 + 1) / L
        mask = np.ones((n, n, n // 2 + 1))
        mask[n // 2, :, :] = 0.0
        mask[:, n // 2, :] = 0.0
        mask[:, :, n // 2] = 0.0
        self.mask = mask
        self.radius = radius_fraction * L
        x, w = np.polynomial.legendre.leggauss(n_radial)
        self.rho = 0.5 * self.radius * (x + 1.0)
        self.rho_w = 0.5 * self.radius * w
        self.chunk = chunk
        self._mult = {}

    def _avg(self, a: float) -> np.ndarray:
        """Fourier multiplier of the sphere sum sum_e w_e P(v - a e)."""
        key = round(float(a), 14)
        c = self._mult.get(key)
        if c is None:
            X = self.xi[:, None, None]
            Y = self.xi[None, :, None]
            Z = self.xir[None, None, :]
            c = np.zeros(self.mask.shape)
            for e, w in zip(self.sphere.nodes, self.sphere.weights):
                c += w * np.cos(a * (X * e[0] + Y * e[1] + Z * e[2]))
            self._mult[key] = c
        return c

    def transform(self, f) -> np.ndarray:
        return sfft.rfftn(np.asarray(f).reshape(self.full_shape)) * self.mask

    def filtered(self, f) -> np.ndarray:
        """Nodal values of the trigonometric interpolant used by the engine."""
        return sfft.irfftn(self.transform(f), s=self.full_shape).ravel()

    def _shifted(self, fh, shifts) -> np.ndarray:
        """Values of the interpolant of ``f`` at nodes + s for each row s of ``shifts``."""
        ex = np.exp(1j * shifts[:, 0:1] * self.xi[None, :])
        ey = np.exp(1j * shifts[:, 1:2] * self.xi[None, :])
        ez = np.exp(1j * shifts[:, 2:3] * self.xir[None, :])
        ph = ex[:, :, None, None] * ey[:, None, :, None] * ez[:, None, None, :]
        ph *= fh[None]
        return sfft.irfftn(ph, s=self.full_shape, axes=(1, 2, 3))

    def _products(self, fh, gh, a: float, b: float, rho: float, same: bool) -> np.ndarray:
        """P_rho(y) = sum_sigma w_sigma f(y + a rho sigma) g(y - b rho sigma)."""
        sig = self.sphere.nodes
        wts = self.sphere.weights
        S = len(wts)
        if same:
            # g = f and a = b: the g shift at sigma is the f shift at -sigma
            fs = np.concatenate([self._shifted(fh, a * rho * sig[lo:lo + self.chunk])
                                 for lo in range(0, S, self.chunk)])
            return np.einsum("s,sijk,sijk->ijk", wts, fs, fs[self.sphere.antipode])
        P = np.zeros(self.full_shape)
        for lo in range(0, S, self.chunk):
            hi = min(S, lo + self.chunk)
            fs = self._shifted(fh, a * rho * sig[lo:hi])
            gs = self._shifted(gh, -b * rho * sig[lo:hi])
            P += np.einsum("s,sijk,sijk->ijk", wts[lo:hi], fs, gs)
        return P

    def gain_pair(self, f, g, mi: float, mj: float, cphi: float, b0: float, both: bool = True,
                  same: bool = False):
        """Gains of Q_ij(f, g) and, if ``both``, of Q_ji(g, f); flat arrays."""
        fh = self.transform(f)
        gh = fh if same else self.transform(g)
        M = mi + mj
        a = mj / M
        b = mi / M
        acc_i = np.zeros(self.mask.shape, dtype=complex)
        acc_j = np.zeros(self.mask.shape, dtype=complex) if both else None
        for rho, wr in zip(self.rho, self.rho_w):
            if rho == 0.0:
                continue
            Ph = sfft.rfftn(self._products(fh, gh, a, b, rho, same and a == b))
            coef = wr * rho ** (2.0 + self.gamma) * cphi * b0
            acc_i += coef * self._avg(a * rho) * Ph
            if both:
                acc_j += coef * self._avg(b * rho) * Ph
        gi = sfft.irfftn(acc_i, s=self.full_shape).ravel()
        gj = sfft.irfftn(acc_j, s=self.full_shape).ravel() if both else None
        return gi, gj

    def frequency_multiplier(self, cphi: float, b0: float) -> np.ndarray:
        lsum = b0 * float(np.sum(self.sphere.weights))
        K = np.zeros(self.mask.shape)
        for rho, wr in zip(self.rho, self.rho_w):
            K += wr * rho ** (2.0 + self.gamma) * cphi * lsum * self._avg(rho)
        return K

    def frequency(self, g, cphi: float, b0: float) -> np.ndarray:
        """nu_g(v) = C l_b int_{|u| <= R} |u|^gamma g(v - u) du, flat array."""
        K = self.frequency_multiplier(cphi, b0)
        return sfft.irfftn(K * self.transform(g), s=self.full_shape).ravel()
