"""Compiled inner loops for the direct (quadrature) collision integrals.

Grid nodes are ``x0 + l h`` for ``l = 0..n-1`` on each axis, flattened in C order.
Off-grid values use one of two interpolants:

* ``INTERP_WQUAD``: 27-point quadratic Lagrange interpolation of ``f exp(m|v|^2/2)``
  multiplied back by ``exp(-m|v|^2/2)``. Exact for Maxwellians times quadratic
  polynomials, so equilibria and collision invariants are reproduced exactly.
  The node factors ``exp(m x_l^2 / 2)`` are tabulated per axis (``et``).
* ``INTERP_TRILINEAR``: 8-point trilinear interpolation, zero outside the node box.

Every off-grid evaluation is described by a stencil: a base node index and three
weights per axis acting on nodes base, base+1, base+2 along that axis. Batched
field arguments are node-major arrays (n^3, batch), so one geometric pass serves
many fields with contiguous loads.
"""

import math

import numpy as np
from numba import njit

INTERP_WQUAD = 0
INTERP_TRILINEAR = 1

MOLL_NONE = 0
MOLL_THETA = 1
MOLL_COMPLEMENT = 2


@njit(cache=True, inline="always", error_model="numpy", fastmath=True)
def _bval(kind, c, utab, btab, u):
    if kind == 0:
        return c
    if kind == 1:
        if u > 1.0:
            u = 1.0
        elif u < -1.0:
            u = -1.0
        return c * abs(u) * math.sqrt(1.0 - u * u)
    # piecewise-linear table on [-1, 1]
    m = utab.shape[0]
    if u <= utab[0]:
        return btab[0]
    if u >= utab[m - 1]:
        return btab[m - 1]
    lo = 0
    hi = m - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if utab[mid] <= u:
            lo = mid
        else:
            hi = mid
    t = (u - utab[lo]) / (utab[hi] - utab[lo])
    return btab[lo] + t * (btab[hi] - btab[lo])


@njit(cache=True, inline="always", error_model="numpy", fastmath=True)
def _step(s):
    # smooth transition: 0 for s <= 0, 1 for s >= 1, C-infinity in between
    if s <= 0.0:
        return 0.0
    if s >= 1.0:
        return 1.0
    a = math.exp(-1.0 / s)
    b = math.exp(-1.0 / (1.0 - s))
    return a / (a + b)


@njit(cache=True, inline="always", error_model="numpy", fastmath=True)
def theta_speed(r, delta):
    return _step((2.0 / delta - r) * delta)


@njit(cache=True, inline="always", error_model="numpy", fastmath=True)
def theta_relative(r, delta):
    return _step((r - delta) / delta) * _step((2.0 / delta - r) * delta)


@njit(cache=True, inline="always", error_model="numpy", fastmath=True)
def theta_angle(c, delta):
    return _step((1.0 - delta - abs(c)) / delta)


@njit(cache=True, inline="always", error_model="numpy", fastmath=True)
def _axis(mode, y, n, x0, h, et):
    """(start node, w0, w1, w2, inside) for one coordinate."""
    t = (y - x0) / h
    if mode == INTERP_WQUAD:
        ci = int(math.floor(t + 0.5))
        if ci < 1:
            ci = 1
        elif ci > n - 2:
            ci = n - 2
        d = t - ci
        return (ci - 1, 0.5 * d * (d - 1.0) * et[ci - 1], (1.0 - d * d) * et[ci],
                0.5 * d * (d + 1.0) * et[ci + 1], True)
    if t < 0.0 or t > n - 1.0:
        return 0, 0.0, 0.0, 0.0, False
    ix = min(int(t), n - 2)
    d = t - ix
    if ix <= n - 3:
        return ix, 1.0 - d, d, 0.0, True
    return ix - 1, 0.0, 1.0 - d, d, True


@njit(cache=True, inline="always", error_model="numpy", fastmath=True)
def _point(mode, y0, y1, y2, n, x0, h, mass, et):
    sx, x0w, x1w, x2w, ix = _axis(mode, y0, n, x0, h, et)
    sy, y0w, y1w, y2w, iy = _axis(mode, y1, n, x0, h, et)
    sz, z0w, z1w, z2w, iz = _axis(mode, y2, n, x0, h, et)
    scale = 1.0
    if mode == INTERP_WQUAD:
        scale = math.exp(-0.5 * mass * (y0 * y0 + y1 * y1 + y2 * y2))
    elif not (ix and iy and iz):
        scale = 0.0
    base = (sx * n + sy) * n + sz
    return base, x0w * scale, x1w * scale, x2w * scale, y0w, y1w, y2w, z0w, z1w, z2w


@njit(cache=True, inline="always", error_model="numpy", fastmath=True)
def _eval(f, base, n, a0, a1, a2, b0, b1, b2, c0, c1, c2):
    nn = n * n
    acc = 0.0
    for i in range(3):
        wx = a0 if i == 0 else (a1 if i == 1 else a2)
        if wx == 0.0:
            continue
        for j in range(3):
            wy = b0 if j == 0 else (b1 if j == 1 else b2)
            p = base + i * nn + j * n
            acc += wx * wy * (c0 * f[p] + c1 * f[p + 1] + c2 * f[p + 2])
    return acc


@njit(cache=True, inline="always", error_model="numpy", fastmath=True)
def _eval_batch(F, out, base, n, a0, a1, a2, b0, b1, b2, c0, c1, c2):
    """out[k] = interpolant of column k of F (shape (n^3, batch))."""
    nn = n * n
    nb = F.shape[1]
    for k in range(nb):
        out[k] = 0.0
    for i in range(3):
        wx = a0 if i == 0 else (a1 if i == 1 else a2)
        if wx == 0.0:
            continue
        for j in range(3):
            wy = b0 if j == 0 else (b1 if j == 1 else b2)
            p = base + i * nn + j * n
            w0 = wx * wy * c0
            w1 = wx * wy * c1
            w2 = wx * wy * c2
            for k in range(nb):
                out[k] += w0 * F[p, k] + w1 * F[p + 1, k] + w2 * F[p + 2, k]


@njit(cache=True, inline="always", error_model="numpy", fastmath=True)
def _scatter(row, off, base, n, coef, a0, a1, a2, b0, b1, b2, c0, c1, c2):
    nn = n * n
    for i in range(3):
        wx = a0 if i == 0 else (a1 if i == 1 else a2)
        if wx == 0.0:
            continue
        for j in range(3):
            wy = b0 if j == 0 else (b1 if j == 1 else b2)
            c = coef * wx * wy
            p = off + base + i * nn + j * n
            row[p] += c * c0
            row[p + 1] += c * c1
            row[p + 2] += c * c2


@njit(cache=True, inline="always", error_model="numpy", fastmath=True)
def _outside(n, x0, h, y0, y1, y2):
    hi = x0 + (n - 1) * h
    return y0 < x0 or y0 > hi or y1 < x0 or y1 > hi or y2 < x0 or y2 > hi


@njit(cache=True, inline="always", error_model="numpy", fastmath=True)
def _event(vx, vy, vz, wx, wy, wz, ux, uy, uz, ur, s0, s1, s2, al, be):
    dx = ux - ur * s0
    dy = uy - ur * s1
    dz = uz - ur * s2
    return vx - al * dx, vy - al * dy, vz - al * dz, wx + be * dx, wy + be * dy, wz + be * dz


@njit(cache=True, error_model="numpy", fastmath=True)
def direct_q(f, g, n, h, x0, mi, mj, eti, etj, gamma, cphi, kind, bc, utab, btab,
             sig, sw, interp, moll, delta, gain, freq, stats):
    """Gather form of Q_ij(f_k, g_k) at every node for each batch column k.

    Fields are node-major, shape (n^3, batch).
    gain[x, k] = sum_{v*, sigma} w B f_k(v') g_k(v'*);  freq[x, k] = sum w B g_k(v*),
    so that the loss is f_k(x) freq[x, k]. ``moll`` multiplies B by Theta_delta
    (MOLL_THETA) or 1 - Theta_delta (MOLL_COMPLEMENT). ``stats`` receives the
    escaped and total weight |f_0(x) g_0(v*)| B, where "escaped" means v' or v'*
    left the node box.
    """
    M = mi + mj
    al = mj / M
    be = mi / M
    nb = f.shape[1]
    N3 = n * n * n
    nn = n * n
    S = sig.shape[0]
    h3 = h * h * h
    esc = 0.0
    tot = 0.0
    fv = np.zeros(nb)
    gv = np.zeros(nb)
    f0 = np.ascontiguousarray(f[:, 0])
    g0 = np.ascontiguousarray(g[:, 0])
    for a in range(N3):
        vx = x0 + (a // nn) * h
        vy = x0 + ((a // n) % n) * h
        vz = x0 + (a % n) * h
        th1 = 1.0
        if moll != MOLL_NONE:
            th1 = theta_speed(math.sqrt(vx * vx + vy * vy + vz * vz), delta)
        fa = abs(f[a, 0])
        gacc = 0.0
        for b in range(N3):
            wx = x0 + (b // nn) * h
            wy = x0 + ((b // n) % n) * h
            wz = x0 + (b % n) * h
            ux = vx - wx
            uy = vy - wy
            uz = vz - wz
            ur = math.sqrt(ux * ux + uy * uy + uz * uz)
            if ur == 0.0:
                continue
            kin = cphi * ur**gamma * h3
            th2 = 1.0
            if moll != MOLL_NONE:
                th2 = th1 * theta_relative(ur, delta)
            ag = abs(g[b, 0])
            wsum = 0.0
            for s in range(S):
                cs = (sig[s, 0] * ux + sig[s, 1] * uy + sig[s, 2] * uz) / ur
                w = kin * sw[s] * _bval(kind, bc, utab, btab, cs)
                if moll == MOLL_THETA:
                    w *= th2 * theta_angle(cs, delta)
                elif moll == MOLL_COMPLEMENT:
                    w *= 1.0 - th2 * theta_angle(cs, delta)
                if w == 0.0:
                    continue
                wsum += w
                p0, p1, p2, q0, q1, q2 = _event(vx, vy, vz, wx, wy, wz, ux, uy, uz, ur,
                                                sig[s, 0], sig[s, 1], sig[s, 2], al, be)
                pb, pa0, pa1, pa2, pb0, pb1, pb2, pc0, pc1, pc2 = _point(interp, p0, p1, p2, n, x0, h, mi, eti)
                qb, qa0, qa1, qa2, qb0, qb1, qb2, qc0, qc1, qc2 = _point(interp, q0, q1, q2, n, x0, h, mj, etj)
                if nb == 1:
                    gacc += w * _eval(f0, pb, n, pa0, pa1, pa2, pb0, pb1, pb2, pc0, pc1, pc2) * _eval(
                        g0, qb, n, qa0, qa1, qa2, qb0, qb1, qb2, qc0, qc1, qc2)
                else:
                    _eval_batch(f, fv, pb, n, pa0, pa1, pa2, pb0, pb1, pb2, pc0, pc1, pc2)
                    _eval_batch(g, gv, qb, n, qa0, qa1, qa2, qb0, qb1, qb2, qc0, qc1, qc2)
                    for k in range(nb):
                        gain[a, k] += w * fv[k] * gv[k]
                aw = fa * ag * w
                tot += aw
                if aw != 0.0 and (_outside(n, x0, h, p0, p1, p2) or _outside(n, x0, h, q0, q1, q2)):
                    esc += aw
            for k in range(nb):
                freq[a, k] += wsum * g[b, k]
        if nb == 1:
            gain[a, 0] = gacc
    stats[0] = esc
    stats[1] = tot


@njit(cache=True, error_model="numpy", fastmath=True)
def direct_split(fi, fj, mui, muj, n, h, x0, mi, mj, eti, etj, gamma, cphi, kind, bc, utab, btab,
                 sig, sw, interp, delta, a_gain, b_gain, a_freq, b_freq):
    """Mollified and complementary parts of the linearized pair operator.

    Fields are node-major (n^3, batch); ``mui``, ``muj`` are 1D. For each node x
    and column k, with T = Theta_delta(x, v*, sigma):
      a_gain = sum T w B [f_i(v') mu_j(v'*) + mu_i(v') f_j(v'*)],  a_freq = sum T w B f_j(v*)
    and the same with (1 - T) for b_gain, b_freq.
    """
    M = mi + mj
    al = mj / M
    be = mi / M
    nb = fi.shape[1]
    N3 = n * n * n
    nn = n * n
    S = sig.shape[0]
    h3 = h * h * h
    fv = np.zeros(nb)
    gv = np.zeros(nb)
    for a in range(N3):
        vx = x0 + (a // nn) * h
        vy = x0 + ((a // n) % n) * h
        vz = x0 + (a % n) * h
        th1 = theta_speed(math.sqrt(vx * vx + vy * vy + vz * vz), delta)
        for b in range(N3):
            wx = x0 + (b // nn) * h
            wy = x0 + ((b // n) % n) * h
            wz = x0 + (b % n) * h
            ux = vx - wx
            uy = vy - wy
            uz = vz - wz
            ur = math.sqrt(ux * ux + uy * uy + uz * uz)
            if ur == 0.0:
                continue
            kin = cphi * ur**gamma * h3
            th2 = th1 * theta_relative(ur, delta)
            wa_sum = 0.0
            wb_sum = 0.0
            for s in range(S):
                cs = (sig[s, 0] * ux + sig[s, 1] * uy + sig[s, 2] * uz) / ur
                w = kin * sw[s] * _bval(kind, bc, utab, btab, cs)
                if w == 0.0:
                    continue
                th = th2 * theta_angle(cs, delta)
                p0, p1, p2, q0, q1, q2 = _event(vx, vy, vz, wx, wy, wz, ux, uy, uz, ur,
                                                sig[s, 0], sig[s, 1], sig[s, 2], al, be)
                pb, pa0, pa1, pa2, pb0, pb1, pb2, pc0, pc1, pc2 = _point(interp, p0, p1, p2, n, x0, h, mi, eti)
                qb, qa0, qa1, qa2, qb0, qb1, qb2, qc0, qc1, qc2 = _point(interp, q0, q1, q2, n, x0, h, mj, etj)
                mu_p = _eval(mui, pb, n, pa0, pa1, pa2, pb0, pb1, pb2, pc0, pc1, pc2)
                mu_q = _eval(muj, qb, n, qa0, qa1, qa2, qb0, qb1, qb2, qc0, qc1, qc2)
                _eval_batch(fi, fv, pb, n, pa0, pa1, pa2, pb0, pb1, pb2, pc0, pc1, pc2)
                _eval_batch(fj, gv, qb, n, qa0, qa1, qa2, qb0, qb1, qb2, qc0, qc1, qc2)
                wa = w * th
                wb = w * (1.0 - th)
                wa_sum += wa
                wb_sum += wb
                for k in range(nb):
                    gsum = fv[k] * mu_q + mu_p * gv[k]
                    a_gain[a, k] += wa * gsum
                    b_gain[a, k] += wb * gsum
            for k in range(nb):
                a_freq[a, k] += wa_sum * fj[b, k]
                b_freq[a, k] += wb_sum * fj[b, k]


@njit(cache=True, error_model="numpy", fastmath=True)
def assemble_split(mui, muj, n, h, x0, mi, mj, eti, etj, gamma, cphi, kind, bc, utab, btab,
                   sig, sw, interp, delta, row_off, col_i, col_j, amat, bmat):
    """Add the (i, j) pair contribution of the linearized split to dense matrices.

    Row ``row_off + x`` of ``amat`` receives the coefficients of the mollified part
    acting on f_i (columns ``col_i + .``) and f_j (columns ``col_j + .``); ``bmat``
    receives the complementary part. ``mui``, ``muj`` are 1D.
    """
    M = mi + mj
    al = mj / M
    be = mi / M
    N3 = n * n * n
    nn = n * n
    S = sig.shape[0]
    h3 = h * h * h
    for a in range(N3):
        vx = x0 + (a // nn) * h
        vy = x0 + ((a // n) % n) * h
        vz = x0 + (a % n) * h
        th1 = theta_speed(math.sqrt(vx * vx + vy * vy + vz * vz), delta)
        arow = amat[row_off + a]
        brow = bmat[row_off + a]
        mua = mui[a]
        for b in range(N3):
            wx = x0 + (b // nn) * h
            wy = x0 + ((b // n) % n) * h
            wz = x0 + (b % n) * h
            ux = vx - wx
            uy = vy - wy
            uz = vz - wz
            ur = math.sqrt(ux * ux + uy * uy + uz * uz)
            if ur == 0.0:
                continue
            kin = cphi * ur**gamma * h3
            th2 = th1 * theta_relative(ur, delta)
            wa_sum = 0.0
            wb_sum = 0.0
            for s in range(S):
                cs = (sig[s, 0] * ux + sig[s, 1] * uy + sig[s, 2] * uz) / ur
                w = kin * sw[s] * _bval(kind, bc, utab, btab, cs)
                if w == 0.0:
                    continue
                th = th2 * theta_angle(cs, delta)
                p0, p1, p2, q0, q1, q2 = _event(vx, vy, vz, wx, wy, wz, ux, uy, uz, ur,
                                                sig[s, 0], sig[s, 1], sig[s, 2], al, be)
                pb, pa0, pa1, pa2, pb0, pb1, pb2, pc0, pc1, pc2 = _point(interp, p0, p1, p2, n, x0, h, mi, eti)
                qb, qa0, qa1, qa2, qb0, qb1, qb2, qc0, qc1, qc2 = _point(interp, q0, q1, q2, n, x0, h, mj, etj)
                mu_p = _eval(mui, pb, n, pa0, pa1, pa2, pb0, pb1, pb2, pc0, pc1, pc2)
                mu_q = _eval(muj, qb, n, qa0, qa1, qa2, qb0, qb1, qb2, qc0, qc1, qc2)
                wa = w * th
                wb = w * (1.0 - th)
                wa_sum += wa
                wb_sum += wb
                if wa != 0.0:
                    _scatter(arow, col_i, pb, n, wa * mu_q, pa0, pa1, pa2, pb0, pb1, pb2, pc0, pc1, pc2)
                    _scatter(arow, col_j, qb, n, wa * mu_p, qa0, qa1, qa2, qb0, qb1, qb2, qc0, qc1, qc2)
                if wb != 0.0:
                    _scatter(brow, col_i, pb, n, wb * mu_q, pa0, pa1, pa2, pb0, pb1, pb2, pc0, pc1, pc2)
                    _scatter(brow, col_j, qb, n, wb * mu_p, qa0, qa1, qa2, qb0, qb1, qb2, qc0, qc1, qc2)
            arow[col_j + b] -= wa_sum * mua
            brow[col_j + b] -= wb_sum * mua


@njit(cache=True, error_model="numpy", fastmath=True)
def nu_points(points, g, n, h, x0, gamma, cphi, kind, bc, utab, btab, sig, sw, out):
    """out[p] = sum_{v*, sigma} C b(cos theta) |v_p - v*|^gamma g(v*) w_sigma h^3."""
    nn = n * n
    N3 = n * n * n
    S = sig.shape[0]
    h3 = h * h * h
    for p in range(points.shape[0]):
        vx = points[p, 0]
        vy = points[p, 1]
        vz = points[p, 2]
        acc = 0.0
        for b in range(N3):
            gb = g[b]
            if gb == 0.0:
                continue
            ux = vx - (x0 + (b // nn) * h)
            uy = vy - (x0 + ((b // n) % n) * h)
            uz = vz - (x0 + (b % n) * h)
            ur = math.sqrt(ux * ux + uy * uy + uz * uz)
            if ur == 0.0:
                continue
            ang = 0.0
            for s in range(S):
                cs = (sig[s, 0] * ux + sig[s, 1] * uy + sig[s, 2] * uz) / ur
                ang += sw[s] * _bval(kind, bc, utab, btab, cs)
            acc += ang * ur**gamma * gb
        out[p] = cphi * h3 * acc
