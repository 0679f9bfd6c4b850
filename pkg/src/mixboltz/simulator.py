"""Space-homogeneous time integration, monitors and decay-rate fitting.

Two modes are supported. In full-F mode the unknown is the distribution F itself
and the collision operator is evaluated in gain/loss form. In perturbation mode
the unknown is f = F - mu and the right-hand side is L f + Q(f, f) with the split
L = -nu + A + B, where A + B is assembled once as a dense matrix.

Both exponential-Euler schemes treat the loss (or nu) part exactly over a step:

    F^{n+1} = e^{-nu dt} F^n + (1 - e^{-nu dt}) / nu * (source).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .collision import CollisionOperator, SphereRule
from .equilibrium import (DistributionVec, VelocityGrid, conserved_moments, entropy, maxwellian,
                          maxwellian_values, weighted_sup_norm)
from .linear import LinearizedOperator, Mollifier, nu_field
from .mixture import KernelModel, Mixture, Weight

MODES = ("full-F", "perturbation")
INTEGRATORS = ("exponential-euler", "explicit-rk2")
FREQUENCIES = ("uniform", "nodewise")


class BlowUpError(RuntimeError):
    """The monitored norm grew beyond the configured factor."""


def phi1(x):
    """(1 - e^{-x}) / x, continued by 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - 0.5 * x, -np.expm1(-safe) / safe)


@dataclass
class SimConfig:
    """Time-stepping parameters.

    ``frequency`` selects the full-F stiff part: "uniform" uses one constant
    nu_bar = max loss frequency over all species and nodes, which keeps every
    collision invariant that the operator conserves; "nodewise" uses the local
    loss frequency of each species at each node.
    """

    dt: float
    t_end: float
    mode: str = "full-F"
    integrator: str = "exponential-euler"
    monitor_every: int = 1
    weight: Weight = field(default_factory=lambda: Weight.polynomial(7))
    seed: int = 0
    frequency: str = "uniform"
    fit_window: float = 0.6
    clip_negative: bool = True
    moment_correction: bool = False
    blowup_factor: float = 10.0
    delta: float = 0.05
    nonlinear: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if not self.dt < self.t_end:
            raise ValueError(f"dt = {self.dt} must be smaller than t_end = {self.t_end}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.frequency not in FREQUENCIES:
            raise ValueError(f"frequency must be one of {FREQUENCIES}, got {self.frequency!r}")
        if int(self.monitor_every) != self.monitor_every or self.monitor_every < 1:
            raise ValueError("monitor_every must be a positive integer")
        if not (0.0 < self.fit_window <= 1.0):
            raise ValueError("fit_window must lie in (0, 1]")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class RunReport:
    times: np.ndarray
    mass: np.ndarray
    momentum: np.ndarray
    energy: np.ndarray
    entropy: np.ndarray
    norm: np.ndarray
    decay_rate: float
    r_squared: float
    fit_window: float
    fit_skipped: bool
    drifts: dict
    clipped_mass: float = 0.0
    aborted: bool = False
    message: str = ""

    def columns(self) -> list:
        N = self.mass.shape[1]
        return (["t"] + [f"mass_{i + 1}" for i in range(N)]
                + ["px", "py", "pz", "energy", "entropy", "norm_w"])

    def rows(self):
        for k in range(len(self.times)):
            yield ([self.times[k], *self.mass[k], *self.momentum[k], self.energy[k],
                    self.entropy[k], self.norm[k]])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns())
            for row in self.rows():
                w.writerow([repr(float(x)) for x in row])

    def summary(self) -> dict:
        return {
            "decay_rate": self.decay_rate,
            "r_squared": self.r_squared,
            "fit_window": self.fit_window,
            "fit_skipped": self.fit_skipped,
            "drifts": self.drifts,
            "clipped_mass": self.clipped_mass,
            "aborted": self.aborted,
            "message": self.message,
            "n_records": int(len(self.times)),
        }


def fit_decay_rate(times, norms, window: float = 0.6):
    """Least-squares fit of log(norm) = a - lambda t over the trailing ``window`` fraction.

    Returns (lambda, R^2). A series that is exactly log-linear (including constant)
    has R^2 = 1.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("times and norms must be 1D arrays of equal length")
    if not (0.0 < window <= 1.0):
        raise ValueError("window must lie in (0, 1]")
    start = t[-1] - window * (t[-1] - t[0])
    sel = t >= start - 1e-12 * max(1.0, abs(t[-1]))
    if sel.sum() < 10:
        raise ValueError(f"need at least 10 points in the fit window, got {int(sel.sum())}")
    if np.any(y[sel] <= 0):
        raise ValueError("norms in the fit window must be positive")
    ts = t[sel]
    ly = np.log(y[sel])
    A = np.stack([np.ones_like(ts), ts], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot <= 1e-28 * max(1.0, float(np.sum(ly**2))):
        r2 = 1.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(-coef[1]), float(r2)


# ---------------------------------------------------------------- initial data

def bi_maxwellian(mixture: Mixture, grid: VelocityGrid, drifts, temperatures=None,
                  densities=None) -> DistributionVec:
    """Species-wise Maxwellians with their own drift, temperature and density."""
    N = mixture.n_species
    drifts = np.broadcast_to(np.asarray(drifts, dtype=float), (N, 3))
    temps = np.ones(N) if temperatures is None else np.broadcast_to(np.asarray(temperatures, float), (N,))
    dens = mixture.density_array if densities is None else np.asarray(densities, float)
    return DistributionVec(grid, np.stack([
        maxwellian_values(mixture.masses[i], dens[i], grid, drifts[i], temps[i]) for i in range(N)
    ]))


def zero_momentum_drifts(mixture: Mixture, drift_first) -> np.ndarray:
    """Drifts (u_1, u_2, 0, ...) with sum_i m_i c_i u_i = 0 for two or more species."""
    if mixture.n_species < 2:
        raise ValueError("need at least two species")
    d = np.zeros((mixture.n_species, 3))
    d[0] = drift_first
    m = mixture.mass_array * mixture.density_array
    d[1] = -m[0] * d[0] / m[1]
    return d


def _moment_basis(mixture: Mixture, grid: VelocityGrid) -> np.ndarray:
    """Columns mu-weighted by (species indicator, m_i v, m_i |v|^2), shape (N n^3, N + 4)."""
    N = mixture.n_species
    mu = maxwellian(mixture, grid).values
    cols = []
    for i in range(N):
        c = np.zeros((N, grid.size))
        c[i] = mu[i]
        cols.append(c.ravel())
    for d in range(3):
        cols.append(np.stack([mixture.masses[i] * grid.points[:, d] * mu[i] for i in range(N)]).ravel())
    cols.append(np.stack([mixture.masses[i] * grid.speed2 * mu[i] for i in range(N)]).ravel())
    return np.stack(cols, axis=1)


def _moment_functionals(mixture: Mixture, grid: VelocityGrid) -> np.ndarray:
    """Rows giving (mass_i, total momentum, total energy) of a stacked field, shape (N + 4, N n^3)."""
    N = mixture.n_species
    h3 = grid.cell_volume
    rows = []
    for i in range(N):
        r = np.zeros((N, grid.size))
        r[i] = h3
        rows.append(r.ravel())
    for d in range(3):
        rows.append(np.stack([mixture.masses[i] * grid.points[:, d] * h3 for i in range(N)]).ravel())
    rows.append(np.stack([mixture.masses[i] * grid.speed2 * h3 for i in range(N)]).ravel())
    return np.stack(rows)


def project_moments(mixture: Mixture, f: DistributionVec, target=None) -> DistributionVec:
    """Subtract a combination of mu_i (1, m_i v, m_i |v|^2) so that the discrete
    per-species mass, total momentum and total energy of f equal ``target`` (zero)."""
    grid = f.grid
    R = _moment_basis(mixture, grid)
    W = _moment_functionals(mixture, grid)
    x = f.values.ravel()
    goal = np.zeros(W.shape[0]) if target is None else np.asarray(target, float)
    coef = np.linalg.solve(W @ R, W @ x - goal)
    return DistributionVec(grid, (x - R @ coef).reshape(f.values.shape))


def project_nullspace(f: DistributionVec, left: np.ndarray, right: np.ndarray) -> DistributionVec:
    """Oblique projection removing span(right) along the annihilator of ``left``."""
    x = f.values.ravel()
    coef = np.linalg.solve(left.T @ right, left.T @ x)
    return DistributionVec(f.grid, (x - right @ coef).reshape(f.values.shape))


def perturbation_initial(mixture: Mixture, grid: VelocityGrid, amplitude: float,
                         rng: np.random.Generator, project: bool = True) -> DistributionVec:
    """f_i = amplitude mu_i(v) g_i(v) with g_i a random signed anisotropic bump of unit size."""
    mu = maxwellian(mixture, grid).values
    pts = grid.points
    vals = np.zeros_like(mu)
    for i in range(mixture.n_species):
        s = 1.0 / math.sqrt(mixture.masses[i])
        c = rng.uniform(-s, s, size=3)
        w = rng.uniform(0.5 * s, 1.5 * s, size=3)
        g = np.exp(-0.5 * np.sum(((pts - c) / w) ** 2, axis=1))
        g += 0.5 * (pts @ rng.standard_normal(3)) * s
        vals[i] = amplitude * mu[i] * g / np.max(np.abs(g))
    f = DistributionVec(grid, vals)
    return project_moments(mixture, f) if project else f


# ---------------------------------------------------------------- steps

def step_exponential_euler(state: DistributionVec, dt: float, kernel: KernelModel, mixture: Mixture,
                           grid: VelocityGrid | None = None, sphere: SphereRule | None = None,
                           collision: CollisionOperator | None = None, frequency: str = "uniform",
                           clip_negative: bool = True, info: dict | None = None) -> DistributionVec:
    """One full-F exponential-Euler step.

    "uniform": F + phi(nu_bar dt) dt (Q+ - loss) with a single nu_bar >= every local loss
    frequency, so the step is a positive combination of F and Q+.
    "nodewise": e^{-nu dt} F + (1 - e^{-nu dt}) / nu Q+ with the local frequency nu.
    With ``clip_negative`` the negative ripples left by the Fourier gain are removed
    by :func:`clip_conservative`, which keeps each species' mass, momentum and energy.
    """
    grid = state.grid if grid is None else grid
    if collision is None:
        collision = CollisionOperator(kernel, mixture, grid, sphere)
    F = state.values
    if np.any(F < 0):
        s, a = np.argwhere(F < 0)[0]
        raise ValueError(f"full-F state is negative for species {s} at node {a}")
    gain, loss, qinfo = collision.q_full(state)
    freq = qinfo["freq"]
    if frequency == "uniform":
        nu_bar = max(float(freq.max()), 0.0)
        new = F + dt * phi1(nu_bar * dt) * (gain.values - loss.values)
    elif frequency == "nodewise":
        nu = freq
        if np.any(freq <= 0):
            nu = np.where(freq > 0, freq, nu_field(kernel, mixture, grid, collision.sphere))
        new = np.exp(-nu * dt) * F + dt * phi1(nu * dt) * gain.values
        nu_bar = float(nu.max())
    else:
        raise ValueError(f"unknown frequency {frequency!r}")
    _check_finite(new)
    clipped = 0.0
    if clip_negative:
        new, clipped = clip_conservative(new, grid.cell_volume, grid.points)
    if info is not None:
        info.update(nu_bar=nu_bar, clipped=clipped, max_freq=float(freq.max()))
    return DistributionVec(grid, new)


def clip_conservative(values: np.ndarray, cell_volume: float, points: np.ndarray | None = None):
    """Zero the negative values of each species and restore its previous moments.

    Without ``points`` each species is rescaled to its previous mass. With the node
    coordinates ``points`` the clipped species is multiplied by 1 + a + b.v + c|v|^2,
    chosen so that its mass, momentum and energy are unchanged; if that factor would
    turn negative anywhere the plain mass rescaling is used instead.
    Returns (clipped values, total removed negative mass).
    """
    out = values.copy()
    removed = 0.0
    if points is not None:
        basis = np.vstack([np.ones(len(points)), points.T, np.sum(points * points, axis=1)])
    for i in range(out.shape[0]):
        neg = out[i] < 0
        if not neg.any():
            continue
        target = out[i].sum() if points is None else basis @ out[i]
        removed += float(-out[i][neg].sum() * cell_volume)
        out[i][neg] = 0.0
        if points is not None:
            gram = (basis * out[i]) @ basis.T
            try:
                coef = np.linalg.solve(gram, target - basis @ out[i])
            except np.linalg.LinAlgError:
                coef = None
            if coef is not None:
                factor = 1.0 + coef @ basis
                if np.all(factor >= 0):
                    out[i] *= factor
                    continue
            target = target[0]
        pos = out[i].sum()
        if target > 0 and pos > 0:
            out[i] *= target / pos
    return out, removed


def step_rk2(state: DistributionVec, dt: float, collision: CollisionOperator,
             info: dict | None = None) -> DistributionVec:
    """Heun's method on dF/dt = Q(F) (cross-check integrator)."""
    g1, l1, q1 = collision.q_full(state)
    k1 = g1.values - l1.values
    mid = DistributionVec(state.grid, state.values + dt * k1)
    g2, l2, _ = collision.q_full(mid)
    new = state.values + 0.5 * dt * (k1 + g2.values - l2.values)
    _check_finite(new)
    if info is not None:
        info.update(max_freq=float(q1["freq"].max()))
    return DistributionVec(state.grid, new)


def step_perturbation(f: DistributionVec, dt: float, nu: np.ndarray, ab=None,
                      collision: CollisionOperator | None = None) -> DistributionVec:
    """f^{n+1} = e^{-nu dt} f + (1 - e^{-nu dt}) / nu [(A + B) f + Q(f, f)].

    ``ab`` is a dense matrix or a callable acting on the stacked vector; None means A + B = 0.
    ``collision`` evaluates Q_i(f, f) = sum_j Q_ij(f_i, f_j); None drops the nonlinear term.
    """
    x = f.values
    src = np.zeros_like(x)
    if ab is not None:
        y = ab @ x.ravel() if isinstance(ab, np.ndarray) else ab(x.ravel())
        src += np.asarray(y).reshape(x.shape)
    if collision is not None and np.any(x != 0):
        src += collision.apply(f).values
    new = np.exp(-nu * dt) * x + dt * phi1(nu * dt) * src
    _check_finite(new)
    return DistributionVec(f.grid, new)


def _check_finite(a):
    if not np.all(np.isfinite(a)):
        s, node = np.argwhere(~np.isfinite(a))[0]
        raise FloatingPointError(f"non-finite value for species {s} at node {node}")


# ---------------------------------------------------------------- driver

class PerturbationModel:
    """Precomputed nu, A + B and nonlinear evaluator for perturbation runs."""

    def __init__(self, kernel: KernelModel, mixture: Mixture, grid: VelocityGrid, delta: float,
                 sphere: SphereRule | None = None, interp: str = "wquad", nonlinear: bool = True,
                 collision: CollisionOperator | None = None):
        self.linear = LinearizedOperator(kernel, mixture, grid, Mollifier(delta), sphere, interp=interp)
        A, B = self.linear.matrices()
        self.ab = A + B
        self.nu = self.linear.nu
        if nonlinear and collision is None:
            collision = CollisionOperator(kernel, mixture, grid, self.linear.sphere)
        self.collision = collision if nonlinear else None

    def conserved_directions(self, dt: float, n_invariants: int):
        """(left, right) null bases of the one-step map minus identity.

        The map is I + diag(dt phi(nu dt)) L in its linear part, so its fixed
        directions are the kernel of L and its invariant functionals are the left
        kernel of L rescaled by 1 / (dt phi(nu dt)).
        """
        Lm = self.ab - np.diag(self.nu.ravel())
        u, s, vt = np.linalg.svd(Lm)
        right = vt[-n_invariants:].T
        scale = dt * phi1(self.nu.ravel() * dt)
        left = u[:, -n_invariants:] / scale[:, None]
        return left, right, s[-n_invariants - 1:]

    def step(self, f: DistributionVec, dt: float) -> DistributionVec:
        return step_perturbation(f, dt, self.nu, self.ab, self.collision)


def _monitor(mixture, weight, mu, state, mode):
    if mode == "full-F":
        F = state
        pert = state - mu
    else:
        F = mu + state
        pert = state
    mass, mom, en = conserved_moments(mixture, state if mode == "full-F" else pert)
    try:
        H = entropy(F)
    except ValueError:
        H = float("nan")
    return mass, mom, en, H, weighted_sup_norm(weight, mixture, pert)


def run(config: SimConfig, initial: DistributionVec, kernel: KernelModel, mixture: Mixture,
        sphere: SphereRule | None = None, collision: CollisionOperator | None = None,
        model: PerturbationModel | None = None, projection: str = "nullspace") -> RunReport:
    """Time-march ``initial`` to ``config.t_end`` and collect monitors.

    In perturbation mode ``initial`` is f = F - mu. ``projection`` ("moments",
    "nullspace" or "none") makes it conservation compatible before the run.
    Blow-up (norm above ``blowup_factor`` times its initial value) stops the run
    and returns the partial report with ``aborted`` set.
    """
    grid = initial.grid
    mu = maxwellian(mixture, grid)
    n_inv = mixture.n_species + 4
    if config.mode == "full-F":
        if collision is None:
            collision = CollisionOperator(kernel, mixture, grid, sphere)
        state = initial.copy()
    else:
        if model is None:
            model = PerturbationModel(kernel, mixture, grid, config.delta, sphere,
                                      nonlinear=config.nonlinear, collision=collision)
        state = initial.copy()
        if projection == "moments":
            state = project_moments(mixture, state)
        elif projection == "nullspace":
            left, right, _ = model.conserved_directions(config.dt, n_inv)
            state = project_nullspace(state, left, right)
        elif projection != "none":
            raise ValueError(f"unknown projection {projection!r}")
        if config.integrator != "exponential-euler":
            raise ValueError("perturbation mode supports the exponential-euler integrator only")

    target = None
    if config.moment_correction:
        W = _moment_functionals(mixture, grid)
        target = W @ state.values.ravel()

    rec = {k: [] for k in ("t", "mass", "mom", "en", "H", "norm")}

    def record(t, s):
        m, p, e, H, nrm = _monitor(mixture, config.weight, mu, s, config.mode)
        rec["t"].append(t)
        rec["mass"].append(m)
        rec["mom"].append(p)
        rec["en"].append(e)
        rec["H"].append(H)
        rec["norm"].append(nrm)

    record(0.0, state)
    norm0 = rec["norm"][0]
    clipped = 0.0
    aborted = False
    message = ""
    max_ent_increase = 0.0
    H_prev = rec["H"][0]
    for step in range(1, config.n_steps + 1):
        info = {}
        try:
            if config.mode == "perturbation":
                state = model.step(state, config.dt)
            elif config.integrator == "exponential-euler":
                state = step_exponential_euler(state, config.dt, kernel, mixture, grid,
                                               collision=collision, frequency=config.frequency,
                                               clip_negative=config.clip_negative, info=info)
                clipped += info.get("clipped", 0.0)
            else:
                state = step_rk2(state, config.dt, collision, info=info)
                if config.dt * info["max_freq"] > 2.0:
                    raise ValueError(f"explicit-rk2 needs dt * max loss frequency <= 2, got "
                                     f"{config.dt * info['max_freq']:.3f}")
        except FloatingPointError as exc:
            aborted, message = True, str(exc)
            break
        if target is not None:
            state = project_moments(mixture, state, target) if config.mode == "perturbation" \
                else _correct_full(mixture, state, target)
        t = step * config.dt
        if config.mode == "full-F":
            H = entropy(state) if np.all(state.values >= 0) else float("nan")
            if np.isfinite(H) and np.isfinite(H_prev) and H_prev != 0:
                max_ent_increase = max(max_ent_increase, (H - H_prev) / abs(H_prev))
            H_prev = H
        if step % config.monitor_every == 0 or step == config.n_steps:
            record(t, state)
            if norm0 > 0 and rec["norm"][-1] > config.blowup_factor * norm0:
                aborted, message = True, f"blow-up at t = {t:.6g}: norm grew beyond {config.blowup_factor} x initial"
                break

    times = np.asarray(rec["t"])
    mass = np.asarray(rec["mass"])
    mom = np.asarray(rec["mom"])
    en = np.asarray(rec["en"])
    H = np.asarray(rec["H"])
    norm = np.asarray(rec["norm"])

    lam, r2, skipped = 0.0, float("nan"), True
    scale = float(np.max(mu.values))
    if norm0 > 1e-12 * scale and not aborted:
        try:
            lam, r2 = fit_decay_rate(times, norm, config.fit_window)
            skipped = False
        except ValueError as exc:
            message = message or f"decay fit skipped: {exc}"
    drifts = _drifts(mixture, initial if config.mode == "full-F" else mu, times, mass, mom, en,
                     max_ent_increase, config.mode)
    return RunReport(times, mass, mom, en, H, norm, lam, r2, config.fit_window, skipped, drifts,
                     clipped, aborted, message)


def _correct_full(mixture, F, target):
    return project_moments(mixture, F, target)


def _drifts(mixture, reference, times, mass, mom, en, ent_inc, mode) -> dict:
    """Maximal relative drifts divided by the elapsed time.

    Momentum is measured against sum_i m_i int |v| F_i of the reference state, which
    stays meaningful when the total momentum vanishes.
    """
    T = max(float(times[-1]), 1e-300)
    h3 = reference.grid.cell_volume
    if mode == "full-F":
        ref_mass = mass[0]
        ref_energy = abs(en[0])
    else:
        ref_mass, _, ref_energy = conserved_moments(mixture, reference)
    p_scale = float(np.sum(mixture.mass_array[:, None] * reference.values * reference.grid.speed[None]) * h3)
    dm = np.max(np.abs(mass - mass[0]) / ref_mass, axis=0)
    dp = float(np.max(np.linalg.norm(mom - mom[0], axis=1))) / p_scale
    de = float(np.max(np.abs(en - en[0]))) / ref_energy
    return {
        "mass_rel_per_time": (dm / T).tolist(),
        "momentum_rel_per_time": dp / T,
        "energy_rel_per_time": de / T,
        "entropy_max_rel_increase_per_step": float(ent_inc),
    }
