"""Particle (Lagrangian) transport of interface-mode and bulk phase-space measures."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DomainError, RangeError, ShapeError
from .hermite_spectral import lambda_n
from .io import read_csv, write_csv
from .phase_space import PhaseSpaceDensity

log = logging.getLogger(__name__)

BULK_PROXIMITY = 1e-3


@dataclass
class ParticleMeasure:
    n: np.ndarray
    s: np.ndarray
    sigma: np.ndarray
    w: np.ndarray
    chart: object = None
    t: float = 0.0

    def __post_init__(self):
        self.n = np.atleast_1d(np.asarray(self.n, dtype=int))
        self.s = np.atleast_1d(np.asarray(self.s, dtype=float))
        self.sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        self.w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if not (len(self.n) == len(self.s) == len(self.sigma) == len(self.w)):
            raise ShapeError("particle arrays must have equal length")
        if np.any(self.w < 0):
            raise ValueError("weights must be non-negative")

    def __len__(self):
        return len(self.w)

    def total(self):
        return float(np.sum(self.w))

    def energies(self):
        return lambda_n(self.n, self.sigma, self.chart.grad_norm_at(self.s))

    def select(self, n):
        k = self.n == n
        return replace(self, n=self.n[k], s=self.s[k], sigma=self.sigma[k], w=self.w[k])

    def to_csv(self, path):
        return write_csv(path, ["n", "s", "sigma", "w"], zip(self.n, self.s, self.sigma, self.w))

    @classmethod
    def from_csv(cls, path, chart=None):
        header, rows = read_csv(path)
        if header != ["n", "s", "sigma", "w"]:
            raise ShapeError(f"unexpected header {header}")
        a = np.array(rows, dtype=float).reshape(-1, 4)
        return cls(a[:, 0].astype(int), a[:, 1], a[:, 2], a[:, 3], chart)


@dataclass
class BulkParticleMeasure:
    branch: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    w: np.ndarray
    t: float = 0.0
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.branch = np.atleast_1d(np.asarray(self.branch, dtype=int))
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.xi = np.atleast_2d(np.asarray(self.xi, dtype=float))
        self.w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if not np.all(np.isin(self.branch, (-1, 1))):
            raise ValueError("branch must be +1 or -1")
        if np.any(self.w < 0):
            raise ValueError("weights must be non-negative")

    def total(self):
        return float(np.sum(self.w))

    def energies(self, model):
        m = model.mass(self.x[:, 0], self.x[:, 1])
        return np.sqrt(m * m + np.sum(self.xi ** 2, axis=1))

    def to_csv(self, path):
        rows = zip(self.branch, self.x[:, 0], self.x[:, 1], self.xi[:, 0], self.xi[:, 1], self.w)
        return write_csv(path, ["branch", "x1", "x2", "xi1", "xi2", "w"], rows)

    @classmethod
    def from_csv(cls, path):
        header, rows = read_csv(path)
        if header != ["branch", "x1", "x2", "xi1", "xi2", "w"]:
            raise ShapeError(f"unexpected header {header}")
        a = np.array(rows, dtype=float).reshape(-1, 6)
        return cls(a[:, 0].astype(int), a[:, 1:3], a[:, 3:5], a[:, 5])


def interface_velocity(n, s, sigma, chart):
    """(ds/dt, dsigma/dt) = (d_sigma lambda_n, -d_s lambda_n)."""
    G = chart.grad_norm_at(s)
    dG = chart.grad_norm_at(s, 1)
    lam = lambda_n(n, sigma, G)
    zero = n == 0
    lam_safe = np.where(zero, 1.0, lam)
    sdot = np.where(zero, -1.0, sigma / lam_safe)
    sigdot = np.where(zero, 0.0, -np.abs(n) * dG / lam_safe)
    return sdot, sigdot


def evolve_interface_measure(pm, chart, t_end, dt=1e-3, record=False):
    """RK4 along the characteristics of lambda_n; weights are carried unchanged."""
    chart = chart if chart is not None else pm.chart
    nsteps = int(round(abs(t_end) / dt))
    h = np.sign(t_end) * dt if t_end else dt
    n, s, sg = pm.n, pm.s.copy(), pm.sigma.copy()
    lo, hi = chart.s_min, chart.s_max
    path = [s.copy()] if record else None

    def wrap(s):
        if chart.period is not None:
            return chart.canonical_s(s)
        bad = (s < lo) | (s > hi)
        if np.any(bad):
            raise RangeError(f"particles {np.flatnonzero(bad).tolist()} left the chart range")
        return s

    for _ in range(nsteps):
        a1, b1 = interface_velocity(n, wrap(s), sg, chart)
        a2, b2 = interface_velocity(n, wrap(s + 0.5 * h * a1), sg + 0.5 * h * b1, chart)
        a3, b3 = interface_velocity(n, wrap(s + 0.5 * h * a2), sg + 0.5 * h * b2, chart)
        a4, b4 = interface_velocity(n, wrap(s + h * a3), sg + h * b3, chart)
        s = s + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        sg = sg + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        if record:
            path.append(s.copy())
    # s is kept unwrapped (lifted) so travelled distances stay readable
    if chart.period is None:
        wrap(s)
    out = ParticleMeasure(n.copy(), s, sg, pm.w.copy(), chart, pm.t + nsteps * h)
    if record:
        return out, np.asarray(path)
    return out


def bulk_velocity(branch, x, xi, model):
    m, g, _ = model.evaluate(x[:, 0], x[:, 1])
    lam = np.sqrt(m * m + np.sum(xi * xi, axis=1))
    b = branch[:, None]
    return b * xi / lam[:, None], -b * (m[:, None] * g) / lam[:, None], lam


def evolve_bulk_measure(bm, model, t_end, dt=1e-3, threshold=BULK_PROXIMITY):
    """RK4 for x' = grad_xi lambda_branch, xi' = -grad_x lambda_branch."""
    nsteps = int(round(abs(t_end) / dt))
    h = np.sign(t_end) * dt if t_end else dt
    x, xi, br = bm.x.copy(), bm.xi.copy(), bm.branch
    near = np.zeros(len(br), dtype=bool)
    for _ in range(nsteps):
        k1x, k1p, lam = bulk_velocity(br, x, xi, model)
        near |= lam < threshold
        k2x, k2p, _ = bulk_velocity(br, x + 0.5 * h * k1x, xi + 0.5 * h * k1p, model)
        k3x, k3p, _ = bulk_velocity(br, x + 0.5 * h * k2x, xi + 0.5 * h * k2p, model)
        k4x, k4p, _ = bulk_velocity(br, x + h * k3x, xi + h * k3p, model)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        xi = xi + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
    flags = dict(bm.flags)
    if np.any(near):
        flags["near_crossing"] = np.flatnonzero(near).tolist()
        log.warning("%d bulk particles approached the crossing set", int(near.sum()))
    return BulkParticleMeasure(br.copy(), x, xi, bm.w.copy(), bm.t + nsteps * h, flags)


def _kernel_1d(centres, grid, bw, period=None):
    d = grid[None, :] - centres[:, None]
    if period is not None:
        d = (d + period / 2) % period - period / 2
    return np.exp(-0.5 * (d / bw) ** 2)


def density_from_particles(pm, s_grid, sigma_grid, bandwidth, period=None):
    """Gaussian kernel density; each kernel is normalised on the grid so mass = sum w."""
    s_grid = np.asarray(s_grid, dtype=float)
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    bs, bg = (bandwidth, bandwidth) if np.isscalar(bandwidth) else bandwidth
    ds, dg = s_grid[1] - s_grid[0], sigma_grid[1] - sigma_grid[0]
    if bs <= ds or bg <= dg:
        raise ValueError("bandwidth must exceed the grid spacing")
    if period is None and pm.chart is not None:
        period = pm.chart.period
    Ks = _kernel_1d(pm.s, s_grid, bs, period)
    Kg = _kernel_1d(pm.sigma, sigma_grid, bg)
    ns = Ks.sum(axis=1) * ds
    ng = Kg.sum(axis=1) * dg
    keep = (ns > 0) & (ng > 0) & (pm.w > 0)
    wts = np.zeros_like(pm.w)
    wts[keep] = pm.w[keep] / (ns[keep] * ng[keep])
    vals = np.einsum("p,pi,pj->ij", wts, Ks, Kg)
    if np.any(~keep & (pm.w > 0)):
        log.warning("%d particles fall outside the density grid", int(np.sum(~keep & (pm.w > 0))))
    return PhaseSpaceDensity((s_grid, sigma_grid), vals, scale=float(bs), kind="kde", t=pm.t)


def compare_densities(d1, d2, smooth=0.0):
    """(L1 distance after optional Gaussian smoothing in cells, centroid offset d2 - d1)."""
    for a, b in zip(d1.axes, d2.axes):
        if len(a) != len(b) or not np.allclose(a, b):
            raise ShapeError("densities have different axes")
    v1, v2 = d1.values, d2.values
    if smooth:
        v1 = gaussian_filter(v1, smooth, mode="constant")
        v2 = gaussian_filter(v2, smooth, mode="constant")
    l1 = float(np.sum(np.abs(v1 - v2)) * d1.cell)
    return l1, d2.centroid() - d1.centroid()


def reconstruct_position_density(pm, chart, s_bins, bandwidth=None):
    """Matrix-valued position density along the interface, mass per s bin.

    Each particle contributes w/2 [[1, i rho e^{-i theta(s)}], [-i rho e^{i theta(s)}, 1]]
    with rho = sigma/lambda_n, and rho = -1 on the n = 0 branch.
    """
    chart = chart if chart is not None else pm.chart
    s_bins = np.asarray(s_bins, dtype=float)
    s_red = chart.canonical_s(pm.s) if chart.period is not None else pm.s
    lam = lambda_n(pm.n, pm.sigma, chart.grad_norm_at(s_red))
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(pm.n == 0, -1.0, pm.sigma / np.where(pm.n == 0, 1.0, lam))
    th = chart.theta_at(s_red)
    off = 1j * rho * np.exp(-1j * th)
    if bandwidth is None:
        # nearest bin
        ds = s_bins[1] - s_bins[0]
        idx = np.rint((s_red - s_bins[0]) / ds).astype(int)
        if chart.period is not None:
            idx %= len(s_bins)
        K = np.zeros((len(pm.w), len(s_bins)))
        ok = (idx >= 0) & (idx < len(s_bins))
        K[np.flatnonzero(ok), idx[ok]] = 1.0
    else:
        K = _kernel_1d(s_red, s_bins, bandwidth, chart.period)
        norm = K.sum(axis=1)
        K = K / np.where(norm > 0, norm, 1.0)[:, None]
    wk = pm.w[:, None] * K                          # (P, B)
    out = np.zeros((len(s_bins), 2, 2), dtype=complex)
    out[:, 0, 0] = 0.5 * wk.sum(axis=0)
    out[:, 1, 1] = out[:, 0, 0]
    out[:, 0, 1] = 0.5 * (off[:, None] * wk).sum(axis=0)
    out[:, 1, 0] = np.conj(out[:, 0, 1])
    return out


def v_infinity(r, omega):
    """Tangential field on the unit sphere of (omega_y, omega_sigma, omega_eta).

    V = (((1 - r^4) w_y^2 - 1) w_eta, (1 - r^4) w_y w_eta w_sigma, ((1 - r^4) w_eta^2 + r^4) w_y),
    the projection of (-w_eta, 0, r^4 w_y) onto the tangent plane at omega.
    """
    w = np.asarray(omega, dtype=float)
    nrm = np.linalg.norm(w, axis=-1)
    if np.any(np.abs(nrm - 1) > 1e-12):
        raise DomainError("omega must be a unit vector")
    r4 = np.asarray(r, dtype=float) ** 4
    wy, ws, we = w[..., 0], w[..., 1], w[..., 2]
    a = 1.0 - r4
    return np.stack([(a * wy * wy - 1) * we, a * wy * we * ws, (a * we * we + r4) * wy], axis=-1)


def particles_from_density(dens, n, chart=None, threshold=0.0, rng=None, jitter=False):
    """One particle per grid cell carrying value * cell as weight (deterministic).

    With ``jitter`` and a seeded ``rng`` the positions are perturbed uniformly
    within each cell.
    """
    s_ax, g_ax = dens.axes
    S, G = np.meshgrid(s_ax, g_ax, indexing="ij")
    w = dens.values * dens.cell
    keep = w > threshold * (w.max() if w.size else 0.0)
    s, g = S[keep], G[keep]
    if jitter:
        rng = np.random.default_rng(rng)
        s = s + (rng.random(s.shape) - 0.5) * (s_ax[1] - s_ax[0])
        g = g + (rng.random(g.shape) - 0.5) * (g_ax[1] - g_ax[0])
    return ParticleMeasure(np.full(s.shape, n), s, g, w[keep], chart, dens.t)
