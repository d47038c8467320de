"""Split-step Fourier propagation of  i eps d_t psi = (m sigma3 + eps (D1 sigma1 + D2 sigma2)) psi.

Fields are stored component-first, ``u.shape == (2, N2, N1)``; axis 1 is x2
and axis 2 is x1, so a C-ordered dump is row-major in (x2, x1).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft

from .errors import ConfigurationError, NumericalBlowupError, ResolutionError, ShapeError
from .io import complex_to_interleaved, interleaved_to_complex, read_raw, write_raw

log = logging.getLogger(__name__)

NYQUIST_FRACTION = 0.9
NYQUIST_TOL = 1e-8


def _is_pow2(n):
    return n > 0 and not (n & (n - 1))


@dataclass(frozen=True)
class Grid2D:
    L1: float
    L2: float
    N1: int
    N2: int

    def __post_init__(self):
        if not (_is_pow2(self.N1) and _is_pow2(self.N2)):
            raise ConfigurationError("grid sizes must be powers of two")

    @classmethod
    def square(cls, L=8.0, N=512):
        return cls(L, L, N, N)

    @property
    def dx1(self):
        return self.L1 / self.N1

    @property
    def dx2(self):
        return self.L2 / self.N2

    @property
    def cell(self):
        return self.dx1 * self.dx2

    @property
    def x1(self):
        return -self.L1 / 2 + self.dx1 * np.arange(self.N1)

    @property
    def x2(self):
        return -self.L2 / 2 + self.dx2 * np.arange(self.N2)

    def mesh(self):
        """(X1, X2), each of shape (N2, N1)."""
        return np.meshgrid(self.x1, self.x2, indexing="xy")

    @property
    def k1(self):
        return 2 * np.pi * sfft.fftfreq(self.N1, d=self.dx1)

    @property
    def k2(self):
        return 2 * np.pi * sfft.fftfreq(self.N2, d=self.dx2)

    def kmesh(self):
        return np.meshgrid(self.k1, self.k2, indexing="xy")

    def resolves(self, eps):
        return max(self.dx1, self.dx2) <= np.sqrt(eps) / 4 + 1e-15

    def to_dict(self):
        return {"L1": self.L1, "L2": self.L2, "N1": self.N1, "N2": self.N2}


@dataclass
class SpinorField:
    grid: Grid2D
    u: np.ndarray
    eps: float
    t: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=complex)
        if self.u.shape != (2, self.grid.N2, self.grid.N1):
            raise ShapeError(f"field shape {self.u.shape} does not match grid")

    @classmethod
    def zeros(cls, grid, eps, t=0.0):
        return cls(grid, np.zeros((2, grid.N2, grid.N1), complex), eps, t)

    def norm2(self):
        return float(np.sum(np.abs(self.u) ** 2) * self.grid.cell)

    def norm(self):
        return np.sqrt(self.norm2())

    def density(self):
        return np.sum(np.abs(self.u) ** 2, axis=0)

    def copy(self):
        return SpinorField(self.grid, self.u.copy(), self.eps, self.t)

    def inner(self, other):
        """<self, other> = sum conj(other) self dx (linear in the first slot)."""
        return complex(np.sum(self.u * np.conj(other.u)) * self.grid.cell)

    def distance(self, other):
        return float(np.sqrt(np.sum(np.abs(self.u - other.u) ** 2) * self.grid.cell))

    def save(self, path, **meta):
        return write_raw(path, complex_to_interleaved(self.u), eps=self.eps, t=self.t,
                         grid=self.grid.to_dict(), **meta)

    @classmethod
    def load(cls, path):
        a, side = read_raw(path)
        g = side.get("grid")
        n2, n1 = a.shape[:2]
        grid = Grid2D(**g) if g else Grid2D(1.0, 1.0, n1, n2)
        return cls(grid, interleaved_to_complex(a), side["eps"], side["t"])


@dataclass
class SolverConfig:
    dt: float
    t_end: float
    snapshot_stride: int = 0
    hf_radii: tuple = ()
    box: tuple | None = None       # (x1lo, x1hi, x2lo, x2hi)
    nyquist_check: bool = True

    def validate(self, eps):
        if self.dt == 0 or abs(self.dt) > eps / 4 * (1 + 1e-12):
            raise ConfigurationError(f"|dt| = {abs(self.dt)} violates 0 < |dt| <= eps/4 = {eps / 4}")
        if self.t_end < 0:
            raise ConfigurationError("t_end must be non-negative")


def nyquist_fraction(field):
    """Fraction of spectral mass with max(|k1|/k1max, |k2|/k2max) > 0.9."""
    g = field.grid
    k1, k2 = g.kmesh()
    high = (np.abs(k1) > NYQUIST_FRACTION * np.pi / g.dx1) | (np.abs(k2) > NYQUIST_FRACTION * np.pi / g.dx2)
    p = np.sum(np.abs(sfft.fft2(field.u)) ** 2, axis=0)
    tot = p.sum()
    return float(p[high].sum() / tot) if tot > 0 else 0.0


def check_nyquist(field, tol=NYQUIST_TOL):
    f = nyquist_fraction(field)
    if f > tol:
        raise ResolutionError(f"spectral mass {f:.2e} beyond 0.9 k_max exceeds {tol:g}")
    return f


def high_frequency_fraction(field, radii):
    """Mass fraction with |xi| > R where xi = eps k, for each R."""
    g = field.grid
    k1, k2 = g.kmesh()
    xi = field.eps * np.hypot(k1, k2)
    p = np.sum(np.abs(sfft.fft2(field.u)) ** 2, axis=0)
    tot = p.sum()
    return {float(R): (float(p[xi > R].sum() / tot) if tot > 0 else 0.0) for R in radii}


def mass_outside_box(field, box, center=(0.0, 0.0)):
    """Mass outside the box shifted by ``center``, with minimum-image periodic offsets."""
    g = field.grid
    X1, X2 = g.mesh()
    d1 = (X1 - center[0] + g.L1 / 2) % g.L1 - g.L1 / 2
    d2 = (X2 - center[1] + g.L2 / 2) % g.L2 - g.L2 / 2
    inside = (d1 >= box[0]) & (d1 <= box[1]) & (d2 >= box[2]) & (d2 <= box[3])
    rho = field.density()
    tot = rho.sum()
    return float(rho[~inside].sum() / tot) if tot > 0 else 0.0


class StrangPropagator:
    """Mass-kinetic-mass Strang splitting with tables cached for one (model, grid, eps, dt)."""

    def __init__(self, model, grid, eps, dt):
        self.model, self.grid, self.eps, self.dt = model, grid, float(eps), float(dt)
        X1, X2 = grid.mesh()
        self.m = model.mass(X1, X2)
        self.half = np.exp(-0.5j * self.dt * self.m / self.eps)
        self.full = self.half * self.half
        k1, k2 = grid.kmesh()
        kk = np.hypot(k1, k2)
        self.c = np.cos(self.dt * kk)
        with np.errstate(invalid="ignore", divide="ignore"):
            sk = np.where(kk > 0, np.sin(self.dt * kk) / kk, 0.0)
        # -i sin(dt|k|)/|k| (k1 -/+ i k2)
        self.a12 = -1j * sk * (k1 - 1j * k2)
        self.a21 = -1j * sk * (k1 + 1j * k2)

    def _kinetic(self, u):
        f = sfft.fft2(u, axes=(-2, -1))
        g0 = self.c * f[0] + self.a12 * f[1]
        g1 = self.a21 * f[0] + self.c * f[1]
        f[0], f[1] = g0, g1
        return sfft.ifft2(f, axes=(-2, -1))

    def step(self, u):
        u = u.copy()
        u[0] *= self.half
        u[1] *= np.conj(self.half)
        u = self._kinetic(u)
        u[0] *= self.half
        u[1] *= np.conj(self.half)
        return u

    def run(self, u, nsteps):
        """``nsteps`` Strang steps; adjacent mass half-steps are fused."""
        if nsteps == 0:
            return u.copy()
        u = u.copy()
        u[0] *= self.half
        u[1] *= np.conj(self.half)
        for j in range(nsteps):
            u = self._kinetic(u)
            ph = self.half if j == nsteps - 1 else self.full
            u[0] *= ph
            u[1] *= np.conj(ph)
        return u


def step_strang(field, model, dt, check=True):
    if check:
        check_nyquist(field)
    prop = StrangPropagator(model, field.grid, field.eps, dt)
    return SpinorField(field.grid, prop.step(field.u), field.eps, field.t + dt)


def apply_hamiltonian(field, model):
    """H psi = m sigma3 psi + eps (k . sigma) psi (spectral)."""
    g = field.grid
    X1, X2 = g.mesh()
    m = model.mass(X1, X2)
    k1, k2 = g.kmesh()
    f = sfft.fft2(field.u, axes=(-2, -1))
    kin = np.stack([(k1 - 1j * k2) * f[1], (k1 + 1j * k2) * f[0]])
    kin = field.eps * sfft.ifft2(kin, axes=(-2, -1))
    out = kin + np.stack([m * field.u[0], -m * field.u[1]])
    return SpinorField(g, out, field.eps, field.t)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    hf_fraction: list = field(default_factory=list)
    outside_box: list = field(default_factory=list)
    final: SpinorField | None = None

    def norm_drift(self):
        n = np.asarray(self.step_norms)
        return float(np.max(np.abs(n / n[0] - 1))) if len(n) else 0.0


def evolve(field, model, config, box_center=None, track_norm=True):
    """Evolve to ``config.t_end``; records diagnostics at every snapshot.

    ``box_center`` optionally maps t to the centre of the mass-in-box window.
    """
    config.validate(field.eps)
    if config.nyquist_check:
        check_nyquist(field)
    nsteps = int(round(config.t_end / abs(config.dt)))
    if abs(nsteps * abs(config.dt) - config.t_end) > 1e-9 * max(1.0, config.t_end):
        raise ConfigurationError("t_end must be an integer multiple of dt")
    dt = np.sign(config.dt) * abs(config.dt)
    prop = StrangPropagator(model, field.grid, field.eps, dt)
    traj = Trajectory()
    stride = config.snapshot_stride or nsteps or 1
    u = field.u.copy()
    t0 = field.t

    def record(j, u):
        f = SpinorField(field.grid, u.copy(), field.eps, t0 + j * dt)
        traj.times.append(f.t)
        traj.snapshots.append(f)
        if config.hf_radii:
            traj.hf_fraction.append(high_frequency_fraction(f, config.hf_radii))
        if config.box is not None:
            c = box_center(f.t) if box_center is not None else (0.0, 0.0)
            traj.outside_box.append(mass_outside_box(f, config.box, c))

    record(0, u)
    if track_norm:
        traj.step_norms.append(float(np.sum(np.abs(u) ** 2) * field.grid.cell))
    j = 0
    while j < nsteps:
        chunk = min(stride, nsteps - j) if not track_norm else 1
        u = prop.run(u, chunk)
        j += chunk
        if track_norm:
            n2 = float(np.sum(np.abs(u) ** 2) * field.grid.cell)
            if not np.isfinite(n2):
                raise NumericalBlowupError("non-finite norm", step=j)
            traj.step_norms.append(n2)
        elif not np.all(np.isfinite(u)):
            raise NumericalBlowupError("non-finite values", step=j)
        if j % stride == 0 or j == nsteps:
            record(j, u)
            if config.nyquist_check and nyquist_fraction(traj.snapshots[-1]) > 1e-6:
                log.warning("spectral mass near Nyquist at t=%.4g", traj.times[-1])
    traj.final = traj.snapshots[-1]
    return traj


def propagate(field, model, t, dt):
    """Final state only, with fused half-steps; convenience for studies."""
    n = int(round(abs(t) / abs(dt)))
    prop = StrangPropagator(model, field.grid, field.eps, np.sign(t) * abs(dt) if t else dt)
    return SpinorField(field.grid, prop.run(field.u, n), field.eps, field.t + n * prop.dt)
