"""Husimi and Wigner transforms, quadratic observables, and mode-resolved densities along the interface."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .errors import RangeError, ResolutionError, ShapeError
from .hermite_spectral import hermite_functions, lambda_n
from .io import write_raw, write_csv
from .normal_form import _oversample, rescale, smoothstep_cutoff, to_normal

log = logging.getLogger(__name__)

PARTIAL_TUBE_MASS = "partial_tube_mass"
WIGNER_MAX_SAMPLES = 64 ** 4


@dataclass
class PhaseSpaceDensity:
    axes: tuple                  # (position axis, momentum axis)
    values: np.ndarray
    scale: float
    mode: int | None = None
    kind: str = "husimi"
    eps: float | None = None
    t: float = 0.0
    flags: dict = field(default_factory=dict)

    @property
    def cell(self):
        a, b = self.axes
        return float((a[1] - a[0]) * (b[1] - b[0]))

    def mass(self):
        return float(np.sum(self.values) * self.cell)

    def marginal(self, axis=1):
        """Integrate out ``axis`` (1 = momentum)."""
        a = self.axes[axis]
        return np.sum(self.values, axis=axis) * (a[1] - a[0])

    def centroid(self):
        m = np.sum(self.values)
        if m == 0:
            return np.array([np.nan, np.nan])
        A, B = np.meshgrid(*self.axes, indexing="ij")
        return np.array([np.sum(A * self.values) / m, np.sum(B * self.values) / m])

    def circular_centroid(self, period):
        """Position centroid on a circle of length ``period``, momentum centroid as usual."""
        w = self.marginal(1)
        a = self.axes[0]
        z = np.sum(w * np.exp(2j * np.pi * a / period))
        pos = np.angle(z) * period / (2 * np.pi)
        return np.array([pos, self.centroid()[1]])

    def save(self, path):
        return write_raw(path, self.values, axes=[list(map(float, a)) for a in self.axes],
                         scale=self.scale, n=self.mode, eps=self.eps, t=self.t, kind=self.kind)

    def marginal_csv(self, path):
        a = self.axes[0]
        return write_csv(path, ["s", "density"], zip(a, self.marginal(1)))


def _coherent_amplitudes(q, x, h, s_grid, sigma_grid, period=None):
    """<q, phi_{s,sigma}> for samples q(x) (last axis x) on a uniform grid.

    phi_{s,sigma}(x) = (pi h)^{-1/4} e^{i sigma (x - s)/h} e^{-(x - s)^2 / (2h)}.
    Returns an array of shape q.shape[:-1] + (len(s_grid), len(sigma_grid)).
    """
    dx = x[1] - x[0]
    d = x[None, :] - np.asarray(s_grid)[:, None]                  # (Ns, Nx)
    if period is not None:
        d = (d + period / 2) % period - period / 2
    win = np.exp(-d * d / (2 * h)) * (np.pi * h) ** -0.25 * dx
    # e^{-i sigma d/h}, using the wrapped offset d
    out = np.empty(q.shape[:-1] + (len(s_grid), len(sigma_grid)), dtype=complex)
    for i in range(len(s_grid)):
        keep = win[i] > 1e-18
        E = np.exp(-1j * np.outer(d[i, keep], sigma_grid) / h)    # (nk, Nsig)
        out[..., i, :] = (q[..., keep] * win[i, keep]) @ E
    return out


def husimi_1d(u, x, h, s_grid, sigma_grid, period=None, clip_tol=0.01):
    """H(s, sigma) = |<u, phi_{s,sigma}>|^2 / (2 pi h)."""
    u = np.asarray(u, dtype=complex)
    x = np.asarray(x, dtype=float)
    if h <= 0:
        raise ValueError("h must be positive")
    dx = x[1] - x[0]
    k = 2 * np.pi * sfft.fftfreq(len(x), d=dx)
    p = np.abs(sfft.fft(u)) ** 2
    if p.sum() > 0:
        out = (k * h < sigma_grid[0]) | (k * h > sigma_grid[-1])
        frac = p[out].sum() / p.sum()
        if frac > clip_tol:
            raise RangeError(f"sigma window clips {100 * frac:.2f}% of the spectral mass")
    C = _coherent_amplitudes(u, x, h, s_grid, sigma_grid, period)
    return PhaseSpaceDensity((np.asarray(s_grid), np.asarray(sigma_grid)),
                             np.abs(C) ** 2 / (2 * np.pi * h), scale=h, kind="husimi")


def observable_pairing(field, a):
    """int <a(x) psi(x), psi(x)> dx for a position symbol ``a``.

    ``a`` may be a constant 2x2 matrix, an array of shape (2, 2, N2, N1), or a
    callable ``a(X1, X2)`` returning one of those.
    """
    if callable(a):
        a = a(*field.grid.mesh())
    a = np.asarray(a, dtype=complex)
    u = field.u
    if a.shape == (2, 2):
        au = np.einsum("ij,jyx->iyx", a, u)
    elif a.shape == (2, 2) + u.shape[1:]:
        au = np.einsum("ijyx,jyx->iyx", a, u)
    else:
        raise ShapeError(f"symbol shape {a.shape} incompatible with field")
    return complex(np.sum(au * np.conj(u)) * field.grid.cell)


def projector(v):
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, np.conj(v))


def wigner_2d(field, x1, x2, xi1, xi2, window=None, full=False):
    """Wigner transform on a coarse phase grid.

    W(x, xi) = (pi eps)^{-2} sum_d e^{-2i xi.d/eps} f(x + d) conj f(x - d) dd,
    with d on the half-spacing lattice of the spectrally upsampled field.
    Coarse x points are snapped to that lattice. ``window`` bounds |d_i|
    (default: the whole box). Returns the trace density, and the full 2x2
    density when ``full``.
    """
    g = field.grid
    eps = field.eps
    n_tot = len(x1) * len(x2) * len(xi1) * len(xi2)
    if n_tot > WIGNER_MAX_SAMPLES:
        raise ResolutionError(f"phase grid of {n_tot} samples exceeds 64^4")
    d1, d2 = g.dx1 / 2, g.dx2 / 2
    lim1, lim2 = eps * np.pi / g.dx1, eps * np.pi / g.dx2
    if np.max(np.abs(xi1)) >= lim1 or np.max(np.abs(xi2)) >= lim2:
        raise ResolutionError(f"|xi| must stay below the alias-free bound ({lim1:.3g}, {lim2:.3g})")
    u = _oversample(field.u, 2)
    M2, M1 = u.shape[1:]
    if window is None:
        J1, J2 = M1 // 4, M2 // 4
    else:
        J1 = min(int(np.ceil(window / d1)), M1 // 4)
        J2 = min(int(np.ceil(window / d2)), M2 // 4)
    j1 = np.arange(-J1, J1 + 1)
    j2 = np.arange(-J2, J2 + 1)
    E1 = np.exp(-2j * np.outer(xi1, j1) * d1 / eps)     # (Nxi1, nj1)
    E2 = np.exp(-2j * np.outer(xi2, j2) * d2 / eps)
    i1 = np.rint((np.asarray(x1) + g.L1 / 2) / d1).astype(int)
    i2 = np.rint((np.asarray(x2) + g.L2 / 2) / d2).astype(int)
    pref = d1 * d2 / (np.pi * eps) ** 2
    pairs = [(0, 0), (0, 1), (1, 0), (1, 1)] if full else [(0, 0), (1, 1)]
    W = np.zeros((len(pairs), len(x1), len(x2), len(xi1), len(xi2)), dtype=complex)
    r1p = (i1[:, None] + j1[None, :]) % M1
    r1m = (i1[:, None] - j1[None, :]) % M1
    for b, c2 in enumerate(i2):
        r2p = (c2 + j2) % M2
        r2m = (c2 - j2) % M2
        for p, (a, bb) in enumerate(pairs):
            fp = u[a][np.ix_(r2p, np.arange(M1))]      # (nj2, M1)
            fm = u[bb][np.ix_(r2m, np.arange(M1))]
            # K[x1, j2, j1] = f_a(x + d) conj f_b(x - d)
            K = fp[:, r1p].transpose(1, 0, 2) * np.conj(fm[:, r1m].transpose(1, 0, 2))
            W[p, :, b] = np.einsum("ak,bj,xjk->xab", E1, E2, K, optimize=True) * pref
    axes = (i1 * d1 - g.L1 / 2, i2 * d2 - g.L2 / 2, np.asarray(xi1), np.asarray(xi2))
    if full:
        mat = W.reshape((2, 2) + W.shape[1:])
        tr = (mat[0, 0] + mat[1, 1]).real
        return axes, tr, mat
    return axes, (W[0] + W[1]).real


def wigner_marginal_centroid(field):
    """(x, xi) centroid of the Wigner trace from its exact marginals.

    The xi-marginal is |psi(x)|^2 and the first xi moment is <psi, eps D psi>,
    both evaluated spectrally on the full grid. Positions use the circular
    mean on the periodic box.
    """
    g = field.grid
    rho = field.density()
    tot = rho.sum()
    X1, X2 = g.mesh()
    z1 = np.sum(rho * np.exp(2j * np.pi * X1 / g.L1)) / tot
    z2 = np.sum(rho * np.exp(2j * np.pi * X2 / g.L2)) / tot
    x = np.array([np.angle(z1) * g.L1 / (2 * np.pi), np.angle(z2) * g.L2 / (2 * np.pi)])
    k1, k2 = g.kmesh()
    p = np.sum(np.abs(sfft.fft2(field.u)) ** 2, axis=0)
    xi = field.eps * np.array([np.sum(k1 * p), np.sum(k2 * p)]) / p.sum()
    return x, xi


def extract_modes(field, tmap, ns, eps=None, s_grid=None, sigma_grid=None, nf=None,
                  tube_tol=0.99):
    """Empirical densities gamma_n(s, sigma) for each n in ``ns``.

    Pipeline: U chi psi -> sqrt(eps) rescaling -> for each (s0, sigma0) the
    overlap with G_{s0,sigma0}(s) g_n^{s0,sigma0}(Y), G a coherent state of
    scale sqrt(eps) in s, g_n frozen at (s0, sigma0) with r = r(s0).
    """
    eps = field.eps if eps is None else eps
    ch = tmap.chart
    if nf is None:
        nf = to_normal(field, tmap)
    u = rescale(nf)
    S = u.period
    if s_grid is None:
        s_grid = u.s_grid[0] + 0.05 * np.arange(int(np.floor(S / 0.05)))
    if sigma_grid is None:
        sigma_grid = np.linspace(-3.0, 3.0, 121)
    s_grid = np.asarray(s_grid, dtype=float)
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    h = np.sqrt(eps)
    total = field.norm2()
    tube = nf.norm2()
    flags = {}
    if total > 0 and tube < tube_tol * total:
        flags["warning"] = PARTIAL_TUBE_MASS
        flags["tube_fraction"] = tube / total
        log.warning("only %.4f of the field mass lies in the tube", tube / total)
    Y = u.y_grid
    dY = u.dy
    s_fine = u.s_grid
    ds = u.ds
    out = {n: np.zeros((len(s_grid), len(sigma_grid))) for n in ns}
    r_all = ch.r_at(s_grid)
    # window once: coherent weights for every s0 (periodic in s)
    d = s_fine[None, :] - s_grid[:, None]
    d = (d + S / 2) % S - S / 2
    win = np.exp(-d * d / (2 * h)) * (np.pi * h) ** -0.25 * ds
    for i, s0 in enumerate(s_grid):
        keep = win[i] > 1e-18
        E = np.exp(-1j * np.outer(d[i, keep], sigma_grid) / h) * win[i, keep][:, None]   # (nk, Nsig)
        r0 = float(r_all[i])
        mmax = max(abs(n) for n in ns)
        hm = hermite_functions(r0 * Y, mmax)                   # (mmax+1, NY)
        # q[c, m, s] = int u_c(s, Y) h_m(r0 Y) dY
        q = np.einsum("csy,my->cms", u.values[:, keep, :], hm) * dY
        P = q @ E                                              # (2, mmax+1, Nsig)
        for n in ns:
            m = abs(n)
            if n == 0:
                C = np.sqrt(r0) * P[1, 0]
            else:
                lam = lambda_n(n, sigma_grid, r0 * r0)
                alpha = np.sqrt(r0 / 2) * np.sqrt(1 + sigma_grid / lam)
                c = np.sqrt(2 * m) * r0 / (lam + sigma_grid)
                C = alpha * (P[0, m - 1] + c * P[1, m])
            out[n][i] = np.abs(C) ** 2 / (2 * np.pi * h)
    res = {}
    for n in ns:
        res[n] = PhaseSpaceDensity((s_grid, sigma_grid), out[n], scale=h, mode=n,
                                   kind="mode", eps=eps, t=field.t, flags=dict(flags))
    return res


def extract_mode_density(field, tmap, n, eps=None, s_grid=None, sigma_grid=None, basis=None,
                         nf=None):
    if basis is not None and abs(n) > basis.M_max:
        raise RangeError(f"|n| = {abs(n)} exceeds basis M_max = {basis.M_max}")
    return extract_modes(field, tmap, [n], eps, s_grid, sigma_grid, nf=nf)[n]


def tube_bulk_masses(field, tmap, nf=None):
    """(mass of chi psi in the tube, mass of the complement (1 - chi^2)|psi|^2)."""
    if nf is None:
        nf = to_normal(field, tmap)
    g = field.grid
    X1, X2 = g.mesh()
    _, y, inside = tmap.inverse(np.stack([X1, X2], axis=-1), strict=False)
    chi = np.where(inside, smoothstep_cutoff(y, tmap.halfwidth), 0.0)
    bulk = float(np.sum((1 - chi ** 2) * field.density()) * g.cell)
    return nf.norm2(), bulk
