"""Interface-adapted coordinates for spinor fields.

The reduction is U = U_theta V_Phi with

    (V_Phi u)(s, y) = sqrt(1 - y kappa(s)) u(Phi(s, y)),
    U_theta(s) = 1/sqrt(2) [[e^{i b}, -e^{-i b}], [e^{i b}, e^{-i b}]],  b = pi/4 + theta(s)/2,

under which the Dirac operator becomes

    H^E = m(Phi) s1 - eps D_y s2 + eps/(1 - y kappa) D_s s3 - i eps y kappa' / (2 (1 - y kappa)^2) s3.

Normal fields live on a uniform (s, y) grid, one chart period in s.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import fft as sfft
from scipy.ndimage import map_coordinates

from .dirac_solver import SpinorField, check_nyquist
from .errors import ResolutionError
from .io import write_raw

MAX_POINTS = 2 ** 24


def smoothstep_cutoff(y, halfwidth):
    """C^2 cutoff: 1 on |y| <= H/2, 0 on |y| >= H, quintic smoothstep between."""
    t = np.clip((np.abs(y) - 0.5 * halfwidth) / (0.5 * halfwidth), 0.0, 1.0)
    return 1.0 - t ** 3 * (10 - 15 * t + 6 * t * t)


def u_theta(theta):
    """U_theta(s) as an array of shape (..., 2, 2)."""
    b = np.pi / 4 + 0.5 * np.asarray(theta, dtype=float)
    e, ec = np.exp(1j * b), np.exp(-1j * b)
    U = np.empty(b.shape + (2, 2), dtype=complex)
    U[..., 0, 0] = e
    U[..., 0, 1] = -ec
    U[..., 1, 0] = e
    U[..., 1, 1] = ec
    return U / np.sqrt(2)


@dataclass
class NormalField:
    values: np.ndarray          # (2, Ns, Ny)
    s_grid: np.ndarray
    y_grid: np.ndarray
    eps: float
    rescaled: bool = False
    t: float = 0.0

    @property
    def ds(self):
        return float(self.s_grid[1] - self.s_grid[0])

    @property
    def dy(self):
        return float(self.y_grid[1] - self.y_grid[0])

    @property
    def period(self):
        return self.ds * len(self.s_grid)

    def norm2(self):
        return float(np.sum(np.abs(self.values) ** 2) * self.ds * self.dy)

    def save(self, path, **meta):
        v = self.values
        a = np.stack([v[0].real, v[0].imag, v[1].real, v[1].imag], axis=-1)
        return write_raw(path, a, eps=self.eps, t=self.t, rescaled=self.rescaled,
                         s0=float(self.s_grid[0]), ds=self.ds,
                         y0=float(self.y_grid[0]), dy=self.dy, **meta)


def _pow2_at_least(n):
    return 1 << int(np.ceil(np.log2(max(n, 2))))


def normal_grids(tmap, dx, pad=4):
    """Default (s, y) grids with spacing at most ``dx``.

    The y grid spans the tube plus ``pad`` zero cells on each side.
    """
    ch = tmap.chart
    if ch.period is not None:
        S = ch.period
        ns = _pow2_at_least(int(np.ceil(S / dx)))
        s = -S / 2 + 0.5 * (ch.s_min + ch.s_max) + (S / ns) * np.arange(ns)
    else:
        ns = _pow2_at_least(int(np.ceil((ch.s_max - ch.s_min) / dx)))
        s = ch.s_min + ((ch.s_max - ch.s_min) / ns) * np.arange(ns)
    H = tmap.halfwidth
    ny = _pow2_at_least(int(np.ceil(2 * H / dx)) + 2 * pad)
    dy = 2 * H / (ny - 2 * pad)
    y = -H - pad * dy + dy * np.arange(ny)
    return s, y


def _interp_periodic(arr, c1, c2, order=3):
    """Cubic spline interpolation of a periodic complex 2-D array at fractional indices."""
    coords = np.stack([c1.ravel(), c2.ravel()])
    re = map_coordinates(arr.real, coords, order=order, mode="grid-wrap")
    im = map_coordinates(arr.imag, coords, order=order, mode="grid-wrap")
    return (re + 1j * im).reshape(c1.shape)


def _oversample(u, factor):
    """Band-limited (zero-padded FFT) upsampling of a periodic (2, N2, N1) field."""
    if factor == 1:
        return u
    _, n2, n1 = u.shape
    f = sfft.fftshift(sfft.fft2(u, axes=(-2, -1)), axes=(-2, -1))
    m2, m1 = n2 * factor, n1 * factor
    big = np.zeros((2, m2, m1), dtype=complex)
    o2, o1 = (m2 - n2) // 2, (m1 - n1) // 2
    big[:, o2:o2 + n2, o1:o1 + n1] = f
    big = sfft.ifftshift(big, axes=(-2, -1))
    return sfft.ifft2(big, axes=(-2, -1)) * (factor * factor)


def sample_field(field, pts, oversample=1):
    """Values of the periodic Cartesian field at points ``pts`` (shape (..., 2))."""
    g = field.grid
    u = _oversample(field.u, oversample)
    d1, d2 = g.dx1 / oversample, g.dx2 / oversample
    c2 = (pts[..., 0] + g.L1 / 2) / d1     # column index (x1)
    c1 = (pts[..., 1] + g.L2 / 2) / d2     # row index (x2)
    return np.stack([_interp_periodic(u[0], c1, c2), _interp_periodic(u[1], c1, c2)])


def _check_resolution(field, ds, dy):
    check_nyquist(field)
    lim = np.sqrt(field.eps) / 4 * (1 + 1e-9)
    if ds > lim or dy > lim:
        raise ResolutionError(f"normal grid spacing ({ds:.3g}, {dy:.3g}) exceeds sqrt(eps)/4 = {lim:.3g}")


def to_normal(field, tmap, cutoff=True, s_grid=None, y_grid=None, oversample=2):
    """U chi psi sampled on the normal grid."""
    if s_grid is None or y_grid is None:
        s_grid, y_grid = normal_grids(tmap, min(field.grid.dx1, field.grid.dx2))
    _check_resolution(field, s_grid[1] - s_grid[0], y_grid[1] - y_grid[0])
    if len(s_grid) * len(y_grid) > MAX_POINTS:
        raise ResolutionError("normal grid exceeds the memory budget")
    ch = tmap.chart
    S, Y = np.meshgrid(s_grid, y_grid, indexing="ij")
    pts = tmap.forward(S, Y, check=False)
    u = sample_field(field, pts, oversample)
    jac = 1.0 - Y * ch.kappa_at(S)
    w = np.sqrt(np.clip(jac, 0.0, None))
    if cutoff:
        w = w * smoothstep_cutoff(Y, tmap.halfwidth)
    else:
        w = w * (np.abs(Y) < tmap.halfwidth)
    U = u_theta(ch.theta_at(s_grid))          # (Ns, 2, 2)
    phi = np.einsum("sij,jsy->isy", U, u) * w
    return NormalField(phi, np.asarray(s_grid), np.asarray(y_grid), field.eps, False, field.t)


def from_normal(nf, tmap, grid):
    """Inverse of :func:`to_normal` on the tube; zero elsewhere."""
    if nf.rescaled:
        raise ValueError("from_normal expects an unrescaled field")
    ch = tmap.chart
    X1, X2 = grid.mesh()
    s, y, inside = tmap.inverse(np.stack([X1, X2], axis=-1), strict=False)
    inside &= np.abs(y) < min(tmap.halfwidth, -nf.y_grid[0])
    out = np.zeros((2, grid.N2, grid.N1), dtype=complex)
    if not np.any(inside):
        return SpinorField(grid, out, nf.eps, nf.t)
    si, yi = s[inside], y[inside]
    c1 = ((si - nf.s_grid[0]) / nf.ds) % len(nf.s_grid)
    c2 = (yi - nf.y_grid[0]) / nf.dy
    phi = np.stack([_interp_periodic(nf.values[0], c1, c2),
                    _interp_periodic(nf.values[1], c1, c2)])
    Uh = np.conj(np.swapaxes(u_theta(ch.theta_at(si)), -1, -2))
    v = np.einsum("pij,jp->ip", Uh, phi)
    v /= np.sqrt(1.0 - yi * ch.kappa_at(si))
    out[:, inside] = v
    return SpinorField(grid, out, nf.eps, nf.t)


def rescale(nf):
    """u(s, Y) = eps^{1/4} phi(s, sqrt(eps) Y): an exact relabelling of the y grid."""
    if nf.rescaled:
        raise ValueError("field already rescaled")
    q = np.sqrt(nf.eps)
    return replace(nf, values=nf.values * nf.eps ** 0.25, y_grid=nf.y_grid / q, rescaled=True)


def unrescale(nf):
    if not nf.rescaled:
        raise ValueError("field is not rescaled")
    q = np.sqrt(nf.eps)
    return replace(nf, values=nf.values * nf.eps ** -0.25, y_grid=nf.y_grid * q, rescaled=False)


def _deriv(f, h, axis, pad):
    """Spectral derivative along ``axis``; with ``pad`` the axis is zero-padded to twice its length."""
    n = f.shape[axis]
    m = 2 * n if pad else n
    k = 2 * np.pi * sfft.fftfreq(m, d=h)
    if m % 2 == 0:
        k[m // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = m
    F = sfft.fft(f, n=m, axis=axis)
    d = sfft.ifft(1j * k.reshape(shape) * F, axis=axis)
    if pad:
        d = np.take(d, np.arange(n), axis=axis)
    return d


def apply_H_edge(nf, chart, eps=None, model=None):
    """H^E applied to an unrescaled normal field (validation only)."""
    if nf.rescaled:
        raise ValueError("apply_H_edge expects an unrescaled field")
    eps = nf.eps if eps is None else eps
    model = chart.model if model is None else model
    S, Y = np.meshgrid(nf.s_grid, nf.y_grid, indexing="ij")
    if chart.ds > 0.05:
        raise ResolutionError("chart too coarse for kappa'")
    kap = chart.kappa_at(S)
    dkap = chart.kappa_at(S, 1)
    X = chart.gamma_at(S) + Y[..., None] * chart.normal_at(S)
    m = model.mass(X[..., 0], X[..., 1])
    p = nf.values
    dy = _deriv(p, nf.dy, axis=2, pad=True)
    ds = _deriv(p, nf.ds, axis=1, pad=False)
    jac = 1.0 - Y * kap
    out = np.empty_like(p)
    # m s1 phi - eps D_y s2 phi = (m p2 + eps dy p2, m p1 - eps dy p1)
    out[0] = m * p[1] + eps * dy[1]
    out[1] = m * p[0] - eps * dy[0]
    # eps/(1 - y k) D_s s3 - i eps y k' / (2 (1 - y k)^2) s3
    a = -1j * eps / jac
    b = -1j * eps * Y * dkap / (2 * jac ** 2)
    out[0] += a * ds[0] + b * p[0]
    out[1] -= a * ds[1] + b * p[1]
    return replace(nf, values=out)
