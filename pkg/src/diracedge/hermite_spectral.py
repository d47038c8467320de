"""Hermite functions and the explicit spectrum of the transverse model operator

    T(s, sigma) = [[sigma, y|grad m| + d/dy], [y|grad m| - d/dy, -sigma]]

acting on L^2(R_y, C^2). Its eigenpairs are indexed by a signed integer n.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import RangeError, ShapeError

PI_QUARTER = np.pi ** -0.25


def hermite_functions(y, m_max):
    """Normalised Hermite functions h_0..h_{m_max} at ``y``, shape (m_max+1, *y.shape).

    Uses the stable three-term recurrence
    h_{m+1} = sqrt(2/(m+1)) y h_m - sqrt(m/(m+1)) h_{m-1}.
    """
    y = np.asarray(y, dtype=float)
    out = np.empty((m_max + 1,) + y.shape)
    out[0] = PI_QUARTER * np.exp(-0.5 * y * y)
    if m_max >= 1:
        out[1] = np.sqrt(2.0) * y * out[0]
    for m in range(1, m_max):
        out[m + 1] = np.sqrt(2.0 / (m + 1)) * y * out[m] - np.sqrt(m / (m + 1)) * out[m - 1]
    return out


def periodic_grid(y_min, y_max, n):
    dy = (y_max - y_min) / n
    return y_min + dy * np.arange(n)


@dataclass
class HermiteBasis:
    y_grid: np.ndarray
    h: np.ndarray
    M_max: int

    @property
    def dy(self):
        return float(self.y_grid[1] - self.y_grid[0])

    def gram(self):
        return (self.h @ self.h.T) * self.dy


def hermite_basis(y_min=-12.0, y_max=12.0, N=1024, M_max=20, tail_tol=1e-12):
    if N & (N - 1):
        raise ValueError("N must be a power of two")
    if not np.isclose(y_min, -y_max):
        raise ValueError("range must be symmetric")
    y = periodic_grid(y_min, y_max, N)
    # tail mass of h_M beyond the window, by quadrature on an extension
    ext = np.linspace(y_max, y_max + 20.0, 4001)
    tail = 2 * np.trapezoid(hermite_functions(ext, M_max)[M_max] ** 2, ext)
    if tail > tail_tol:
        raise RangeError(f"h_{M_max} has tail mass {tail:.2e} outside [{y_min}, {y_max}]")
    return HermiteBasis(y_grid=y, h=hermite_functions(y, M_max), M_max=M_max)


def lambda_n(n, sigma, grad_norm):
    """Eigenvalue branch n: -sigma for n = 0, sgn(n) sqrt(sigma^2 + 2|n| |grad m|) otherwise."""
    n = np.asarray(n)
    sigma = np.asarray(sigma, dtype=float)
    grad_norm = np.asarray(grad_norm, dtype=float)
    root = np.sqrt(sigma ** 2 + 2 * np.abs(n) * grad_norm)
    return np.where(n == 0, -sigma, np.sign(n) * root)


def dlambda_dsigma(n, sigma, grad_norm):
    lam = lambda_n(n, sigma, grad_norm)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(np.asarray(n) == 0, -1.0, sigma / lam)
    return v


def mode_coefficients(n, sigma, r):
    """Prefactors (alpha, c) of g_n = alpha * (h_{|n|-1}(r y), c h_{|n|}(r y)).

    ``alpha`` includes the sqrt(r) dilation factor so that ||g_n|| = 1.
    """
    if n == 0:
        return np.sqrt(r), None
    lam = lambda_n(n, sigma, r * r)
    alpha = np.sqrt(r / 2.0) * np.sqrt(1.0 + sigma / lam)
    c = np.sqrt(2.0 * abs(n)) * r / (lam + sigma)
    return alpha, c


@dataclass
class EigenMode:
    n: int
    lam: float
    g: np.ndarray
    s: float | None
    sigma: float
    r: float
    y_grid: np.ndarray

    @property
    def dy(self):
        return float(self.y_grid[1] - self.y_grid[0])

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.g) ** 2) * self.dy))


def mode_profile(n, sigma, r, y):
    """Unit-norm eigenfunction g_n^{s,sigma} evaluated at ``y`` (shape (2, *y.shape))."""
    y = np.asarray(y, dtype=float)
    m = abs(n)
    h = hermite_functions(r * y, m)
    g = np.zeros((2,) + y.shape, dtype=complex)
    alpha, c = mode_coefficients(n, sigma, r)
    if n == 0:
        g[1] = alpha * h[0]
    else:
        g[0] = alpha * h[m - 1]
        g[1] = alpha * c * h[m]
    return g


def eigenmode(basis, n, r, sigma, s=None):
    if abs(n) > basis.M_max:
        raise RangeError(f"|n| = {abs(n)} exceeds basis M_max = {basis.M_max}")
    g = mode_profile(n, sigma, r, basis.y_grid)
    lam = float(lambda_n(n, sigma, r * r))
    return EigenMode(n=n, lam=lam, g=g, s=s, sigma=float(sigma), r=float(r),
                     y_grid=basis.y_grid)


def spectral_derivative_matrix(y_grid):
    """Fourier differentiation matrix on a periodic uniform grid (real, antisymmetric)."""
    n = len(y_grid)
    L = n * (y_grid[1] - y_grid[0])
    j = np.arange(n)
    diff = j[:, None] - j[None, :]
    with np.errstate(divide="ignore"):
        if n % 2 == 0:
            D = 0.5 * (-1.0) ** diff / np.tan(np.pi * diff / n)
        else:
            D = 0.5 * (-1.0) ** diff / np.sin(np.pi * diff / n)
    D[diff == 0] = 0.0
    return D * (2 * np.pi / L)


def spectral_derivative(f, dy, axis=-1):
    """d/dy by FFT along ``axis`` (periodic; Nyquist mode zeroed)."""
    n = f.shape[axis]
    k = 2 * np.pi * np.fft.fftfreq(n, d=dy)
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = n
    return np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(f, axis=axis), axis=axis)


def build_Tds(y_grid, grad_norm, sigma):
    """Dense matrix of T on the discretised L^2(R, C^2), block order (upper, lower)."""
    n = len(y_grid)
    D = spectral_derivative_matrix(y_grid)
    Y = np.diag(y_grid * grad_norm)
    I = np.eye(n)
    return np.block([[sigma * I, Y + D], [Y - D, -sigma * I]])


def apply_Tds(g, y_grid, grad_norm, sigma):
    """Matrix-free application of T to a profile of shape (2, N)."""
    dy = y_grid[1] - y_grid[0]
    d = spectral_derivative(g, dy, axis=-1)
    yg = y_grid * grad_norm
    return np.stack([sigma * g[0] + yg * g[1] + d[1],
                     yg * g[0] - d[0] - sigma * g[1]])


def eigen_residual(n, sigma, grad_norm, y_grid, lam_fn=lambda_n):
    """L^2 residual ||T g_n - lambda_n g_n|| of the closed-form eigenpair."""
    r = np.sqrt(grad_norm)
    g = mode_profile(n, sigma, r, y_grid)
    lam = lam_fn(n, sigma, grad_norm)
    res = apply_Tds(g, y_grid, grad_norm, sigma) - lam * g
    dy = y_grid[1] - y_grid[0]
    return float(np.sqrt(np.sum(np.abs(res) ** 2) * dy))


def projector_apply(mode, f):
    """Coefficient c of Pi_n f = c g_n, i.e. the inner product <f, g_n>."""
    f = np.asarray(f)
    if f.shape != mode.g.shape:
        raise ShapeError(f"profile shape {f.shape} != mode shape {mode.g.shape}")
    return complex(np.sum(f * np.conj(mode.g)) * mode.dy)


def export_modes_csv(modes, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "sigma", "r", "y", "re_g1", "im_g1", "re_g2", "im_g2"])
        for m in modes:
            for j, y in enumerate(m.y_grid):
                w.writerow([m.n] + [repr(float(v)) for v in (
                    m.sigma, m.r, y, m.g[0, j].real, m.g[0, j].imag,
                    m.g[1, j].real, m.g[1, j].imag)])
    return path
