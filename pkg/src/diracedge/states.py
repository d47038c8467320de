"""Initial data: wave packets, oriented packets, Gaussian edge states, mode superpositions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dirac_solver import SpinorField
from .errors import AssumptionError, RangeError
from .hermite_spectral import mode_profile
from .mass_geometry import perp, project_to_interface
from .normal_form import NormalField, from_normal, normal_grids

TAIL_TOL = 1e-10


def orientation_vector(theta, normalized=False):
    """V_theta = (e^{-i theta/2}, -e^{i theta/2}), principal branch."""
    v = np.array([np.exp(-0.5j * theta), -np.exp(0.5j * theta)])
    return v / np.sqrt(2) if normalized else v


def orientation_perp(theta, normalized=False):
    v = np.array([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
    return v / np.sqrt(2) if normalized else v


def band_vector(m, xi, branch=+1):
    """Unit eigenvector of m s3 + xi . s for the eigenvalue branch * sqrt(m^2 + |xi|^2)."""
    H = np.array([[m, xi[0] - 1j * xi[1]], [xi[0] + 1j * xi[1], -m]])
    w, v = np.linalg.eigh(H)
    return v[:, 1] if branch > 0 else v[:, 0]


def gaussian_1d(width=1.0, center=0.0):
    """Unit-norm Gaussian envelope z -> (pi w^2)^{-1/4} exp(-(z - c)^2 / (2 w^2))."""
    c0 = (np.pi * width * width) ** -0.25

    def f(z):
        return c0 * np.exp(-(np.asarray(z) - center) ** 2 / (2 * width * width))
    f.width, f.center = width, center
    return f


def min_image(d, L):
    return (d + L / 2) % L - L / 2


@dataclass
class PacketSpec:
    x0: tuple
    xi0: tuple = (0.0, 0.0)
    eps: float = 0.01
    width: float = 1.0
    orientation: object = "plus"      # complex 2-vector, "plus", "minus" or "edge"
    profile: object = None            # optional callable f(z1, z2); overrides width

    def spinor(self, model=None):
        o = self.orientation
        if isinstance(o, str):
            if o in ("plus", "minus"):
                if model is None:
                    raise ValueError("band orientation needs a mass model")
                m = float(model.mass(np.float64(self.x0[0]), np.float64(self.x0[1])))
                return band_vector(m, self.xi0, +1 if o == "plus" else -1)
            if o == "edge":
                if model is None:
                    raise ValueError("edge orientation needs a mass model")
                _, g, _ = model.evaluate(np.float64(self.x0[0]), np.float64(self.x0[1]))
                return orientation_vector(np.arctan2(g[1], g[0]) - np.pi / 2, normalized=True)
            raise ValueError(f"unknown orientation directive {o!r}")
        v = np.asarray(o, dtype=complex)
        return v / np.linalg.norm(v)


def wave_packet(spec, grid, model=None):
    """e^{i xi0.(x-x0)/eps} eps^{-1/2} f((x-x0)/sqrt(eps)) times the orientation spinor."""
    eps = spec.eps
    X1, X2 = grid.mesh()
    d1 = min_image(X1 - spec.x0[0], grid.L1)
    d2 = min_image(X2 - spec.x0[1], grid.L2)
    q = np.sqrt(eps)
    if spec.profile is None:
        w = spec.width
        rad = min(grid.L1, grid.L2) / 2 / q
        if np.exp(-(rad / w) ** 2) > TAIL_TOL:
            raise RangeError("packet tail exceeds the box")
        env = np.exp(-(d1 ** 2 + d2 ** 2) / (2 * eps * w * w)) / (np.sqrt(np.pi) * w * q)
    else:
        env = spec.profile(d1 / q, d2 / q) / q
        edge = np.concatenate([env[0], env[-1], env[:, 0], env[:, -1]])
        if np.max(np.abs(edge)) ** 2 * grid.L1 * grid.L2 > TAIL_TOL:
            raise RangeError("packet tail exceeds the box")
    # the phase uses the unwrapped offset so it stays continuous near x0
    env = env * np.exp(1j * (spec.xi0[0] * d1 + spec.xi0[1] * d2) / eps)
    v = spec.spinor(model)
    return SpinorField(grid, v[:, None, None] * env[None], eps)


def edge_ansatz(model, x0, envelope, eps, grid, theta_chart=None):
    """Gaussian edge profile at a point x0 of the interface (no renormalisation).

    With r = |grad m(x0)| and theta_T = theta - pi/2 (theta the angle of the
    unit normal), the field is

        r^{1/4} eps^{-1/2} f(tau / sqrt(eps)) exp(-r eta^2 / (2 eps)) V_{theta_T},

    tau and eta the tangent and normal components of x - x0.
    """
    _, g, _ = model.evaluate(np.float64(x0[0]), np.float64(x0[1]))
    r = float(np.hypot(g[0], g[1]))
    nu = np.asarray(g) / r
    if theta_chart is None:
        theta_chart = np.arctan2(nu[1], nu[0])
    tan = -perp(nu)
    X1, X2 = grid.mesh()
    d1 = min_image(X1 - x0[0], grid.L1)
    d2 = min_image(X2 - x0[1], grid.L2)
    tau = d1 * tan[0] + d2 * tan[1]
    eta = d1 * nu[0] + d2 * nu[1]
    q = np.sqrt(eps)
    prof = r ** 0.25 / q * envelope(tau / q) * np.exp(-r * eta ** 2 / (2 * eps))
    v = orientation_vector(theta_chart - np.pi / 2)
    return SpinorField(grid, v[:, None, None] * prof[None], eps)


@dataclass
class EdgeState:
    field: SpinorField
    scale: float          # factor applied to reach unit norm
    x0: np.ndarray
    s0: float


def gaussian_edge_state(chart, s0, envelope, eps, grid):
    x0 = chart.gamma_at(float(s0))
    f = edge_ansatz(chart.model, x0, envelope, eps, grid, theta_chart=float(chart.theta_at(s0)))
    # tail check: normal Gaussian and envelope must decay inside the box
    r = float(chart.grad_norm_at(s0))
    half = min(grid.L1, grid.L2) / 2
    if np.exp(-r * half ** 2 / eps) > TAIL_TOL or envelope(half / np.sqrt(eps)) ** 2 > TAIL_TOL:
        raise RangeError("edge state tail exceeds the box")
    n = f.norm()
    f.u /= n
    return EdgeState(field=f, scale=1.0 / n, x0=x0, s0=float(s0))


def _envelope(a):
    if callable(a):
        return a
    if isinstance(a, dict):
        return gaussian_1d(a.get("width", 1.0), a.get("center", 0.0))
    raise TypeError("envelope must be callable or a {'width', 'center'} mapping")


def mode_field(tmap, modes, eps, s_grid, y_grid):
    """Normal-coordinate field sum_j a_j(s) e^{i sigma_j s/sqrt(eps)} g_{n_j}(y/sqrt(eps)) eps^{-1/4}."""
    ch = tmap.chart
    q = np.sqrt(eps)
    vals = np.zeros((2, len(s_grid), len(y_grid)), dtype=complex)
    r = ch.r_at(s_grid)
    H = tmap.halfwidth
    for n, sigma, a in modes:
        a = _envelope(a)
        amp = a(s_grid) * np.exp(1j * sigma * s_grid / q)
        # the Hermite width grows like sqrt(2|n| + 1) sqrt(eps) / r
        reach = (np.sqrt(2 * abs(n) + 1) + 5) * q / np.min(r)
        if reach > 0.5 * H:
            raise RangeError(f"mode n={n} reaches the tube edge (extent {reach:.3g} > {0.5 * H:.3g})")
        for i, s in enumerate(s_grid):
            if amp[i] == 0:
                continue
            vals[:, i, :] += amp[i] * mode_profile(n, sigma, r[i], y_grid / q) * eps ** -0.25
    return NormalField(vals, np.asarray(s_grid), np.asarray(y_grid), eps, False)


def mode_superposition(tmap, modes, eps, grid, s_grid=None, y_grid=None):
    """Cartesian field built from normal-coordinate modes ``(n, sigma, envelope)``."""
    if s_grid is None or y_grid is None:
        s_grid, y_grid = normal_grids(tmap, min(grid.dx1, grid.dx2) / 2)
    if not modes:
        return SpinorField.zeros(grid, eps)
    nf = mode_field(tmap, modes, eps, s_grid, y_grid)
    return from_normal(nf, tmap, grid)


def edge_center_ode(model, x0, t_end, dt=1e-3):
    """RK4 path of  x' = grad m^perp / |grad m|  from the projection of x0 onto {m = 0}."""
    x = np.asarray(project_to_interface(model, x0), dtype=float)
    n = int(round(abs(t_end) / dt))
    h = np.sign(t_end) * dt if t_end else dt

    def v(p):
        _, g, _ = model.evaluate(np.float64(p[0]), np.float64(p[1]))
        gn = np.hypot(g[0], g[1])
        if gn < model.g_min:
            raise AssumptionError(f"|grad m| = {gn:.3g} below g_min at {p}")
        return perp(np.asarray(g)) / gn

    path = np.empty((n + 1, 2))
    path[0] = x
    for j in range(n):
        k1 = v(x)
        k2 = v(x + 0.5 * h * k1)
        k3 = v(x + 0.5 * h * k2)
        k4 = v(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        path[j + 1] = x
    return h * np.arange(n + 1), path
