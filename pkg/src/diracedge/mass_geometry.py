"""Mass models, interface curves and the tubular-neighbourhood chart.

All built-in models share one form,

    m(x) = c * a(x1) * g(x2 - h(x1)),

with ``g(u) = (L2 / 2 pi) sin(2 pi u / L2)`` (periodic in x2) or ``g(u) = u``
when ``wrap`` is off, an interface graph ``h`` and a positive amplitude
modulation ``a``. Both ``h`` and ``a`` are trigonometric polynomials in
``2 pi x1 / L1`` so that m is periodic on the box
``[-L1/2, L1/2) x [-L2/2, L2/2)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad, solve_ivp, cumulative_trapezoid
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.spatial import cKDTree

from .errors import (AssumptionError, ConfigurationError, DomainError,
                     RangeError)

MODEL_KINDS = ("linear_periodic", "sinusoidal_interface", "custom_coefficients")
G_MIN_DEFAULT = 1e-3


def perp(v):
    """Counter-clockwise rotation by pi/2 along the last axis."""
    v = np.asarray(v)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True)
class MassModel:
    kind: str
    L1: float = 8.0
    L2: float = 8.0
    A: float = 0.0
    k: float | None = None
    scale: float = 1.0
    wrap: bool = True
    height_cos: tuple = ()
    height_sin: tuple = ()
    amp_cos: tuple = ()
    amp_sin: tuple = ()
    g_min: float = G_MIN_DEFAULT

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"unknown mass model kind {self.kind!r}")
        if self.L1 <= 0 or self.L2 <= 0:
            raise ConfigurationError("box lengths must be positive")
        if self.scale == 0:
            raise ConfigurationError("scale must be non-zero")
        k1 = 2 * np.pi / self.L1
        if self.kind == "sinusoidal_interface":
            k = k1 if self.k is None else float(self.k)
            j = k / k1
            if abs(j - round(j)) > 1e-9 or round(j) < 1:
                raise ConfigurationError(
                    "sinusoidal_interface wavenumber must be a positive multiple of 2*pi/L1")
            hs = [0.0] * int(round(j))
            hs[-1] = float(self.A)
            object.__setattr__(self, "height_sin", tuple(hs))
            object.__setattr__(self, "height_cos", ())
        elif self.kind == "linear_periodic":
            object.__setattr__(self, "height_sin", ())
            object.__setattr__(self, "height_cos", ())
        xs = np.linspace(0.0, self.L1, 2049)
        if np.min(self._amp(xs)[0]) <= 0:
            raise ConfigurationError("amplitude modulation a(x1) must stay positive")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("height_cos", "height_sin", "amp_cos", "amp_sin"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def to_dict(self):
        return {
            "kind": self.kind, "L1": self.L1, "L2": self.L2, "A": self.A,
            "k": self.k, "scale": self.scale, "wrap": self.wrap,
            "height_cos": list(self.height_cos), "height_sin": list(self.height_sin),
            "amp_cos": list(self.amp_cos), "amp_sin": list(self.amp_sin),
        }

    @property
    def periodic(self):
        return bool(self.wrap)

    def scaled(self, factor):
        d = self.to_dict()
        d["scale"] = self.scale * factor
        if self.kind == "sinusoidal_interface":
            d.pop("height_sin")
        return MassModel.from_dict(d)

    # trigonometric polynomials in x1 and their first two derivatives
    def _trig(self, x1, cos_c, sin_c, const):
        k1 = 2 * np.pi / self.L1
        v = np.full_like(x1, const, dtype=float)
        d1 = np.zeros_like(v)
        d2 = np.zeros_like(v)
        for j, c in enumerate(cos_c, start=1):
            w = j * k1
            v += c * np.cos(w * x1)
            d1 -= c * w * np.sin(w * x1)
            d2 -= c * w * w * np.cos(w * x1)
        for j, c in enumerate(sin_c, start=1):
            w = j * k1
            v += c * np.sin(w * x1)
            d1 += c * w * np.cos(w * x1)
            d2 -= c * w * w * np.sin(w * x1)
        return v, d1, d2

    def _height(self, x1):
        return self._trig(x1, self.height_cos, self.height_sin, 0.0)

    def _amp(self, x1):
        return self._trig(x1, self.amp_cos, self.amp_sin, 1.0)

    def _g(self, u):
        if not self.wrap:
            return u, np.ones_like(u), np.zeros_like(u)
        q = 2 * np.pi / self.L2
        return np.sin(q * u) / q, np.cos(q * u), -q * np.sin(q * u)

    def interface_height(self, x1):
        return self._height(np.asarray(x1, dtype=float))[0]

    def mass(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        h = self._height(x1)[0]
        a = self._amp(x1)[0]
        return self.scale * a * self._g(x2 - h)[0]

    def evaluate(self, x1, x2):
        """Return ``(m, grad, hess)`` with shapes ``(...)``, ``(..., 2)``, ``(..., 2, 2)``."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        h, hp, hpp = self._height(x1)
        a, ap, app = self._amp(x1)
        g, gp, gpp = self._g(x2 - h)
        c = self.scale
        m = c * a * g
        m1 = c * (ap * g - a * gp * hp)
        m2 = c * a * gp
        m11 = c * (app * g - 2 * ap * gp * hp + a * gpp * hp ** 2 - a * gp * hpp)
        m12 = c * (ap * gp - a * gpp * hp)
        m22 = c * a * gpp
        grad = np.stack([m1, m2], axis=-1)
        hess = np.stack([np.stack([m11, m12], axis=-1),
                         np.stack([m12, m22], axis=-1)], axis=-2)
        return m, grad, hess

    def arclength_period(self):
        """Arclength of one x1-period of the interface graph."""
        hp = lambda x: self._height(np.array([x]))[1][0]
        val, _ = quad(lambda x: np.sqrt(1.0 + hp(x) ** 2), 0.0, self.L1,
                      epsabs=1e-13, epsrel=1e-13, limit=200)
        return val


def eval_mass(model, x):
    """Mass, gradient and Hessian at a single point ``x`` (wrapped into the box)."""
    x = np.asarray(x, dtype=float)
    if model.wrap:
        x = wrap_to_box(x, model.L1, model.L2)
    else:
        x = np.array([(x[0] + model.L1 / 2) % model.L1 - model.L1 / 2, x[1]])
    m, g, hs = model.evaluate(x[0], x[1])
    return float(m), np.asarray(g), np.asarray(hs)


def wrap_to_box(x, L1, L2):
    x = np.asarray(x, dtype=float)
    L = np.array([L1, L2])
    return (x + L / 2) % L - L / 2


def project_to_interface(model, x0, tol=1e-13, maxiter=50):
    """Newton projection of ``x0`` onto {m = 0} along the gradient."""
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(maxiter):
        m, g, _ = model.evaluate(x[0], x[1])
        gn2 = float(g @ g)
        if gn2 < model.g_min ** 2:
            raise AssumptionError(f"|grad m| below g_min near {x}")
        x = x - m * g / gn2
        if abs(m) < tol:
            return x
    raise DomainError(f"could not project {x0} onto the interface")


@dataclass
class InterfaceChart:
    """Arclength samples of the interface with Frenet data.

    ``theta`` is the continuous lift of the normal angle,
    ``nu = (cos theta, sin theta)``, and ``r = |grad m|^(1/2)``.
    """
    model: MassModel
    s_grid: np.ndarray
    gamma: np.ndarray
    dgamma: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    theta: np.ndarray
    r: np.ndarray
    kappa_max: float
    tube_halfwidth: float
    period: float | None = None
    shift: np.ndarray | None = None
    _splines: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        s = self.s_grid
        self._splines["gamma"] = CubicHermiteSpline(s, self.gamma, self.dgamma, axis=0)
        self._splines["kappa"] = CubicSpline(s, self.kappa)
        self._splines["theta"] = CubicHermiteSpline(s, self.theta, self.kappa)
        self._splines["gradnorm"] = CubicSpline(s, self.r ** 2)

    @property
    def s_min(self):
        return float(self.s_grid[0])

    @property
    def s_max(self):
        return float(self.s_grid[-1])

    @property
    def ds(self):
        return float(self.s_grid[1] - self.s_grid[0])

    @property
    def grad_norm(self):
        return self.r ** 2

    def _reduce(self, s):
        """Map ``s`` into the sampled range; returns (s_red, number of periods)."""
        s = np.asarray(s, dtype=float)
        if self.period is not None:
            centre = 0.5 * (self.s_min + self.s_max)
            k = np.floor((s - (centre - self.period / 2)) / self.period)
            return s - k * self.period, k
        tol = 1e-12 * max(1.0, abs(self.s_max))
        if np.any(s < self.s_min - tol) or np.any(s > self.s_max + tol):
            raise RangeError(f"s outside chart range [{self.s_min}, {self.s_max}]")
        return s, np.zeros_like(s)

    def gamma_at(self, s, nu=0):
        sr, k = self._reduce(s)
        val = self._splines["gamma"](sr, nu)
        if nu == 0 and self.period is not None:
            val = val + np.multiply.outer(k, self.shift)
        return val

    def tangent_at(self, s):
        return self.gamma_at(s, 1)

    def normal_at(self, s):
        th = self.theta_at(s)
        return np.stack([np.cos(th), np.sin(th)], axis=-1)

    def kappa_at(self, s, nu=0):
        sr, _ = self._reduce(s)
        return self._splines["kappa"](sr, nu)

    def theta_at(self, s):
        sr, _ = self._reduce(s)
        return self._splines["theta"](sr)

    def grad_norm_at(self, s, nu=0):
        sr, _ = self._reduce(s)
        return self._splines["gradnorm"](sr, nu)

    def r_at(self, s):
        return np.sqrt(self.grad_norm_at(s))

    def canonical_s(self, s):
        """Representative of ``s`` modulo the period, centred on the chart."""
        return self._reduce(s)[0]

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "gx", "gy", "nux", "nuy", "kappa", "theta", "r"])
            for i in range(len(self.s_grid)):
                w.writerow([repr(float(v)) for v in (
                    self.s_grid[i], self.gamma[i, 0], self.gamma[i, 1],
                    self.nu[i, 0], self.nu[i, 1], self.kappa[i], self.theta[i], self.r[i])])
        return path


def _frenet(model, pts):
    _, g, H = model.evaluate(pts[:, 0], pts[:, 1])
    gn = np.linalg.norm(g, axis=-1)
    nu = g / gn[:, None]
    tang = -perp(nu)
    # kappa = gamma'' . nu = -gamma'^T Hess gamma' / |grad m|
    kappa = -np.einsum("ni,nij,nj->n", tang, H, tang) / gn
    return gn, nu, tang, kappa


def trace_interface(model, x0=(0.0, 0.0), s_min=None, s_max=None, ds=1e-3,
                    tube_cap=1.5):
    """Arclength parametrisation of the interface through ``x0``.

    Solves ``gamma' = -grad m^perp / |grad m|`` from the projection of ``x0``
    onto {m = 0} and samples on ``[s_min, s_max]`` with step ``ds``. When
    omitted the range covers one period plus a margin on both sides.
    """
    xs = project_to_interface(model, x0)
    period = model.arclength_period()
    if s_min is None or s_max is None:
        half = 0.5 * period + 0.5
        s_min, s_max = -half, half
    if not s_min <= 0.0 <= s_max:
        raise RangeError("chart range must contain s = 0")
    n_lo = int(round(-s_min / ds))
    n_hi = int(round(s_max / ds))
    s_grid = ds * np.arange(-n_lo, n_hi + 1)

    def rhs(_s, x):
        _, g, _ = model.evaluate(x[0], x[1])
        gn = np.hypot(g[0], g[1])
        if gn < model.g_min:
            raise AssumptionError(f"|grad m| = {gn:.3g} below g_min at {x}")
        return -perp(g) / gn

    pts = np.empty((len(s_grid), 2))
    pts[n_lo] = xs
    opts = dict(method="DOP853", rtol=1e-13, atol=1e-13)
    if n_hi > 0:
        sol = solve_ivp(rhs, (0.0, s_grid[-1]), xs, t_eval=s_grid[n_lo:], **opts)
        pts[n_lo:] = sol.y.T
    if n_lo > 0:
        sol = solve_ivp(rhs, (0.0, s_grid[0]), xs, t_eval=s_grid[:n_lo + 1][::-1], **opts)
        pts[:n_lo + 1] = sol.y.T[::-1]

    if model.wrap and np.any(np.abs(pts[:, 1]) >= model.L2 / 2):
        raise DomainError("interface leaves the periodic box in x2")

    gn, nu, tang, kappa = _frenet(model, pts)
    if np.min(gn) < model.g_min:
        raise AssumptionError(f"min |grad m| on the interface is {np.min(gn):.3g}")

    nu0 = nu[n_lo]
    theta0 = np.arctan2(nu0[1], nu0[0]) % (2 * np.pi)
    theta = theta0 + cumulative_trapezoid(kappa, s_grid, initial=0.0)
    theta -= theta[n_lo] - theta0
    kmax = float(np.max(np.abs(kappa)))
    half = tube_cap if kmax == 0 else min(1.0 / (2 * kmax), tube_cap)

    shift = None
    if period is not None:
        shift = np.array([np.sign(tang[n_lo, 0]) * model.L1, 0.0])
        if s_max - s_min < period:
            period, shift = None, None
    return InterfaceChart(model=model, s_grid=s_grid, gamma=pts, dgamma=tang, nu=nu,
                          kappa=kappa, theta=theta, r=np.sqrt(gn), kappa_max=kmax,
                          tube_halfwidth=half, period=period, shift=shift)


@dataclass
class TubularMap:
    """The map (s, y) -> gamma(s) + y nu(s) on |y| < delta0 * tube_halfwidth."""
    chart: InterfaceChart
    delta0: float = 1.0

    def __post_init__(self):
        if not 0 < self.delta0 <= 1:
            raise DomainError("delta0 must lie in (0, 1]")
        ch = self.chart
        pts = ch.gamma
        svals = ch.s_grid
        if ch.period is not None:
            c = 0.5 * (ch.s_min + ch.s_max)
            keep = (svals >= c - ch.period / 2) & (svals < c + ch.period / 2)
            base_s = svals[keep]
            base_p = pts[keep]
            pts = np.concatenate([base_p - ch.shift, base_p, base_p + ch.shift])
            svals = np.concatenate([base_s - ch.period, base_s, base_s + ch.period])
        self._tree = cKDTree(pts)
        self._tree_s = svals

    @property
    def halfwidth(self):
        return self.delta0 * self.chart.tube_halfwidth

    def forward(self, s, y, check=True):
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        if check and np.any(np.abs(y) >= self.halfwidth):
            raise RangeError("y outside the tube")
        g = self.chart.gamma_at(s)
        n = self.chart.normal_at(s)
        return g + y[..., None] * n

    def inverse(self, x, strict=True, tol=1e-12, maxiter=50):
        """Normal coordinates of points ``x`` (shape (..., 2)).

        With ``strict`` a point outside the tube raises; otherwise the
        returned mask flags points inside the tube.
        """
        x = np.asarray(x, dtype=float)
        shp = x.shape[:-1]
        xf = x.reshape(-1, 2)
        dist, idx = self._tree.query(xf, k=2)
        s = self._tree_s[idx[:, 0]]
        tie = np.isclose(dist[:, 0], dist[:, 1], rtol=0, atol=1e-15)
        s = np.where(tie, np.minimum(s, self._tree_s[idx[:, 1]]), s)
        active = dist[:, 0] < 1.5 * self.halfwidth + 2 * self.chart.ds
        converged = np.zeros(len(xf), dtype=bool)
        ch = self.chart
        for _ in range(maxiter):
            g = ch.gamma_at(s)
            th = ch.theta_at(s)
            nrm = np.stack([np.cos(th), np.sin(th)], axis=-1)
            tan = -perp(nrm)
            diff = xf - g
            F = np.einsum("ni,ni->n", diff, tan)
            dF = (-np.einsum("ni,ni->n", ch.gamma_at(s, 1), tan)
                  + ch.kappa_at(s) * np.einsum("ni,ni->n", diff, nrm))
            step = np.where(active & ~converged, F / dF, 0.0)
            s = s - step
            converged |= np.abs(F) < tol
            if np.all(converged | ~active):
                break
        g = ch.gamma_at(s)
        nrm = ch.normal_at(s)
        F = np.einsum("ni,ni->n", xf - g, -perp(nrm))
        y = np.einsum("ni,ni->n", xf - g, nrm)
        inside = active & (np.abs(y) < self.halfwidth)
        bad = inside & (np.abs(F) > 1e-10)
        if strict:
            if np.any(~inside):
                raise RangeError("point outside the tube")
            if np.any(bad):
                raise RangeError("Newton inverse did not converge (outside tube)")
        inside &= ~bad
        s = ch.canonical_s(s) if ch.period is not None else s
        return s.reshape(shp), y.reshape(shp), inside.reshape(shp)


def tubular_forward(tmap, s, y):
    return tmap.forward(s, y)


def tubular_inverse(tmap, x):
    s, y, _ = tmap.inverse(x, strict=True)
    return s, y


def check_assumptions(model, chart, delta0=0.9, n_s=200, n_y=50):
    """Report (never raise) on the non-degeneracy and injectivity hypotheses."""
    gn = chart.grad_norm
    tmap = TubularMap(chart, delta0)
    if chart.period is not None:
        s = chart.s_min + 0.5 + chart.period * (np.arange(n_s) / n_s)
    else:
        s = np.linspace(chart.s_min, chart.s_max, n_s)
    hw = tmap.halfwidth
    y = np.linspace(-hw, hw, n_y + 2)[1:-1]
    S, Y = np.meshgrid(s, y, indexing="ij")
    X = tmap.forward(S, Y, check=False).reshape(-1, 2)
    spacing = min(np.min(np.diff(s)) * (1 - hw * chart.kappa_max), np.diff(y)[0])
    pairs = cKDTree(X).query_pairs(0.25 * spacing)
    s_back, y_back, inside = tmap.inverse(X, strict=False)
    roundtrip = float(np.max(np.abs(y_back - Y.ravel()))) if np.all(inside) else np.inf
    injective = len(pairs) == 0 and roundtrip < 1e-8
    return {
        "min_grad_norm": float(np.min(gn)),
        "assumption1": bool(np.min(gn) >= model.g_min),
        "kappa_max": chart.kappa_max,
        "inverse_two_kappa": (np.inf if chart.kappa_max == 0 else 1 / (2 * chart.kappa_max)),
        "tube_halfwidth": chart.tube_halfwidth,
        "delta0": delta0,
        "colliding_pairs": len(pairs),
        "roundtrip_max_err": roundtrip,
        "assumption2": bool(injective),
    }
