"""Experiment orchestration: simulate -> extract -> transport -> compare."""
from __future__ import annotations

import json
import logging
import platform
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dirac_solver import SolverConfig, SpinorField, evolve
from .errors import DependencyError
from .hermite_spectral import (build_Tds, eigen_residual, hermite_basis, lambda_n,
                               periodic_grid)
from .io import config_hash, read_csv, read_raw, write_csv, write_json, write_manifest
from .mass_geometry import MassModel, TubularMap, check_assumptions, trace_interface
from .normal_form import to_normal
from .phase_space import PhaseSpaceDensity, extract_modes, tube_bulk_masses, wigner_marginal_centroid
from .states import (PacketSpec, edge_ansatz, edge_center_ode, gaussian_1d, gaussian_edge_state,
                     mode_superposition, wave_packet)
from .transport import (BulkParticleMeasure, ParticleMeasure, compare_densities,
                        density_from_particles, evolve_bulk_measure, evolve_interface_measure,
                        particles_from_density, v_infinity)

log = logging.getLogger(__name__)

MIN_TRACKED_MASS = 1e-3


def eps_label(eps):
    return format(float(eps), "g")


def run_dir(out, scn, eps):
    return Path(out) / scn.name / eps_label(eps)


class Context:
    """Objects shared by the stages of one (scenario, eps) run."""

    def __init__(self, scn, eps):
        self.scn, self.eps = scn, float(eps)
        self.model = scn.model()
        self.grid = scn.grid(eps)
        c = scn.doc["chart"]
        self.chart = trace_interface(self.model, x0=tuple(c["x0"]), ds=c["ds"], tube_cap=c["tube_cap"])
        self.tmap = TubularMap(self.chart, c["delta0"])
        self.dt = scn.dt(eps)

    @property
    def ext(self):
        return self.scn.doc["extraction"]

    def s_grid(self):
        ch = self.chart
        S = ch.period if ch.period is not None else ch.s_max - ch.s_min
        start = -S / 2 if ch.period is not None else ch.s_min
        step = self.ext["s_step"]
        return start + step * np.arange(int(np.floor(S / step + 1e-9)))

    def sigma_grid(self):
        lo, hi = self.ext["sigma_window"]
        step = self.ext["sigma_step"]
        return lo + step * np.arange(int(round((hi - lo) / step)) + 1)

    def modes(self):
        n = self.ext["n_modes"]
        return list(range(-n, n + 1))


def _envelope_from(spec):
    return gaussian_1d(spec.get("width", 1.0), spec.get("center", 0.0))


def build_initial(ctx):
    """Initial field plus a metadata dict."""
    init = ctx.scn.doc["initial"]
    eps, grid = ctx.eps, ctx.grid
    kind = init["type"]
    if kind == "gaussian_edge":
        st = gaussian_edge_state(ctx.chart, init.get("s0", 0.0), gaussian_1d(init.get("width", 1.0)),
                                 eps, grid)
        return st.field, {"type": kind, "scale": st.scale, "x0": st.x0, "s0": st.s0}
    if kind == "packet":
        o = init.get("orientation", "plus")
        if isinstance(o, list):
            o = (o[0] + 1j * o[1], o[2] + 1j * o[3])
        spec = PacketSpec(x0=tuple(init["x0"]), xi0=tuple(init.get("xi0", (0.0, 0.0))), eps=eps,
                          width=init.get("width", 1.0), orientation=o)
        f = wave_packet(spec, grid, ctx.model)
        return f, {"type": kind, "x0": list(spec.x0), "xi0": list(spec.xi0),
                   "branch": -1 if o == "minus" else 1}
    modes = []
    for m in init["modes"]:
        env = _envelope_from(m)
        w = np.sqrt(m.get("weight", 1.0))
        modes.append((m["n"], m["sigma"], (lambda z, env=env, w=w: w * env(z))))
    f = mode_superposition(ctx.tmap, modes, eps, grid)
    return f, {"type": kind, "modes": init["modes"], "norm2": f.norm2()}


def _center_path(ctx, meta, t_end):
    if meta["type"] == "gaussian_edge":
        ts, path = edge_center_ode(ctx.model, meta["x0"], t_end, 1e-3)
    elif meta["type"] == "packet":
        bm = BulkParticleMeasure([meta["branch"]], [meta["x0"]], [meta["xi0"]], [1.0])
        ts, pts = [0.0], [np.array(meta["x0"], float)]
        n = int(round(t_end / 0.01))
        for _ in range(n):
            bm = evolve_bulk_measure(bm, ctx.model, 0.01, 1e-3)
            ts.append(bm.t)
            pts.append(bm.x[0].copy())
        ts, path = np.array(ts), np.array(pts)
    else:
        return None
    return lambda t: np.array([np.interp(t, ts, path[:, 0]), np.interp(t, ts, path[:, 1])])


def _snapshots(rd):
    d = rd / "snapshots"
    files = sorted(d.glob("psi_*.raw")) if d.exists() else []
    if not files:
        raise DependencyError(f"no snapshots in {d}; run 'simulate' first")
    return files


def _manifest(rd, scn, eps, seed, stage):
    extra = {"scenario": scn.name, "eps": eps, "seed": seed, "stage": stage,
             "package_version": __version__, "python": platform.python_version(),
             "numpy": np.__version__}
    return write_manifest(rd, scn.to_dict(), extra)


def run_simulate(scn, out, seed=None):
    dirs = []
    for eps in scn.eps_list:
        t0 = time.time()
        ctx = Context(scn, eps)
        rd = run_dir(out, scn, eps)
        (rd / "snapshots").mkdir(parents=True, exist_ok=True)
        field, meta = build_initial(ctx)
        sol = scn.doc["solver"]
        stride = int(round(sol["snapshot_every"] / ctx.dt))
        hw = sol["box_halfwidth"]
        cfg = SolverConfig(dt=ctx.dt, t_end=sol["t_end"], snapshot_stride=stride,
                           hf_radii=tuple(sol["hf_radii"]), box=(-hw, hw, -hw, hw))
        center = _center_path(ctx, meta, sol["t_end"]) if sol["track_box"] else None
        traj = evolve(field, ctx.model, cfg, box_center=center)
        for k, snap in enumerate(traj.snapshots):
            snap.save(rd / "snapshots" / f"psi_{k:04d}.raw", index=k)
        radii = list(sol["hf_radii"])
        rows = []
        for k, snap in enumerate(traj.snapshots):
            row = [k, snap.t, snap.norm2(), traj.outside_box[k]]
            row += [traj.hf_fraction[k][float(R)] for R in radii]
            rows.append(row)
        write_csv(rd / "snapshots" / "diagnostics.csv",
                  ["k", "t", "norm2", "outside_box"] + [f"hf_R{eps_label(R)}" for R in radii], rows)
        write_csv(rd / "snapshots" / "norms.csv", ["step", "norm2"], enumerate(traj.step_norms))
        write_json(rd / "simulate.json", {
            "initial": meta, "dt": ctx.dt, "grid": ctx.grid.to_dict(), "steps": len(traj.step_norms) - 1,
            "norm_drift": traj.norm_drift()})
        _manifest(rd, scn, eps, seed, "simulate")
        dirs.append(rd)
        log.info("simulate eps=%g done in %.1fs", eps, time.time() - t0)
    return dirs


def _unwrap(values, period):
    v = np.asarray(values, float)
    if period is None or len(v) == 0:
        return v
    return np.unwrap(v * 2 * np.pi / period) * period / (2 * np.pi)


def run_extract(scn, out, seed=None):
    dirs = []
    for eps in scn.eps_list:
        ctx = Context(scn, eps)
        rd = run_dir(out, scn, eps)
        files = _snapshots(rd)
        dd = rd / "densities"
        dd.mkdir(parents=True, exist_ok=True)
        s_grid, sg_grid = ctx.s_grid(), ctx.sigma_grid()
        ns = ctx.modes()
        report = ctx.ext["report_modes"]
        cen_rows, mass_rows = [], []
        for k, f in enumerate(files):
            field = SpinorField.load(f)
            nf = to_normal(field, ctx.tmap)
            dens = extract_modes(field, ctx.tmap, ns, s_grid=s_grid, sigma_grid=sg_grid, nf=nf)
            tube_chi, bulk = tube_bulk_masses(field, ctx.tmap, nf=nf)
            tube = sum(d.mass() for d in dens.values())
            n2 = field.norm2()
            mass_rows.append([k, field.t, n2, tube, tube_chi, bulk, n2 - tube - bulk])
            for n in ns:
                d = dens[n]
                c = d.circular_centroid(ctx.chart.period) if ctx.chart.period else d.centroid()
                cen_rows.append([k, field.t, n, d.mass(), c[0], c[1]])
                if n in report:
                    d.save(dd / f"gamma_n{n:+d}_{k:04d}.raw")
        write_csv(dd / "centroids.csv", ["k", "t", "n", "mass", "s", "sigma"], cen_rows)
        write_csv(dd / "mass.csv", ["k", "t", "norm2", "tube_modes", "tube_chi", "bulk", "remainder"],
                  mass_rows)
        _manifest(rd, scn, eps, seed, "extract")
        dirs.append(rd)
    return dirs


def _load_density(path):
    a, side = read_raw(path)
    ax = tuple(np.asarray(v) for v in side["axes"])
    return PhaseSpaceDensity(ax, a, side["scale"], side["n"], side.get("kind", "mode"),
                             side["eps"], side["t"])


def _circ_mean(s, w, period):
    if period is None:
        return float(np.sum(w * s) / np.sum(w))
    z = np.sum(w * np.exp(2j * np.pi * s / period))
    return float(np.angle(z) * period / (2 * np.pi))


def run_transport(scn, out, seed=None):
    dirs = []
    for eps in scn.eps_list:
        ctx = Context(scn, eps)
        rd = run_dir(out, scn, eps)
        td = rd / "transport"
        td.mkdir(parents=True, exist_ok=True)
        tcfg = scn.doc["transport"]
        snaps = _snapshots(rd)
        times = [json.loads(Path(str(f) + ".json").read_text())["t"] for f in snaps]
        rows, cmp_rows = [], []
        init = scn.doc["initial"]
        if init["type"] == "packet":
            o = init.get("orientation", "plus")
            bm = BulkParticleMeasure([-1 if o == "minus" else 1], [init["x0"]],
                                     [init.get("xi0", [0.0, 0.0])], [1.0])
            e0 = bm.energies(ctx.model)
            bm.to_csv(td / "bulk_particles_0000.csv")
            cur = bm
            for k, t in enumerate(times[1:], start=1):
                cur = evolve_bulk_measure(cur, ctx.model, t - cur.t, tcfg["dt"])
                cur.to_csv(td / f"bulk_particles_{k:04d}.csv")
                rows.append([k, t, cur.x[0, 0], cur.x[0, 1], cur.xi[0, 0], cur.xi[0, 1],
                             float(np.max(np.abs(cur.energies(ctx.model) / e0 - 1)))])
            write_csv(td / "bulk_path.csv", ["k", "t", "x1", "x2", "xi1", "xi2", "energy_drift"], rows)
        else:
            dd = rd / "densities"
            period = ctx.chart.period
            for n in ctx.ext["report_modes"]:
                p0 = dd / f"gamma_n{n:+d}_0000.raw"
                if not p0.exists():
                    raise DependencyError(f"missing {p0}; run 'extract' first")
                d0 = _load_density(p0)
                pm = particles_from_density(d0, n, ctx.chart, threshold=tcfg["threshold"],
                                            rng=seed, jitter=tcfg["jitter"])
                pm.to_csv(td / f"particles_n{n:+d}_0000.csv")
                cur = pm
                for k, t in enumerate(times):
                    if k > 0:
                        cur = evolve_interface_measure(cur, ctx.chart, t - cur.t, tcfg["dt"])
                    sc = _circ_mean(cur.s, cur.w, period)
                    gc = float(np.sum(cur.w * cur.sigma) / max(cur.total(), 1e-300))
                    rows.append([k, t, n, cur.total(), sc, gc])
                    emp = dd / f"gamma_n{n:+d}_{k:04d}.raw"
                    if emp.exists() and cur.total() > 0:
                        de = _load_density(emp)
                        kde = density_from_particles(cur, de.axes[0], de.axes[1], tuple(tcfg["bandwidth"]),
                                                     period=period)
                        l1, off = compare_densities(de, kde, smooth=1.0)
                        cmp_rows.append([k, t, n, de.mass(), kde.mass(), l1])
                cur.to_csv(td / f"particles_n{n:+d}_final.csv")
            write_csv(td / "predicted_centroids.csv", ["k", "t", "n", "weight", "s", "sigma"], rows)
            write_csv(td / "density_comparison.csv", ["k", "t", "n", "mass_pde", "mass_particles", "l1"],
                      cmp_rows)
        _manifest(rd, scn, eps, seed, "transport")
        dirs.append(rd)
    return dirs


def _csv_table(path):
    header, rows = read_csv(path)
    return {h: np.array([float(r[i]) for r in rows]) for i, h in enumerate(header)}


def run_pipeline(scn, out, seed=None, figures=None):
    figures = scn.doc["output"]["figures"] if figures is None else figures
    summary = {"scenario": scn.name, "config_hash": config_hash(scn.to_dict()), "runs": []}
    err_rows = []
    for eps in scn.eps_list:
        one = scn.__class__(dict(scn.doc, eps=[eps]), scn.source)
        run_simulate(one, out, seed)
        init_type = scn.doc["initial"]["type"]
        if init_type != "packet":
            run_extract(one, out, seed)
        run_transport(one, out, seed)
        rep = _compare(one, eps, out, figures)
        summary["runs"].append({"eps": eps, "dir": str(run_dir(out, scn, eps))})
        for t, e in zip(rep.get("ansatz", {}).get("t", []), rep.get("ansatz", {}).get("error", [])):
            err_rows.append([eps, t, e])
        _manifest(run_dir(out, scn, eps), scn, eps, seed, "pipeline")
    base = Path(out) / scn.name
    if err_rows:
        write_csv(base / "errors.csv", ["eps", "t", "error"], err_rows)
        t_end = scn.doc["solver"]["t_end"]
        fin = [(e, err) for e, t, err in err_rows if abs(t - t_end) < 1e-9]
        summary["error_at_t_end"] = [{"eps": e, "error": err} for e, err in fin]
        if len(fin) >= 2:
            summary["error_ratio"] = fin[0][1] / fin[-1][1]
        if figures and fin:
            from .plotting import plot_errors
            plot_errors([e for e, _ in fin], [v for _, v in fin], base / "errors.png")
    write_json(base / "summary.json", summary)
    return summary


def _compare(scn, eps, out, figures):
    ctx = Context(scn, eps)
    rd = run_dir(out, scn, eps)
    snaps = _snapshots(rd)
    sim = json.loads((rd / "simulate.json").read_text())
    meta = sim["initial"]
    report = {"scenario": scn.name, "eps": eps, "initial": meta["type"]}
    fields = [SpinorField.load(f) for f in snaps]
    times = [f.t for f in fields]
    tables = rd / "tables"
    if meta["type"] == "gaussian_edge":
        ts, path = edge_center_ode(ctx.model, meta["x0"], times[-1], 1e-3)
        env = gaussian_1d(scn.doc["initial"].get("width", 1.0))
        errs = []
        for f in fields:
            j = int(round(f.t / 1e-3))
            A = edge_ansatz(ctx.model, path[j], env, eps, ctx.grid)
            A.u *= meta["scale"]
            errs.append(f.distance(A))
        report["ansatz"] = {"t": times, "error": errs}
        write_csv(tables / "ansatz_error.csv", ["eps", "t", "error"], [[eps, t, e] for t, e in zip(times, errs)])
    if meta["type"] == "packet":
        bp = _csv_table(rd / "transport" / "bulk_path.csv")
        rows = []
        x0 = np.array(meta["x0"], float)
        prev = x0
        travelled = 0.0
        for k, f in enumerate(fields):
            x, xi = wigner_marginal_centroid(f)
            if k == 0:
                hx = x0
            else:
                hx = np.array([bp["x1"][k - 1], bp["x2"][k - 1]])
                travelled += float(np.linalg.norm(hx - prev))
                prev = hx
            off = float(np.linalg.norm(x - hx))
            rows.append([k, f.t, x[0], x[1], xi[0], xi[1], hx[0], hx[1], off,
                         off / travelled if travelled > 0 else 0.0])
        write_csv(tables / "bulk_centroids.csv",
                  ["k", "t", "x1", "x2", "xi1", "xi2", "x1_ham", "x2_ham", "offset", "relative"], rows)
        report["bulk"] = {"t": times, "relative_offset": [r[-1] for r in rows],
                          "max_energy_drift": float(np.max(bp["energy_drift"])) if len(bp["k"]) else 0.0}
    else:
        cen = _csv_table(rd / "densities" / "centroids.csv")
        pred = _csv_table(rd / "transport" / "predicted_centroids.csv")
        mass = _csv_table(rd / "densities" / "mass.csv")
        cell = ctx.ext["s_step"]
        period = ctx.chart.period
        cen_rep, series = {}, {}
        rows = []
        for n in ctx.ext["report_modes"]:
            sel = cen["n"] == n
            psel = pred["n"] == n
            emp = _unwrap(cen["s"][sel], period)
            prd = _unwrap(pred["s"][psel], period)
            if len(prd) and len(emp):
                prd = prd + (emp[0] - prd[0]) if period is None else prd - np.round((prd[0] - emp[0]) / period) * period
            off = np.abs(emp - prd) / cell
            # a mode carrying no mass has no meaningful centroid
            tracked = bool(cen["mass"][sel][0] > MIN_TRACKED_MASS * mass["norm2"][0])
            if not tracked:
                off = np.full_like(off, np.nan)
            cen_rep[str(n)] = {"t": list(cen["t"][sel]), "measured": list(emp), "predicted": list(prd),
                               "offset_cells": [None if np.isnan(o) else float(o) for o in off],
                               "mass": list(cen["mass"][sel]), "tracked": tracked}
            if tracked:
                series[f"n={n}"] = (emp, prd)
            rows += [[t, n, a, b, o] for t, a, b, o in zip(cen["t"][sel], emp, prd, off)]
        write_csv(tables / "centroid_offsets.csv", ["t", "n", "measured", "predicted", "offset_cells"], rows)
        report["centroids"] = cen_rep
        total = mass["tube_modes"] + mass["bulk"]
        report["mass"] = {"t": list(mass["t"]), "tube": list(mass["tube_modes"]), "bulk": list(mass["bulk"]),
                          "remainder": list(mass["remainder"]),
                          "min_fraction": float(np.min(total / mass["norm2"][0]))}
        if figures:
            from .plotting import plot_centroids, plot_mass, plot_mode_density
            fd = rd / "figures"
            plot_centroids(cen["t"][cen["n"] == ctx.ext["report_modes"][0]], series, fd / "centroids.png")
            plot_mass(mass["t"], mass["tube_modes"], mass["bulk"], fd / "mass.png")
            last = len(snaps) - 1
            for n in ctx.ext["report_modes"]:
                p = rd / "densities" / f"gamma_n{n:+d}_{last:04d}.raw"
                if p.exists():
                    plot_mode_density(_load_density(p), fd / f"gamma_n{n:+d}_final.png")
    if figures:
        from .plotting import plot_field_density
        plot_field_density(fields[0], rd / "figures" / "density_initial.png")
        plot_field_density(fields[-1], rd / "figures" / "density_final.png")
    write_json(rd / "report.json", report)
    return report


def run_chart(scn, out):
    ctx = Context(scn, scn.eps_list[0])
    base = Path(out) / scn.name
    base.mkdir(parents=True, exist_ok=True)
    ctx.chart.to_csv(base / "chart.csv")
    rep = check_assumptions(ctx.model, ctx.chart)
    write_json(base / "assumptions.json", rep)
    if scn.doc["output"]["figures"]:
        from .plotting import plot_chart
        plot_chart(ctx.chart, ctx.tmap, base / "chart.png")
    write_manifest(base, scn.to_dict(), {"scenario": scn.name, "stage": "chart"})
    return rep


# ---------------------------------------------------------------- validation

def _check(name, value, tol, passed=None):
    ok = bool(value < tol) if passed is None else bool(passed)
    return {"name": name, "value": float(value), "tol": float(tol), "passed": ok}


def run_validate(fault=None):
    """Oracle checks across modules. ``fault='lambda_sign'`` flips the sign of lambda_n."""
    lam = (lambda n, s, g: -lambda_n(n, s, g)) if fault == "lambda_sign" else lambda_n
    checks = []
    basis = hermite_basis(-12, 12, 1024, 20)
    checks.append(_check("hermite_gram", np.max(np.abs(basis.gram() - np.eye(21))), 1e-10))
    res = max(eigen_residual(n, s, G, basis.y_grid, lam_fn=lam)
              for n in range(-3, 4) for s in (-2, -1, 0, 1, 2) for G in (0.5, 1, 2))
    checks.append(_check("tds_eigen_residual", res, 1e-6))
    n = np.arange(-5, 6)
    ident = np.max(np.abs(lam(n, 0.7, 1.3) ** 2 - 0.49 - 2 * np.abs(n) * 1.3))
    checks.append(_check("lambda_identity", ident, 1e-12))
    y = periodic_grid(-12, 12, 512)
    T = build_Tds(y, 1.0, 0.7)
    ev = np.linalg.eigvalsh(T)
    checks.append(_check("tds_hermitian", np.max(np.abs(T - T.conj().T)), 1e-10))
    checks.append(_check("tds_lowest_eigenvalue", abs(np.min(np.abs(ev)) - abs(lam(0, 0.7, 1.0))), 1e-8))
    rng = np.random.default_rng(0)
    w = rng.normal(size=(10000, 3))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    tang = max(np.max(np.abs(np.sum(v_infinity(r, w) * w, axis=1))) for r in (0.5, 1.0, 2.0))
    checks.append(_check("v_infinity_tangency", tang, 1e-12))
    model = MassModel("sinusoidal_interface", A=0.5)
    ch = trace_interface(model)
    checks.append(_check("chart_unit_speed", np.max(np.abs(np.linalg.norm(ch.dgamma, axis=1) - 1)), 1e-6))
    res_th = np.max(np.abs(np.gradient(ch.theta, ch.ds) - ch.kappa)[2:-2])
    checks.append(_check("chart_theta_kappa", res_th, 1e-6))
    tm = TubularMap(ch, 0.9)
    S = rng.uniform(-ch.period / 2, ch.period / 2, 1000)
    Y = rng.uniform(-1, 1, 1000) * tm.halfwidth * 0.999
    s_b, y_b, _ = tm.inverse(tm.forward(S, Y), strict=False)
    checks.append(_check("tubular_roundtrip", max(np.max(np.abs(s_b - S)), np.max(np.abs(y_b - Y))), 1e-10))
    # solver unitarity on a small grid
    from .dirac_solver import Grid2D, propagate
    g = Grid2D.square(4.0, 128)
    f = wave_packet(PacketSpec(x0=(0.3, 0.2), xi0=(0.3, -0.2), eps=0.04), g,
                    MassModel("sinusoidal_interface", A=0.5, L1=4.0, L2=4.0))
    f2 = propagate(f, MassModel("sinusoidal_interface", A=0.5, L1=4.0, L2=4.0), 0.5, 0.004)
    checks.append(_check("solver_unitarity", abs(f2.norm2() - f.norm2()), 1e-9))
    # interface transport: n = 1 group velocity on a straight chart
    lin = trace_interface(MassModel("linear_periodic"))
    pm = evolve_interface_measure(ParticleMeasure([1], [0.0], [1.0], [1.0], lin), lin, 1.0, 1e-3)
    checks.append(_check("interface_group_velocity", abs(pm.s[0] - 1 / np.sqrt(3)), 1e-9))
    passed = all(c["passed"] for c in checks)
    return {"schema": "diracedge.validate/1", "passed": passed, "fault": fault, "checks": checks}
