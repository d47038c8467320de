import numpy as np
import pytest

from diracedge.errors import DomainError, RangeError, ShapeError
from diracedge.hermite_spectral import lambda_n
from diracedge.mass_geometry import MassModel, trace_interface
from diracedge.phase_space import PhaseSpaceDensity
from diracedge.transport import (BulkParticleMeasure, ParticleMeasure, compare_densities,
                                 density_from_particles, evolve_bulk_measure,
                                 evolve_interface_measure, particles_from_density,
                                 reconstruct_position_density, v_infinity)


@pytest.fixture(scope="module")
def lin_chart():
    return trace_interface(MassModel("linear_periodic"))


@pytest.fixture(scope="module")
def sin_chart():
    return trace_interface(MassModel("sinusoidal_interface", A=0.5))


def test_mode_zero_moves_backward(lin_chart):
    pm = ParticleMeasure([0], [0.0], [0.0], [1.0], lin_chart)
    out = evolve_interface_measure(pm, lin_chart, 1.0)
    assert (out.s[0], out.sigma[0], out.w[0]) == pytest.approx((-1.0, 0.0, 1.0), abs=1e-12)
    assert out.t == pytest.approx(1.0)


def test_mode_one_group_velocity(lin_chart):
    pm = ParticleMeasure([1, -1], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0], lin_chart)
    out = evolve_interface_measure(pm, lin_chart, 2.0)
    assert out.s == pytest.approx([2 / np.sqrt(3), -2 / np.sqrt(3)], abs=1e-10)
    assert out.sigma == pytest.approx([1.0, 1.0], abs=1e-12)


def test_energy_conserved_on_curved_chart(sin_chart):
    pm = ParticleMeasure([1, 2, -1, 3], [0.1, -1.0, 2.0, 0.5], [0.5, -1.0, 0.3, 1.5], [1, 1, 1, 1], sin_chart)
    e0 = pm.energies()
    out, path = evolve_interface_measure(pm, sin_chart, 3.0, record=True)
    assert np.max(np.abs(out.energies() / e0 - 1)) < 1e-9
    assert path.shape == (3001, 4)
    # sigma actually varies, so this is not a trivial check
    assert np.max(np.abs(out.sigma - pm.sigma)) > 1e-3
    back = evolve_interface_measure(out, sin_chart, -3.0)
    assert np.allclose(back.s, pm.s, atol=1e-9) and np.allclose(back.sigma, pm.sigma, atol=1e-9)


def test_nonperiodic_chart_exit():
    ch = trace_interface(MassModel("linear_periodic", wrap=False), s_min=-1, s_max=1)
    pm = ParticleMeasure([0], [0.5], [0.0], [1.0], ch)
    with pytest.raises(RangeError):
        evolve_interface_measure(pm, ch, 2.0)


def test_particle_measure_validation(tmp_path, lin_chart):
    with pytest.raises(ShapeError):
        ParticleMeasure([0, 1], [0.0], [0.0], [1.0])
    with pytest.raises(ValueError):
        ParticleMeasure([0], [0.0], [0.0], [-1.0])
    pm = ParticleMeasure([0, 1], [0.1, 0.2], [0.3, 1 / 3], [0.5, 0.25], lin_chart)
    p = pm.to_csv(tmp_path / "p.csv")
    assert p.read_text().splitlines()[0] == "n,s,sigma,w"
    back = ParticleMeasure.from_csv(p, lin_chart)
    assert np.array_equal(back.sigma, pm.sigma) and np.array_equal(back.n, pm.n)
    assert pm.select(1).total() == 0.25


def test_bulk_along_straight_interface():
    model = MassModel("linear_periodic")
    bm = BulkParticleMeasure([1, -1], [[0.0, 0.0], [1.0, 0.0]], [[0.5, 0.0], [0.5, 0.0]], [1, 1])
    out = evolve_bulk_measure(bm, model, 1.0)
    # m = 0 on x2 = 0 so xi is frozen and x moves at unit speed, direction set by the branch
    assert np.allclose(out.x, [[1.0, 0.0], [0.0, 0.0]], atol=1e-12)
    assert np.allclose(out.xi, bm.xi, atol=1e-12)


def test_bulk_energy_conservation():
    model = MassModel("sinusoidal_interface", A=0.5)
    rng = np.random.default_rng(1)
    x = rng.uniform(-3, 3, (20, 2))
    xi = rng.uniform(-1, 1, (20, 2))
    bm = BulkParticleMeasure(rng.choice([-1, 1], 20), x, xi, np.ones(20))
    e0 = bm.energies(model)
    out = evolve_bulk_measure(bm, model, 2.0)
    assert np.max(np.abs(out.energies(model) / e0 - 1)) / 2.0 < 1e-6


def test_bulk_crossing_flag(tmp_path):
    model = MassModel("linear_periodic")
    bm = BulkParticleMeasure([1], [[0.0, 0.0]], [[0.0, 0.0]], [1.0])
    out = evolve_bulk_measure(bm, model, 0.01)
    assert out.flags["near_crossing"] == [0]
    p = out.to_csv(tmp_path / "b.csv")
    assert p.read_text().splitlines()[0] == "branch,x1,x2,xi1,xi2,w"
    assert BulkParticleMeasure.from_csv(p).branch.tolist() == [1]
    with pytest.raises(ValueError):
        BulkParticleMeasure([0], [[0, 0]], [[0, 0]], [1])


def test_kde_mass_and_centroid(lin_chart):
    s = np.arange(-2, 2, 0.05)
    g = np.arange(-3, 3, 0.05)
    pm = ParticleMeasure([0, 0, 0], [-0.3, 0.1, 0.5], [0.0, 0.5, -0.2], [0.2, 0.3, 0.5], lin_chart)
    d = density_from_particles(pm, s, g, (0.1, 0.1), period=None)
    assert d.mass() == pytest.approx(1.0, rel=1e-12)
    exp_c = [np.average(pm.s, weights=pm.w), np.average(pm.sigma, weights=pm.w)]
    assert np.allclose(d.centroid(), exp_c, atol=1e-6)
    with pytest.raises(ValueError):
        density_from_particles(pm, s, g, (0.01, 0.1))


def test_compare_densities():
    s = np.linspace(0, 1, 11)
    g = np.linspace(0, 1, 11)
    a = PhaseSpaceDensity((s, g), np.ones((11, 11)), 0.1)
    b = PhaseSpaceDensity((s, g), 2 * np.ones((11, 11)), 0.1)
    l1, off = compare_densities(a, b)
    assert l1 == pytest.approx(1.21) and np.allclose(off, 0)
    assert compare_densities(a, a, smooth=1.0)[0] == 0.0
    c = PhaseSpaceDensity((s[:5], g), np.ones((5, 11)), 0.1)
    with pytest.raises(ShapeError):
        compare_densities(a, c)


def test_particles_from_density_conserves_mass(lin_chart):
    s = np.arange(-1, 1, 0.05)
    g = np.arange(-1, 1, 0.05)
    v = np.exp(-(s[:, None] ** 2 + g[None, :] ** 2) / 0.1)
    d = PhaseSpaceDensity((s, g), v, 0.1, mode=1, t=0.3)
    pm = particles_from_density(d, 1, lin_chart)
    assert pm.total() == pytest.approx(d.mass())
    assert np.all(pm.n == 1) and pm.t == 0.3
    a = particles_from_density(d, 1, lin_chart, rng=5, jitter=True)
    b = particles_from_density(d, 1, lin_chart, rng=5, jitter=True)
    assert np.array_equal(a.s, b.s) and not np.array_equal(a.s, pm.s)
    assert np.max(np.abs(a.s - pm.s)) <= 0.025


def test_reconstruct_position_density(sin_chart):
    pm = ParticleMeasure([0, 1, -2], [0.2, 0.21, -1.0], [0.0, 0.7, -0.4], [0.5, 0.3, 0.2], sin_chart)
    bins = np.arange(-sin_chart.period / 2, sin_chart.period / 2, 0.1)
    rho = reconstruct_position_density(pm, sin_chart, bins)
    tr = np.trace(rho, axis1=1, axis2=2).real
    assert tr.sum() == pytest.approx(1.0)
    assert np.allclose(rho, np.conj(np.swapaxes(rho, 1, 2)))
    assert np.all(np.linalg.eigvalsh(rho) > -1e-12)
    # a single n = 0 particle gives a rank-one matrix
    one = reconstruct_position_density(pm.select(0), sin_chart, bins)
    k = np.argmax(np.trace(one, axis1=1, axis2=2).real)
    assert abs(np.linalg.det(one[k])) < 1e-12
    th = sin_chart.theta_at(0.2)
    assert one[k, 0, 1] == pytest.approx(0.25 * -1j * np.exp(-1j * th))


def test_v_infinity():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(10000, 3))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    for r in (0.5, 1.0, 2.0):
        assert np.max(np.abs(np.sum(v_infinity(r, w) * w, axis=1))) < 1e-12
    # at r = 1 the field is the rotation (-w_eta, 0, w_y)
    assert np.allclose(v_infinity(1.0, w), np.stack([-w[:, 2], 0 * w[:, 0], w[:, 0]], 1))
    with pytest.raises(DomainError):
        v_infinity(1.0, [1.0, 1.0, 0.0])


def test_lambda_matches_energies(lin_chart):
    pm = ParticleMeasure([2], [0.0], [0.5], [1.0], lin_chart)
    assert pm.energies()[0] == pytest.approx(float(lambda_n(2, 0.5, 1.0)))
