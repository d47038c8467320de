import numpy as np
import pytest

from diracedge.dirac_solver import Grid2D
from diracedge.errors import RangeError
from diracedge.mass_geometry import MassModel, TubularMap, trace_interface
from diracedge.phase_space import wigner_marginal_centroid
from diracedge.states import (PacketSpec, band_vector, edge_ansatz, edge_center_ode, gaussian_1d,
                              gaussian_edge_state, mode_superposition, orientation_perp,
                              orientation_vector, wave_packet)

S1 = np.array([[0, 1], [1, 0]], complex)
S2 = np.array([[0, -1j], [1j, 0]])
S3 = np.diag([1.0 + 0j, -1.0])


@pytest.fixture(scope="module")
def lin():
    m = MassModel("linear_periodic")
    ch = trace_interface(m)
    return m, ch, TubularMap(ch)


@pytest.fixture(scope="module")
def grid():
    return Grid2D.square(8.0, 256)


def test_orientation_vectors_orthogonal():
    for th in (0.0, 0.4, 2.0):
        v, w = orientation_vector(th, True), orientation_perp(th, True)
        assert np.linalg.norm(v) == pytest.approx(1.0)
        assert abs(np.vdot(v, w)) < 1e-15
    assert np.allclose(orientation_vector(0.0), [1, -1])


def test_band_vector():
    for m, xi in ((0.5, (0.3, -0.2)), (-1.0, (0.0, 0.7))):
        H = m * S3 + xi[0] * S1 + xi[1] * S2
        lam = np.hypot(m, np.hypot(*xi))
        for b in (1, -1):
            v = band_vector(m, xi, b)
            assert np.allclose(H @ v, b * lam * v)


def test_gaussian_envelope_unit_norm():
    f = gaussian_1d(0.7, 0.3)
    z = np.linspace(-10, 10, 20001)
    assert np.trapezoid(f(z) ** 2, z) == pytest.approx(1.0, abs=1e-10)


def test_wave_packet_norm_and_centroid(grid):
    eps = 0.02
    model = MassModel("sinusoidal_interface", A=0.5)
    f = wave_packet(PacketSpec(x0=(1.0, 1.5), xi0=(0.4, -0.2), eps=eps), grid, model)
    assert f.norm2() == pytest.approx(1.0, abs=1e-10)
    x, xi = wigner_marginal_centroid(f)
    assert np.allclose(x, [1.0, 1.5], atol=1e-6)
    assert np.allclose(xi, [0.4, -0.2], atol=1e-6)
    m = model.mass(np.float64(1.0), np.float64(1.5))
    i, j = np.unravel_index(np.argmax(f.density()), f.density().shape)
    v = f.u[:, i, j] / np.linalg.norm(f.u[:, i, j])
    b = band_vector(m, (0.4, -0.2))
    assert abs(abs(np.vdot(b, v)) - 1) < 1e-12


def test_wave_packet_tail_check(grid):
    with pytest.raises(RangeError):
        wave_packet(PacketSpec(x0=(0, 0), eps=1.0, width=2.0, orientation=(1, 0)), grid)


def test_edge_center_ode_linear(lin):
    m, _, _ = lin
    ts, path = edge_center_ode(m, (0.3, 0.05), 1.0)
    # projected start, then unit speed along grad m^perp = (-1, 0)
    assert np.allclose(path[0], [0.3, 0.0], atol=1e-10)
    assert np.allclose(path[-1], [-0.7, 0.0], atol=1e-10)
    assert ts[-1] == pytest.approx(1.0)


def test_edge_center_ode_stays_on_interface():
    m = MassModel("sinusoidal_interface", A=0.5)
    _, path = edge_center_ode(m, (0.0, 0.0), 2.0)
    assert np.max(np.abs(m.mass(path[:, 0], path[:, 1]))) < 1e-9
    steps = np.linalg.norm(np.diff(path, axis=0), axis=1)
    assert np.allclose(steps, 1e-3, rtol=1e-6)


def transverse_part(field, model):
    """(m s3 - i eps s2 d/dx2) psi, the part of H acting across a horizontal interface."""
    g = field.grid
    X1, X2 = g.mesh()
    m = model.mass(X1, X2)
    k2 = 2 * np.pi * np.fft.fftfreq(g.N2, g.dx2)[:, None]
    d2 = np.fft.ifft(1j * k2 * np.fft.fft(field.u, axis=1), axis=1)
    return np.einsum("ij,jab->iab", S3, m * field.u) - 1j * field.eps * np.einsum("ij,jab->iab", S2, d2)


def test_edge_state_is_transverse_zero_mode(lin):
    model, ch, _ = lin
    eps = 0.01
    g = Grid2D.square(8.0, 512)
    st = gaussian_edge_state(ch, 0.0, gaussian_1d(1.0), eps, g)
    assert st.field.norm2() == pytest.approx(1.0)
    # |V|^2 = 2 and the Gaussian integrals give sqrt(pi)
    assert st.scale == pytest.approx((2 * np.sqrt(np.pi)) ** -0.5, rel=1e-8)
    res = np.sqrt(np.sum(np.abs(transverse_part(st.field, model)) ** 2) * g.cell)
    # exact zero mode for m = x2; the sine's cubic term leaves O(eps^{3/2})
    assert res < 5e-3
    # the other orientation is far from a zero mode
    wrong = st.field.copy()
    wrong.u = np.stack([wrong.u[0], -wrong.u[1]])
    res_w = np.sqrt(np.sum(np.abs(transverse_part(wrong, model)) ** 2) * g.cell)
    assert res_w > 20 * res


def test_edge_ansatz_scales_with_grad(lin, grid):
    model, _, _ = lin
    a = edge_ansatz(model, (0.0, 0.0), gaussian_1d(1.0), 0.04, grid)
    b = edge_ansatz(model.scaled(4.0), (0.0, 0.0), gaussian_1d(1.0), 0.04, grid)
    # r^{1/4} prefactor against the narrower normal Gaussian: norms agree
    assert a.norm2() == pytest.approx(b.norm2(), rel=1e-6)


def test_edge_state_tail_check(lin, grid):
    _, ch, _ = lin
    with pytest.raises(RangeError):
        gaussian_edge_state(ch, 0.0, gaussian_1d(30.0), 0.04, grid)


def test_mode_superposition_norms(lin):
    _, _, tm = lin
    g = Grid2D.square(8.0, 512)
    eps = 0.01
    one = mode_superposition(tm, [(1, 1.0, gaussian_1d(0.5, -1.0))], eps, g)
    assert one.norm2() == pytest.approx(1.0, abs=1e-3)
    two = mode_superposition(tm, [(0, 0.0, gaussian_1d(0.3, 1.0)), (1, 1.0, {"width": 0.3, "center": -1.0})],
                             eps, g)
    assert two.norm2() == pytest.approx(2.0, abs=2e-3)


def test_mode_reach_check(lin):
    _, _, tm = lin
    g = Grid2D.square(8.0, 256)
    with pytest.raises(RangeError):
        mode_superposition(tm, [(12, 0.0, gaussian_1d(0.5))], 0.04, g)
