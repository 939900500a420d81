import math

import numpy as np
import pytest

from oat3d.errors import ShapeMismatchError
from oat3d.geometry import ImageGrid, ScanGeometry, uniform_views
from oat3d.operator import FrequencyData, SystemOperator, TimeData, freq_to_time, time_to_freq
from oat3d.physics import AcousticConstants, Eir, FrequencyLattice, p0_spectrum

from oracles import dense_matrix, periodic_bandlimited_nshape, weighted_adjoint


def small_operator(dims=(4, 4, 4), n_views=2, n_tr=4, K=30, eir=None, f_max=None, start=850):
    spacing = 0.3
    geom = ScanGeometry(65.0, 152.0, n_tr, 2.0, 2.0, uniform_views(n_views))
    grid = ImageGrid(dims, spacing, (0.1, -0.05, 0.2))
    consts = AcousticConstants(1.47, 2000.0, spacing / 2)
    lat = FrequencyLattice(K, 0.05, start)
    return SystemOperator(geom, grid, consts, lat, eir or Eir.gaussian(2.0, 0.8, 0.1), f_max)


@pytest.fixture(scope="module")
def op_dense():
    op = small_operator()
    return op, dense_matrix(op)


def test_dense_example_sizes(op_dense):
    op, H = op_dense
    assert op.num_poses == 8 and op.lattice.L == 16
    assert H.shape == op.shape


def test_element_matches_dense(op_dense):
    op, H = op_dense
    L = op.lattice.L
    rng = np.random.default_rng(0)
    for _ in range(25):
        q, l, n = rng.integers(op.num_poses), rng.integers(L), rng.integers(op.grid.num_voxels)
        assert op.element(q, l, n) == pytest.approx(H[q * L + l, n], rel=1e-12, abs=0)
    with pytest.raises(IndexError):
        op.element(op.num_poses, 0, 0)


def test_element_zero_frequency_row():
    op = small_operator()
    assert all(op.element(q, 0, n) == 0 for q in range(op.num_poses) for n in range(0, 64, 7))


def test_element_on_axis_identity_eir():
    geom = ScanGeometry(65.0, 0.0, 1, 2.0, 2.0, (0.0,))
    grid = ImageGrid((1, 1, 1), 0.2, (1.5, 0.0, 0.0))  # on the x axis toward the pose
    consts = AcousticConstants(1.47, 2000.0, 0.1)
    lat = FrequencyLattice(64, 0.05)
    op = SystemOperator(geom, grid, consts, lat)
    d = 65.0 - 1.5
    for l in (1, 7, 32):
        f = l * lat.df_mhz
        want = p0_spectrum(f, consts) * np.exp(-2j * math.pi * f * d / 1.47) / (2 * math.pi * d)
        assert op.element(0, l, 0) == pytest.approx(want, rel=1e-12)


def test_apply_matches_dense(op_dense):
    op, H = op_dense
    theta = np.random.default_rng(1).standard_normal(op.grid.num_voxels)
    got = op.apply(theta).ravel()
    want = H @ theta
    assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(want)


def test_apply_unit_vector_is_column(op_dense):
    op, H = op_dense
    e = np.zeros(op.grid.num_voxels)
    e[21] = 1.0
    np.testing.assert_allclose(op.apply(e).ravel(), H[:, 21], rtol=1e-12, atol=1e-12 * np.abs(H).max())


def test_apply_zero_and_zero_frequency():
    op = small_operator()
    assert not np.any(op.apply(np.zeros(op.grid.dims)))
    u = op.apply(np.random.default_rng(2).standard_normal(op.grid.dims))
    assert np.all(u[:, 0] == 0)


def test_adjoint_matches_dense(op_dense):
    op, H = op_dense
    u = np.random.default_rng(3).standard_normal(op.data_shape) * (1 + 1j)
    got = op.apply_adjoint(u).ravel()
    want = weighted_adjoint(H, u, op.lattice.L)
    assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(want)


def test_adjoint_unit_sample(op_dense):
    op, H = op_dense
    L = op.lattice.L
    q, l = 5, 6
    u = np.zeros(op.data_shape, dtype=complex)
    u[q, l] = 1.0
    want = 2.0 * np.conj(H[q * L + l]).real
    np.testing.assert_allclose(op.apply_adjoint(u).ravel(), want, atol=1e-12 * np.abs(want).max())
    assert not np.any(op.apply_adjoint(np.zeros(op.data_shape)))


def test_adjoint_identity_8cubed():
    op = small_operator(dims=(8, 8, 8), n_views=2, n_tr=4, K=62)
    rng = np.random.default_rng(4)
    theta = rng.standard_normal(op.grid.dims)
    u = rng.standard_normal(op.data_shape) + 1j * rng.standard_normal(op.data_shape)
    u[:, 0] = u[:, 0].real
    h_theta = op.apply(theta)
    lhs = op.inner(h_theta, u)
    rhs = float(np.vdot(theta, op.apply_adjoint(u)))
    assert abs(lhs - rhs) / (math.sqrt(op.norm_sq(h_theta)) * math.sqrt(op.norm_sq(u))) < 1e-10


def test_band_limit_zeroes_rows():
    op = small_operator(f_max=3.0)
    theta = np.random.default_rng(5).standard_normal(op.grid.dims)
    u = op.apply(theta)
    assert np.all(u[:, op.lmax + 1:] == 0) and np.any(u[:, op.lmax])
    H = dense_matrix(op)
    assert np.linalg.norm(u.ravel() - H @ theta.ravel()) <= 1e-12 * np.linalg.norm(u)


def test_linearity():
    op = small_operator()
    rng = np.random.default_rng(6)
    t1, t2 = rng.standard_normal((2,) + op.grid.dims)
    lhs = op.apply(2.5 * t1 - 0.7 * t2)
    rhs = 2.5 * op.apply(t1) - 0.7 * op.apply(t2)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_rotational_covariance():
    # Rotating poses and object by +90 degrees about z leaves the data unchanged.
    view = 0.4
    base = dict(probe_radius_mm=65.0, arc_span_deg=152.0, num_transducers=5,
                transducer_width_a_mm=2.0, transducer_height_b_mm=1.5)
    g1 = ScanGeometry(view_angles_rad=(view,), **base)
    g2 = ScanGeometry(view_angles_rad=((view - math.pi / 2) % (2 * math.pi),), **base)
    grid = ImageGrid((6, 6, 5), 0.3)
    consts = AcousticConstants(1.47, 2000.0, 0.15)
    lat = FrequencyLattice(40, 0.05, 860)
    eir = Eir.gaussian(2.0)
    theta = np.random.default_rng(7).random(grid.dims)
    u1 = SystemOperator(g1, grid, consts, lat, eir).apply(theta)
    u2 = SystemOperator(g2, grid, consts, lat, eir).apply(np.rot90(theta, 1, axes=(0, 1)))
    assert np.linalg.norm(u1 - u2) <= 1e-9 * np.linalg.norm(u1)


def test_shape_errors():
    op = small_operator()
    with pytest.raises(ShapeMismatchError):
        op.apply(np.zeros(63))
    with pytest.raises(ShapeMismatchError):
        op.apply_adjoint(np.zeros((op.num_poses, op.lattice.L + 1)))
    with pytest.raises(ValueError):
        SystemOperator(op.geometry, op.grid, AcousticConstants(1.47, 2000.0, 0.2), op.lattice)


def test_subset_views_rows():
    op = small_operator(n_views=4)
    theta = np.random.default_rng(8).standard_normal(op.grid.dims)
    full = op.apply(theta).reshape(4, 4, -1)
    sub = op.subset_views([1, 3]).apply(theta).reshape(2, 4, -1)
    np.testing.assert_array_equal(sub, full[[1, 3]])


# ------------------------------------------------------- time <-> frequency


def test_constant_spectrum_gives_constant_signal():
    lat = FrequencyLattice(32, 0.05, start_sample=7)
    U = np.zeros(lat.L, dtype=complex)
    U[0] = 3.2
    u = freq_to_time(U, lat)
    np.testing.assert_allclose(u, 3.2 / (lat.K * lat.dt_us), rtol=1e-14)


def test_time_frequency_round_trip():
    lat = FrequencyLattice(256, 0.05, start_sample=123)
    u = np.random.default_rng(9).standard_normal((3, lat.K))
    back = freq_to_time(time_to_freq(u, lat), lat)
    assert np.max(np.abs(back - u)) <= 1e-12 * np.max(np.abs(u))
    with pytest.raises(ShapeMismatchError):
        time_to_freq(u[:, :-2], lat)


def test_time_to_freq_uses_absolute_time():
    # A sampled Gaussian at absolute time t0 has spectrum exp(-j 2 pi f t0) G(f).
    lat = FrequencyLattice(200, 0.05, start_sample=500)
    t0, s = 30.0, 0.3
    u = np.exp(-0.5 * ((lat.times() - t0) / s) ** 2)
    f = lat.frequencies()
    want = s * math.sqrt(2 * math.pi) * np.exp(-2 * (math.pi * f * s) ** 2) * np.exp(-2j * math.pi * f * t0)
    np.testing.assert_allclose(time_to_freq(u, lat), want, atol=1e-10)


def test_data_containers():
    lat = FrequencyLattice(16, 0.1)
    u = np.random.default_rng(10).standard_normal((2, 16))
    fd = TimeData(u, lat).to_freq()
    np.testing.assert_allclose(fd.to_time().values, u, atol=1e-13)
    bad = fd.values.copy()
    bad[0, 0] += 1j
    with pytest.raises(ValueError):
        FrequencyData(bad, lat)
    with pytest.raises(ValueError):
        TimeData(np.full((1, 16), np.nan), lat)


def test_single_voxel_n_shape_matches_bandlimited_analytic_pulse():
    geom = ScanGeometry(65.0, 0.0, 1, 0.01, 0.01, (0.0,))
    grid = ImageGrid((1, 1, 1), 0.1)
    consts = AcousticConstants(1.47, 2000.0, 0.05)
    lat = FrequencyLattice(1536, 0.05)
    op = SystemOperator(geom, grid, consts, lat)
    u = freq_to_time(op.apply(np.ones(1)), lat)[0]
    d = 65.0
    ref = periodic_bandlimited_nshape(lat, d / consts.c0, consts, d)
    assert np.linalg.norm(u - ref) <= 1e-2 * np.linalg.norm(ref)
