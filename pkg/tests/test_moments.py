import numpy as np
import pytest

from volterra_filters import (
    InsufficientData,
    InvalidArgument,
    InvalidGrid,
    InvalidModel,
    SampleDataset,
    WhiteNoise,
    gaussian_linear_moments,
    kernel_moments,
    sample_moments,
)


def test_two_point_average():
    m = sample_moments(SampleDataset([[1.0], [3.0]], [[2.0], [4.0]]), 1)
    assert m.mean_x[0] == 2.0
    assert m.C_x[0, 0] == 5.0
    assert m.C_xY[0, m.feature_set.position((1,))] == 7.0
    assert m.C_xY[0, 0] == 2.0  # constant column carries the mean


def test_constant_dataset():
    c, d = 1.5, -2.0
    m = sample_moments(SampleDataset(np.full((5, 1), c), np.full((5, 1), d)), 2)
    assert m.C_x[0, 0] == pytest.approx(c * c)
    assert m.C_Y[1, 1] == pytest.approx(d * d)


def test_insufficient_data():
    with pytest.raises(InsufficientData):
        sample_moments(SampleDataset([[1.0]], [[2.0]]), 1)


def test_gaussian_cross_moment_within_5_sigma():
    rho, n = 0.8, 10_000
    rng = np.random.default_rng(11)
    xy = rng.multivariate_normal([0, 0], [[1, rho], [rho, 1]], size=n)
    m = sample_moments(SampleDataset(xy[:, :1], xy[:, 1:]), 1)
    # Var(xy) = 1 + rho^2 for unit-variance jointly Gaussian pairs
    sigma = np.sqrt((1 + rho**2) / n)
    assert abs(m.C_xY[0, 1] - rho) < 5 * sigma


def test_sample_C_Y_symmetric_psd():
    rng = np.random.default_rng(3)
    data = SampleDataset(rng.normal(size=(400, 2)), rng.standard_t(4, size=(400, 3)))
    m = sample_moments(data, 3)
    np.testing.assert_array_equal(m.C_Y, m.C_Y.T)
    assert np.linalg.eigvalsh(m.C_Y)[0] >= -1e-8 * np.trace(m.C_Y)


def test_isserlis_fourth_moments():
    n = 200_000
    C = np.array([[1.0, 0.6], [0.6, 2.0]])
    rng = np.random.default_rng(5)
    y = rng.multivariate_normal([0, 0], C, size=n)
    m = sample_moments(SampleDataset(np.zeros((n, 1)), y), 2)
    fs = m.feature_set
    got = m.C_Y[fs.position((1, 1)), fs.position((2, 2))]
    want = C[0, 0] * C[1, 1] + 2 * C[0, 1] ** 2
    se = np.std(y[:, 0] ** 2 * y[:, 1] ** 2) / np.sqrt(n)
    assert abs(got - want) < 5 * se


def test_gaussian_linear_decoupled():
    C_y0 = np.diag([2.0, 3.0])
    m = gaussian_linear_moments(np.zeros((2, 2)), np.eye(2), C_y0, 0.1)
    assert not m.C_xY.any()
    np.testing.assert_array_equal(m.C_Y[1:, 1:], C_y0)


def test_gaussian_linear_2x2():
    c, s2 = 1.7, 0.3
    m = gaussian_linear_moments([[0, 0], [c, 0]], np.eye(2), s2 * np.eye(2), 1.0)
    np.testing.assert_allclose(m.C_Y[1:, 1:], np.diag([s2, c * c + s2]))
    np.testing.assert_allclose(m.C_xY[:, 1:], [[0, c], [0, 0]])


def test_gaussian_linear_noncausal_rejected():
    with pytest.raises(InvalidModel):
        gaussian_linear_moments([[1.0, 0], [0, 0]], np.eye(2), np.eye(2), 1.0)
    with pytest.raises(InvalidModel):
        gaussian_linear_moments([[0, 1.0], [0, 0]], np.eye(2), np.eye(2), 1.0)


def _random_causal_model(rng, n=5):
    g = np.tril(rng.normal(size=(n, n)), k=-1)
    a = rng.normal(size=(n, n))
    b = rng.normal(size=(n, n))
    return g, a @ a.T + 0.1 * np.eye(n), b @ b.T + 0.1 * np.eye(n)


def test_gaussian_linear_reconstruction_identity():
    rng = np.random.default_rng(8)
    g, C_x, C_y0 = _random_causal_model(rng)
    dt = 0.3
    m = gaussian_linear_moments(g, C_x, C_y0, dt)
    np.testing.assert_allclose(m.C_Y[1:, 1:] - C_y0, dt**2 * g @ C_x @ g.T, rtol=1e-12, atol=1e-12)


def test_gaussian_linear_matches_simulation():
    rng = np.random.default_rng(9)
    g, C_x, C_y0 = _random_causal_model(rng)
    dt, n = 0.5, 100_000
    x = rng.multivariate_normal(np.zeros(5), C_x, size=n)
    y = rng.multivariate_normal(np.zeros(5), C_y0, size=n) + dt * x @ g.T
    emp = sample_moments(SampleDataset(x, y), 1)
    m = gaussian_linear_moments(g, C_x, C_y0, dt)
    # per-entry standard errors of the product averages
    se_xy = np.sqrt(np.einsum("ni,nj->ij", x**2, y**2) / n - emp.C_xY[:, 1:] ** 2) / np.sqrt(n)
    se_yy = np.sqrt(np.einsum("ni,nj->ij", y**2, y**2) / n - emp.C_Y[1:, 1:] ** 2) / np.sqrt(n)
    assert np.all(np.abs(emp.C_xY[:, 1:] - m.C_xY[:, 1:]) < 5 * se_xy)
    assert np.all(np.abs(emp.C_Y[1:, 1:] - m.C_Y[1:, 1:]) < 5 * se_yy)


def test_kernel_constant():
    one = lambda t, s: 1.0  # noqa: E731
    m = kernel_moments(one, one, one, [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(m.C_Y[1:, 1:], np.ones((3, 3)))


def test_kernel_white_noise():
    Pi, grid = 2.5, np.arange(4) * 0.25
    zero = lambda t, s: 0.0 * t * s  # noqa: E731
    m = kernel_moments(zero, zero, WhiteNoise(Pi), grid)
    np.testing.assert_allclose(m.C_Y[1:, 1:], Pi / 0.25 * np.eye(4))


def test_kernel_ou():
    ou = lambda t, s: np.exp(-np.abs(t - s))  # noqa: E731
    m = kernel_moments(ou, ou, ou, [0.0, 1.0, 2.0])
    # C_Y(1, 3) in 1-based feature numbering
    assert m.C_Y[1, 3] == pytest.approx(np.exp(-2.0), rel=1e-15)


def test_kernel_sum_with_white_noise():
    ou = lambda t, s: np.exp(-np.abs(t - s))  # noqa: E731
    grid = np.arange(3) * 0.5
    m = kernel_moments(ou, ou, ou + WhiteNoise(1.0), grid)
    np.testing.assert_allclose(m.C_Y[1:, 1:], np.exp(-np.abs(grid[:, None] - grid)) + 2.0 * np.eye(3))


def test_kernel_nonuniform_grid():
    one = lambda t, s: 1.0  # noqa: E731
    with pytest.raises(InvalidGrid):
        kernel_moments(one, one, one, [0.0, 0.1, 0.3])
    with pytest.raises(InvalidGrid):
        kernel_moments(one, one, one, [0.0, 0.2, 0.1])


def test_restrict_drops_high_degree_features():
    rng = np.random.default_rng(0)
    data = SampleDataset(rng.normal(size=(50, 1)), rng.normal(size=(50, 2)))
    m2, m1 = sample_moments(data, 2), sample_moments(data, 1)
    r = m2.restrict(1)
    np.testing.assert_allclose(r.C_Y, m1.C_Y)
    np.testing.assert_allclose(r.C_xY, m1.C_xY)
    with pytest.raises(InvalidArgument):
        m1.restrict(2)


def test_dataset_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    ds = SampleDataset(rng.normal(size=(6, 2)), rng.normal(size=(6, 3)))
    path = tmp_path / "data.csv"
    ds.to_csv(path)
    assert path.read_text().splitlines()[0] == "x_1,x_2,y_1,y_2,y_3"
    back = SampleDataset.from_csv(path)
    np.testing.assert_array_equal(back.x_samples, ds.x_samples)
    np.testing.assert_array_equal(back.y_samples, ds.y_samples)


def test_dataset_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(InvalidArgument):
        SampleDataset.from_csv(path)
