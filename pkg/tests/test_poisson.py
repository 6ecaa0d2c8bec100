import numpy as np
import pytest

from hybridshape import (
    OrientedPointCloud,
    ScalarGrid,
    SpectralKernel,
    VectorGrid,
    dpsr_backward,
    dpsr_forward,
    edge_weight_map,
    marching_squares,
    normalize_indicator,
    rasterize,
    solve_poisson_spectral,
    wmse_loss,
)
from hybridshape.fixtures import circle_cloud
from hybridshape.grids import cell_centers, grid_sample


def unit_grid(r, d):
    return ScalarGrid(np.ones((r,) * d))


# ---------------------------------------------------------------------------
# rasterize


def test_rasterize_cell_center_single_cell():
    # point exactly at a cell center: the full normal lands in that one cell
    r = 8
    pos = [[(2 + 0.5) / r, (5 + 0.5) / r, (1 + 0.5) / r]]
    cloud = OrientedPointCloud(pos, [[0.0, 0.0, 1.0]])
    q = rasterize(cloud, r)
    expected = np.zeros((r, r, r, 3))
    expected[2, 5, 1, 2] = 1.0
    assert np.allclose(q.values, expected, atol=1e-15)


def test_rasterize_lattice_corner_quarter_weights():
    # point where four cells meet in 2D: each gets weight 0.5 * 0.5
    r = 8
    cloud = OrientedPointCloud([[0.5, 0.5]], [[1.0, 0.0]])
    q = rasterize(cloud, r)
    x = q.values[..., 0]
    nz = np.argwhere(x != 0)
    assert sorted(map(tuple, nz)) == [(3, 3), (3, 4), (4, 3), (4, 4)]
    assert np.allclose(x[3:5, 3:5], 0.25)


def test_rasterize_partition_of_unity(rng):
    pts = rng.random((10, 2))
    nrm = rng.normal(size=(10, 2))
    cloud = OrientedPointCloud(pts, nrm)
    q = rasterize(cloud, 16)
    total = q.values.sum(axis=(0, 1))
    assert np.allclose(total, cloud.normals.sum(axis=0), atol=1e-12)


def test_rasterize_resolution_floor():
    cloud = OrientedPointCloud([[0.5, 0.5]], [[1.0, 0.0]])
    with pytest.raises(ValueError):
        rasterize(cloud, 4)


# ---------------------------------------------------------------------------
# spectral solve


def test_solve_zero_field():
    r = 16
    q = VectorGrid(np.zeros((r, r, 2)))
    chi = solve_poisson_spectral(q, SpectralKernel(0.0, r, 2))
    assert np.allclose(chi.values, 0.0)


def test_solve_recovers_gradient_field():
    r = 64
    x = cell_centers(r, 2)
    f = np.cos(2 * np.pi * x[..., 0])
    q = np.stack([-2 * np.pi * np.sin(2 * np.pi * x[..., 0]), np.zeros((r, r))], axis=-1)
    chi = solve_poisson_spectral(VectorGrid(q), SpectralKernel(0.0, r, 2))
    assert np.max(np.abs(chi.values - (f - f.mean()))) < 1e-6


def test_solve_resolution_mismatch():
    q = VectorGrid(np.zeros((16, 16, 2)))
    with pytest.raises(ValueError):
        solve_poisson_spectral(q, SpectralKernel(2.0, 32, 2))


def test_solve_linear_in_field(rng):
    r = 16
    q = rng.normal(size=(r, r, 2))
    kernel = SpectralKernel(2.0, r, 2)
    chi1 = solve_poisson_spectral(VectorGrid(q), kernel)
    chi3 = solve_poisson_spectral(VectorGrid(3.0 * q), kernel)
    assert np.allclose(chi3.values, 3.0 * chi1.values, atol=1e-12)


def test_solve_mean_zero(rng):
    r = 16
    q = rng.normal(size=(r, r, r, 3))
    chi = solve_poisson_spectral(VectorGrid(q), SpectralKernel(2.0, r, 3))
    assert abs(chi.values.mean()) < 1e-14


def test_spectral_laplacian_matches_divergence(rng):
    # in Fourier space: -4 pi^2 |u|^2 chi_hat == 2 pi i u . (g q_hat) off the
    # nulled modes (zero frequency and per-axis Nyquist of the derivative)
    r = 16
    q = rng.normal(size=(r, r, 2))
    kernel = SpectralKernel(1.0, r, 2)
    chi = solve_poisson_spectral(VectorGrid(q), kernel)
    f = np.fft.fftfreq(r) * r
    u = np.stack(np.meshgrid(f, f, indexing="ij"), axis=-1)
    u_deriv = np.where(np.abs(u) == r / 2, 0.0, u)
    u2 = np.sum(u**2, axis=-1)
    chi_hat = np.fft.fftn(chi.values)
    lap = -4 * np.pi**2 * u2 * chi_hat
    q_hat = np.fft.fftn(q, axes=(0, 1))
    div = 2j * np.pi * np.sum(u_deriv * (kernel.multipliers[..., None] * q_hat), axis=-1)
    mask = u2 > 0
    scale = np.abs(div[mask]).max()
    assert np.max(np.abs(lap[mask] - div[mask])) < 1e-10 * scale


def test_kernel_invariants():
    k = SpectralKernel(2.0, 16, 3)
    assert k.multipliers[0, 0, 0] == 1.0
    assert k.multipliers.min() > 0 and k.multipliers.max() <= 1.0
    # radially symmetric: swapping axes leaves the multiplier grid unchanged
    assert np.array_equal(k.multipliers, k.multipliers.transpose(1, 0, 2))
    k0 = SpectralKernel(0.0, 8, 2)
    assert np.array_equal(k0.multipliers, np.ones((8, 8)))


# ---------------------------------------------------------------------------
# normalization


def test_normalize_constant_to_zero():
    cloud = circle_cloud(16)
    chi = normalize_indicator(ScalarGrid(np.full((16, 16), 7.5)), cloud)
    assert np.array_equal(chi.values, np.zeros((16, 16)))


def test_normalize_circle_surface_near_zero_corner_exact():
    cloud = circle_cloud(512)
    q = rasterize(cloud, 128)
    chi_p = solve_poisson_spectral(q, SpectralKernel(2.0, 128, 2))
    chi = normalize_indicator(chi_p, cloud, 0.5)
    at_pts = grid_sample(chi.values, cloud.positions)
    assert np.mean(np.abs(at_pts)) < 0.02
    corner = chi.values[0, 0]
    assert corner == 0.5 or corner == -0.5
    # inside-positive with outward normals
    assert chi.values[64, 64] > 0


def test_normalize_odd_in_normals():
    cloud = circle_cloud(128)
    flipped = OrientedPointCloud(cloud.positions, -cloud.normals)
    chi_a, _ = dpsr_forward(cloud, 2.0, 64, 0.5)
    chi_b, _ = dpsr_forward(flipped, 2.0, 64, 0.5)
    assert np.array_equal(chi_b.values, -chi_a.values)


def test_normalize_degenerate_reference():
    # non-constant field whose corner value equals the point mean
    r = 16
    values = np.zeros((r, r))
    values[8, 8] = 1.0
    values[0, 0] = 0.0
    cloud = OrientedPointCloud([[0.5 / r, 0.5 / r]], [[1.0, 0.0]])  # sits at the corner
    with pytest.raises(ValueError, match="degenerate"):
        normalize_indicator(ScalarGrid(values), cloud)


# ---------------------------------------------------------------------------
# edge weights and loss


def test_edge_weights_constant_zero():
    w = edge_weight_map(ScalarGrid(np.full((16, 16), 3.0)))
    assert np.array_equal(w.values, np.zeros((16, 16)))


def test_edge_weights_step():
    r = 32
    values = np.where(np.arange(r)[:, None] < r // 2, -0.5, 0.5) * np.ones((r, r))
    w = edge_weight_map(ScalarGrid(values))
    col_mass = w.values.sum(axis=1)
    peak = np.argsort(col_mass)[-2:]
    assert set(peak) == {r // 2 - 1, r // 2}  # flanking columns carry the max
    assert w.values.max() == 1.0
    # gaussian with kernel size 7 spreads at most 3 cells past the sobel response
    assert np.all(col_mass[: r // 2 - 5] == 0)
    assert np.all(col_mass[r // 2 + 5 :] == 0)
    assert np.all(w.values >= 0)


def test_edge_weights_peak_on_circle_boundary():
    cloud = circle_cloud(512)
    chi, _ = dpsr_forward(cloud, 2.0, 128, 0.5)
    w = edge_weight_map(chi)
    contour = marching_squares(chi, 0.0)
    boundary = np.concatenate(contour.loops)
    peaks = np.argwhere(w.values > 0.98 * w.values.max())
    centers = (peaks + 0.5) / 128
    for c in centers:
        assert np.min(np.linalg.norm(boundary - c, axis=1)) < 1.0 / 128


def test_wmse_zero_and_closed_form(rng):
    r = 4
    gt = ScalarGrid(rng.normal(size=(r, r)))
    loss, grad = wmse_loss(gt, gt, unit_grid(r, 2))
    assert loss == 0.0 and np.array_equal(grad.values, np.zeros((r, r)))
    pred = ScalarGrid(gt.values + 0.1)
    loss, grad = wmse_loss(pred, gt, unit_grid(r, 2))
    assert np.isclose(loss, 16 * 0.01)
    assert np.allclose(grad.values, 2 * 0.1)


def test_wmse_gradient_matches_fd(rng):
    r = 8
    pred = rng.normal(size=(r, r))
    gt = ScalarGrid(rng.normal(size=(r, r)))
    w = ScalarGrid(rng.random((r, r)))
    loss, grad = wmse_loss(ScalarGrid(pred), gt, w)
    h = 1e-6
    for idx in [(0, 0), (3, 5), (7, 7)]:
        up, dn = pred.copy(), pred.copy()
        up[idx] += h
        dn[idx] -= h
        fd = (wmse_loss(ScalarGrid(up), gt, w)[0] - wmse_loss(ScalarGrid(dn), gt, w)[0]) / (2 * h)
        assert abs(grad.values[idx] - fd) < 1e-8 * max(abs(fd), 1.0)


def test_wmse_resolution_mismatch():
    with pytest.raises(ValueError):
        wmse_loss(unit_grid(4, 2), unit_grid(8, 2), unit_grid(8, 2))


# ---------------------------------------------------------------------------
# forward/backward chain


def test_dpsr_forward_circle_zero_level_set():
    cloud = circle_cloud(512)
    chi, _ = dpsr_forward(cloud, 2.0, 128, 0.5)
    contour = marching_squares(chi, 0.0)
    assert contour.n_loops == 1
    radii = np.linalg.norm(np.concatenate(contour.loops) - 0.5, axis=1)
    assert np.mean(np.abs(radii - 0.25)) < 2.0 / 128


def test_dpsr_forward_translation_moves_level_set():
    r = 64
    cloud = circle_cloud(512, radius=0.2, center=(0.45, 0.5))
    moved = OrientedPointCloud(cloud.positions + [1.0 / r, 0.0], cloud.normals)
    chi_a, _ = dpsr_forward(cloud, 2.0, r, 0.5)
    chi_b, _ = dpsr_forward(moved, 2.0, r, 0.5)
    pts_a = np.concatenate(marching_squares(chi_a, 0.0).loops) + [1.0 / r, 0.0]
    pts_b = np.concatenate(marching_squares(chi_b, 0.0).loops)
    dists = [np.min(np.linalg.norm(pts_a - p, axis=1)) for p in pts_b]
    assert np.max(dists) < 0.25 / r


def test_dpsr_backward_zero_cotangent():
    cloud = circle_cloud(32)
    chi, tape = dpsr_forward(cloud, 2.0, 16, 0.5)
    pg, ng = dpsr_backward(tape, ScalarGrid(np.zeros((16, 16))))
    assert np.array_equal(pg, np.zeros((32, 2)))
    assert np.array_equal(ng, np.zeros((32, 2)))


def test_tape_replay_and_single_use():
    cloud = circle_cloud(64)
    chi, tape = dpsr_forward(cloud, 2.0, 32, 0.5)
    assert np.array_equal(tape.replay().values, chi.values)
    dpsr_backward(tape, ScalarGrid(np.zeros((32, 32))))
    with pytest.raises(RuntimeError):
        dpsr_backward(tape, ScalarGrid(np.zeros((32, 32))))


def _loss_and_grads(positions, normals, target, weights, sigma, r):
    cloud = OrientedPointCloud(positions, normals)
    chi, tape = dpsr_forward(cloud, sigma, r, 0.5)
    loss, grid_grad = wmse_loss(chi, target, weights)
    return loss, tape, grid_grad


def test_dpsr_gradients_single_point_fd():
    r = 16
    rng = np.random.default_rng(7)
    target_cloud = circle_cloud(64, radius=0.2)
    target, _ = dpsr_forward(target_cloud, 2.0, r, 0.5)
    weights = unit_grid(r, 2)
    p = np.array([[0.4131, 0.6173]])
    n = np.array([[0.6, 0.8]])
    loss, tape, grid_grad = _loss_and_grads(p, n, target, weights, 2.0, r)
    pg, ng = dpsr_backward(tape, grid_grad)
    h = 1e-5
    for arr, grad in ((p, pg), (n, ng)):
        for axis in range(2):
            up, dn = arr.copy(), arr.copy()
            up[0, axis] += h
            dn[0, axis] -= h
            if arr is p:
                lp = _loss_and_grads(up, n, target, weights, 2.0, r)[0]
                lm = _loss_and_grads(dn, n, target, weights, 2.0, r)[0]
            else:
                lp = _loss_and_grads(p, up, target, weights, 2.0, r)[0]
                lm = _loss_and_grads(p, dn, target, weights, 2.0, r)[0]
            fd = (lp - lm) / (2 * h)
            assert abs(grad[0, axis] - fd) / max(abs(fd), 1e-12) < 1e-5


def test_dpsr_gradients_many_points_cosine():
    r = 32
    rng = np.random.default_rng(11)
    target, _ = dpsr_forward(
        OrientedPointCloud(*_sphere_samples(rng, 256, 0.3)), 2.0, r, 0.5
    )
    weights = unit_grid(r, 3)
    pos, nrm = _sphere_samples(rng, 32, 0.25)
    pos = pos + rng.normal(0, 0.01, pos.shape)
    loss, tape, grid_grad = _loss_and_grads(pos, nrm, target, weights, 2.0, r)
    pg, ng = dpsr_backward(tape, grid_grad)
    analytic = np.concatenate([pg.ravel(), ng.ravel()])
    h = 1e-5
    fd = np.zeros_like(analytic)
    k = 0
    for arr_name in ("pos", "nrm"):
        arr = pos if arr_name == "pos" else nrm
        for i in range(len(arr)):
            for axis in range(3):
                up, dn = arr.copy(), arr.copy()
                up[i, axis] += h
                dn[i, axis] -= h
                if arr_name == "pos":
                    lp = _loss_and_grads(up, nrm, target, weights, 2.0, r)[0]
                    lm = _loss_and_grads(dn, nrm, target, weights, 2.0, r)[0]
                else:
                    lp = _loss_and_grads(pos, up, target, weights, 2.0, r)[0]
                    lm = _loss_and_grads(pos, dn, target, weights, 2.0, r)[0]
                fd[k] = (lp - lm) / (2 * h)
                k += 1
    cos = analytic @ fd / (np.linalg.norm(analytic) * np.linalg.norm(fd))
    assert cos > 0.9999


def _sphere_samples(rng, count, radius):
    v = rng.normal(size=(count, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return 0.5 + radius * v, v


def test_normal_gradients_are_tangential():
    # the normalized chain is scale-invariant in the normals, so normal
    # gradients have no radial component
    cloud = circle_cloud(64)
    target, _ = dpsr_forward(circle_cloud(64, radius=0.3), 2.0, 32, 0.5)
    loss, tape, grid_grad = _loss_and_grads(
        cloud.positions, cloud.normals, target, unit_grid(32, 2), 2.0, 32
    )
    _, ng = dpsr_backward(tape, grid_grad)
    radial = np.einsum("ij,ij->i", ng, cloud.normals)
    assert np.max(np.abs(radial)) < 1e-9 * max(np.max(np.abs(ng)), 1e-30)


def test_edge_weights_rescale_flag():
    r = 32
    values = np.where(np.arange(r)[:, None] < r // 2, -0.5, 0.5) * np.ones((r, r))
    raw = edge_weight_map(ScalarGrid(values), rescale=False)
    scaled = edge_weight_map(ScalarGrid(values), rescale=True)
    assert raw.values.max() > 1.0  # sobel magnitude of a unit step is > 1
    assert scaled.values.max() == 1.0
    ratio = raw.values[raw.values > 0] / scaled.values[raw.values > 0]
    assert np.allclose(ratio, raw.values.max())
