import numpy as np
import pytest

from hybridshape import (
    Contour,
    ScalarGrid,
    SurfaceMesh,
    euler_characteristic,
    genus,
    is_watertight,
    largest_component,
    largest_mask_component,
    marching_cubes,
    marching_squares,
    sample_surface,
    self_intersection_ratio,
)
from hybridshape import fixtures
from hybridshape.grids import grid_sample
from hybridshape.meshing import face_normals

TET_FACES = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])


def mesh_area(mesh):
    v, f = mesh.vertices, mesh.faces
    return 0.5 * np.linalg.norm(
        np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1
    ).sum()


# ---------------------------------------------------------------------------
# marching cubes


def test_sphere_extraction(sphere_mesh_64):
    m = sphere_mesh_64
    assert is_watertight(m)
    assert euler_characteristic(m) == 2
    assert genus(m) == 0
    assert abs(mesh_area(m) - 4 * np.pi * 0.09) < 0.03 * 4 * np.pi * 0.09


def test_constant_grid_empty_mesh():
    m = marching_cubes(ScalarGrid(np.ones((16, 16, 16))), 0.0)
    assert m.is_empty


def test_torus_genus(torus_mesh_64):
    assert euler_characteristic(torus_mesh_64) == 0
    assert genus(torus_mesh_64) == 1


def test_vertex_values_at_iso(sphere_grid_64, sphere_mesh_64):
    values = grid_sample(sphere_grid_64.values, sphere_mesh_64.vertices)
    assert np.max(np.abs(values)) < 1e-9


def test_outward_orientation(sphere_mesh_64):
    v, f = sphere_mesh_64.vertices, sphere_mesh_64.faces
    fn = face_normals(sphere_mesh_64)
    centroids = (v[f[:, 0]] + v[f[:, 1]] + v[f[:, 2]]) / 3.0
    assert np.all(np.einsum("ij,ij->i", fn, centroids - 0.5) > 0)


def test_negated_grid_flips_orientation(sphere_grid_64, sphere_mesh_64):
    flipped = marching_cubes(ScalarGrid(-sphere_grid_64.values), 0.0)
    assert flipped.n_faces == sphere_mesh_64.n_faces
    def signed_volume(m):
        v, f = m.vertices, m.faces
        return np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0
    va, vb = signed_volume(sphere_mesh_64), signed_volume(flipped)
    assert va > 0 > vb
    assert np.isclose(va, -vb, rtol=1e-9)


# ---------------------------------------------------------------------------
# marching squares


def test_circle_contour():
    contour = marching_squares(fixtures.circle_grid(128), 0.0)
    assert contour.n_loops == 1
    assert abs(contour.total_length() - 2 * np.pi * 0.25) < 0.02 * 2 * np.pi * 0.25


def test_two_circles_two_loops():
    r = 96
    a = fixtures.circle_grid(r, radius=0.1, center=(0.25, 0.5)).values
    b = fixtures.circle_grid(r, radius=0.1, center=(0.75, 0.5)).values
    contour = marching_squares(ScalarGrid(np.maximum(a, b)), 0.0)
    assert contour.n_loops == 2


def test_constant_grid_no_loops():
    assert marching_squares(ScalarGrid(np.zeros((16, 16))), 0.5).is_empty


def test_contour_orientation_ccw_around_positive():
    contour = marching_squares(fixtures.circle_grid(64), 0.0)
    loop = contour.loops[0]
    nxt = np.roll(loop, -1, axis=0)
    signed_area = 0.5 * np.sum(loop[:, 0] * nxt[:, 1] - nxt[:, 0] * loop[:, 1])
    assert signed_area > 0


def test_saddle_disambiguation_by_center_value():
    # diagonal corners above iso; the center average decides connectivity
    base = np.zeros((8, 8))
    base[3, 3] = base[4, 4] = 1.0
    base[3, 4] = base[4, 3] = -0.9  # center avg 0.05 > 0: one connected band
    joined = marching_squares(ScalarGrid(base), 0.0)
    base2 = base.copy()
    base2[3, 4] = base2[4, 3] = -1.1  # center avg -0.05 < 0: two pockets
    split = marching_squares(ScalarGrid(base2), 0.0)
    assert joined.n_loops == 1
    assert split.n_loops == 2


def test_vertex_values_at_iso_2d():
    grid = fixtures.circle_grid(64)
    contour = marching_squares(grid, 0.0)
    values = grid_sample(grid.values, np.concatenate(contour.loops))
    assert np.max(np.abs(values)) < 1e-9


# ---------------------------------------------------------------------------
# topology diagnostics


def test_euler_additivity_and_genus_errors(sphere_mesh_32):
    m = sphere_mesh_32
    two = SurfaceMesh(
        np.vstack([m.vertices, m.vertices + 0.001]),
        np.vstack([m.faces, m.faces + m.n_vertices]),
    )
    assert euler_characteristic(two) == 4
    with pytest.raises(ValueError, match="disconnected"):
        genus(two)
    opened = SurfaceMesh(m.vertices, m.faces[1:])
    assert not is_watertight(opened)
    with pytest.raises(ValueError, match="open"):
        genus(opened)


# ---------------------------------------------------------------------------
# self intersections


def test_marching_cubes_output_never_self_intersects(sphere_mesh_64, torus_mesh_64):
    assert self_intersection_ratio(sphere_mesh_64) == 0.0
    assert self_intersection_ratio(torus_mesh_64) == 0.0


def test_interpenetrating_tetrahedra_all_faces():
    a = np.array([[0.0, 0, -1], [1, 0, 1], [-0.5, 0.866, 1], [-0.5, -0.866, 1]]) * 0.3 + 0.5
    b = np.array([[0.0, 0, 1], [1, 0, -1], [-0.5, 0.866, -1], [-0.5, -0.866, -1]]) * 0.3 + 0.5
    mesh = SurfaceMesh(np.vstack([a, b]), np.vstack([TET_FACES, TET_FACES + 4]))
    assert self_intersection_ratio(mesh) == 1.0


def _segment_hits_triangle(p, q, tri):
    # independent oracle: segment-triangle crossing via plane + barycentric test
    n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    dp = np.dot(p - tri[0], n)
    dq = np.dot(q - tri[0], n)
    if dp * dq > 0:
        return False
    denom = dp - dq
    if denom == 0:
        return False  # coplanar segments handled by symmetry elsewhere
    t = dp / denom
    x = p + t * (q - p)
    # barycentric containment
    v0, v1, v2 = tri[1] - tri[0], tri[2] - tri[0], x - tri[0]
    d00, d01, d11 = v0 @ v0, v0 @ v1, v1 @ v1
    d20, d21 = v2 @ v0, v2 @ v1
    den = d00 * d11 - d01 * d01
    if den == 0:
        return False
    u = (d11 * d20 - d01 * d21) / den
    w = (d00 * d21 - d01 * d20) / den
    return u >= -1e-12 and w >= -1e-12 and u + w <= 1 + 1e-12


def _brute_force_bad_faces(mesh):
    tris = mesh.vertices[mesh.faces]
    bad = set()
    for i in range(mesh.n_faces):
        for j in range(i + 1, mesh.n_faces):
            if set(mesh.faces[i]) & set(mesh.faces[j]):
                continue
            hit = any(
                _segment_hits_triangle(ta, tb, tris[j])
                for ta, tb in zip(tris[i], np.roll(tris[i], -1, axis=0))
            ) or any(
                _segment_hits_triangle(ta, tb, tris[i])
                for ta, tb in zip(tris[j], np.roll(tris[j], -1, axis=0))
            )
            if hit:
                bad.update((i, j))
    return bad


def test_reflected_vertex_matches_brute_force():
    mesh = marching_cubes(fixtures.sphere_grid(12, radius=0.3), 0.0)
    v = mesh.vertices.copy()
    # reflect through a slightly off-center point so the moved vertex pierces
    # the far side instead of landing exactly on a symmetric mesh vertex
    v[0] = 1.02 - v[0]
    broken = SurfaceMesh(v, mesh.faces)
    ratio = self_intersection_ratio(broken)
    expected = len(_brute_force_bad_faces(broken)) / broken.n_faces
    assert ratio > 0
    assert ratio == expected


# ---------------------------------------------------------------------------
# sampling


def test_sample_single_triangle():
    tri = SurfaceMesh(
        [[0.1, 0.1, 0.2], [0.9, 0.1, 0.2], [0.5, 0.8, 0.2]], [[0, 1, 2]]
    )
    cloud = sample_surface(tri, 1000, seed=3)
    assert np.all(cloud.positions[:, 2] == 0.2)
    centroid = tri.vertices.mean(axis=0)
    assert np.linalg.norm(cloud.positions.mean(axis=0) - centroid) < 0.03
    # inside check via barycentric signs in the plane
    v = tri.vertices[:, :2]
    for p in cloud.positions[::50, :2]:
        s = [
            (v[(k + 1) % 3] - v[k])[0] * (p - v[k])[1]
            - (v[(k + 1) % 3] - v[k])[1] * (p - v[k])[0]
            for k in range(3)
        ]
        assert all(x >= -1e-12 for x in s) or all(x <= 1e-12 for x in s)


def test_sample_sphere_normals_cancel(sphere_mesh_64):
    cloud = sample_surface(sphere_mesh_64, 10_000, seed=5)
    assert np.linalg.norm(cloud.normals.mean(axis=0)) < 0.05


def test_sample_area_weighting():
    mesh = SurfaceMesh(
        [
            [0.0, 0.0, 0.0], [0.3, 0.0, 0.0], [0.0, 0.3, 0.0],  # area A
            [0.5, 0.5, 0.0], [0.5 + 0.3 * np.sqrt(3), 0.5, 0.0], [0.5, 0.5 + 0.3 * np.sqrt(3), 0.0],  # 3A
        ],
        [[0, 1, 2], [3, 4, 5]],
    )
    cloud = sample_surface(mesh, 100_000, seed=9)
    big = np.sum(cloud.positions[:, 0] >= 0.5)
    ratio = big / (len(cloud) - big)
    assert abs(ratio - 3.0) < 0.06


def test_sample_deterministic(sphere_mesh_32):
    a = sample_surface(sphere_mesh_32, 500, seed=42)
    b = sample_surface(sphere_mesh_32, 500, seed=42)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.normals, b.normals)


def test_sample_contour_outward_normals():
    from hybridshape import make_circle

    cloud = sample_surface(make_circle(100, radius=0.2), 1000, seed=0)
    outward = np.einsum("ij,ij->i", cloud.normals, cloud.positions - 0.5)
    assert np.all(outward > 0)


def test_sample_empty_surface_errors():
    empty = SurfaceMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    with pytest.raises(ValueError):
        sample_surface(empty, 10)


# ---------------------------------------------------------------------------
# components


def test_largest_component_identity(sphere_mesh_32):
    same = largest_component(sphere_mesh_32)
    assert same.n_faces == sphere_mesh_32.n_faces


def test_largest_component_drops_satellite(sphere_mesh_32):
    m = sphere_mesh_32
    tet_v = np.array([[0.02, 0.02, 0.02], [0.06, 0.02, 0.02], [0.02, 0.06, 0.02], [0.02, 0.02, 0.06]])
    combo = SurfaceMesh(
        np.vstack([m.vertices, tet_v]), np.vstack([m.faces, TET_FACES + m.n_vertices])
    )
    kept = largest_component(combo)
    assert kept.n_faces == m.n_faces
    assert is_watertight(kept)


def test_largest_mask_component():
    mask = np.zeros((12, 12, 12), dtype=bool)
    mask[2:7, 2:7, 2:7] = True
    mask[9:11, 9:11, 9:11] = True
    kept = largest_mask_component(mask)
    assert kept.sum() == 5**3
    # diagonal touching does not join under 6-connectivity
    diag = np.zeros((4, 4), dtype=bool)
    diag[0, 0] = diag[1, 1] = True
    assert largest_mask_component(diag).sum() == 1


def test_contour_validation():
    with pytest.raises(ValueError):
        Contour([np.array([[0.0, 0.0], [1.0, 1.0]])])
    c = Contour([np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.0, 0.0]])])
    assert len(c.loops[0]) == 3  # duplicates and closing vertex merged


def test_largest_component_dispatches_on_masks():
    mask = np.zeros((10, 10, 10), dtype=bool)
    mask[1:6, 1:6, 1:6] = True
    mask[8, 8, 8] = True
    kept = largest_component(mask)
    assert kept.dtype == bool and kept.sum() == 125
    grid = ScalarGrid(mask.astype(np.float64))
    kept_grid = largest_component(grid)
    assert isinstance(kept_grid, ScalarGrid)
    assert kept_grid.values.sum() == 125
