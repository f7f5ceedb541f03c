import numpy as np
import pytest

from willmore import (
    DofMap,
    MeshError,
    TriMesh,
    load_mesh,
    loop_subdivide,
    save_mesh,
    triangle_geometry,
)
from willmore import shapes
from willmore.mesh import frame_path


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadMesh:
    def test_single_triangle_obj(self, tmp_path):
        path = write(
            tmp_path, "tri.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"
        )
        mesh = load_mesh(path)
        assert mesh.num_vertices == 3
        assert mesh.num_faces == 1
        assert mesh.boundary_vertex.all()

    def test_closed_icosahedron(self, tmp_path, icosahedron):
        path = tmp_path / "ico.obj"
        save_mesh(icosahedron, path)
        mesh = load_mesh(path)
        assert mesh.num_vertices == 12
        assert mesh.num_faces == 20
        assert mesh.edges.shape[0] == 30  # V - E + F = 2
        assert not mesh.boundary_vertex.any()
        assert mesh.is_closed

    def test_zero_area_face_rejected(self, tmp_path):
        path = write(
            tmp_path,
            "degen.obj",
            "v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n",
        )
        with pytest.raises(MeshError, match="degenerate"):
            load_mesh(path)

    def test_quad_rejected(self, tmp_path):
        path = write(
            tmp_path,
            "quad.obj",
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
        )
        with pytest.raises(MeshError, match="triangle"):
            load_mesh(path)

    def test_nonmanifold_edge_rejected(self):
        positions = [[0, 0, 0], [1, 0, 0], [0, 0, 1], [0, 1, 0], [0, -1, 0]]
        faces = [[0, 1, 2], [1, 0, 3], [0, 1, 4]]
        with pytest.raises(MeshError, match="orientation|manifold"):
            TriMesh(positions, faces)

    def test_inconsistent_orientation_rejected(self):
        positions = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]
        faces = [[0, 1, 2], [1, 3, 2]]
        TriMesh(positions, faces)  # consistent pair is fine
        with pytest.raises(MeshError, match="orientation"):
            TriMesh(positions, [[0, 1, 2], [1, 2, 3]])

    def test_face_index_out_of_range(self):
        with pytest.raises(MeshError, match="index"):
            TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])

    def test_repeated_vertex_rejected(self):
        with pytest.raises(MeshError, match="repeats"):
            TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 1]])

    def test_missing_file(self, tmp_path):
        with pytest.raises(MeshError, match="cannot read"):
            load_mesh(tmp_path / "nope.obj")

    def test_ply_roundtrip(self, tmp_path, icosahedron):
        path = tmp_path / "ico.ply"
        save_mesh(icosahedron, path)
        mesh = load_mesh(path)
        np.testing.assert_allclose(mesh.positions, icosahedron.positions)
        assert (mesh.faces == icosahedron.faces).all()

    def test_binary_ply_rejected(self, tmp_path):
        path = write(
            tmp_path, "bin.ply", "ply\nformat binary_little_endian 1.0\nend_header\n"
        )
        with pytest.raises(MeshError, match="ASCII"):
            load_mesh(path)

    def test_obj_roundtrip_preserves_connectivity(self, tmp_path, icosphere2):
        refined = loop_subdivide(icosphere2)
        path = tmp_path / "refined.obj"
        save_mesh(refined, path)
        back = load_mesh(path)
        assert (back.faces == refined.faces).all()
        np.testing.assert_allclose(back.positions, refined.positions)

    def test_frame_path(self, tmp_path):
        assert frame_path(tmp_path, 7).endswith("frame_0007.obj")


class TestTriangleGeometry:
    def test_right_triangle(self, right_triangle):
        area, grads, cots = triangle_geometry(right_triangle, 0)
        assert area == pytest.approx(0.5)
        np.testing.assert_allclose(cots, [0.0, 1.0, 1.0], atol=1e-15)
        np.testing.assert_allclose(grads.sum(axis=0), 0.0, atol=1e-15)

    def test_equilateral(self):
        mesh = TriMesh(
            [[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]], [[0, 1, 2]]
        )
        area, grads, cots = triangle_geometry(mesh, 0)
        assert area == pytest.approx(np.sqrt(3) / 4)
        np.testing.assert_allclose(cots, 1 / np.sqrt(3), rtol=1e-14)
        np.testing.assert_allclose(grads.sum(axis=0), 0.0, atol=1e-14)

    def test_rigid_motion_invariance(self, bumpy_sphere):
        rng = np.random.default_rng(3)
        quat = rng.standard_normal(4)
        quat /= np.linalg.norm(quat)
        w, x, y, z = quat
        rot = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        moved = bumpy_sphere.with_positions(bumpy_sphere.positions @ rot.T + [1, -2, 3])
        for face in (0, 7, 100):
            a0, _, c0 = triangle_geometry(bumpy_sphere, face)
            a1, _, c1 = triangle_geometry(moved, face)
            assert a1 == pytest.approx(a0, rel=1e-12)
            np.testing.assert_allclose(c1, c0, rtol=1e-11, atol=1e-12)


class TestLoopSubdivide:
    def test_icosahedron_counts(self, icosahedron):
        refined = loop_subdivide(icosahedron)
        assert refined.num_vertices == 12 + 30
        assert refined.num_faces == 80

    def test_closed_stays_closed(self, icosphere2):
        refined = loop_subdivide(icosphere2)
        assert refined.is_closed
        assert not refined.boundary_vertex.any()

    def test_planar_interior_stays_planar(self):
        # regular grid patch in the z=0 plane
        n = 7
        xs, ys = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        positions = np.column_stack(
            [xs.ravel(), ys.ravel(), np.zeros(n * n)]
        ).astype(float)
        faces = []
        for i in range(n - 1):
            for j in range(n - 1):
                a = i * n + j
                faces.append((a, a + n, a + 1))
                faces.append((a + 1, a + n, a + n + 1))
        mesh = TriMesh(positions, faces)
        refined = loop_subdivide(mesh)
        np.testing.assert_allclose(refined.positions[:, 2], 0.0, atol=1e-15)

    def test_boundary_cubic_spline_masks(self):
        mesh = TriMesh(
            [[0, 0, 0], [1, 0, 0], [2, 0, 0], [0.5, 1, 0], [1.5, 1, 0]],
            [[0, 1, 3], [1, 4, 3], [1, 2, 4]],
        )
        refined = loop_subdivide(mesh)
        # vertex 1 has collinear boundary neighbors: 3/4 v + 1/8 (v0 + v2)
        np.testing.assert_allclose(refined.positions[1], [1.0, 0.0, 0.0], atol=1e-15)
        # boundary edge points are midpoints; (0,1) -> (0.5, 0, 0)
        mids = refined.positions[5:]
        assert any(np.allclose(m, [0.5, 0.0, 0.0]) for m in mids)
        assert any(np.allclose(m, [1.5, 0.0, 0.0]) for m in mids)
        # the corner vertex is pulled along the boundary polyline
        np.testing.assert_allclose(
            refined.positions[0], 0.75 * np.array([0.0, 0.0, 0.0])
            + 0.125 * (np.array([1.0, 0, 0]) + np.array([0.5, 1.0, 0])),
            atol=1e-15,
        )


class TestDofMap:
    def test_closed_mesh_all_interior(self, icosphere2):
        dofs = DofMap.for_mesh(icosphere2, dirichlet=True)
        assert dofs.interior_vertex.all()
        assert dofs.num_interior_dofs == 3 * icosphere2.num_vertices

    def test_dirichlet_fixes_boundary(self):
        tube = shapes.tube(1.0, 2.0, segments=8, rings=3)
        dofs = DofMap.for_mesh(tube, dirichlet=True)
        assert (~dofs.interior_vertex).sum() == 16  # two boundary rings
        free = DofMap.for_mesh(tube, dirichlet=False)
        assert free.interior_vertex.all()

    def test_flat_index_bijection(self, icosphere2):
        dofs = DofMap.for_mesh(icosphere2)
        seen = {
            dofs.flat_index(i, k)
            for i in range(icosphere2.num_vertices)
            for k in range(3)
        }
        assert seen == set(range(3 * icosphere2.num_vertices))

    def test_zero_extend(self):
        tube = shapes.tube(1.0, 2.0, segments=8, rings=3)
        dofs = DofMap.for_mesh(tube, dirichlet=True)
        values = np.arange(dofs.num_interior_dofs, dtype=float) + 1.0
        full = dofs.zero_extend(values)
        assert full.shape == (dofs.num_dofs,)
        assert (full[dofs.interior_dofs] == values).all()
        fixed = np.setdiff1d(np.arange(dofs.num_dofs), dofs.interior_dofs)
        assert (full[fixed] == 0).all()
