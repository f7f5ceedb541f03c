"""Discrete surface operators, Willmore energy, and their derivatives.

All operators act on coefficient vectors over the interleaved vector P1
basis: the flat index of axis k of vertex i is 3*i + k, so the vector-valued
mass/stiffness operators are Kronecker products of their scalar counterparts
with the 3x3 identity.  Per-face kernels are fully vectorized; the first and
second directional derivatives of areas and cotangents are evaluated in
closed form per triangle, never assembling third-order tensors.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .mesh import DofMap, MeshError


class DegenerateFaceError(MeshError):
    """A face with area below the degeneracy tolerance was encountered."""


def _roll1(a):
    return np.roll(a, -1, axis=1)


def _roll2(a):
    return np.roll(a, -2, axis=1)


class TriangleFrame:
    """Per-face geometry of an immersion, optionally with a directional derivative.

    For faces with corner positions p_0, p_1, p_2 the frame provides areas,
    area gradients with respect to each corner, corner cotangents and their
    gradients, and the local cotangent stiffness blocks.  If `direction` is
    given (a velocity field, shape (N, 3)), the directional derivative of
    every quantity along it is provided as well (attributes prefixed `d_`).
    """

    def __init__(self, positions, faces, area_tol, direction=None):
        P = positions[faces]  # (F, corner, xyz)
        self.P = P
        e1 = P[:, 1] - P[:, 0]
        e2 = P[:, 2] - P[:, 0]
        c = np.cross(e1, e2)
        two_area = np.linalg.norm(c, axis=1)
        area = 0.5 * two_area
        if area.size and area.min() < area_tol:
            k = int(np.argmin(area))
            raise DegenerateFaceError(
                f"degenerate face {k}: area {area[k]:.3e} < tolerance {area_tol:.3e}"
            )
        self.area = area
        nhat = c / two_area[:, None]
        self.normal = nhat

        P1 = _roll1(P)
        P2 = _roll2(P)
        E1 = P1 - P  # E1[:, k] = p_{k+1} - p_k
        E2 = P2 - P
        dot = np.einsum("fki,fki->fk", E1, E2)
        cot = dot / two_area[:, None]
        self.cot = cot

        # d(area)/d(p_w) = 0.5 * nhat x (p_{w+2} - p_{w+1})
        B = P2 - P1
        grad_area = 0.5 * np.cross(nhat[:, None, :], B)
        self.grad_area = grad_area

        # d(dot_k)/d(p_w): -(E1+E2) at w=k, E2 at w=k+1, E1 at w=k+2.
        Dd = np.empty(P.shape[:1] + (3, 3, 3))
        for k in range(3):
            Dd[:, k, k] = -(E1[:, k] + E2[:, k])
            Dd[:, k, (k + 1) % 3] = E2[:, k]
            Dd[:, k, (k + 2) % 3] = E1[:, k]
        grad_cot = Dd / two_area[:, None, None, None] - (
            cot / area[:, None]
        )[:, :, None, None] * grad_area[:, None, :, :]
        self.grad_cot = grad_cot

        # Local cotangent stiffness blocks l[v, u].
        local = np.zeros(P.shape[:1] + (3, 3))
        for k in range(3):
            a, b = (k + 1) % 3, (k + 2) % 3
            half = 0.5 * cot[:, k]
            local[:, a, b] -= half
            local[:, b, a] -= half
            local[:, a, a] += half
            local[:, b, b] += half
        self.local_stiffness = local

        if direction is None:
            return

        U = direction[faces]
        self.U = U
        ue1 = U[:, 1] - U[:, 0]
        ue2 = U[:, 2] - U[:, 0]
        d_c = np.cross(ue1, e2) + np.cross(e1, ue2)
        d_two_area = np.einsum("fi,fi->f", nhat, d_c)
        self.d_area = 0.5 * d_two_area
        d_nhat = (d_c - nhat * d_two_area[:, None]) / two_area[:, None]

        U1 = _roll1(U)
        U2 = _roll2(U)
        dE1 = U1 - U
        dE2 = U2 - U
        d_dot = np.einsum("fki,fki->fk", dE1, E2) + np.einsum("fki,fki->fk", E1, dE2)
        d_cot = (d_dot - cot * d_two_area[:, None]) / two_area[:, None]
        self.d_cot = d_cot

        dB = U2 - U1
        d_grad_area = 0.5 * (
            np.cross(d_nhat[:, None, :], B) + np.cross(nhat[:, None, :], dB)
        )
        self.d_grad_area = d_grad_area

        dDd = np.empty_like(Dd)
        for k in range(3):
            dDd[:, k, k] = -(dE1[:, k] + dE2[:, k])
            dDd[:, k, (k + 1) % 3] = dE2[:, k]
            dDd[:, k, (k + 2) % 3] = dE1[:, k]
        cot_over_area = cot / area[:, None]
        d_cot_over_area = (d_cot - cot_over_area * self.d_area[:, None]) / area[:, None]
        self.d_grad_cot = (
            dDd / two_area[:, None, None, None]
            - Dd * (d_two_area / two_area**2)[:, None, None, None]
            - d_cot_over_area[:, :, None, None] * grad_area[:, None, :, :]
            - cot_over_area[:, :, None, None] * d_grad_area[:, None, :, :]
        )

        d_local = np.zeros_like(local)
        for k in range(3):
            a, b = (k + 1) % 3, (k + 2) % 3
            half = 0.5 * d_cot[:, k]
            d_local[:, a, b] -= half
            d_local[:, b, a] -= half
            d_local[:, a, a] += half
            d_local[:, b, b] += half
        self.d_local_stiffness = d_local


def _assemble_scalar(faces, local, n):
    """Accumulate (F, 3, 3) local blocks into a scalar CSR matrix."""
    rows = np.repeat(faces, 3, axis=1).ravel()
    cols = np.tile(faces, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _kron3(scalar):
    """Vector-valued operator over interleaved DOFs from a scalar one."""
    return sp.kron(scalar, sp.identity(3, format="csr"), format="csr")


class Operators:
    """Operators, energy and gradient of one immersion, computed once and cached.

    Instances are immutable; the heavy pieces (H2 operator, mass matrix,
    energy gradient) are evaluated lazily on first access.
    """

    def __init__(self, mesh, dofs=None):
        if dofs is None:
            dofs = DofMap.for_mesh(mesh)
        if dofs.num_vertices != mesh.num_vertices:
            raise ValueError("DofMap does not match mesh")
        self.mesh = mesh
        self.dofs = dofs
        self._init_from_arrays(
            mesh.positions, mesh.faces, dofs.interior_vertex, mesh.degenerate_area_tol
        )

    @classmethod
    def from_arrays(cls, positions, faces, interior_vertex, area_tol):
        """Fast path used by line-search probes; skips TriMesh construction."""
        self = object.__new__(cls)
        self.mesh = None
        self.dofs = None
        self._init_from_arrays(positions, faces, interior_vertex, area_tol)
        return self

    def _init_from_arrays(self, positions, faces, interior_vertex, area_tol):
        self.positions = positions
        self.faces = faces
        self.interior_vertex = interior_vertex
        self.area_tol = area_tol
        n = positions.shape[0]
        self.num_vertices = n
        self.frame = TriangleFrame(positions, faces, area_tol)

        self.stiffness_scalar = _assemble_scalar(faces, self.frame.local_stiffness, n)
        # \int phi_v vol = one third of the incident area.
        self.vertex_areas = np.bincount(
            faces.ravel(), weights=np.repeat(self.frame.area / 3.0, 3), minlength=n
        )
        starved = (self.vertex_areas == 0.0) & interior_vertex
        if starved.any():
            raise MeshError(
                f"isolated vertex {int(np.flatnonzero(starved)[0])}: no incident area"
            )
        lam = np.zeros(n)
        lam[interior_vertex] = 1.0 / self.vertex_areas[interior_vertex]
        self.lumped_inverse_scalar = lam

        # Integrated curvature density y = L f, one 3-vector per vertex.
        self.curvature_density = self.stiffness_scalar @ positions
        self.energy = 0.25 * float(
            np.einsum("v,vi,vi->", lam, self.curvature_density, self.curvature_density)
        )

    # -- derived operators -------------------------------------------------

    @cached_property
    def mass_scalar(self):
        area = self.frame.area
        local = (area / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))
        return _assemble_scalar(self.faces, local, self.num_vertices)

    @cached_property
    def J_scalar(self):
        lam = sp.diags(self.lumped_inverse_scalar)
        L = self.stiffness_scalar
        return (L.T @ lam @ L).tocsr()

    @cached_property
    def gradient(self):
        """Full derivative of the energy with respect to vertex positions, (N, 3)."""
        return self._gradient_arrays()

    @property
    def gradient_rhs(self):
        """b = -DW(f), flattened over interleaved DOFs."""
        return -self.gradient.ravel()

    @property
    def mean_curvature(self):
        """Per-vertex discrete mean curvature vectors, (N, 3); zero on fixed DOFs."""
        return 0.5 * self.lumped_inverse_scalar[:, None] * self.curvature_density

    def curvature_norm_lumped(self):
        """Lumped L2 norm of the discrete mean curvature (equals 2*sqrt(W))."""
        h2 = np.einsum("vi,vi->v", self.mean_curvature, self.mean_curvature)
        return float(np.sqrt(np.dot(self.vertex_areas * self.interior_vertex, h2)))

    def restrict_scalar(self, matrix):
        idx = np.flatnonzero(self.interior_vertex)
        return matrix[np.ix_(idx, idx)]

    def J_interior(self):
        """Vector H2 operator restricted to interior DOFs (CSR)."""
        return _kron3(self.restrict_scalar(self.J_scalar.tocsc()).tocsr())

    def mass_interior(self):
        return _kron3(self.restrict_scalar(self.mass_scalar.tocsc()).tocsr())

    # -- gradient assembly ---------------------------------------------------

    def _gather(self):
        lam_t = self.lumped_inverse_scalar[self.faces]
        y_t = self.curvature_density[self.faces]
        return lam_t, y_t

    def _gradient_arrays(self):
        frame = self.frame
        faces = self.faces
        lam_t, y_t = self._gather()
        p_t = frame.P

        s = np.einsum("fv,fvi,fvi->f", lam_t**2, y_t, y_t)
        ly = lam_t[..., None] * y_t
        q = 0.5 * np.einsum(
            "fki,fki->fk", _roll1(ly) - _roll2(ly), _roll1(p_t) - _roll2(p_t)
        )

        term_area = -(s / 3.0)[:, None, None] * frame.grad_area
        term_stiff = np.einsum(
            "fv,fvw,fvi->fwi", lam_t, frame.local_stiffness, y_t
        )
        term_cot = np.einsum("fk,fkwi->fwi", q, frame.grad_cot)
        g = 0.25 * (term_area + 2.0 * (term_stiff + term_cot))

        out = np.zeros((self.num_vertices, 3))
        np.add.at(out, faces, g)
        return out

    def directional(self, direction):
        """Directional derivatives of L, Lambda and b along a velocity field.

        `direction` is a flat coefficient vector of length 3N (or (N, 3)).
        """
        u = np.asarray(direction, dtype=np.float64).reshape(self.num_vertices, 3)
        frame = TriangleFrame(self.positions, self.faces, self.area_tol, direction=u)
        n = self.num_vertices
        faces = self.faces

        d_stiffness = _assemble_scalar(faces, frame.d_local_stiffness, n)
        d_vertex_areas = np.bincount(
            faces.ravel(), weights=np.repeat(frame.d_area / 3.0, 3), minlength=n
        )
        lam = self.lumped_inverse_scalar
        d_lam = -(lam**2) * d_vertex_areas

        y = self.curvature_density
        d_y = d_stiffness @ self.positions + self.stiffness_scalar @ u

        # Differentiate the per-triangle gradient terms along u.
        lam_t, y_t = self._gather()
        d_lam_t = d_lam[faces]
        d_y_t = d_y[faces]
        p_t = frame.P
        u_t = frame.U

        s = np.einsum("fv,fvi,fvi->f", lam_t**2, y_t, y_t)
        d_s = 2.0 * np.einsum("fv,fv,fvi,fvi->f", lam_t, d_lam_t, y_t, y_t)
        d_s += 2.0 * np.einsum("fv,fvi,fvi->f", lam_t**2, y_t, d_y_t)

        ly = lam_t[..., None] * y_t
        d_ly = d_lam_t[..., None] * y_t + lam_t[..., None] * d_y_t
        dp = _roll1(p_t) - _roll2(p_t)
        du = _roll1(u_t) - _roll2(u_t)
        dly = _roll1(ly) - _roll2(ly)
        d_dly = _roll1(d_ly) - _roll2(d_ly)
        q = 0.5 * np.einsum("fki,fki->fk", dly, dp)
        d_q = 0.5 * (
            np.einsum("fki,fki->fk", d_dly, dp) + np.einsum("fki,fki->fk", dly, du)
        )

        d_term_area = (
            -(d_s / 3.0)[:, None, None] * frame.grad_area
            - (s / 3.0)[:, None, None] * frame.d_grad_area
        )
        d_term_stiff = (
            np.einsum("fv,fvw,fvi->fwi", d_lam_t, frame.local_stiffness, y_t)
            + np.einsum("fv,fvw,fvi->fwi", lam_t, frame.d_local_stiffness, y_t)
            + np.einsum("fv,fvw,fvi->fwi", lam_t, frame.local_stiffness, d_y_t)
        )
        d_term_cot = np.einsum("fk,fkwi->fwi", d_q, frame.grad_cot) + np.einsum(
            "fk,fkwi->fwi", q, frame.d_grad_cot
        )
        d_g = 0.25 * (d_term_area + 2.0 * (d_term_stiff + d_term_cot))

        d_grad = np.zeros((n, 3))
        np.add.at(d_grad, faces, d_g)

        return DirectionalDerivatives(
            stiffness_dir=d_stiffness,
            lumped_inverse_dir=d_lam,
            gradient_rhs_dir=-d_grad.ravel(),
            _stiffness=self.stiffness_scalar,
            _lumped_inverse=lam,
        )


@dataclass
class DirectionalDerivatives:
    """Derivatives of the assembled system along one velocity field.

    `apply_dJ` realizes v -> (D J(f) u) v matrix-free through the product
    rule on J = L^T Lambda L, using only the scalar matrices DL(f)u and
    D Lambda(f) u (no third-order tensor is ever formed).
    """

    stiffness_dir: sp.csr_matrix
    lumped_inverse_dir: np.ndarray
    gradient_rhs_dir: np.ndarray
    _stiffness: sp.csr_matrix
    _lumped_inverse: np.ndarray

    def apply_dJ(self, v):
        n = self.lumped_inverse_dir.shape[0]
        V = np.asarray(v, dtype=np.float64).reshape(n, 3)
        L, dL = self._stiffness, self.stiffness_dir
        lam = self._lumped_inverse[:, None]
        d_lam = self.lumped_inverse_dir[:, None]
        LV = L @ V
        out = dL.T @ (lam * LV) + L.T @ (d_lam * LV) + L.T @ (lam * (dL @ V))
        return out.ravel()


# -- module-level operations (thin wrappers over Operators) ------------------


def assemble_mass(mesh):
    """Vector P1 mass matrix over interleaved DOFs (SPD, 3N x 3N)."""
    return _kron3(Operators(mesh).mass_scalar)


def assemble_stiffness(mesh):
    """Vector cotangent stiffness matrix over interleaved DOFs (PSD, 3N x 3N)."""
    return _kron3(Operators(mesh).stiffness_scalar)


def assemble_lumped_inverse(mesh, dofs=None):
    """Diagonal of the inverse lumped mass, length 3N; zero on fixed DOFs."""
    return np.repeat(Operators(mesh, dofs).lumped_inverse_scalar, 3)


def assemble_J(mesh, dofs=None):
    """Discrete H2-Riesz operator L^T Lambda L over interleaved DOFs."""
    return _kron3(Operators(mesh, dofs).J_scalar)


def discrete_willmore(mesh, dofs=None):
    """Discrete Willmore energy (one quarter of f^T J(f) f)."""
    return Operators(mesh, dofs).energy


def mean_curvature_vector(mesh, dofs=None):
    """Discrete mean curvature vector as a flat coefficient vector."""
    return Operators(mesh, dofs).mean_curvature.ravel()


def energy_gradient_rhs(mesh, dofs=None):
    """Negative derivative of the discrete Willmore energy, length 3N."""
    return Operators(mesh, dofs).gradient_rhs


def directional_system_derivatives(mesh, dofs, u):
    """Directional derivatives DL(f)u, DLambda(f)u, Db(f)u and DJ(f)u applier."""
    return Operators(mesh, dofs).directional(u)
