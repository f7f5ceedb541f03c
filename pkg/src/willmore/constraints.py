"""Equality-constraint stack: values, dense-row Jacobians, directional derivatives.

Constraints are scalar- or vector-valued functionals of the vertex positions
with closed-form gradients.  A ConstraintSet stacks them into a residual
vector and a K x 3N Jacobian; Dirichlet boundary fixing is not a row here,
it is degree-of-freedom elimination handled through the DofMap.
"""

from dataclasses import dataclass

import numpy as np

from .fem import TriangleFrame


class ConstraintError(ValueError):
    """Raised for unsatisfiable constraint configurations."""


def _scatter_rows(faces, per_corner, n):
    """Accumulate (F, 3, 3) per-corner gradients into a flat (3N,) row."""
    out = np.zeros((n, 3))
    np.add.at(out, faces, per_corner)
    return out.ravel()


class TotalArea:
    """Sum of triangle areas."""

    name = "total_area"
    rows = 1
    needs_closed = False

    def value(self, positions, faces):
        p = positions[faces]
        c = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return np.array([0.5 * np.linalg.norm(c, axis=1).sum()])

    def jacobian(self, positions, faces, area_tol):
        frame = TriangleFrame(positions, faces, area_tol)
        return _scatter_rows(faces, frame.grad_area, positions.shape[0])[None, :]

    def jacobian_directional(self, positions, faces, area_tol, u):
        frame = TriangleFrame(positions, faces, area_tol, direction=u)
        return _scatter_rows(faces, frame.d_grad_area, positions.shape[0])[None, :]


class EnclosedVolume:
    """Signed enclosed volume of a closed, consistently oriented mesh."""

    name = "enclosed_volume"
    rows = 1
    needs_closed = True

    def value(self, positions, faces):
        p = positions[faces]
        return np.array([np.einsum("fi,fi->", p[:, 0], np.cross(p[:, 1], p[:, 2])) / 6.0])

    def jacobian(self, positions, faces, area_tol):
        p = positions[faces]
        grad = np.cross(np.roll(p, -1, axis=1), np.roll(p, -2, axis=1)) / 6.0
        return _scatter_rows(faces, grad, positions.shape[0])[None, :]

    def jacobian_directional(self, positions, faces, area_tol, u):
        p = positions[faces]
        w = u[faces]
        d_grad = (
            np.cross(np.roll(w, -1, axis=1), np.roll(p, -2, axis=1))
            + np.cross(np.roll(p, -1, axis=1), np.roll(w, -2, axis=1))
        ) / 6.0
        return _scatter_rows(faces, d_grad, positions.shape[0])[None, :]


class Barycenter:
    """Area-weighted barycenter (integral of f divided by total area), 3 rows."""

    name = "barycenter"
    rows = 3
    needs_closed = False

    def value(self, positions, faces):
        p = positions[faces]
        c = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        areas = 0.5 * np.linalg.norm(c, axis=1)
        centroids = p.mean(axis=1)
        return areas @ centroids / areas.sum()

    def jacobian(self, positions, faces, area_tol):
        n = positions.shape[0]
        frame = TriangleFrame(positions, faces, area_tol)
        areas = frame.area
        omega = areas.sum()
        centroids = frame.P.mean(axis=1)
        psi = areas @ centroids / omega

        jac = np.empty((3, 3 * n))
        for r in range(3):
            # quotient rule: area-weighted integral of u plus the moment of
            # the area variation, recentered by psi.
            per_corner = frame.grad_area * (centroids[:, r] - psi[r])[:, None, None]
            per_corner = per_corner.copy()
            per_corner[:, :, r] += areas[:, None] / 3.0
            jac[r] = _scatter_rows(faces, per_corner, n) / omega
        return jac

    def jacobian_directional(self, positions, faces, area_tol, u):
        n = positions.shape[0]
        frame = TriangleFrame(positions, faces, area_tol, direction=u)
        areas = frame.area
        d_areas = frame.d_area
        omega = areas.sum()
        d_omega = d_areas.sum()
        centroids = frame.P.mean(axis=1)
        d_centroids = frame.U.mean(axis=1)
        psi = areas @ centroids / omega
        d_psi = (
            d_areas @ centroids + areas @ d_centroids - d_omega * psi
        ) / omega

        jac = np.empty((3, 3 * n))
        d_jac = np.empty((3, 3 * n))
        for r in range(3):
            shift = (centroids[:, r] - psi[r])[:, None, None]
            d_shift = (d_centroids[:, r] - d_psi[r])[:, None, None]
            per_corner = frame.grad_area * shift
            per_corner[:, :, r] += areas[:, None] / 3.0
            d_per_corner = frame.d_grad_area * shift + frame.grad_area * d_shift
            d_per_corner[:, :, r] += d_areas[:, None] / 3.0
            jac[r] = _scatter_rows(faces, per_corner, n) / omega
            d_jac[r] = _scatter_rows(faces, d_per_corner, n) / omega - jac[
                r
            ] * d_omega / omega
        return d_jac


_KNOWN = {c.name: c for c in (Barycenter, TotalArea, EnclosedVolume)}


@dataclass
class ConstraintEval:
    """Stacked residual values and Jacobian rows at one immersion."""

    values: np.ndarray  # (K,) residuals, current minus target
    jacobian: np.ndarray  # (K, 3N)


class ConstraintSet:
    """Ordered stack of equality constraints plus the Dirichlet flag.

    Targets default to the constraint values at the mesh the set is first
    bound to (via `bound_to`), so the constraints preserve the initial
    area/volume/barycenter unless explicit targets are supplied.
    """

    def __init__(self, constraints=(), targets=None, dirichlet=False):
        self.constraints = list(constraints)
        names = [c.name for c in self.constraints]
        if len(set(names)) != len(names):
            raise ConstraintError(f"duplicate constraints in {names}")
        self.dirichlet = bool(dirichlet)
        self.K = sum(c.rows for c in self.constraints)
        if self.K == 0 and not self.dirichlet:
            raise ConstraintError(
                "constraint set needs at least one row unless Dirichlet "
                "boundary fixing is active"
            )
        if targets is not None:
            targets = np.asarray(targets, dtype=np.float64).ravel()
            if targets.shape != (self.K,):
                raise ConstraintError(
                    f"expected {self.K} target values, got {targets.shape}"
                )
        self.targets = targets

    @classmethod
    def build(cls, names_to_targets, dirichlet=False):
        """Construct from {name: target-or-None} in declaration order."""
        constraints = []
        targets = []
        explicit = False
        for name, target in names_to_targets.items():
            try:
                ctor = _KNOWN[name]
            except KeyError:
                raise ConstraintError(f"unknown constraint {name!r}") from None
            con = ctor()
            constraints.append(con)
            if target is None:
                targets.extend([np.nan] * con.rows)
            else:
                explicit = True
                t = np.atleast_1d(np.asarray(target, dtype=np.float64))
                if t.shape != (con.rows,):
                    raise ConstraintError(
                        f"constraint {name!r} expects {con.rows} target value(s)"
                    )
                targets.extend(t.tolist())
        cset = cls(constraints, dirichlet=dirichlet)
        if explicit:
            cset.targets = np.asarray(targets)
        return cset

    def names(self):
        return [c.name for c in self.constraints]

    def has(self, name):
        return name in self.names()

    def validate_for_mesh(self, mesh):
        if any(c.needs_closed for c in self.constraints) and not mesh.is_closed:
            raise ConstraintError("enclosed_volume requires a closed mesh")
        if self.dirichlet and mesh.is_closed and not self.has("barycenter"):
            raise ConstraintError(
                "Dirichlet on a closed mesh fixes nothing; add a barycenter "
                "constraint to remove the translation kernel"
            )

    def bound_to(self, mesh):
        """Return a copy with any unset targets filled from this mesh."""
        self.validate_for_mesh(mesh)
        values = self.raw_values(mesh.positions, mesh.faces)
        if self.targets is None:
            targets = values
        else:
            targets = np.where(np.isnan(self.targets), values, self.targets)
        out = ConstraintSet(self.constraints, dirichlet=self.dirichlet)
        out.targets = targets
        return out

    # -- evaluation ----------------------------------------------------------

    def raw_values(self, positions, faces):
        if not self.constraints:
            return np.zeros(0)
        return np.concatenate([c.value(positions, faces) for c in self.constraints])

    def residual(self, positions, faces):
        if self.targets is None:
            raise ConstraintError("constraint targets not bound; call bound_to()")
        return self.raw_values(positions, faces) - self.targets

    def evaluate(self, mesh):
        """Residuals and stacked Jacobian rows at the mesh."""
        tol = mesh.degenerate_area_tol
        values = self.residual(mesh.positions, mesh.faces)
        if self.constraints:
            jac = np.vstack(
                [c.jacobian(mesh.positions, mesh.faces, tol) for c in self.constraints]
            )
        else:
            jac = np.zeros((0, 3 * mesh.num_vertices))
        return ConstraintEval(values=values, jacobian=jac)

    def jacobian_directional(self, mesh, u):
        """Rows of d/dt|_0 A(f + t u)."""
        u = np.asarray(u, dtype=np.float64).reshape(mesh.num_vertices, 3)
        tol = mesh.degenerate_area_tol
        if not self.constraints:
            return np.zeros((0, 3 * mesh.num_vertices))
        return np.vstack(
            [
                c.jacobian_directional(mesh.positions, mesh.faces, tol, u)
                for c in self.constraints
            ]
        )

    def gram_condition(self, mesh):
        """Condition number of A A^T (constraint qualification check)."""
        jac = self.evaluate(mesh).jacobian
        if jac.shape[0] == 0:
            return 1.0
        return float(np.linalg.cond(jac @ jac.T))
