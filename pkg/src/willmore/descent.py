"""Projected H2-gradient descent with a second-order circular search path.

One iteration: assemble the operators, factorize the bordered saddle system
once, solve it for the projected gradient, solve it again for the path
acceleration, follow the circle-with-affine-speed search path from the
speed-stall step size with Armijo backtracking, and pull the accepted point
back onto the constraint set by Newton-type pseudoinverse iterations (the
constraint Jacobian stays frozen at the pre-step immersion, so the same
factorization serves all solves of the iteration).
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSet
from .fem import DegenerateFaceError, Operators
from .mesh import DofMap
from .saddle import SaddleSystem

PHASES = ("assembly", "factorization", "solves", "line_search", "restoration")


class DescentError(RuntimeError):
    """Pipeline failure; carries the partial descent state when available."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class LineSearchStall(DescentError):
    """No admissible step size before the backtracking budget ran out."""


class RestorationError(DescentError):
    """Constraint restoration did not converge within its iteration budget."""


@dataclass
class DescentConfig:
    """Loop parameters; tolerances left as None are resolved from the start mesh.

    grad_tol applies to the energy-scaled decrease predictor u^T J u / 4 and
    defaults to 1e-8 * (initial energy + 1).  constraint_tol applies to the
    max-norm of the constraint residual and defaults to 1e-9 scaled by the
    bounding-box diagonal (largest of d, d^2, d^3 to cover the mixed units
    of barycenter/area/volume rows).
    """

    max_iters: int = 100
    grad_tol: float | None = None
    constraint_tol: float | None = None
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    tau_max: float = 1.0
    max_restoration_iters: int = 10
    flow_mode: str = "projected_descent"
    max_backtracks: int = 40
    stall_rel_decrease: float = 1e-14
    stall_patience: int = 5
    solver_tol: float = 1e-9
    saddle_backend: str = "auto"
    saddle_dump_path: str | None = None  # debug: bordered matrix as MatrixMarket

    def __post_init__(self):
        if not 0.0 <= self.armijo_c < 1.0:
            raise ValueError("armijo_c must lie in [0, 1)")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.tau_max <= 0.0:
            raise ValueError("tau_max must be positive")
        if self.max_iters < 0 or self.max_restoration_iters < 1:
            raise ValueError("iteration budgets out of range")
        if self.flow_mode not in ("projected_descent", "semi_implicit"):
            raise ValueError(f"unknown flow_mode {self.flow_mode!r}")
        for name in ("grad_tol", "constraint_tol"):
            value = getattr(self, name)
            if value is not None and value <= 0.0:
                raise ValueError(f"{name} must be positive")

    def resolved(self, initial_energy, bbox_diagonal):
        grad_tol = self.grad_tol
        if grad_tol is None:
            grad_tol = 1e-8 * (initial_energy + 1.0)
        constraint_tol = self.constraint_tol
        if constraint_tol is None:
            d = max(bbox_diagonal, 1e-30)
            constraint_tol = 1e-9 * max(1.0, d, d**2, d**3)
        return grad_tol, constraint_tol


@dataclass
class HistoryRecord:
    """Per-iteration log row (energy, gradient norm, violation, step, timings)."""

    iteration: int
    energy: float
    grad_norm_J: float
    constraint_violation: float
    tau: float
    backtracks: int
    restorations: int
    timings: dict = field(default_factory=dict)


@dataclass
class DescentState:
    """Current iterate plus the append-only run history."""

    mesh: object
    dofs: DofMap
    energy: float
    gradient: np.ndarray
    multipliers: np.ndarray
    tau: float
    constraint_violation: float
    iteration: int
    history: list = field(default_factory=list)
    termination: str | None = None
    grad_tol: float = 0.0
    constraint_tol: float = 0.0
    init_seconds: float = 0.0


class SearchPath:
    """Circle traversed with affinely varying speed, fit to (f, u, udot).

    The acceleration is split into the component along the velocity (which
    sets the affine speed law s(t) = |u| + t <udot, u>/|u|) and the
    perpendicular rest (which sets the circle of radius |u|^2/|u_perp|).
    This is the unique such curve with Theta(0) = f, Theta'(0) = u and
    Theta''(0) = udot; it degenerates to a straight line when udot is
    parallel to u and to a parabola when u vanishes.
    """

    def __init__(self, base, velocity, acceleration, tau_max):
        self.base = np.asarray(base, dtype=np.float64).ravel()
        self.velocity = np.asarray(velocity, dtype=np.float64).ravel()
        self.acceleration = np.asarray(acceleration, dtype=np.float64).ravel()
        self.tau_max = float(tau_max)

        self.speed = float(np.linalg.norm(self.velocity))
        if self.speed == 0.0:
            self.mode = "parabola"
            self.accel_along = 0.0
            self.radius = np.inf
            self.tau0 = self.tau_max
            return

        unit = self.velocity / self.speed
        self._unit = unit
        self.accel_along = float(self.acceleration @ unit)
        perp = self.acceleration - self.accel_along * unit
        perp_norm = float(np.linalg.norm(perp))
        if perp_norm <= 1e-250 * self.speed**2:
            self.mode = "line"
            self.radius = np.inf
        else:
            self.mode = "circle"
            self.radius = self.speed**2 / perp_norm
            self._perp_unit = perp / perp_norm
        # Stall time of the affine speed law; the Curry-step estimate.
        if self.accel_along < 0.0:
            self.tau0 = -self.speed / self.accel_along
        else:
            self.tau0 = self.tau_max

    def arc_length(self, t):
        return self.speed * t + 0.5 * self.accel_along * t * t

    def __call__(self, t):
        """Positions along the path as a flat coefficient vector."""
        if self.mode == "parabola":
            return self.base + t * self.velocity + 0.5 * t * t * self.acceleration
        arc = self.arc_length(t)
        if self.mode == "line":
            return self.base + arc * self._unit
        theta = arc / self.radius
        along = self.radius * np.sin(theta)
        across = 2.0 * self.radius * np.sin(0.5 * theta) ** 2  # r (1 - cos)
        return self.base + along * self._unit + across * self._perp_unit


# -- single pipeline stages ---------------------------------------------------


def compute_step(ops, system):
    """Projected downward H2-gradient and multipliers from the saddle solve."""
    b = ops.gradient_rhs
    interior = ops.dofs.interior_dofs if ops.dofs is not None else slice(None)
    sol = system.solve_projected_gradient(b[interior])
    return sol.primal, sol.multipliers


def compute_path(mesh, dofs, ops, cset, u, lam, system, tau_max):
    """Second-order search path from the differentiated saddle system."""
    directional = ops.directional(u)
    dA = cset.jacobian_directional(mesh, u)
    rhs_primal = directional.gradient_rhs_dir - directional.apply_dJ(u)
    if dA.shape[0]:
        rhs_primal = rhs_primal - dA.T @ lam
        rhs_dual = -(dA @ u)
    else:
        rhs_dual = np.zeros(0)
    x, _, _, _ = system.solve(rhs_primal[dofs.interior_dofs], rhs_dual)
    udot = dofs.zero_extend(x)
    return SearchPath(mesh.positions.ravel(), u, udot, tau_max)


def line_search(energy_fn, path, energy0, decrease_rate, config):
    """Largest tau in {tau0 * beta^k} satisfying the Armijo condition.

    Returns (tau, trial energy, number of backtracks).
    """
    tau = path.tau0
    for backtracks in range(config.max_backtracks + 1):
        energy = energy_fn(path(tau))
        if energy <= energy0 - config.armijo_c * tau * decrease_rate:
            return tau, energy, backtracks
        tau *= config.backtrack_factor
    raise LineSearchStall(
        f"no admissible step after {config.max_backtracks} backtracks "
        f"(tau0 = {path.tau0:.3e})"
    )


def restore_constraints(system, cset, faces, positions_flat, tol, max_iters):
    """Newton-type pulls f <- f - A(f_pre)^dagger Phi(f) until feasible.

    The Jacobian (inside the factorized system) stays frozen at the
    pre-step immersion; only the residual is re-evaluated.
    """
    n = positions_flat.size // 3
    pos = positions_flat.copy()
    for pulls in range(max_iters + 1):
        residual = cset.residual(pos.reshape(n, 3), faces)
        violation = np.abs(residual).max(initial=0.0)
        if violation <= tol:
            return pos, pulls, violation
        if pulls == max_iters:
            break
        sol = system.apply_pseudoinverse(residual)
        pos = pos - sol.primal
    raise RestorationError(
        f"constraint violation {violation:.3e} > {tol:.3e} after "
        f"{max_iters} restoration iterations"
    )


def semi_implicit_step(mesh, dofs, cset, tau, system, solver_tol=1e-9):
    """One step of the regularized flow (M + tau J) v = tau b, then restoration.

    Returns (new positions flat, v, multipliers).  As tau grows the step
    direction approaches the projected H2-gradient step.
    """
    ops = Operators(mesh, dofs)
    ceval = cset.evaluate(mesh)
    interior = dofs.interior_dofs
    system.update(
        ops.mass_interior() + tau * ops.J_interior(),
        ceval.jacobian[:, interior],
    )
    x, mu, _, _ = system.solve(tau * ops.gradient_rhs[interior])
    v = dofs.zero_extend(x)
    return mesh.positions.ravel() + v, v, mu


# -- main loop ----------------------------------------------------------------


def _energy_evaluator(faces, interior_vertex, area_tol):
    def energy(flat_positions):
        try:
            ops = Operators.from_arrays(
                flat_positions.reshape(-1, 3), faces, interior_vertex, area_tol
            )
        except DegenerateFaceError:
            return np.inf
        return ops.energy

    return energy


def _removes_translations(mesh, cset):
    if cset.has("barycenter"):
        return True
    return cset.dirichlet and bool(mesh.boundary_vertex.any())


def _constraint_offset(cset, name):
    names = cset.names()
    if name not in names:
        return None
    return sum(c.rows for c in cset.constraints[: names.index(name)])


def _vertex_normals(positions, faces):
    cross = np.cross(
        positions[faces[:, 1]] - positions[faces[:, 0]],
        positions[faces[:, 2]] - positions[faces[:, 0]],
    )
    normals = np.zeros_like(positions)
    np.add.at(normals, faces, np.repeat(cross[:, None, :], 3, axis=1))
    lengths = np.linalg.norm(normals, axis=1)
    lengths[lengths == 0.0] = 1.0
    return normals / lengths[:, None]


def _initial_feasibility(mesh, cset, dofs, system, tol, config):
    """Move an infeasible start mesh onto the constraint set.

    Small target gaps are closed directly by exact translation/scaling plus
    damped Gauss-Newton pulls.  Large area+volume gaps cannot: near a round
    shape every smooth normal field changes area and volume proportionally,
    so the Newton pulls degenerate whenever the reduced volume has to move.
    In that case the mesh is first smoothed by a short descent at its own
    (feasible) targets, the reduced-volume gap is then crossed exactly by a
    one-parameter anisotropic scaling, and the remainder is polished away.
    """
    try:
        return _feasibility_pulls(mesh, cset, dofs, system, tol, max_pulls=30)
    except RestorationError:
        i_area = _constraint_offset(cset, "total_area")
        i_vol = _constraint_offset(cset, "enclosed_volume")
        if dofs.dirichlet or i_area is None or i_vol is None:
            raise
    rv_target = (
        6.0
        * np.sqrt(np.pi)
        * cset.targets[i_vol]
        / max(cset.targets[i_area], 1e-300) ** 1.5
    )
    # Round the mesh with the volume row dropped (the flow raises the
    # reduced volume freely) until it overshoots the target ratio...
    relaxed = ConstraintSet(
        [c for c in cset.constraints if c.name != "enclosed_volume"],
        dirichlet=cset.dirichlet,
    )
    smooth_config = DescentConfig(
        max_iters=5,
        solver_tol=config.solver_tol,
        saddle_backend=config.saddle_backend,
    )
    for _ in range(10):
        area, volume, _ = _area_volume_center(mesh.positions, mesh.faces)
        if 6.0 * np.sqrt(np.pi) * volume / area**1.5 >= rv_target:
            break
        state = run(mesh, smooth_config, relaxed.bound_to(mesh))
        mesh = state.mesh
        if state.termination == "converged":
            break
    # ... then come back down to it exactly with a one-axis stretch.
    mesh = _match_reduced_volume(mesh, rv_target)
    return _feasibility_pulls(mesh, cset, dofs, system, tol, max_pulls=60)


def _area_volume_center(positions, faces):
    p = positions[faces]
    areas = 0.5 * np.linalg.norm(
        np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1
    )
    area = areas.sum()
    volume = np.einsum("fi,fi->", p[:, 0], np.cross(p[:, 1], p[:, 2])) / 6.0
    center = areas @ p.mean(axis=1) / area
    return area, volume, center


def _match_reduced_volume(mesh, rv_target):
    """Scale one axis so that 6 sqrt(pi) V / A^(3/2) hits the target value."""
    faces = mesh.faces

    def reduced_volume(positions):
        area, volume, _ = _area_volume_center(positions, faces)
        return 6.0 * np.sqrt(np.pi) * volume / area**1.5

    _, _, center = _area_volume_center(mesh.positions, faces)

    for axis in (2, 1, 0):

        def stretched(c):
            positions = mesh.positions.copy()
            positions[:, axis] = center[axis] + c * (positions[:, axis] - center[axis])
            return positions

        def gap(c):
            return reduced_volume(stretched(c)) - rv_target

        bracket = None
        if gap(1.0) >= 0.0:
            # Above the target: stretching in either direction lowers the
            # ratio; walk outward until it drops below.
            for c_out in (2.0, 4.0, 0.5, 0.25):
                if gap(c_out) < 0.0:
                    bracket = (min(1.0, c_out), max(1.0, c_out))
                    break
        else:
            # Below the target: the ratio is unimodal along the stretch;
            # find its peak by golden section and bisect toward c = 1.
            phi = (np.sqrt(5.0) - 1.0) / 2.0
            a, b = np.log(0.2), np.log(5.0)
            c1 = b - phi * (b - a)
            c2 = a + phi * (b - a)
            f1, f2 = gap(np.exp(c1)), gap(np.exp(c2))
            for _ in range(60):
                if f1 < f2:
                    a, c1, f1 = c1, c2, f2
                    c2 = a + phi * (b - a)
                    f2 = gap(np.exp(c2))
                else:
                    b, c2, f2 = c2, c1, f1
                    c1 = b - phi * (b - a)
                    f1 = gap(np.exp(c1))
            c_peak = np.exp(0.5 * (a + b))
            if gap(c_peak) >= 0.0:
                bracket = (min(1.0, c_peak), max(1.0, c_peak))
        if bracket is None:
            continue
        lo_c, hi_c = bracket
        g_lo = gap(lo_c)
        for _ in range(100):
            mid = 0.5 * (lo_c + hi_c)
            g_mid = gap(mid)
            if (g_lo <= 0.0) == (g_mid <= 0.0):
                lo_c, g_lo = mid, g_mid
            else:
                hi_c = mid
        return mesh.with_positions(stretched(0.5 * (lo_c + hi_c)))
    return mesh  # no axis reaches the target; leave it to the Newton pulls


def _feasibility_pulls(mesh, cset, dofs, system, tol, max_pulls):
    """Exact translation/scaling, then capped damped Gauss-Newton pulls.

    The J-weighted pseudoinverse pull is capped to a small fraction of the
    mesh scale so each pull stays inside the linearization radius;
    acceptance is measured on a per-row scaled residual norm.
    """
    i_bary = _constraint_offset(cset, "barycenter")
    i_area = _constraint_offset(cset, "total_area")
    i_vol = _constraint_offset(cset, "enclosed_volume")
    if not dofs.dirichlet:
        values = cset.raw_values(mesh.positions, mesh.faces)
        positions = mesh.positions
        p = positions[mesh.faces]
        areas = 0.5 * np.linalg.norm(
            np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1
        )
        center = areas @ p.mean(axis=1) / areas.sum()
        if i_area is not None and values[i_area] > 0 and cset.targets[i_area] > 0:
            scale = np.sqrt(cset.targets[i_area] / values[i_area])
            positions = center + scale * (positions - center)
        elif i_vol is not None and values[i_vol] * cset.targets[i_vol] > 0:
            scale = np.cbrt(cset.targets[i_vol] / values[i_vol])
            positions = center + scale * (positions - center)
        if i_bary is not None:
            vals = cset.raw_values(positions, mesh.faces)
            positions = positions + (
                cset.targets[i_bary : i_bary + 3] - vals[i_bary : i_bary + 3]
            )
        if positions is not mesh.positions:
            mesh = mesh.with_positions(positions)

    row_scale = np.ones(cset.K)
    scale_length = max(mesh.bbox_diagonal, 1e-30)
    if i_bary is not None:
        row_scale[i_bary : i_bary + 3] = scale_length
    if i_area is not None:
        row_scale[i_area] = max(abs(cset.targets[i_area]), scale_length**2)
    if i_vol is not None:
        row_scale[i_vol] = max(abs(cset.targets[i_vol]), scale_length**3)
    cap = 0.02 * scale_length

    def merit(positions):
        resid = cset.residual(positions, mesh.faces)
        return float(np.linalg.norm(resid / row_scale))

    for _ in range(max_pulls):
        residual = cset.residual(mesh.positions, mesh.faces)
        violation = np.abs(residual).max(initial=0.0)
        if violation <= tol:
            return mesh
        ops = Operators(mesh, dofs)
        ceval = cset.evaluate(mesh)
        system.update(ops.J_interior(), ceval.jacobian[:, dofs.interior_dofs])
        pull = system.apply_pseudoinverse(ceval.values).primal
        longest = np.abs(pull).max(initial=0.0)
        if longest > cap:
            pull *= cap / longest
        current = merit(mesh.positions)
        flat = mesh.positions.ravel()
        step = 1.0
        for _ in range(25):
            try:
                trial_mesh = mesh.with_positions((flat - step * pull).reshape(-1, 3))
            except Exception:
                step *= 0.5
                continue
            if merit(trial_mesh.positions) < current:
                mesh = trial_mesh
                break
            step *= 0.5
        else:
            break
    raise RestorationError(
        f"initial restoration stalled at violation {violation:.3e}"
    )


def run(initial, config, constraints, on_iteration=None):
    """Run the configured gradient flow from an initial mesh.

    `on_iteration(state, record)` is called after every accepted iteration.
    Raises DescentError subclasses on stage failures; the partial state is
    attached to the exception.
    """
    t_start = time.perf_counter()
    mesh = initial
    cset = constraints.bound_to(mesh)
    if not _removes_translations(mesh, cset):
        raise DescentError(
            "configuration leaves the translation kernel in place: add a "
            "barycenter constraint or a Dirichlet boundary"
        )
    dofs = DofMap.for_mesh(mesh, cset.dirichlet)
    area_tol = mesh.degenerate_area_tol
    energy_fn = _energy_evaluator(mesh.faces, dofs.interior_vertex, area_tol)

    ops = Operators(mesh, dofs)
    grad_tol, constraint_tol = config.resolved(ops.energy, mesh.bbox_diagonal)
    system = SaddleSystem(
        dofs=dofs, solver_tol=config.solver_tol, backend=config.saddle_backend
    )

    state = DescentState(
        mesh=mesh,
        dofs=dofs,
        energy=ops.energy,
        gradient=np.zeros(dofs.num_dofs),
        multipliers=np.zeros(cset.K),
        tau=0.0,
        constraint_violation=float(
            np.abs(cset.residual(mesh.positions, mesh.faces)).max(initial=0.0)
        ),
        iteration=0,
        grad_tol=grad_tol,
        constraint_tol=constraint_tol,
    )

    try:
        # Startup feasibility for initial meshes that violate explicit
        # targets: damped Gauss-Newton with the minimal-Euclidean-norm pull
        # (fresh Jacobian each time).  The J-weighted pull of the per-step
        # restoration is the wrong tool here: it barely penalizes smooth
        # displacement fields and overshoots for large violations.
        if state.constraint_violation > constraint_tol:
            mesh = _initial_feasibility(
                mesh, cset, dofs, system, constraint_tol, config
            )
            ops = Operators(mesh, dofs)
            state.mesh = mesh
            state.energy = ops.energy
            state.constraint_violation = float(
                np.abs(cset.residual(mesh.positions, mesh.faces)).max(initial=0.0)
            )

        state.init_seconds = time.perf_counter() - t_start
        stall_count = 0
        for iteration in range(1, config.max_iters + 1):
            timings = {}
            t0 = time.perf_counter()
            if iteration > 1:
                ops = Operators(mesh, dofs)
            ceval = cset.evaluate(mesh)
            J_int = ops.J_interior()
            A_int = ceval.jacobian[:, dofs.interior_dofs]
            semi = config.flow_mode == "semi_implicit"
            if semi:
                system_matrix = ops.mass_interior() + config.tau_max * J_int
            else:
                system_matrix = J_int
            timings["assembly"] = time.perf_counter() - t0

            t0 = time.perf_counter()
            system.update(system_matrix, A_int)
            timings["factorization"] = time.perf_counter() - t0
            if config.saddle_dump_path and iteration == 1:
                system.dump_matrix(config.saddle_dump_path)

            energy_before = ops.energy
            t0 = time.perf_counter()
            if semi:
                # Fixed-step regularized flow; reuses the projected-descent
                # restoration but skips path construction and line search.
                tau = config.tau_max
                x, mu, _, _ = system.solve(
                    tau * ops.gradient_rhs[dofs.interior_dofs]
                )
                u = dofs.zero_extend(x)
                grad_measure = 0.25 * float(x @ (J_int @ x)) / tau**2
                timings["solves"] = time.perf_counter() - t0
                timings["line_search"] = 0.0
                backtracks = 0

                t0 = time.perf_counter()
                restored, pulls, violation = restore_constraints(
                    system,
                    cset,
                    mesh.faces,
                    mesh.positions.ravel() + u,
                    constraint_tol,
                    config.max_restoration_iters,
                )
                energy_restored = energy_fn(restored)
            else:
                u, mu = compute_step(ops, system)
                u_int = u[dofs.interior_dofs]
                decrease_rate = float(u_int @ (J_int @ u_int))
                grad_measure = 0.25 * decrease_rate
                if grad_measure <= grad_tol:
                    state.gradient = u
                    state.multipliers = mu
                    state.termination = "converged"
                    break
                path = compute_path(
                    mesh, dofs, ops, cset, u, mu, system, config.tau_max
                )
                timings["solves"] = time.perf_counter() - t0

                t0 = time.perf_counter()
                tau, _, backtracks = line_search(
                    energy_fn, path, energy_before, decrease_rate, config
                )
                timings["line_search"] = time.perf_counter() - t0

                # Restore feasibility; if restoration spoils the decrease,
                # keep shortening the step within the Armijo grid.
                t0 = time.perf_counter()
                accepted = False
                while backtracks <= config.max_backtracks:
                    try:
                        restored, pulls, violation = restore_constraints(
                            system,
                            cset,
                            mesh.faces,
                            path(tau),
                            constraint_tol,
                            config.max_restoration_iters,
                        )
                        energy_restored = energy_fn(restored)
                        if (
                            np.isfinite(energy_restored)
                            and energy_restored <= energy_before
                        ):
                            accepted = True
                            break
                    except RestorationError:
                        pass
                    while backtracks <= config.max_backtracks:
                        backtracks += 1
                        tau *= config.backtrack_factor
                        if energy_fn(path(tau)) <= energy_before - (
                            config.armijo_c * tau * decrease_rate
                        ):
                            break
                if not accepted:
                    raise LineSearchStall(
                        "no step with feasible, non-increasing restored energy "
                        "within the backtracking budget"
                    )
            timings["restoration"] = time.perf_counter() - t0

            mesh = mesh.with_positions(restored.reshape(-1, 3))
            tau_recorded = config.tau_max if semi else tau
            rel_drop = (energy_before - energy_restored) / max(abs(energy_before), 1e-300)
            stall_count = stall_count + 1 if rel_drop < config.stall_rel_decrease else 0

            state.mesh = mesh
            state.energy = energy_restored
            state.gradient = u
            state.multipliers = mu
            state.tau = tau_recorded
            state.constraint_violation = violation
            state.iteration = iteration
            record = HistoryRecord(
                iteration=iteration,
                energy=energy_restored,
                grad_norm_J=float(np.sqrt(max(4.0 * grad_measure, 0.0))),
                constraint_violation=violation,
                tau=tau_recorded,
                backtracks=backtracks,
                restorations=pulls,
                timings=timings,
            )
            state.history.append(record)
            if on_iteration is not None:
                on_iteration(state, record)
            if stall_count >= config.stall_patience:
                state.termination = "stalled"
                break
        else:
            state.termination = "max_iters"
        if state.termination is None:
            state.termination = "converged" if config.max_iters else "max_iters"
    except LineSearchStall as exc:
        state.termination = "stalled"
        exc.state = state
    except DescentError as exc:
        exc.state = state
        raise
    return state
