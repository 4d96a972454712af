"""
Finite-difference Dirichlet solver for F(D^2 u) = g on sublevel ellipsoids.

The domain is E = {x^T A x / 2 < s_level} in three dimensions with boundary
data u = s_level. Second derivatives use centered differences along the
coordinate axes and the face diagonals e_i +- e_j, with Shortley-Weller arms
that stop at the exact boundary crossing, so the stencil reproduces quadratic
functions exactly on every node.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import LinearOperator, bicgstab, spsolve

from lagrangian.barrier_ode import BarrierFunction, fit_power_law
from lagrangian.envelopes_implicit import CanonicalPhaseField
from lagrangian.errors import ConfigurationError, ConvergenceError, InputError, PreconditionError
from lagrangian.phase_core import PhaseParams, SymmetricMatrix, phase_gradients_batch, phase_values_batch
from lagrangian.radial_nonexistence import integrate_radial_deviation
from utils.config import GRID_CONFIG, NEWTON_CONFIG, RADIAL_CONFIG
from utils.file_handler import write_grid_dump

logger = logging.getLogger(__name__)

AXES = np.eye(3, dtype=int)
PAIRS = ((0, 1), (0, 2), (1, 2))
# 3 axes followed by (e_i + e_j, e_i - e_j) for each pair
DIRECTIONS = np.array(
    [AXES[0], AXES[1], AXES[2]]
    + [v for i, j in PAIRS for v in (AXES[i] + AXES[j], AXES[i] - AXES[j])],
    dtype=int,
)

PhaseField = Union[Callable[[np.ndarray], np.ndarray], float]


@dataclass(frozen=True, eq=False)
class EllipsoidGrid:
    """
    Interior lattice nodes of an ellipsoid with Shortley-Weller stencil data.

    neighbors[k, d, side] is the node index reached along +-DIRECTIONS[d],
    or -1 when the arm is clipped at the boundary; theta holds the arm
    length in units of h (1 for unclipped arms).
    """

    params: PhaseParams
    s_level: float
    h: float
    index: np.ndarray
    points: np.ndarray
    half_widths: np.ndarray
    lookup: np.ndarray = field(repr=False)
    neighbors: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def origin(self) -> np.ndarray:
        return -self.half_widths * self.h

    def clip_points(self) -> np.ndarray:
        """Boundary points where clipped arms end."""
        out = []
        for side, sgn in enumerate((1.0, -1.0)):
            k, d = np.nonzero(self.neighbors[:, :, side] < 0)
            steps = sgn * self.theta[k, d, side][:, None] * self.h * DIRECTIONS[d]
            out.append(self.points[k] + steps)
        return np.vstack(out) if out else np.empty((0, 3))

    def node_at(self, lattice_index) -> int:
        """Node id for a lattice index triple, or -1 outside the domain."""
        pos = np.asarray(lattice_index, dtype=int) + self.half_widths
        if np.any(pos < 0) or np.any(pos >= self.lookup.shape):
            return -1
        return int(self.lookup[tuple(pos)])

    def stencil_weights(self):
        """(c_plus, c_minus, c_center) for every node and direction."""
        tp = self.theta[:, :, 0] * self.h
        tm = self.theta[:, :, 1] * self.h
        total = tp + tm
        c_plus = 2.0 / (tp * total)
        c_minus = 2.0 / (tm * total)
        return c_plus, c_minus, -(c_plus + c_minus)


def _arm_fraction(params: PhaseParams, x: np.ndarray, direction: np.ndarray, s_level: float, h: float) -> np.ndarray:
    """Smallest tau > 0 with s(x + tau d) = s_level, in units of h."""
    A = params.A.entries
    gap = s_level - params.quadratic_form(x)
    b = x @ A @ direction
    q = float(direction @ A @ direction)
    # root of q tau^2 / 2 + b tau - gap = 0 written without cancellation
    tau = 2.0 * gap / (b + np.sqrt(b * b + 2.0 * q * gap))
    return np.clip(tau / h, 1e-12, 1.0)


def build_grid(params: PhaseParams, s_level: float, h: float) -> EllipsoidGrid:
    """
    Lattice hZ^3 restricted to the open ellipsoid, with boundary arms.

    Raises:
        ConfigurationError: If n != 3, s_level or h is not positive, or the
            inscribed ball holds fewer than the minimum nodes per axis
    """
    if params.n != GRID_CONFIG["dimension"]:
        raise ConfigurationError(f"The grid solver is three-dimensional, got n={params.n}")
    if not (s_level > 0 and h > 0):
        raise ConfigurationError(f"Need s_level > 0 and h > 0, got s_level={s_level}, h={h}")

    A = params.A.entries
    a_max = float(params.a.values[-1])
    inscribed = math.sqrt(2.0 * s_level / a_max)
    per_axis = 2 * int(math.floor(inscribed / h)) + 1
    if per_axis < GRID_CONFIG["min_nodes_per_axis"]:
        raise ConfigurationError(
            f"h={h} is too coarse: the inscribed ball of radius {inscribed:.4g} spans {per_axis} nodes per axis"
        )

    extents = np.sqrt(2.0 * s_level * np.diag(np.linalg.inv(A)))
    half = np.floor(extents / h).astype(int) + 1
    axes = [np.arange(-m, m + 1) for m in half]
    lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    pts = lattice * h
    inside = params.quadratic_form(pts) < s_level
    index, points = lattice[inside], pts[inside]

    lookup = np.full(tuple(2 * half + 1), -1, dtype=np.int64)
    lookup[tuple((index + half).T)] = np.arange(index.shape[0])

    N = index.shape[0]
    neighbors = np.full((N, len(DIRECTIONS), 2), -1, dtype=np.int64)
    theta = np.ones((N, len(DIRECTIONS), 2))
    for d, vec in enumerate(DIRECTIONS):
        for side, sgn in enumerate((1, -1)):
            target = index + sgn * vec + half
            in_box = np.all((target >= 0) & (target < lookup.shape), axis=1)
            ids = np.full(N, -1, dtype=np.int64)
            ids[in_box] = lookup[tuple(target[in_box].T)]
            neighbors[:, d, side] = ids
            clipped = ids < 0
            if np.any(clipped):
                theta[clipped, d, side] = _arm_fraction(
                    params, points[clipped], sgn * vec.astype(float), s_level, h
                )

    logger.info(
        f"Grid: s_level={s_level:g}, h={h:g}, {N} interior nodes, "
        f"{int(np.count_nonzero(neighbors < 0))} clipped arms"
    )
    return EllipsoidGrid(params, float(s_level), float(h), index, points, half, lookup, neighbors, theta)


def _directional_differences(u: np.ndarray, grid: EllipsoidGrid) -> np.ndarray:
    """Second differences along every direction, shape (N, 9)."""
    c_plus, c_minus, c_center = grid.stencil_weights()
    extended = np.append(np.asarray(u, dtype=float), grid.s_level)
    plus = np.where(grid.neighbors[:, :, 0] < 0, grid.size, grid.neighbors[:, :, 0])
    minus = np.where(grid.neighbors[:, :, 1] < 0, grid.size, grid.neighbors[:, :, 1])
    return c_plus * extended[plus] + c_minus * extended[minus] + c_center * extended[:-1, None]


def _assemble_hessians(diffs: np.ndarray) -> np.ndarray:
    hess = np.zeros((diffs.shape[0], 3, 3))
    for i in range(3):
        hess[:, i, i] = diffs[:, i]
    for k, (i, j) in enumerate(PAIRS):
        mixed = 0.25 * (diffs[:, 3 + 2 * k] - diffs[:, 4 + 2 * k])
        hess[:, i, j] = mixed
        hess[:, j, i] = mixed
    return hess


def discrete_hessians(u: np.ndarray, grid: EllipsoidGrid) -> np.ndarray:
    """Discrete Hessians at every node, shape (N, 3, 3)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,):
        raise InputError(f"Nodal values must have shape ({grid.size},), got {u.shape}")
    return _assemble_hessians(_directional_differences(u, grid))


def discrete_hessian(u: np.ndarray, grid: EllipsoidGrid, node: int) -> SymmetricMatrix:
    """Discrete Hessian at one node; mixed entries are (D_{e_i+e_j} - D_{e_i-e_j}) / 4."""
    if not 0 <= node < grid.size:
        raise InputError(f"Node {node} is not an interior node")
    return SymmetricMatrix.from_array(discrete_hessians(u, grid)[node])


def _evaluate_field(g: PhaseField, points: np.ndarray) -> np.ndarray:
    if callable(g):
        return np.asarray(g(points), dtype=float).reshape(points.shape[0])
    return np.full(points.shape[0], float(g))


def _jacobian(grid: EllipsoidGrid, grads: np.ndarray) -> csr_matrix:
    c_plus, c_minus, c_center = grid.stencil_weights()
    gamma = np.empty((grid.size, len(DIRECTIONS)))
    for i in range(3):
        gamma[:, i] = grads[:, i, i]
    for k, (i, j) in enumerate(PAIRS):
        gamma[:, 3 + 2 * k] = 0.5 * grads[:, i, j]
        gamma[:, 4 + 2 * k] = -0.5 * grads[:, i, j]

    rows = [np.arange(grid.size)]
    cols = [np.arange(grid.size)]
    vals = [np.sum(gamma * c_center, axis=1)]
    for side, weights in ((0, c_plus), (1, c_minus)):
        nbr = grid.neighbors[:, :, side]
        mask = nbr >= 0
        rows.append(np.broadcast_to(np.arange(grid.size)[:, None], nbr.shape)[mask])
        cols.append(nbr[mask])
        vals.append((gamma * weights)[mask])
    return csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, grid.size),
    )


def _linear_solve(J: csr_matrix, rhs: np.ndarray, backend: str) -> np.ndarray:
    if backend == "direct":
        return spsolve(J.tocsc(), rhs)
    inv_diag = 1.0 / J.diagonal()
    precond = LinearOperator(J.shape, matvec=lambda v: inv_diag * v)
    step, info = bicgstab(
        J, rhs, M=precond, rtol=NEWTON_CONFIG["krylov_rtol"], maxiter=NEWTON_CONFIG["krylov_maxiter"]
    )
    if info != 0 or not np.all(np.isfinite(step)):
        logger.warning(f"BiCGSTAB returned info={info}; falling back to a direct solve")
        return spsolve(J.tocsc(), rhs)
    return step


@dataclass(frozen=True, eq=False)
class GridSolution:
    grid: EllipsoidGrid
    u: np.ndarray
    iterations: int
    residual: float
    history: List[float] = field(default_factory=list)
    backend: str = "krylov"

    def deviation(self) -> np.ndarray:
        """u - x^T A x / 2 at the nodes."""
        return self.u - self.grid.params.quadratic_form(self.grid.points)

    def to_box(self) -> np.ndarray:
        """Nodal values on the bounding box, NaN outside the domain."""
        box = np.full(self.grid.lookup.shape, np.nan)
        box[tuple((self.grid.index + self.grid.half_widths).T)] = self.u
        return box

    def to_frame(self) -> pd.DataFrame:
        pts = self.grid.points
        return pd.DataFrame({"x": pts[:, 0], "y": pts[:, 1], "z": pts[:, 2], "u": self.u})

    def value_at(self, point) -> float:
        """Nodal value at the lattice node nearest to point."""
        node = self.grid.node_at(np.rint(np.asarray(point, dtype=float) / self.grid.h).astype(int))
        if node < 0:
            raise InputError(f"No interior node near {point}")
        return float(self.u[node])

    def dump(self, path: str) -> str:
        return write_grid_dump(path, self.to_box(), self.grid.h, self.grid.s_level, tuple(self.grid.origin))


def barrier_midpoint(grid: EllipsoidGrid, barriers: Sequence[BarrierFunction], points=None) -> np.ndarray:
    """
    (lower + upper) / 2 plus the affine function that best matches the
    boundary data s_level at the clip points, evaluated at points.
    """
    lower, upper = barriers
    points = grid.points if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    clips = grid.clip_points()
    mid = 0.5 * (lower.value(points) + upper.value(points))
    if clips.size == 0:
        return mid
    clips = clips.reshape(-1, grid.params.n)
    design = np.hstack([np.ones((clips.shape[0], 1)), clips])
    gap = grid.s_level - 0.5 * (lower.value(clips) + upper.value(clips))
    coeffs, *_ = np.linalg.lstsq(design, gap, rcond=None)
    return mid + coeffs[0] + points @ coeffs[1:]


def newton_solve(
    grid: EllipsoidGrid,
    g: PhaseField,
    u_init: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    backend: Optional[str] = None,
    barriers: Optional[Sequence[BarrierFunction]] = None,
) -> GridSolution:
    """
    Damped Newton iteration for F(D^2 u) - g = 0 at the interior nodes.

    Steps are halved until the max-norm residual decreases; if that fails and
    barriers are given, the iteration restarts once from their
    affine-matched midpoint.

    Raises:
        ConfigurationError: If |g| <= (n-2) pi/2 anywhere on the grid or its clip points
        ConvergenceError: If the residual does not drop below tol; carries the history
    """
    tol = tol or NEWTON_CONFIG["tolerance"]
    max_iter = max_iter or NEWTON_CONFIG["max_iterations"]
    backend = backend or NEWTON_CONFIG["backend"]
    if backend not in ("krylov", "direct"):
        raise ConfigurationError(f"Unknown linear backend '{backend}'")

    critical = (grid.params.n - 2) * math.pi / 2.0
    targets = _evaluate_field(g, grid.points)
    boundary = _evaluate_field(g, grid.clip_points()) if np.any(grid.neighbors < 0) else np.empty(0)
    if np.any(np.abs(targets) <= critical) or np.any(np.abs(boundary) <= critical):
        raise ConfigurationError(f"Phase is not supercritical on the grid: need |g| > {critical:.6f}")

    u = grid.params.quadratic_form(grid.points) if u_init is None else np.array(u_init, dtype=float)
    restarted = False

    def residual_of(values):
        return phase_values_batch(discrete_hessians(values, grid)) - targets

    res = residual_of(u)
    history = [float(np.max(np.abs(res)))]
    iterations = 0
    while history[-1] > tol and iterations < max_iter:
        iterations += 1
        values, grads = phase_gradients_batch(discrete_hessians(u, grid))
        step = _linear_solve(_jacobian(grid, grads), -(values - targets), backend)

        alpha, accepted = 1.0, False
        for _ in range(NEWTON_CONFIG["max_halvings"] + 1):
            trial = u + alpha * step
            trial_res = residual_of(trial)
            norm = float(np.max(np.abs(trial_res)))
            if np.isfinite(norm) and norm < history[-1]:
                accepted = True
                break
            alpha *= 0.5

        if not accepted:
            if barriers and not restarted:
                restarted = True
                logger.warning("Line search stalled; restarting from the barrier midpoint")
                u = barrier_midpoint(grid, barriers)
                res = residual_of(u)
                history.append(float(np.max(np.abs(res))))
                continue
            raise ConvergenceError(
                f"Line search stalled at iteration {iterations} with residual {history[-1]:.3e}",
                residual_history=history,
            )
        u, res = trial, trial_res
        history.append(norm)
        logger.debug(f"Newton iteration {iterations}: residual={norm:.3e}, step={alpha:g}")

    if history[-1] > tol:
        raise ConvergenceError(
            f"Newton did not converge in {max_iter} iterations: residual {history[-1]:.3e}",
            residual_history=history,
        )
    logger.info(f"Newton converged in {iterations} iterations, residual={history[-1]:.3e}")
    return GridSolution(grid, u, iterations, history[-1], history, backend)


def residual_certificate(solution: GridSolution, g: PhaseField) -> float:
    """Recompute max |F(D^2 u) - g| over the nodes."""
    grid = solution.grid
    values = phase_values_batch(discrete_hessians(solution.u, grid))
    return float(np.max(np.abs(values - _evaluate_field(g, grid.points))))


# ============================================================================
# RADIAL ORACLE
# ============================================================================

@dataclass(frozen=True, eq=False)
class RadialOracle:
    """U(r) = t r^2 / 2 + d(r) - d(R) on the ball of radius R, with U(R) = s_level."""

    t: float
    radius: float
    s_level: float
    r_grid: np.ndarray
    phi: np.ndarray
    d: np.ndarray

    def gap(self, r):
        """d(r) - d(R); the deviation from the quadratic."""
        r_arr = np.asarray(r, dtype=float)
        inner = 0.5 * self.phi[0] * r_arr * r_arr
        outer = np.interp(np.log(np.maximum(r_arr, self.r_grid[0])), np.log(self.r_grid), self.d)
        out = np.where(r_arr < self.r_grid[0], inner, outer) - self.d[-1]
        return float(out) if out.ndim == 0 else out

    def U(self, r):
        r_arr = np.asarray(r, dtype=float)
        return 0.5 * self.t * r_arr * r_arr + self.gap(r_arr)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.U(np.linalg.norm(np.atleast_2d(points), axis=1))


def _radial_tail(params: PhaseParams, g_radial) -> Callable[[float], float]:
    if isinstance(g_radial, CanonicalPhaseField):
        return g_radial.radial_tail
    if callable(g_radial):
        return lambda r: float(g_radial(r)) - params.g_inf
    return lambda r: float(g_radial) - params.g_inf


def radial_reduction_solve(
    params: PhaseParams,
    g_radial,
    s_level: float,
    r_end: Optional[float] = None,
    points: int = 2000,
) -> RadialOracle:
    """
    Reduce the Dirichlet problem for A = t I and a radial phase to the ODE
    arctan(W + r W') + (n-1) arctan W = G(r).

    The regular start W(0) = tan(G(0)/n) is forced, so the profile is
    integrated once from r0 and the additive constant is fixed by U(R) = s_level.

    Raises:
        PreconditionError: If A is not a multiple of the identity
    """
    if not params.is_isotropic:
        raise PreconditionError("The radial reduction needs A = t I")
    n, t = params.n, float(params.a.values[0])
    tail = _radial_tail(params, g_radial)
    radius = math.sqrt(2.0 * s_level / t)
    r0 = RADIAL_CONFIG["start_radius"]
    start_tail = tail(r0)
    phi0 = math.sin(start_tail / n) / (math.cos((params.g_inf + start_tail) / n) * math.cos(params.g_inf / n))
    r, phi, d = integrate_radial_deviation(
        n, params.g_inf, tail, r0, max(r_end or radius, radius), phi0, 0.5 * phi0 * r0 * r0, points
    )
    keep = r <= radius * (1.0 + 1e-12)
    r, phi, d = r[keep], phi[keep], d[keep]
    return RadialOracle(t, radius, float(s_level), r, phi, d)


def oracle_max_error(solution: GridSolution, oracle: RadialOracle) -> float:
    """max over nodes of |u_h - U(|x|)|."""
    return float(np.max(np.abs(solution.u - oracle.evaluate(solution.grid.points))))


def symmetry_defect(solution: GridSolution) -> float:
    """
    max |u(x) - u(sigma x)| over lattice symmetries of the domain: coordinate
    reflections for diagonal A, and also permutations for A = t I.
    """
    grid = solution.grid
    A = grid.params.A.entries
    if np.any(np.abs(A - np.diag(np.diag(A))) > 0):
        raise PreconditionError("Lattice symmetries need a diagonal A")
    perms = list(itertools.permutations(range(3))) if grid.params.is_isotropic else [(0, 1, 2)]
    worst = 0.0
    for perm in perms:
        for signs in itertools.product((1, -1), repeat=3):
            mapped = grid.index[:, perm] * np.array(signs) + grid.half_widths
            in_box = np.all((mapped >= 0) & (mapped < grid.lookup.shape), axis=1)
            ids = np.full(grid.size, -1, dtype=np.int64)
            ids[in_box] = grid.lookup[tuple(mapped[in_box].T)]
            ok = ids >= 0
            if np.any(ok):
                worst = max(worst, float(np.max(np.abs(solution.u[ok] - solution.u[ids[ok]]))))
    return worst


# ============================================================================
# SANDWICH AND LIMIT STUDY
# ============================================================================

@dataclass
class SandwichReport:
    passed: bool
    beta_minus: float
    beta_plus: float
    C1: float
    tolerance: float
    worst_margin: float
    worst_node: list
    deviation_max: float
    h: float
    s_level: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _deviation_range(barrier: BarrierFunction) -> np.ndarray:
    """U(s) - s over the tabulated range."""
    if barrier.deviation_table is None:
        return np.array([barrier.C])
    return np.asarray(barrier.deviation_table, dtype=float)


def sandwich_check(solution: GridSolution, sub: BarrierFunction, sup: BarrierFunction) -> SandwichReport:
    """
    Check u_sub + beta_- - tol <= u_h <= u_super + beta_+ + tol on every node,
    with beta_- = inf (s - U_sub(s)), beta_+ = sup (s - U_super(s)) and
    tol = 10 h^2 + 1e-6, plus |u_h - s| <= C1 for C1 bounding both sandwiches.
    """
    if sub.kind != "sub" or sup.kind != "super":
        raise PreconditionError(f"Need a sub and a super barrier, got {sub.kind} and {sup.kind}")
    grid = solution.grid
    h = grid.h
    tol = GRID_CONFIG["sandwich_h2_factor"] * h * h + GRID_CONFIG["sandwich_floor"]

    sub_dev = _deviation_range(sub)
    sup_dev = _deviation_range(sup)
    beta_minus = float(np.min(-sub_dev))
    beta_plus = float(np.max(-sup_dev))
    C1 = max(float(np.max(np.abs(sub_dev + beta_minus))), float(np.max(np.abs(sup_dev + beta_plus)))) + tol

    pts = grid.points
    lower = sub.value(pts) + beta_minus - tol
    upper = sup.value(pts) + beta_plus + tol
    margins = np.minimum(solution.u - lower, upper - solution.u)
    worst = int(np.argmin(margins))
    deviation = np.abs(solution.deviation())
    passed = bool(margins[worst] >= 0 and np.max(deviation) <= C1)
    report = SandwichReport(
        passed, beta_minus, beta_plus, C1, tol, float(margins[worst]), pts[worst].tolist(),
        float(np.max(deviation)), h, grid.s_level,
    )
    log = logger.info if passed else logger.warning
    log(f"Sandwich at s_level={grid.s_level:g}: passed={passed}, worst margin={report.worst_margin:.3e}")
    return report


def far_field_fit(params: PhaseParams, field_: CanonicalPhaseField) -> dict:
    """
    Fit |d(r) - c_inf| ~ r^(2 - min(beta, n)) on the far-field window of the
    radial oracle, with c_inf extrapolated from the decay of the last decade.
    """
    r_max = RADIAL_CONFIG["far_field_r_max"]
    window = RADIAL_CONFIG["far_field_window"]
    oracle = radial_reduction_solve(params, field_, 0.5 * params.a.values[0] * r_max * r_max, points=3000)
    r, phi, d = oracle.r_grid, oracle.phi, oracle.d
    if np.all(phi == 0.0):
        return {"c_inf": 0.0, "expected_exponent": None, "fit": None, "ok": True}

    # extrapolate the remaining integral of r phi with the decay of the last decade
    last = fit_power_law(r, phi, (r[-1] / 10.0, r[-1]), min_points=5)
    if last.exponent <= 2.0:
        return {"c_inf": None, "expected_exponent": None, "fit": last.to_dict(), "ok": False}
    c_inf = float(d[-1] + phi[-1] * r[-1] ** 2 / (last.exponent - 2.0))
    decay = min(params.beta, params.n) - 2.0
    fit = fit_power_law(r, d - c_inf, window, try_log=abs(params.beta - params.n) < 0.05)
    return {
        "c_inf": c_inf,
        "expected_exponent": decay,
        "fit": fit.to_dict(),
        "ok": bool(abs(fit.exponent - decay) <= 0.15),
    }


def entire_limit_study(
    params: PhaseParams,
    g: CanonicalPhaseField,
    s_levels: Sequence[float],
    probe_radii: Sequence[float],
    h: float,
    far_field: bool = True,
) -> Dict:
    """
    Solve on growing ellipsoids and track the nodal values at fixed probes.

    Reports successive Cauchy differences at the probes, whether they shrink
    (within 10 h^2) as s_level grows, and for A = t I a far-field fit of the
    radial profile against |d - c_inf| ~ r^(2 - min(beta, n)).

    Raises:
        ConfigurationError: If s_levels are not increasing or a probe is not well inside the smallest domain
    """
    levels = [float(s) for s in s_levels]
    if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigurationError(f"s_levels must be increasing with at least two entries, got {levels}")
    inner = math.sqrt(2.0 * levels[0] / float(params.a.values[-1]))
    probes = [float(r) for r in probe_radii]
    if any(r >= 0.5 * inner for r in probes):
        raise ConfigurationError(f"Probes must lie within half the inscribed radius {inner:.4g}")

    values = []
    runs = []
    for s_level in levels:
        sol = newton_solve(build_grid(params, s_level, h), g)
        values.append([sol.value_at((r, 0.0, 0.0)) for r in probes])
        runs.append({"s_level": s_level, "nodes": sol.grid.size, "iterations": sol.iterations, "residual": sol.residual})
    values = np.array(values)
    cauchy = np.max(np.abs(np.diff(values, axis=0)), axis=1).tolist()
    slack = 10.0 * h * h
    monotone = all(b <= a + slack for a, b in zip(cauchy, cauchy[1:]))

    report = {
        "s_levels": levels,
        "probe_radii": probes,
        "probe_values": values.tolist(),
        "cauchy_differences": cauchy,
        "monotone": monotone,
        "runs": runs,
    }
    if far_field and params.is_isotropic:
        report["far_field"] = far_field_fit(params, g)
    logger.info(f"Limit study: Cauchy differences {['%.3e' % c for c in cauchy]}, monotone={monotone}")
    return report
