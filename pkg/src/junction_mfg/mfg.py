"""Lagrangian mean field game on the junction.

Measures on trajectory space are weighted ensembles of grid paths. Their time
marginals are per-edge histograms plus an explicit atom at the vertex, and an
equilibrium is sought by fictitious play with exploitability as certificate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from .costs import CostFunctorSpec, SampledCosts, evaluate_functor, sample_costs
from .grid import Grid
from .hj import InvariantError, ValueField, backward_solve
from .network import VERTEX, DomainError, JunctionGeometry, NetworkPoint, geodesic_distance, on_edge
from .trajectory import Trajectory, path_costs, synthesize_many

logger = logging.getLogger(__name__)

MASS_TOL = 1e-9
# pushforwards of probability measures must conserve mass to this accuracy
MASS_EXACT = 1e-12
PRUNE_BELOW = 1e-12


@dataclass(frozen=True)
class FlowSlice:
    """Distribution at one time: ``edges[i, j-1]`` is the mass in ``((j-1) dr, j dr]`` of edge ``i+1``.

    Mass in a bin is located at its outer end ``j dr`` (a grid node).
    """

    dr: float
    vertex: float
    edges: np.ndarray

    @property
    def total(self) -> float:
        return float(self.vertex + self.edges.sum())

    def tails(self) -> np.ndarray:
        """Mass strictly beyond ``(j-1) dr``, per edge and bin."""
        return np.cumsum(self.edges[:, ::-1], axis=1)[:, ::-1]


@dataclass(frozen=True)
class MeasureFlow:
    grid: Grid
    vertex: np.ndarray
    edges: np.ndarray

    def slice(self, k: int) -> FlowSlice:
        return FlowSlice(self.grid.dr, float(self.vertex[k]), self.edges[k])

    def total_mass(self) -> np.ndarray:
        return self.vertex + self.edges.sum(axis=(1, 2))

    def w1_matrix(self) -> np.ndarray:
        """``W1(m(t_k), m(t_l))`` for all pairs of time indices."""
        tails = np.cumsum(self.edges[:, :, ::-1], axis=2)[:, :, ::-1].reshape(self.edges.shape[0], -1)
        return cdist(tails, tails, metric="cityblock") * self.grid.dr


def wasserstein1(a: FlowSlice, b: FlowSlice) -> float:
    """W1 between two slices; on a star every imbalance beyond ``r`` on an edge crosses ``r``."""
    if a.edges.shape != b.edges.shape or a.dr != b.dr:
        raise DomainError("slices live on different grids")
    if abs(a.total - b.total) > MASS_TOL:
        raise DomainError(f"mass mismatch {a.total} vs {b.total}")
    return float(a.dr * np.abs(a.tails() - b.tails()).sum())


def slice_from_atoms(grid: Grid, atoms: list[tuple[float, NetworkPoint]]) -> FlowSlice:
    vertex = 0.0
    edges = np.zeros((grid.num_edges, grid.num_nodes))
    for w, x in atoms:
        e, j, _ = grid.snap(x)
        if e == 0:
            vertex += w
        else:
            edges[e - 1, j - 1] += w
    return FlowSlice(grid.dr, vertex, edges)


def wasserstein1_lp(g: JunctionGeometry, a: list[tuple[float, NetworkPoint]], b: list[tuple[float, NetworkPoint]]) -> float:
    """W1 between two atomic measures by solving the transport linear program."""
    wa = np.array([w for w, _ in a])
    wb = np.array([w for w, _ in b])
    if abs(wa.sum() - wb.sum()) > MASS_TOL:
        raise DomainError("mass mismatch")
    cost = np.array([[geodesic_distance(g, x, y) for _, y in b] for _, x in a])
    m, n = cost.shape
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n : (i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    res = linprog(cost.ravel(), A_eq=A_eq, b_eq=np.concatenate([wa, wb]), bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


@dataclass(frozen=True)
class InitialDistribution:
    """Piecewise-constant density per edge on ``bin_edges`` plus an optional vertex atom."""

    bin_edges: np.ndarray
    density: np.ndarray
    vertex_atom: float = 0.0

    def __post_init__(self) -> None:
        be = np.asarray(self.bin_edges, dtype=float)
        d = np.atleast_2d(np.asarray(self.density, dtype=float))
        object.__setattr__(self, "bin_edges", be)
        object.__setattr__(self, "density", d)
        if be[0] != 0.0 or np.any(np.diff(be) <= 0):
            raise DomainError("bin_edges must start at 0 and increase")
        if d.shape[1] != len(be) - 1:
            raise DomainError("density needs one column per bin")
        if np.any(d < 0) or self.vertex_atom < 0:
            raise DomainError("densities and the vertex atom must be nonnegative")
        if abs(self.total_mass - 1.0) > MASS_TOL:
            raise DomainError(f"initial distribution has mass {self.total_mass}, expected 1")

    @property
    def num_edges(self) -> int:
        return self.density.shape[0]

    @property
    def edge_masses(self) -> np.ndarray:
        return self.density @ np.diff(self.bin_edges)

    @property
    def total_mass(self) -> float:
        return float(self.edge_masses.sum() + self.vertex_atom)

    @property
    def support_radius(self) -> float:
        used = np.flatnonzero(self.density.max(axis=0) > 0)
        return float(self.bin_edges[used[-1] + 1]) if len(used) else 0.0

    @classmethod
    def uniform(cls, num_edges: int, radius: float, edges: list[int] | None = None) -> InitialDistribution:
        """Uniform on ``[0, radius]`` of the listed edges (all edges by default)."""
        edges = list(range(1, num_edges + 1)) if edges is None else edges
        dens = np.zeros((num_edges, 1))
        for e in edges:
            dens[e - 1, 0] = 1.0 / (radius * len(edges))
        return cls(np.array([0.0, radius]), dens)

    @classmethod
    def vertex_dirac(cls, num_edges: int) -> InitialDistribution:
        return cls(np.array([0.0, 1.0]), np.zeros((num_edges, 1)), 1.0)

    def discretize(self, grid: Grid) -> FlowSlice:
        """Exact mass of each grid bin ``((j-1) dr, j dr]``."""
        nodes = grid.radii
        edges = np.zeros((grid.num_edges, grid.num_nodes))
        for e in range(min(self.num_edges, grid.num_edges)):
            cdf = np.concatenate([[0.0], np.cumsum(self.density[e] * np.diff(self.bin_edges))])
            at_nodes = np.interp(nodes, self.bin_edges, cdf)
            edges[e] = np.diff(at_nodes)
        return FlowSlice(grid.dr, self.vertex_atom, edges)


def sample_initial(m0: InitialDistribution, n: int) -> list[tuple[float, NetworkPoint]]:
    """Deterministic stratified sample: mass-quantile midpoints per edge, one particle for the atom.

    Edge ``i`` gets ``round(n * mass_i)`` particles, at least one when its mass is positive.
    """
    if n < 1:
        raise DomainError("need at least one particle")
    out: list[tuple[float, NetworkPoint]] = []
    widths = np.diff(m0.bin_edges)
    for e in range(m0.num_edges):
        mass = float(m0.edge_masses[e])
        if mass <= 0:
            continue
        # every edge carrying mass keeps at least one particle
        count = max(1, int(math.floor(n * mass + 0.5)))
        cdf = np.concatenate([[0.0], np.cumsum(m0.density[e] * widths)])
        q = (np.arange(count) + 0.5) / count * mass
        b = np.clip(np.searchsorted(cdf, q, side="right") - 1, 0, len(widths) - 1)
        r = m0.bin_edges[b] + (q - cdf[b]) / m0.density[e, b]
        out += [(mass / count, on_edge(e + 1, float(x))) for x in r]
    if m0.vertex_atom > 0:
        out.append((float(m0.vertex_atom), VERTEX))
    total = math.fsum(w for w, _ in out)
    return [(w / total, x) for w, x in out]


@dataclass(frozen=True)
class TrajectoryMeasure:
    """Weighted ensemble of grid paths, all starting at time 0.

    ``paths[p, k]`` is the flat node id (see :meth:`Grid.node_id`) of particle ``p`` at time ``k dt``.
    """

    grid: Grid
    weights: np.ndarray
    paths: np.ndarray
    c_bound: float

    def __post_init__(self) -> None:
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise DomainError(f"weights sum to {self.weights.sum()}, expected 1")
        if np.any(self.weights <= 0):
            raise DomainError("weights must be positive")

    def __len__(self) -> int:
        return len(self.weights)

    def node_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.node_coords(self.paths)

    def trajectory(self, p: int) -> Trajectory:
        e, j = self.grid.node_coords(self.paths[p])
        return Trajectory.from_nodes(self.grid, 0, e, j)

    @property
    def particles(self) -> list[tuple[float, Trajectory]]:
        return [(float(w), self.trajectory(p)) for p, w in enumerate(self.weights)]

    def control_norms(self) -> np.ndarray:
        e, j = self.node_arrays()
        r = self.grid.radii[j]
        dt = self.grid.dt
        a = (r[:, 1:] - r[:, :-1]) / dt
        return np.sqrt(np.sum(a * a, axis=1) * dt)


def mixture(a: TrajectoryMeasure, b: TrajectoryMeasure, lam: float) -> TrajectoryMeasure:
    """``(1 - lam) a + lam b`` with identical paths merged and tiny weights pruned."""
    paths = np.concatenate([a.paths, b.paths])
    weights = np.concatenate([(1.0 - lam) * a.weights, lam * b.weights])
    uniq, inv = np.unique(paths, axis=0, return_inverse=True)
    merged = np.zeros(len(uniq))
    np.add.at(merged, inv.ravel(), weights)
    keep = merged >= PRUNE_BELOW
    merged = merged[keep]
    return TrajectoryMeasure(a.grid, merged / merged.sum(), uniq[keep], max(a.c_bound, b.c_bound))


def marginal_flow(mu: TrajectoryMeasure) -> MeasureFlow:
    grid = mu.grid
    KT1 = grid.num_steps + 1
    mass = np.zeros((KT1, grid.num_ids))
    k = np.broadcast_to(np.arange(KT1), mu.paths.shape)
    w = np.broadcast_to(mu.weights[:, None], mu.paths.shape)
    np.add.at(mass, (k, mu.paths), w)
    edges = mass[:, 1:].reshape(KT1, grid.num_edges, grid.num_nodes)
    return MeasureFlow(grid, mass[:, 0].copy(), edges)


def snap_starts(grid: Grid, starts: list[tuple[float, NetworkPoint]]) -> tuple[np.ndarray, np.ndarray, float]:
    """Node ids and weights of snapped starts, and the largest snapping distance."""
    ids, ws, worst = [], [], 0.0
    for w, x in starts:
        e, j, d = grid.snap(x)
        ids.append(grid.node_id(e, j))
        ws.append(w)
        worst = max(worst, d)
    return np.array(ids, dtype=np.int64), np.array(ws, dtype=float), worst


def rest_measure(grid: Grid, start_ids: np.ndarray, weights: np.ndarray) -> TrajectoryMeasure:
    paths = np.repeat(start_ids[:, None], grid.num_steps + 1, axis=1)
    return TrajectoryMeasure(grid, weights / weights.sum(), paths, 0.0)


def _best_paths(u: ValueField, start_ids: np.ndarray) -> np.ndarray:
    grid = u.grid
    e0, j0 = grid.node_coords(start_ids)
    E, J = synthesize_many(u, e0, j0)
    return grid.node_id(E, J)


def best_response(f: CostFunctorSpec, flow: MeasureFlow, starts: list[tuple[float, NetworkPoint]], g: Grid) -> TrajectoryMeasure:
    if not flow.grid.same_as(g):
        raise DomainError("flow is not on the requested grid")
    costs = evaluate_functor(f, flow)
    u = backward_solve(g, costs)
    ids, ws, _ = snap_starts(g, starts)
    tables = sample_costs(costs, g)
    return TrajectoryMeasure(g, ws / ws.sum(), _best_paths(u, ids), tables.control_bound())


@dataclass
class Evaluation:
    """Costs frozen at a measure's own flow, with the resulting optimality gaps."""

    flow: MeasureFlow
    tables: SampledCosts
    u: ValueField
    gaps: np.ndarray
    exploitability: float
    mass_error: float = 0.0


def evaluate(f: CostFunctorSpec, mu: TrajectoryMeasure) -> Evaluation:
    grid = mu.grid
    flow = marginal_flow(mu)
    costs = evaluate_functor(f, flow)
    u = backward_solve(grid, costs)
    tables = sample_costs(costs, grid)
    e, j = mu.node_arrays()
    J = path_costs(grid, tables, e, j)
    start_value = u.values[0, np.maximum(e[:, 0], 1) - 1, j[:, 0]]
    gaps = J - start_value
    mass_error = float(np.abs(flow.total_mass() - 1.0).max())
    if mass_error > MASS_EXACT:
        raise InvariantError(f"flow mass deviates from 1 by {mass_error}")
    return Evaluation(flow, tables, u, gaps, float(np.dot(mu.weights, gaps)), mass_error)


def exploitability(f: CostFunctorSpec, mu: TrajectoryMeasure, g: Grid | None = None) -> float:
    """Weighted optimality gap of ``mu`` against the costs its own flow induces."""
    if g is not None and not mu.grid.same_as(g):
        raise DomainError("measure is not on the requested grid")
    return evaluate(f, mu).exploitability


@dataclass
class IterationLog:
    entries: list[dict] = field(default_factory=list)
    converged: bool = False
    best_iter: int = 0
    snap_distance: float = 0.0

    @property
    def final_exploitability(self) -> float:
        return self.entries[self.best_iter]["exploitability"]


def solve_equilibrium(
    f: CostFunctorSpec,
    m0: InitialDistribution,
    g: Grid,
    n: int,
    tol: float,
    max_iter: int,
    check_holder: bool = False,
) -> tuple[TrajectoryMeasure, IterationLog]:
    """Fictitious play ``mu_{k+1} = (1 - 1/(k+1)) mu_k + 1/(k+1) BR(mu_k)`` from the resting ensemble.

    Stops at the first iteration ``k >= 1`` with exploitability ``<= tol``, or at
    ``max_iter``; on non-convergence the least exploitable iterate is returned.
    With ``check_holder`` each log entry carries ``max W1(m(t), m(s)) / (C sqrt|t-s|)``.
    """
    if not tol > 0 or max_iter < 1:
        raise DomainError("tol must be > 0 and max_iter >= 1")
    ids, ws, snapped = snap_starts(g, sample_initial(m0, n))
    if snapped > 0:
        logger.info("initial particles snapped to grid nodes (max distance %.3g)", snapped)
    mu = rest_measure(g, ids, ws)
    log = IterationLog(snap_distance=snapped)
    best_mu, best_val = mu, math.inf
    prev_flow = None
    for k in range(max_iter + 1):
        ev = evaluate(f, mu)
        entry = {
            "iter": k,
            "exploitability": ev.exploitability,
            "w1_step": None if prev_flow is None else _max_w1_step(prev_flow, ev.flow),
            "mass_error": ev.mass_error,
            "max_abs_u": ev.u.max_abs(),
        }
        if check_holder:
            entry["holder_ratio"] = holder_ratio(ev.flow, mu.c_bound)
        log.entries.append(entry)
        logger.debug("iteration %d exploitability %.3e", k, ev.exploitability)
        if ev.exploitability < best_val:
            best_mu, best_val, log.best_iter = mu, ev.exploitability, k
        if k >= 1 and ev.exploitability <= tol:
            log.converged = True
            return mu, log
        if k == max_iter:
            break
        br = TrajectoryMeasure(g, ws / ws.sum(), _best_paths(ev.u, ids), ev.tables.control_bound())
        mu = mixture(mu, br, 1.0 / (k + 1))
        prev_flow = ev.flow
    return best_mu, log


def _max_w1_step(a: MeasureFlow, b: MeasureFlow) -> float:
    ta = np.cumsum(a.edges[:, :, ::-1], axis=2)
    tb = np.cumsum(b.edges[:, :, ::-1], axis=2)
    return float((np.abs(ta - tb).sum(axis=(1, 2)) * a.grid.dr).max())


def holder_ratio(flow: MeasureFlow, c_bound: float) -> float:
    """``max_{t != s} W1(m(t), m(s)) / (C sqrt|t - s|)``; 0 for a static flow."""
    w = flow.w1_matrix()
    t = flow.grid.times
    gap = np.sqrt(np.abs(t[:, None] - t[None, :]))
    off = gap > 0
    if not np.any(w[off] > 0):
        return 0.0
    if c_bound <= 0:
        return math.inf
    return float((w[off] / (c_bound * gap[off])).max())
