"""Admissible trajectories, optimal-trajectory synthesis and a brute-force oracle."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .costs import CostSpec, sample_costs
from .grid import Grid
from .hj import ValueField
from .network import VERTEX, DomainError, NetworkPoint, on_edge

logger = logging.getLogger(__name__)

ADMISSIBLE_TOL = 1e-9


class InstanceTooLarge(DomainError):
    pass


class Control(NamedTuple):
    """``edge == 0`` is rest at the vertex; otherwise signed radial speed along ``edge``."""

    edge: int
    speed: float


REST = Control(0, 0.0)


@dataclass(frozen=True)
class Trajectory:
    """A curve sampled on a uniform time grid with one control per step.

    ``edges[k] == 0`` marks the vertex (then ``radii[k] == 0``).
    """

    t_start: float
    dt: float
    edges: np.ndarray
    radii: np.ndarray
    ctrl_edges: np.ndarray
    speeds: np.ndarray
    snapped_by: float = 0.0

    @property
    def num_steps(self) -> int:
        return len(self.speeds)

    @property
    def points(self) -> list[NetworkPoint]:
        return [VERTEX if e == 0 else on_edge(int(e), float(r)) for e, r in zip(self.edges, self.radii)]

    @property
    def controls(self) -> list[Control]:
        return [Control(int(e), float(a)) for e, a in zip(self.ctrl_edges, self.speeds)]

    def control_norm(self) -> float:
        """Discrete L2 norm of the speed."""
        return float(np.sqrt(np.sum(self.speeds**2) * self.dt))

    def arrival_step(self) -> int | None:
        """First step index at the vertex, or ``None``."""
        hits = np.flatnonzero(self.edges == 0)
        return int(hits[0]) if len(hits) else None

    @classmethod
    def from_nodes(cls, grid: Grid, k0: int, edges, js, snapped_by: float = 0.0) -> Trajectory:
        edges = np.where(np.asarray(js) == 0, 0, np.asarray(edges)).astype(int)
        js = np.asarray(js, dtype=int)
        r = grid.radii[js]
        dt = grid.dt
        ctrl = np.where(edges[:-1] != 0, edges[:-1], edges[1:])
        speeds = (r[1:] - r[:-1]) / dt
        speeds = np.where(ctrl == 0, 0.0, speeds)
        return cls(k0 * dt, dt, edges, r, ctrl, speeds, snapped_by)

    @classmethod
    def from_controls(cls, x0: NetworkPoint, controls, dt: float, t_start: float = 0.0) -> Trajectory:
        """Integrate piecewise-constant controls from ``x0``; a step ending at ``r = 0`` lands on ``O``."""
        edges = [0 if x0.is_vertex else x0.edge]
        radii = [0.0 if x0.is_vertex else x0.r]
        for c in controls:
            e, r = edges[-1], radii[-1]
            if c.edge == 0:
                edges.append(e)
                radii.append(r)
                continue
            nr = r + c.speed * dt
            if abs(nr) <= ADMISSIBLE_TOL:
                edges.append(0)
                radii.append(0.0)
            else:
                edges.append(c.edge)
                radii.append(nr)
        return cls(
            t_start,
            dt,
            np.array(edges),
            np.array(radii),
            np.array([c.edge for c in controls], dtype=int),
            np.array([c.speed for c in controls], dtype=float),
        )


def check_admissible(traj: Trajectory, g: Grid | None = None) -> tuple[bool, str]:
    """Validate continuity on the network, inward controls at ``O`` and truncation."""
    tol = ADMISSIBLE_TOL
    n = traj.num_steps
    if len(traj.edges) != n + 1 or len(traj.radii) != n + 1 or len(traj.ctrl_edges) != n:
        return False, "inconsistent array lengths"
    for k in range(n + 1):
        e, r = int(traj.edges[k]), float(traj.radii[k])
        if e == 0 and r != 0.0:
            return False, f"sample {k}: vertex with nonzero radius"
        if e != 0 and r <= tol:
            return False, f"sample {k}: point (edge={e}, r={r}) is not canonical"
        if g is not None:
            if e > g.num_edges or e < 0:
                return False, f"sample {k}: edge {e} out of range"
            if r > g.geometry.edge_truncation + tol:
                return False, f"sample {k}: radius {r} beyond truncation"
    for k in range(n):
        e0, r0 = int(traj.edges[k]), float(traj.radii[k])
        e1, r1 = int(traj.edges[k + 1]), float(traj.radii[k + 1])
        ce, a = int(traj.ctrl_edges[k]), float(traj.speeds[k])
        if ce == 0:
            if e0 != 0 or e1 != 0 or a != 0.0:
                return False, f"step {k}: rest control away from the vertex or with nonzero speed"
            continue
        if e0 == 0:
            if a < -tol:
                return False, f"step {k}: control at the vertex points outward of edge {ce}"
        elif e0 != ce:
            return False, f"step {k}: control on edge {ce} while on edge {e0}"
        target = r0 + a * traj.dt
        if target < -tol:
            return False, f"step {k}: passes through the vertex within one step"
        if abs(target) <= tol:
            if e1 != 0:
                return False, f"step {k}: should reach the vertex"
        elif e1 != ce or abs(r1 - target) > tol:
            return False, f"step {k}: jump from (edge={e0}, r={r0}) to (edge={e1}, r={r1})"
    return True, "ok"


def _node_choice(grid: Grid, nxt: np.ndarray, ell: np.ndarray, ell_vertex: float, edge: int, j: int):
    """Argmin arrival of the backward update at a single node, same ordering as the solver."""
    N, K, dt = grid.num_edges, grid.num_nodes, grid.dt
    r = grid.radii
    if edge == 0:
        a = 0.0
        best = dt * (ell_vertex + 0.5 * a * a) + nxt[0, 0]
        choice = (0, 0)
        for jp in range(1, K + 1):
            a = (r[jp] - r[0]) / dt
            for i in range(N):
                v = dt * (ell[i, 0] + 0.5 * a * a) + nxt[i, jp]
                if v < best:
                    best, choice = v, (i + 1, jp)
        return choice
    i = edge - 1
    best, choice = np.inf, None
    for d in range(0, K + 1):
        for jp in ((j,) if d == 0 else (j - d, j + d)):
            if 0 <= jp <= K:
                a = (r[jp] - r[j]) / dt
                v = dt * (ell[i, j] + 0.5 * a * a) + nxt[i, jp]
                if v < best:
                    best, choice = v, (edge if jp else 0, jp)
    return choice


def synthesize(u: ValueField, c: CostSpec, x0: NetworkPoint, k0: int = 0) -> Trajectory:
    """Greedy descent on the discrete DPP from ``(x0, k0)``; off-grid starts are snapped."""
    grid = u.grid
    tables = sample_costs(c, grid)
    edge, j, snapped = grid.snap(x0)
    if snapped > 0:
        logger.warning("start %r snapped to grid node at distance %.3g", x0, snapped)
    edges, js = [edge], [j]
    ellv = tables.vertex_running_eff
    for k in range(k0, grid.num_steps):
        edge, j = _node_choice(grid, u.values[k + 1], tables.edge_running[k], ellv[k], edge, j)
        edges.append(edge)
        js.append(j)
    return Trajectory.from_nodes(grid, k0, edges, js, snapped)


def synthesize_many(u: ValueField, edges0: np.ndarray, js0: np.ndarray, k0: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Follow the solver's stored policy from many on-grid starts at once.

    Returns node arrays ``(edges, js)`` of shape ``(num_starts, K_T - k0 + 1)``.
    """
    if u.edge_policy is None:
        raise DomainError("value field carries no policy; use synthesize()")
    grid = u.grid
    P = len(edges0)
    steps = grid.num_steps - k0
    E = np.empty((P, steps + 1), dtype=int)
    J = np.empty((P, steps + 1), dtype=int)
    e = np.where(np.asarray(js0) == 0, 0, np.asarray(edges0))
    j = np.asarray(js0).copy()
    E[:, 0], J[:, 0] = e, j
    for s in range(steps):
        k = k0 + s
        at_v = e == 0
        ne = np.empty_like(e)
        nj = np.empty_like(j)
        vch = u.vertex_policy[k]
        ne[at_v], nj[at_v] = vch[0], vch[1]
        on = ~at_v
        nj[on] = u.edge_policy[k][e[on] - 1, j[on] - 1]
        ne[on] = np.where(nj[on] == 0, 0, e[on])
        e, j = ne, nj
        E[:, s + 1], J[:, s + 1] = e, j
    return E, J


def path_costs(grid: Grid, tables, edges: np.ndarray, js: np.ndarray, k0: int = 0) -> np.ndarray:
    """Scheme-consistent cost of node paths (rows), summed from the terminal time backward.

    Running costs are charged at the departure node; entering an edge from ``O``
    pays that edge's cost at ``r = 0``. This is the arithmetic of the backward
    update, so an optimal path's cost equals the value function bit for bit.
    """
    edges = np.atleast_2d(edges)
    js = np.atleast_2d(js)
    r = grid.radii
    dt = grid.dt
    e_last, j_last = edges[:, -1], js[:, -1]
    total = np.where(j_last == 0, tables.vertex_terminal_eff, tables.edge_terminal[np.maximum(e_last, 1) - 1, j_last])
    ellv = tables.vertex_running_eff
    for s in range(edges.shape[1] - 2, -1, -1):
        k = k0 + s
        e0, j0, e1, j1 = edges[:, s], js[:, s], edges[:, s + 1], js[:, s + 1]
        at_v = j0 == 0
        rest = at_v & (j1 == 0)
        ctrl = np.where(at_v, e1, e0)
        ell = np.where(rest, ellv[k], tables.edge_running[k, np.maximum(ctrl, 1) - 1, j0])
        a = np.where(rest, 0.0, (r[j1] - r[j0]) / dt)
        total = dt * (ell + 0.5 * a * a) + total
    return total


def brute_force_value(g: Grid, c: CostSpec, x0: NetworkPoint, k0: int = 0) -> float:
    """Exhaustive minimum of the discrete path cost over every arrival-node sequence.

    Refuses instances with more than 6 steps or more than 5 arrival nodes per step.
    """
    steps = g.num_steps - k0
    K, N = g.num_nodes, g.num_edges
    if steps > 6 or max(K + 1, 1 + N * K) > 5:
        raise InstanceTooLarge(f"{steps} steps with {max(K + 1, 1 + N * K)} arrival nodes is too large to enumerate")
    tables = sample_costs(c, g)
    edge, j, _ = g.snap(x0)

    def successors(e, jj):
        if jj == 0:
            return [(0, 0)] + [(i, jp) for i in range(1, N + 1) for jp in range(1, K + 1)]
        return [(0 if jp == 0 else e, jp) for jp in range(K + 1)]

    paths = [[(edge, j)]]
    for _ in range(steps):
        paths = [p + [s] for p in paths for s in successors(*p[-1])]
    r = g.radii
    dt = g.dt
    best = np.inf
    for p in paths:
        e_T, j_T = p[-1]
        total = tables.vertex_terminal_eff if j_T == 0 else tables.edge_terminal[e_T - 1, j_T]
        for s in range(steps - 1, -1, -1):
            (e0, j0), (e1, j1) = p[s], p[s + 1]
            k = k0 + s
            if j0 == 0 and j1 == 0:
                ell, a = tables.vertex_running_eff[k], 0.0
            elif j0 == 0:
                ell, a = tables.edge_running[k, e1 - 1, 0], (r[j1] - r[0]) / dt
            else:
                ell, a = tables.edge_running[k, e0 - 1, j0], (r[j1] - r[j0]) / dt
            total = dt * (ell + 0.5 * a * a) + total
        best = min(best, total)
    return float(best)


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Rows ``t,edge,r,speed``; the final sample has speed 0."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "edge", "r", "speed"])
        for row in trajectory_rows(traj):
            w.writerow(row)


def trajectory_rows(traj: Trajectory) -> list[list[str]]:
    rows = []
    for k in range(traj.num_steps + 1):
        a = traj.speeds[k] if k < traj.num_steps else 0.0
        rows.append([f"{traj.t_start + k * traj.dt:.17g}", str(int(traj.edges[k])), f"{traj.radii[k]:.17g}", f"{a:.17g}"])
    return rows
