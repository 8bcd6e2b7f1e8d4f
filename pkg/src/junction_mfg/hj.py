"""Hamiltonians of the junction problem and a backward dynamic-programming solver.

The scheme minimizes, at every node and time level, over arrival nodes one time
step later: an agent at ``r`` on edge ``i`` may reach any node of edge ``i`` or
the vertex with constant speed ``(sigma - r) / dt``; an agent at the vertex may
rest or enter an edge with nonnegative speed. The update is the discrete
dynamic programming principle, so a solved field has zero DPP residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .costs import CostSpec, SampledCosts, sample_costs, vertex_running_effective
from .grid import Grid
from .network import DomainError, NetworkPoint


def hamiltonian_edge(p, ell):
    return 0.5 * np.square(p) - ell


def hamiltonian_edge_down(p, ell):
    """Hamiltonian at ``O`` restricted to controls entering the edge."""
    p = np.asarray(p, dtype=float)
    return np.where(p <= 0.0, 0.5 * p * p, 0.0) - ell


def hamiltonian_vertex(t: float, p, c: CostSpec) -> float:
    p = np.asarray(p, dtype=float)
    if p.shape != (c.num_edges,):
        raise DomainError(f"expected {c.num_edges} one-sided derivatives, got shape {p.shape}")
    ell0 = np.array([float(f(np.asarray(0.0), np.asarray(t))) for f in c.edge_running])
    return float(max(-vertex_running_effective(c, t), np.max(hamiltonian_edge_down(p, ell0))))


@dataclass(frozen=True)
class ValueField:
    """Discrete value function.

    ``values[k, i, j]`` is ``u`` at radius ``j dr`` of edge ``i + 1`` and time ``k dt``;
    column ``j = 0`` holds the vertex value (identical on every edge).
    ``edge_policy[k, i, j-1]`` is the chosen arrival index from node ``j``;
    ``vertex_policy[k] = (edge, j)`` with ``(0, 0)`` meaning rest.
    """

    grid: Grid
    values: np.ndarray
    edge_policy: np.ndarray | None = None
    vertex_policy: np.ndarray | None = None

    @property
    def vertex(self) -> np.ndarray:
        return self.values[:, 0, 0]

    def at(self, x: NetworkPoint, k: int) -> float:
        edge, j, _ = self.grid.snap(x)
        if edge == 0:
            return float(self.values[k, 0, 0])
        return float(self.values[k, edge - 1, j])

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())


def _offsets(band: int) -> np.ndarray:
    # tie-break order: smaller |speed| first, then smaller arrival radius
    out = [0]
    for d in range(1, band + 1):
        out += [-d, d]
    return np.array(out)


def _band(grid: Grid, nxt: np.ndarray) -> int:
    """Arrival offsets beyond this band cost more in kinetic energy than any value gain."""
    osc = float(nxt.max() - nxt.min())
    slack = 1e-9 * (1.0 + float(np.abs(nxt).max()))
    reach = math.sqrt(2.0 * grid.dt * (osc + slack)) / grid.dr
    return min(grid.num_nodes, int(math.ceil(reach)) + 1)


def level_update(grid: Grid, nxt: np.ndarray, ell: np.ndarray, ell_vertex: float):
    """One backward step of the scheme.

    ``nxt`` is ``u`` at level ``k+1`` with shape ``(N, K+1)``; ``ell`` the running
    cost at level ``k`` with the same shape, ``ell_vertex`` the effective vertex cost.
    Returns ``(values, edge_arrival, vertex_choice)``.
    """
    N, K, dt = grid.num_edges, grid.num_nodes, grid.dt
    r = grid.radii
    band = _band(grid, nxt)
    offs = _offsets(band)
    j = np.arange(1, K + 1)

    vals = np.full((len(offs), N, K), np.inf)
    for n, d in enumerate(offs):
        jp = j + d
        ok = (jp >= 0) & (jp <= K)
        jv, jpv = j[ok], jp[ok]
        a = (r[jpv] - r[jv]) / dt
        vals[n][:, ok] = dt * (ell[:, jv] + 0.5 * a * a) + nxt[:, jpv]
    pick = np.argmin(vals, axis=0)
    edge_vals = np.take_along_axis(vals, pick[None], axis=0)[0]
    edge_arrival = j[None, :] + offs[pick]

    # vertex: rest first, then by arrival radius, then by edge index
    a = 0.0
    cands = [dt * (ell_vertex + 0.5 * a * a) + nxt[0, 0]]
    choices = [(0, 0)]
    for jp in range(1, band + 1):
        a = (r[jp] - r[0]) / dt
        for i in range(N):
            cands.append(dt * (ell[i, 0] + 0.5 * a * a) + nxt[i, jp])
            choices.append((i + 1, jp))
    best = int(np.argmin(cands))

    out = np.empty((N, K + 1))
    out[:, 0] = cands[best]
    out[:, 1:] = edge_vals
    return out, edge_arrival, choices[best]


def terminal_values(grid: Grid, tables: SampledCosts) -> np.ndarray:
    out = tables.edge_terminal.copy()
    out[:, 0] = tables.vertex_terminal_eff
    return out


class InvariantError(RuntimeError):
    """A quantity that holds for every valid run was violated."""


# slack for rounding in sums of O(K_T) terms
BOUND_SLACK = 1e-9


def backward_solve(grid: Grid, c: CostSpec) -> ValueField:
    """Backward DP over the grid; checks ``|u| <= sup|L| T + sup|g|`` on the result."""
    tables = sample_costs(c, grid)
    N, K, KT = grid.num_edges, grid.num_nodes, grid.num_steps
    values = np.empty((KT + 1, N, K + 1))
    edge_policy = np.empty((KT, N, K), dtype=np.int32)
    vertex_policy = np.empty((KT, 2), dtype=np.int32)
    values[KT] = terminal_values(grid, tables)
    ell_vertex = tables.vertex_running_eff
    for k in range(KT - 1, -1, -1):
        values[k], edge_policy[k], vertex_policy[k] = level_update(
            grid, values[k + 1], tables.edge_running[k], ell_vertex[k]
        )
    bound = tables.running_bound * grid.horizon + tables.terminal_bound
    worst = float(np.abs(values).max())
    if worst > bound + BOUND_SLACK * (1.0 + bound):
        raise InvariantError(f"max|u| = {worst} exceeds the a priori bound {bound}")
    return ValueField(grid, values, edge_policy, vertex_policy)


def dpp_residual(u: ValueField, c: CostSpec, k: int) -> float:
    """Max deviation between level ``k`` and its recomputation from level ``k+1``."""
    grid = u.grid
    if not 0 <= k < grid.num_steps:
        raise DomainError(f"time index {k} outside 0..{grid.num_steps - 1}")
    tables = sample_costs(c, grid)
    redo, _, _ = level_update(grid, u.values[k + 1], tables.edge_running[k], tables.vertex_running_eff[k])
    return float(np.abs(redo - u.values[k]).max())


def viscosity_residual(u: ValueField, c: CostSpec) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference residual of the HJ system at every node and level ``k < K_T``.

    Returns ``(edge_residual[k, i, j-1], vertex_residual[k])``. Time differences
    are forward, space differences central (one-sided at ``R_max``); at the vertex
    the derivative along edge ``i`` is the one-sided difference into that edge.
    """
    grid = u.grid
    tables = sample_costs(c, grid)
    dt, dr = grid.dt, grid.dr
    v = u.values
    dtu = (v[1:] - v[:-1]) / dt
    du = np.empty_like(v[:-1, :, 1:])
    du[:, :, :-1] = (v[:-1, :, 2:] - v[:-1, :, :-2]) / (2.0 * dr)
    du[:, :, -1] = (v[:-1, :, -1] - v[:-1, :, -2]) / dr
    edge_res = -dtu[:, :, 1:] + hamiltonian_edge(du, tables.edge_running[:-1, :, 1:])

    p = (v[:-1, :, 1] - v[:-1, :, 0]) / dr
    hdown = hamiltonian_edge_down(p, tables.edge_running[:-1, :, 0]).max(axis=1)
    h_vertex = np.maximum(-tables.vertex_running_eff[:-1], hdown)
    vertex_res = -dtu[:, 0, 0] + h_vertex
    return edge_res, vertex_res


def max_interior_residual(u: ValueField, c: CostSpec, min_radius: float) -> float:
    """Largest |residual| over edge nodes with ``r > min_radius`` and below ``R_max``."""
    edge_res, _ = viscosity_residual(u, c)
    r = u.grid.radii[1:]
    keep = (r > min_radius + 1e-12) & (r < u.grid.geometry.edge_truncation - 1e-12)
    return float(np.abs(edge_res[:, :, keep]).max())


def value_bound(grid: Grid, c: CostSpec) -> float:
    """``sup|L| T + sup|g|``, the a priori bound on ``|u|``."""
    t = sample_costs(c, grid)
    return t.running_bound * grid.horizon + t.terminal_bound
