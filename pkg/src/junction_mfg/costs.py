"""Running and terminal costs on the junction, trajectory costs and cost functors.

Edge costs are callables ``ell_i(r, t)`` and ``g_i(r)`` that must accept numpy
arrays and broadcast. The vertex carries its own running cost ``ell_*(t)``
and terminal scalar ``g_*``; at ``O`` the effective costs are the minimum
over the vertex cost and the edge costs evaluated at ``r = 0``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .network import DomainError, NetworkPoint

if TYPE_CHECKING:
    from .grid import Grid
    from .mfg import MeasureFlow
    from .trajectory import Trajectory

EdgeRunning = Callable[[np.ndarray, np.ndarray], np.ndarray]
VertexRunning = Callable[[np.ndarray], np.ndarray]
EdgeTerminal = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SampledCosts:
    """Costs tabulated on a grid; the solver works exclusively from these tables.

    ``edge_running[k, i, j]`` is ``ell_{i+1}(j dr, k dt)`` (``j = 0`` is the edge value at ``O``).
    """

    grid: Grid
    edge_running: np.ndarray
    vertex_running: np.ndarray
    edge_terminal: np.ndarray
    vertex_terminal: float

    @property
    def vertex_running_eff(self) -> np.ndarray:
        return np.minimum(self.vertex_running, self.edge_running[:, :, 0].min(axis=1))

    @property
    def vertex_terminal_eff(self) -> float:
        return float(min(self.vertex_terminal, self.edge_terminal[:, 0].min()))

    @property
    def running_bound(self) -> float:
        return float(max(np.abs(self.edge_running).max(), np.abs(self.vertex_running_eff).max()))

    @property
    def terminal_bound(self) -> float:
        return float(max(np.abs(self.edge_terminal).max(), abs(self.vertex_terminal_eff)))

    def control_bound(self) -> float:
        """L2 bound on optimal controls from comparison with resting in place.

        ``|alpha|_2^2 / 2 <= J(rest) - (-K T - G) <= 2 K T + 2 G``.
        """
        T = self.grid.horizon
        return float(np.sqrt(2.0 * (2.0 * self.running_bound * T + 2.0 * self.terminal_bound)))


@dataclass(frozen=True)
class CostSpec:
    edge_running: tuple[EdgeRunning, ...]
    vertex_running: VertexRunning
    edge_terminal: tuple[EdgeTerminal, ...]
    vertex_terminal: float
    horizon: float
    label: str = "custom"
    # tables precomputed for one grid (measure-dependent costs are expensive to sample)
    tables: SampledCosts | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.edge_running) != len(self.edge_terminal):
            raise DomainError("edge_running and edge_terminal must have one entry per edge")
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")

    @property
    def num_edges(self) -> int:
        return len(self.edge_running)


def _const2(value: float) -> EdgeRunning:
    value = float(value)
    return lambda r, t: np.zeros(np.broadcast(np.asarray(r), np.asarray(t)).shape) + value


def _const1(value: float) -> VertexRunning:
    value = float(value)
    return lambda t: np.zeros(np.shape(t)) + value


def constant_costs(
    edge_running: Sequence[float],
    vertex_running: float,
    edge_terminal: Sequence[float] | None = None,
    vertex_terminal: float = 0.0,
    horizon: float = 1.0,
    label: str = "constant",
) -> CostSpec:
    if edge_terminal is None:
        edge_terminal = [0.0] * len(edge_running)
    return CostSpec(
        tuple(_const2(v) for v in edge_running),
        _const1(vertex_running),
        tuple(_const1(v) for v in edge_terminal),
        float(vertex_terminal),
        float(horizon),
        label,
    )


def example_dirac_costs(horizon: float = 1.0) -> CostSpec:
    """Two edges, ``ell_1 = -1``, ``ell_2 = 1``, ``ell_* = -1``, zero terminal costs."""
    return constant_costs([-1.0, 1.0], -1.0, [0.0, 0.0], 0.0, horizon, label="example_dirac")


def polynomial_costs(
    edge_running: Sequence[Sequence[Sequence[float]]],
    vertex_running: Sequence[float],
    edge_terminal: Sequence[Sequence[float]],
    vertex_terminal: float,
    horizon: float,
    label: str = "polynomial",
) -> CostSpec:
    """``ell_i(r, t) = sum_pq c[p][q] r^p t^q``, ``ell_*(t) = sum_q v[q] t^q``, ``g_i(r) = sum_p d[p] r^p``."""

    def running(coef):
        coef = np.asarray(coef, dtype=float)

        def f(r, t):
            r, t = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(t, dtype=float))
            out = np.zeros(r.shape)
            for p in range(coef.shape[0]):
                for q in range(coef.shape[1]):
                    if coef[p, q] != 0.0:
                        out = out + coef[p, q] * r**p * t**q
            return out

        return f

    def poly1(coef):
        coef = np.asarray(coef, dtype=float)

        def f(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape)
            for p, c in enumerate(coef):
                if c != 0.0:
                    out = out + c * x**p
            return out

        return f

    return CostSpec(
        tuple(running(c) for c in edge_running),
        poly1(vertex_running),
        tuple(poly1(c) for c in edge_terminal),
        float(vertex_terminal),
        float(horizon),
        label,
    )


def affine_costs(
    edge_running: Sequence[Sequence[float]],
    vertex_running: Sequence[float],
    edge_terminal: Sequence[Sequence[float]],
    vertex_terminal: float,
    horizon: float,
) -> CostSpec:
    """``ell_i = a + b r + c t``, ``ell_* = a + c t``, ``g_i = a + b r``."""
    running = [[[a, c], [b, 0.0]] for a, b, c in edge_running]
    va, vc = vertex_running
    return polynomial_costs(running, [va, vc], edge_terminal, vertex_terminal, horizon, label="affine")


def _read_rows(path: Path) -> list[tuple[int, float, float, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["edge", "r", "t", "value"]:
            raise DomainError(f"{path}: expected header edge,r,t,value")
        return [(int(row["edge"]), float(row["r"]), float(row["t"]), float(row["value"])) for row in reader]


def grid_csv_costs(
    running_path: str | Path,
    terminal_path: str | Path,
    num_edges: int,
    horizon: float,
) -> CostSpec:
    """Costs sampled on a tensor grid, interpolated bilinearly (clamped outside the samples).

    Running file rows ``edge,r,t,value``; ``edge = 0`` rows (``r = 0``) give ``ell_*(t)``.
    Terminal file uses the same header, ``t`` is ignored; an ``edge = 0`` row gives ``g_*``.
    """
    rows = _read_rows(Path(running_path))
    term = _read_rows(Path(terminal_path))

    def running(edge: int) -> EdgeRunning:
        pts = sorted((r, t, v) for e, r, t, v in rows if e == edge)
        if not pts:
            raise DomainError(f"{running_path}: no rows for edge {edge}")
        rs = np.unique([p[0] for p in pts])
        ts = np.unique([p[1] for p in pts])
        if len(pts) != len(rs) * len(ts):
            raise DomainError(f"{running_path}: edge {edge} rows do not form a tensor grid")
        vals = np.empty((len(rs), len(ts)))
        for r, t, v in pts:
            vals[np.searchsorted(rs, r), np.searchsorted(ts, t)] = v
        if len(rs) == 1 or len(ts) == 1:
            raise DomainError(f"{running_path}: edge {edge} needs at least two radii and two times")
        interp = RegularGridInterpolator((rs, ts), vals, method="linear")

        def f(r, t):
            r, t = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(t, dtype=float))
            q = np.stack([np.clip(r, rs[0], rs[-1]), np.clip(t, ts[0], ts[-1])], axis=-1)
            return interp(q.reshape(-1, 2)).reshape(r.shape)

        return f

    vpts = sorted((t, v) for e, r, t, v in rows if e == 0)
    if not vpts:
        raise DomainError(f"{running_path}: no vertex rows (edge 0)")
    vt = np.array([p[0] for p in vpts])
    vv = np.array([p[1] for p in vpts])

    def terminal(edge: int) -> EdgeTerminal:
        pts = sorted((r, v) for e, r, t, v in term if e == edge)
        if not pts:
            raise DomainError(f"{terminal_path}: no rows for edge {edge}")
        rs = np.array([p[0] for p in pts])
        vs = np.array([p[1] for p in pts])
        return lambda r: np.interp(np.asarray(r, dtype=float), rs, vs)

    gstar = [v for e, r, t, v in term if e == 0]
    if len(gstar) != 1:
        raise DomainError(f"{terminal_path}: expected exactly one vertex row (edge 0)")
    return CostSpec(
        tuple(running(i) for i in range(1, num_edges + 1)),
        lambda t: np.interp(np.asarray(t, dtype=float), vt, vv),
        tuple(terminal(i) for i in range(1, num_edges + 1)),
        gstar[0],
        float(horizon),
        label="grid_csv",
    )


def vertex_running_effective(c: CostSpec, t: float) -> float:
    cands = [float(c.vertex_running(np.asarray(t)))]
    cands += [float(f(np.asarray(0.0), np.asarray(t))) for f in c.edge_running]
    return min(cands)


def terminal_cost(c: CostSpec, x: NetworkPoint) -> float:
    if x.is_vertex:
        return min(c.vertex_terminal, *(float(g(np.asarray(0.0))) for g in c.edge_terminal))
    return float(c.edge_terminal[x.edge - 1](np.asarray(x.r)))


def running_cost(c: CostSpec, x: NetworkPoint, t: float) -> float:
    if x.is_vertex:
        return vertex_running_effective(c, t)
    return float(c.edge_running[x.edge - 1](np.asarray(x.r), np.asarray(t)))


def sample_costs(c: CostSpec, grid: Grid) -> SampledCosts:
    """Tabulate ``c`` on ``grid``; raises if any sample is not finite."""
    if c.tables is not None and c.tables.grid.same_as(grid):
        return c.tables
    if c.num_edges != grid.num_edges:
        raise DomainError(f"costs have {c.num_edges} edges, grid has {grid.num_edges}")
    if abs(c.horizon - grid.horizon) > 1e-12:
        raise DomainError(f"cost horizon {c.horizon} differs from grid horizon {grid.horizon}")
    r = grid.radii
    t = grid.times
    edge_running = np.stack([np.asarray(f(r[None, :], t[:, None]), dtype=float) for f in c.edge_running], axis=1)
    vertex_running = np.asarray(c.vertex_running(t), dtype=float) + np.zeros(t.shape)
    edge_terminal = np.stack([np.asarray(g(r), dtype=float) + np.zeros(r.shape) for g in c.edge_terminal])
    tables = SampledCosts(grid, edge_running, vertex_running, edge_terminal, float(c.vertex_terminal))
    for name in ("edge_running", "vertex_running", "edge_terminal"):
        if not np.all(np.isfinite(getattr(tables, name))):
            raise DomainError(f"cost table {name} has non-finite entries")
    return tables


def trajectory_cost(c: CostSpec, traj: Trajectory, t_start: float, quadrature: str = "midpoint") -> float:
    """Running + kinetic + terminal cost of a piecewise-constant-control trajectory.

    ``quadrature="midpoint"`` evaluates the running cost at the midpoint of each
    control step. ``quadrature="left"`` charges the cost at the departure point
    and sums from the terminal time backward, which reproduces the arithmetic
    of the dynamic programming update.
    """
    from .trajectory import check_admissible

    ok, why = check_admissible(traj)
    if not ok:
        raise DomainError(f"trajectory is not admissible: {why}")
    if abs(t_start - traj.t_start) > 1e-9:
        raise DomainError(f"t_start {t_start} does not match the trajectory start {traj.t_start}")
    end = traj.t_start + traj.num_steps * traj.dt
    if abs(end - c.horizon) > 1e-9:
        raise DomainError(f"trajectory ends at {end}, horizon is {c.horizon}")

    dt = traj.dt
    steps = []
    for k in range(traj.num_steps):
        t_k = traj.t_start + k * dt
        e, a = int(traj.ctrl_edges[k]), float(traj.speeds[k])
        r0 = float(traj.radii[k])
        if quadrature == "midpoint":
            tq = t_k + 0.5 * dt
            rq = r0 + 0.5 * dt * a
        elif quadrature == "left":
            tq, rq = t_k, r0
        else:
            raise ValueError(f"unknown quadrature {quadrature!r}")
        if e == 0:
            ell = vertex_running_effective(c, tq)
        else:
            ell = float(c.edge_running[e - 1](np.asarray(rq), np.asarray(tq)))
            if rq == 0.0 and quadrature == "midpoint":
                ell = vertex_running_effective(c, tq)
        steps.append(dt * (ell + 0.5 * a * a))
    total = terminal_cost(c, traj.points[-1])
    for s in reversed(steps):
        total = s + total
    return total


@dataclass(frozen=True)
class CostFunctorSpec:
    """Measure-dependent costs ``L[m]``; ``congestion`` adds ``kappa * (rho_eps * m)``.

    ``rho_eps(s) = max(0, 1 - s/eps) / eps`` is a tent kernel in geodesic distance.
    """

    kind: str
    base: CostSpec
    congestion_strength: float = 0.0
    kernel_width: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "congestion"):
            raise DomainError(f"unknown functor kind {self.kind!r}")
        if self.congestion_strength < 0:
            raise DomainError("congestion_strength must be >= 0")
        if not self.kernel_width > 0:
            raise DomainError("kernel_width must be > 0")

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or self.congestion_strength == 0.0

    def uniform_bounds(self, grid: Grid) -> tuple[float, float]:
        """Running/terminal bounds valid for every probability measure."""
        t = sample_costs(self.base, grid)
        extra = 0.0 if self.is_constant else self.congestion_strength / self.kernel_width
        return t.running_bound + extra, t.terminal_bound + extra


def tent_kernel(s: np.ndarray, eps: float) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.asarray(s) / eps) / eps


def _mass_points(flow: MeasureFlow) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flat (edge, radius) of every mass cell and masses ``(K_T+1, num_ids)``."""
    grid = flow.grid
    ids = np.arange(grid.num_ids)
    edge, j = grid.node_coords(ids)
    masses = np.concatenate([flow.vertex[:, None], flow.edges.reshape(flow.edges.shape[0], -1)], axis=1)
    return edge, grid.radii[j], masses


def _distance(qe, qr, pe, pr):
    """Geodesic distance between query (edge, r) and mass points, broadcast."""
    same = (qe == pe) | (qr == 0.0) | (pr == 0.0)
    return np.where(same, np.abs(qr - pr), qr + pr)


def congestion_field(flow: MeasureFlow, eps: float, edge, r, k) -> np.ndarray:
    """``int rho_eps(d(x, y)) dm(t_k)(y)`` for query points ``x = (edge, r)`` at time indices ``k``."""
    pe, pr, masses = _mass_points(flow)
    edge, r, k = np.broadcast_arrays(np.asarray(edge), np.asarray(r, dtype=float), np.asarray(k))
    d = _distance(edge[..., None], r[..., None], pe, pr)
    return np.sum(masses[k] * tent_kernel(d, eps), axis=-1)


def _congestion_tables(flow: MeasureFlow, eps: float) -> tuple[np.ndarray, np.ndarray]:
    grid = flow.grid
    N, K = grid.num_edges, grid.num_nodes
    pe, pr, masses = _mass_points(flow)
    qe = np.repeat(np.arange(1, N + 1), K + 1)
    qr = np.tile(grid.radii, N)
    kernel = tent_kernel(_distance(qe[:, None], qr[:, None], pe[None, :], pr[None, :]), eps)
    field_ = masses @ kernel.T
    edge_field = field_.reshape(-1, N, K + 1)
    # the vertex column is the same point on every edge
    return edge_field, edge_field[:, 0, 0].copy()


def evaluate_functor(f: CostFunctorSpec, flow: MeasureFlow) -> CostSpec:
    """Freeze ``f`` at the flow ``t -> m(t)``; returns a plain :class:`CostSpec`."""
    grid = flow.grid
    if abs(grid.horizon - f.base.horizon) > 1e-12 or flow.vertex.shape[0] != grid.num_steps + 1:
        raise DomainError("flow time grid does not match the cost horizon")
    if f.is_constant:
        return f.base
    kappa, eps = f.congestion_strength, f.kernel_width
    base = f.base
    dt, KT = grid.dt, grid.num_steps

    def time_index(t):
        return np.clip(np.floor(np.asarray(t, dtype=float) / dt + 0.5).astype(int), 0, KT)

    def running(i: int) -> EdgeRunning:
        fb = base.edge_running[i - 1]
        return lambda r, t: fb(r, t) + kappa * congestion_field(flow, eps, i, r, time_index(t))

    def terminal(i: int) -> EdgeTerminal:
        gb = base.edge_terminal[i - 1]
        return lambda r: gb(r) + kappa * congestion_field(flow, eps, i, r, KT)

    def vertex_running(t):
        return base.vertex_running(t) + kappa * congestion_field(flow, eps, 0, 0.0, time_index(t))

    edge_field, vertex_field = _congestion_tables(flow, eps)
    bt = sample_costs(base, grid)
    tables = SampledCosts(
        grid,
        bt.edge_running + kappa * edge_field,
        bt.vertex_running + kappa * vertex_field,
        bt.edge_terminal + kappa * edge_field[-1],
        bt.vertex_terminal + kappa * float(vertex_field[-1]),
    )
    return replace(
        base,
        edge_running=tuple(running(i) for i in range(1, base.num_edges + 1)),
        vertex_running=vertex_running,
        edge_terminal=tuple(terminal(i) for i in range(1, base.num_edges + 1)),
        vertex_terminal=tables.vertex_terminal,
        label=f"{base.label}+congestion",
        tables=tables,
    )
