"""Invariant suites: solver vs brute-force oracle, W1 vs LP, Hölder flow bound, DPP exactness.

Instances come from an unscrambled Halton sequence, so every run sees the same ones.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.stats import qmc

from .costs import CostFunctorSpec, evaluate_functor, polynomial_costs
from .grid import Grid
from .hj import backward_solve, dpp_residual
from .mfg import (
    InitialDistribution,
    marginal_flow,
    rest_measure,
    slice_from_atoms,
    solve_equilibrium,
    wasserstein1,
    wasserstein1_lp,
)
from .trajectory import brute_force_value

# (num_edges, nodes per edge) with at most 5 arrival nodes per step
TINY_SHAPES = ((2, 1), (2, 2), (3, 1), (4, 1))


def _points(n: int, d: int, skip: int = 1) -> np.ndarray:
    return qmc.Halton(d, scramble=False).random(n + skip)[skip:]


def tiny_instance(u: np.ndarray):
    """Map a point of ``[0,1)^15`` to a tiny grid, polynomial costs and a start node."""
    N, K = TINY_SHAPES[int(u[0] * len(TINY_SHAPES))]
    steps = 1 + int(u[1] * 6)
    dr = 0.1 + 0.4 * u[2]
    dt = 0.05 + 0.45 * u[3]
    grid = Grid.build(N, K * dr, dr, dt, steps * dt)
    s = 2.0 * u[4:12] - 1.0
    running = [[[s[0] + 0.3 * i * s[1], s[2]], [s[3] * (i % 2 - 0.5), 0.0]] for i in range(N)]
    terminal = [[s[4] * (i - 1), s[5], 0.5 * s[6]] for i in range(N)]
    costs = polynomial_costs(running, [s[7], s[2]], terminal, float(s[1]), grid.horizon, label="tiny")
    start_edge = 1 + int(u[13] * N)
    start_j = int(u[14] * (K + 1))
    x0 = grid.point(start_edge, start_j)
    return grid, costs, x0


def _oracle_one(u: np.ndarray) -> dict:
    grid, costs, x0 = tiny_instance(u)
    solver = backward_solve(grid, costs).at(x0, 0)
    oracle = brute_force_value(grid, costs, x0, 0)
    return {
        "num_edges": grid.num_edges,
        "nodes": grid.num_nodes,
        "steps": grid.num_steps,
        "solver": solver,
        "oracle": oracle,
        "equal": solver == oracle,
    }


def oracle_suite(instances: int = 50, threads: int = 1) -> dict:
    pts = _points(instances, 15)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(_oracle_one, pts))
    mismatches = sum(not r["equal"] for r in rows)
    worst = max(abs(r["solver"] - r["oracle"]) for r in rows)
    return {"property": "solver equals brute-force oracle", "instances": instances,
            "mismatches": mismatches, "max_abs_difference": worst, "pass": mismatches == 0}


def random_atoms(u: np.ndarray, grid: Grid, count: int) -> list:
    w = 0.05 + u[:count]
    w = w / w.sum()
    atoms = []
    for c in range(count):
        e = 1 + int(u[count + c] * grid.num_edges)
        j = int(u[2 * count + c] * (grid.num_nodes + 1))
        atoms.append((float(w[c]), grid.point(e, j)))
    return atoms


def w1_instance(u: np.ndarray):
    N = 2 + int(u[0] * 3)
    grid = Grid.build(N, 1.0, 0.1, 1.0, 1.0)
    na = 1 + int(u[1] * 4)
    nb = 1 + int(u[2] * 4)
    a = random_atoms(u[3:15], grid, na)
    b = random_atoms(u[15:27], grid, nb)
    return grid, a, b


def w1_suite(instances: int = 100) -> dict:
    worst = 0.0
    for u in _points(instances, 27):
        grid, a, b = w1_instance(u)
        closed = wasserstein1(slice_from_atoms(grid, a), slice_from_atoms(grid, b))
        lp = wasserstein1_lp(grid.geometry, a, b)
        worst = max(worst, abs(closed - lp))
    return {"property": "closed-form W1 equals transport LP", "instances": instances,
            "max_abs_difference": worst, "tolerance": 1e-8, "pass": worst <= 1e-8}


def holder_suite(f: CostFunctorSpec, m0: InitialDistribution, grid: Grid, n: int, tol: float, max_iter: int) -> dict:
    _, log = solve_equilibrium(f, m0, grid, n, tol, max_iter, check_holder=True)
    ratio = max(e["holder_ratio"] for e in log.entries)
    return {"property": "W1(m(t), m(s)) <= C |t-s|^(1/2) for every iterate", "iterates": len(log.entries),
            "max_ratio": ratio, "pass": ratio <= 1.0}


def dpp_suite(grid: Grid, f: CostFunctorSpec) -> dict:
    costs = f.base
    if not f.is_constant:
        # freeze at a resting vertex Dirac so measure-dependent costs are covered too
        mu = rest_measure(grid, np.array([0]), np.array([1.0]))
        costs = evaluate_functor(f, marginal_flow(mu))
    u = backward_solve(grid, costs)
    worst = max(dpp_residual(u, costs, k) for k in range(grid.num_steps))
    return {"property": "DPP residual is exactly zero", "levels": grid.num_steps, "max_residual": worst,
            "pass": worst == 0.0}
