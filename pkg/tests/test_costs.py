import numpy as np
import pytest

from junction_mfg.costs import (
    CostFunctorSpec,
    constant_costs,
    evaluate_functor,
    example_dirac_costs,
    grid_csv_costs,
    polynomial_costs,
    running_cost,
    sample_costs,
    terminal_cost,
    tent_kernel,
    trajectory_cost,
    vertex_running_effective,
)
from junction_mfg.grid import Grid
from junction_mfg.mfg import marginal_flow, rest_measure
from junction_mfg.network import VERTEX, DomainError, on_edge
from junction_mfg.trajectory import REST, Control, Trajectory


def test_vertex_running_effective():
    assert vertex_running_effective(example_dirac_costs(), 0.3) == -1.0
    assert vertex_running_effective(constant_costs([2.0, 2.0, 2.0], 2.0), 0.0) == 2.0
    assert vertex_running_effective(constant_costs([1.0, 2.0, 3.0], 5.0), 0.7) == 1.0


def test_terminal_cost():
    assert terminal_cost(constant_costs([0.0, 0.0], 0.0), VERTEX) == 0.0
    linear = polynomial_costs([[[0.0]], [[0.0]]], [0.0], [[0.0, 1.0], [0.0]], 0.0, 1.0)
    assert terminal_cost(linear, on_edge(1, 0.4)) == pytest.approx(0.4)
    assert terminal_cost(constant_costs([0.0, 0.0], 0.0, [0.0, 0.0], -2.0), VERTEX) == -2.0


def test_running_cost():
    c = example_dirac_costs()
    assert running_cost(c, on_edge(2, 0.1), 0.0) == 1.0
    assert running_cost(c, VERTEX, 0.0) == -1.0
    rt = polynomial_costs([[[0.0, 1.0], [1.0, 0.0]], [[0.0]]], [0.0], [[0.0], [0.0]], 0.0, 1.0)
    assert running_cost(rt, on_edge(1, 0.2), 0.3) == pytest.approx(0.5)


def test_trajectory_cost_example_arrival():
    # speed 1 toward O from r = 0.5 on edge 2, then rest: -T + 5 * 0.5 / 2
    dt = 0.05
    ctrl = [Control(2, -1.0)] * 10 + [REST] * 10
    traj = Trajectory.from_controls(on_edge(2, 0.5), ctrl, dt)
    assert traj.arrival_step() == 10
    assert trajectory_cost(example_dirac_costs(), traj, 0.0) == pytest.approx(0.25, abs=1e-12)


def test_trajectory_cost_stationary_and_rest():
    c = constant_costs([0.7, 0.0], 0.0)
    traj = Trajectory.from_controls(on_edge(1, 0.3), [Control(1, 0.0)] * 4, 0.1, t_start=0.6)
    assert trajectory_cost(c, traj, 0.6) == pytest.approx(0.7 * 0.4)
    rest = Trajectory.from_controls(VERTEX, [REST] * 8, 0.125)
    assert trajectory_cost(example_dirac_costs(), rest, 0.0) == pytest.approx(-1.0)


def test_trajectory_cost_rejects_jump():
    bad = Trajectory(0.0, 0.5, np.array([1, 2]), np.array([0.1, 0.1]), np.array([1]), np.array([0.0]))
    with pytest.raises(DomainError):
        trajectory_cost(example_dirac_costs(0.5), bad, 0.0)


def test_sample_costs_shapes_and_bounds():
    g = Grid.build(2, 1.0, 0.25, 0.5, 1.0)
    t = sample_costs(example_dirac_costs(), g)
    assert t.edge_running.shape == (3, 2, 5)
    assert t.running_bound == 1.0 and t.terminal_bound == 0.0
    assert t.control_bound() == pytest.approx(2.0)


def test_grid_csv_costs(tmp_path):
    run = tmp_path / "run.csv"
    term = tmp_path / "term.csv"
    rows = ["edge,r,t,value"]
    for e in (0, 1, 2):
        for r in (0.0, 1.0):
            for t in (0.0, 1.0):
                if e == 0 and r > 0:
                    continue
                rows.append(f"{e},{r},{t},{e + r + t}")
    run.write_text("\n".join(rows) + "\n")
    term.write_text("edge,r,t,value\n0,0,0,-1\n1,0,0,0\n1,1,0,2\n2,0,0,0\n2,1,0,4\n")
    c = grid_csv_costs(run, term, 2, 1.0)
    assert running_cost(c, on_edge(2, 0.5), 0.25) == pytest.approx(2.75)
    assert terminal_cost(c, on_edge(1, 0.5)) == pytest.approx(1.0)
    assert terminal_cost(c, VERTEX) == -1.0


def _point_mass_flow(grid, node):
    mu = rest_measure(grid, np.array([node]), np.array([1.0]))
    return marginal_flow(mu)


def test_constant_functor_returns_base():
    g = Grid.build(2, 1.0, 0.25, 0.5, 1.0)
    base = example_dirac_costs()
    flow = _point_mass_flow(g, 3)
    assert evaluate_functor(CostFunctorSpec("constant", base), flow) is base
    zero = evaluate_functor(CostFunctorSpec("congestion", base, 0.0, 0.2), flow)
    assert np.array_equal(sample_costs(zero, g).edge_running, sample_costs(base, g).edge_running)


def test_congestion_unit_atom_at_vertex():
    # independent oracle: kappa * max(0, 1 - r/eps) / eps for a unit atom at O
    kappa, eps = 2.0, 0.2
    g = Grid.build(3, 1.0, 0.05, 0.5, 1.0)
    base = constant_costs([0.0, 0.0, 0.0], 0.0)
    c = evaluate_functor(CostFunctorSpec("congestion", base, kappa, eps), _point_mass_flow(g, 0))
    t = sample_costs(c, g)
    assert t.vertex_running_eff[0] == pytest.approx(10.0)
    r = g.radii
    expected = kappa * np.clip(1.0 - r / eps, 0.0, None) / eps
    for i in range(3):
        assert np.allclose(t.edge_running[1, i], expected, atol=1e-12)
        assert np.allclose(t.edge_terminal[i], expected, atol=1e-12)
    # the callables agree with the cached tables
    assert running_cost(c, on_edge(2, 0.1), 0.5) == pytest.approx(5.0)


def test_congestion_atom_on_edge_sees_other_edges_through_vertex():
    kappa, eps = 1.0, 0.5
    g = Grid.build(2, 1.0, 0.1, 1.0, 1.0)
    node = g.node_id(1, 2)  # r = 0.2 on edge 1
    c = evaluate_functor(CostFunctorSpec("congestion", constant_costs([0.0, 0.0], 0.0), kappa, eps), _point_mass_flow(g, node))
    got = running_cost(c, on_edge(2, 0.1), 0.0)
    assert got == pytest.approx(float(tent_kernel(0.3, eps)))
    assert running_cost(c, on_edge(1, 0.2), 0.0) == pytest.approx(1.0 / eps)


def test_functor_horizon_mismatch():
    g = Grid.build(2, 1.0, 0.25, 0.5, 1.0)
    f = CostFunctorSpec("congestion", example_dirac_costs(2.0), 1.0, 0.2)
    with pytest.raises(DomainError):
        evaluate_functor(f, _point_mass_flow(g, 0))
