"""Hamilton-Jacobi equations and deterministic mean field games on a star-shaped junction."""

from .costs import CostFunctorSpec, CostSpec, constant_costs, example_dirac_costs, sample_costs, trajectory_cost
from .grid import Grid
from .hj import ValueField, backward_solve, hamiltonian_edge, hamiltonian_edge_down, hamiltonian_vertex
from .mfg import InitialDistribution, MeasureFlow, exploitability, marginal_flow, solve_equilibrium, wasserstein1
from .network import VERTEX, DomainError, JunctionGeometry, NetworkPoint, geodesic_distance, on_edge
from .trajectory import Control, Trajectory, check_admissible, synthesize

__all__ = [
    "VERTEX", "Control", "CostFunctorSpec", "CostSpec", "DomainError", "Grid", "InitialDistribution",
    "JunctionGeometry", "MeasureFlow", "NetworkPoint", "Trajectory", "ValueField", "backward_solve",
    "check_admissible", "constant_costs", "example_dirac_costs", "exploitability", "geodesic_distance",
    "hamiltonian_edge", "hamiltonian_edge_down", "hamiltonian_vertex", "marginal_flow", "on_edge",
    "sample_costs", "solve_equilibrium", "synthesize", "trajectory_cost", "wasserstein1",
]
