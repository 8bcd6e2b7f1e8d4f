"""Uniform space-time grid on a truncated junction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import VERTEX, DomainError, JunctionGeometry, NetworkPoint, on_edge


def _steps(length: float, step: float) -> int:
    # smallest integer count whose step does not exceed the requested one
    return max(1, math.ceil(length / step - 1e-9))


@dataclass(frozen=True)
class Grid:
    """Per-edge radial nodes ``j * dr`` (``j = 1..K``) plus the vertex, and times ``k * dt``.

    ``dr`` and ``dt`` are adjusted downward so that they divide ``R_max`` and ``T``.
    The requested values are kept in ``requested_dr`` / ``requested_dt``.
    """

    geometry: JunctionGeometry
    requested_dr: float
    requested_dt: float
    horizon: float
    num_nodes: int = field(init=False)
    num_steps: int = field(init=False)
    dr: float = field(init=False)
    dt: float = field(init=False)

    def __post_init__(self) -> None:
        if not self.requested_dr > 0 or not self.requested_dt > 0:
            raise DomainError("dr and dt must be positive")
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        K = _steps(self.geometry.edge_truncation, self.requested_dr)
        KT = _steps(self.horizon, self.requested_dt)
        object.__setattr__(self, "num_nodes", K)
        object.__setattr__(self, "num_steps", KT)
        object.__setattr__(self, "dr", self.geometry.edge_truncation / K)
        object.__setattr__(self, "dt", self.horizon / KT)

    @classmethod
    def build(cls, num_edges: int, edge_truncation: float, dr: float, dt: float, horizon: float) -> Grid:
        return cls(JunctionGeometry(num_edges, edge_truncation), dr, dt, horizon)

    @property
    def num_edges(self) -> int:
        return self.geometry.num_edges

    @property
    def radii(self) -> np.ndarray:
        """Radial coordinates ``0, dr, ..., K dr`` (index 0 is the vertex)."""
        return np.arange(self.num_nodes + 1) * self.dr

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.num_steps + 1) * self.dt

    @property
    def adjusted(self) -> bool:
        return self.dr != self.requested_dr or self.dt != self.requested_dt

    def point(self, edge: int, j: int) -> NetworkPoint:
        if edge == 0 or j == 0:
            return VERTEX
        return on_edge(edge, j * self.dr)

    def snap(self, x: NetworkPoint) -> tuple[int, int, float]:
        """Nearest grid node ``(edge, j)`` to ``x`` and the snapping distance.

        Halfway cases go to the node farther from the vertex.
        """
        self.geometry.validate(x)
        if x.is_vertex:
            return 0, 0, 0.0
        j = min(self.num_nodes, int(math.floor(x.r / self.dr + 0.5 + 1e-9)))
        if j == 0:
            return 0, 0, x.r
        return x.edge, j, abs(x.r - j * self.dr)

    def node_id(self, edge, j):
        """Flat node index: 0 for the vertex, ``1 + (edge-1) K + (j-1)`` otherwise."""
        edge = np.asarray(edge)
        j = np.asarray(j)
        out = np.where((edge == 0) | (j == 0), 0, 1 + (edge - 1) * self.num_nodes + (j - 1))
        return out if out.ndim else int(out)

    def node_coords(self, node_id):
        """Inverse of :meth:`node_id`: arrays ``(edge, j)``."""
        nid = np.asarray(node_id)
        edge = np.where(nid == 0, 0, (nid - 1) // self.num_nodes + 1)
        j = np.where(nid == 0, 0, (nid - 1) % self.num_nodes + 1)
        return edge, j

    @property
    def num_ids(self) -> int:
        return 1 + self.num_edges * self.num_nodes

    def id_radii(self) -> np.ndarray:
        """Radius of every flat node id."""
        _, j = self.node_coords(np.arange(self.num_ids))
        return self.radii[j]

    def same_as(self, other: Grid) -> bool:
        return (
            self.geometry == other.geometry
            and self.num_nodes == other.num_nodes
            and self.num_steps == other.num_steps
            and self.dr == other.dr
            and self.dt == other.dt
        )
