"""Star-shaped network (junction) geometry in intrinsic coordinates.

A junction is ``N`` half-lines glued at a single vertex ``O``. Points are
stored as an edge index and a radial coordinate; edge ``0`` denotes the
vertex. Edges are truncated at ``edge_truncation`` for numerical purposes.
"""

from __future__ import annotations

from dataclasses import dataclass


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


@dataclass(frozen=True)
class JunctionGeometry:
    num_edges: int
    edge_truncation: float

    def __post_init__(self) -> None:
        if int(self.num_edges) != self.num_edges or self.num_edges < 2:
            raise DomainError(f"num_edges must be an integer >= 2, got {self.num_edges!r}")
        if not (0.0 < self.edge_truncation < float("inf")):
            raise DomainError(f"edge_truncation must be positive and finite, got {self.edge_truncation!r}")

    def validate(self, x: NetworkPoint) -> None:
        if x.edge > self.num_edges:
            raise DomainError(f"edge {x.edge} out of range 1..{self.num_edges}")
        if x.r > self.edge_truncation:
            raise DomainError(f"radius {x.r} beyond truncation {self.edge_truncation}")


@dataclass(frozen=True)
class NetworkPoint:
    """A point of the junction; ``edge == 0`` (or ``r == 0``) is the vertex."""

    edge: int = 0
    r: float = 0.0

    def __post_init__(self) -> None:
        if self.edge < 0:
            raise DomainError(f"edge index must be nonnegative, got {self.edge}")
        if self.r < 0.0:
            raise DomainError(f"radial coordinate must be nonnegative, got {self.r}")
        if self.edge == 0 and self.r != 0.0:
            raise DomainError("the vertex has radial coordinate 0")

    @property
    def is_vertex(self) -> bool:
        return self.edge == 0 or self.r == 0.0

    def __repr__(self) -> str:
        if self.is_vertex and self.edge == 0:
            return "Vertex"
        return f"OnEdge({self.edge}, {self.r!r})"


VERTEX = NetworkPoint()


def on_edge(edge: int, r: float) -> NetworkPoint:
    if edge < 1:
        raise DomainError(f"edge index must be >= 1, got {edge}")
    return NetworkPoint(int(edge), float(r))


def canonicalize(x: NetworkPoint) -> NetworkPoint:
    """Map ``OnEdge(i, 0)`` to the vertex; every other point is returned unchanged."""
    if x.r == 0.0:
        return VERTEX
    return x


def geodesic_distance(g: JunctionGeometry, x: NetworkPoint, y: NetworkPoint) -> float:
    """Shortest-path distance; paths between different edges go through ``O``."""
    g.validate(x)
    g.validate(y)
    if x.is_vertex or y.is_vertex or x.edge == y.edge:
        return abs(x.r - y.r)
    return x.r + y.r
