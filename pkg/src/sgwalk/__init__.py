"""Random walks, Green functions and energy forms on the Sierpinski graph."""

from .address import LatticePoint, Word, as_word, boundary_point, cell_vertices, vertex_point
from .conductance import ConductanceParams, WeightedGraph
from .graph import EdgeKind, Graph, build_graph

__version__ = "0.1.0"

__all__ = [
    "ConductanceParams",
    "EdgeKind",
    "Graph",
    "LatticePoint",
    "WeightedGraph",
    "Word",
    "as_word",
    "boundary_point",
    "build_graph",
    "cell_vertices",
    "vertex_point",
]
