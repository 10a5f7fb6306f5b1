"""dtnlab: a numerical laboratory for weighted half-space extensions,
Dirichlet-to-Neumann maps, and the vertical-integral reduction between the
nonlocal and local Calderon-type problems."""

__version__ = "0.1.0"
