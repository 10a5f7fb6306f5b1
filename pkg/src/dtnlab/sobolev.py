"""Discrete Sobolev scales on node sets: Gram matrices and dual norms.

A NodeSet carries a lumped mass (cell measures) and a graph stiffness
(finite-difference Dirichlet form with natural boundary).  The order-r Gram
is the functional calculus (I + L_h)^r of the generalized eigenproblem
K phi = lambda M phi, represented so that

    G_r = M Phi (1 + lambda)^r Phi^T M,          Phi^T M Phi = I.

Order r = 0 reproduces the diagonal mass matrix exactly; r = +/-1/2 are the
trace-space surrogates; r = +/-1 serve the H^1 / H^-1 pairings.  All
eigendecompositions are dense (node sets are small by construction) and are
cached per node set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import InputError
from .grid import DomainLayout

_MAX_ORDER = 2.0


@dataclass
class NodeSet:
    """A finite node set with mass, adjacency, and stiffness weights.

    edges index into the node set (local indices).  `kind` records how the
    set was built; boundary pairs in one tangential dimension are allowed to
    be edgeless (their Sobolev scale collapses to the mass inner product).
    """

    kind: str
    indices: np.ndarray          # indices into the layout's tangential nodes
    coords: np.ndarray           # (N, n)
    mass: np.ndarray             # (N,) positive lumped measures
    edges: np.ndarray            # (E, 2) int
    edge_w: np.ndarray           # (E,) stiffness weights
    _eig: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.indices)

    def validate(self) -> None:
        if len(self.indices) == 0:
            raise InputError("empty node set")
        if np.any(self.mass <= 0):
            raise InputError("node set has nodes with non-positive mass")
        n = len(self.indices)
        if len(self.edges):
            graph = sp.coo_matrix(
                (np.ones(len(self.edges)), (self.edges[:, 0], self.edges[:, 1])),
                shape=(n, n),
            )
            ncomp, _ = connected_components(graph, directed=False)
            if ncomp != 1:
                raise InputError(
                    f"node set of kind {self.kind!r} is disconnected "
                    f"({ncomp} components)"
                )
        elif n > 2 or self.kind != "boundary_loop":
            raise InputError(
                f"node set of kind {self.kind!r} with {n} nodes has no edges"
            )

    # -- spectral data ------------------------------------------------------

    def stiffness(self) -> np.ndarray:
        n = len(self.indices)
        k = np.zeros((n, n))
        if len(self.edges):
            i, j = self.edges[:, 0], self.edges[:, 1]
            np.add.at(k, (i, i), self.edge_w)
            np.add.at(k, (j, j), self.edge_w)
            np.add.at(k, (i, j), -self.edge_w)
            np.add.at(k, (j, i), -self.edge_w)
        return k

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Generalized eigenpairs (lambda, Phi) with Phi^T M Phi = I."""
        if self._eig is None:
            k = self.stiffness()
            m = np.diag(self.mass)
            lam, phi = scipy.linalg.eigh(k, m)
            lam = np.clip(lam, 0.0, None)  # graph Laplacian: clip tiny negatives
            self._eig = (lam, phi)
        return self._eig


@dataclass
class Gram:
    """Order-r Gram matrix on a node set, with factored forms."""

    node_set: NodeSet
    order: float
    matrix: np.ndarray

    def norm(self, values: np.ndarray) -> float:
        """Sobolev norm of nodal values: sqrt(v^T G_r v)."""
        lam, phi = self.node_set.eig()
        w = (1.0 + lam) ** (self.order / 2.0) * (phi.T @ (self.node_set.mass * values))
        return float(np.linalg.norm(w))

    def dual_norm(self, pairing: np.ndarray) -> float:
        """Dual norm of a functional given by duality-pairing values.

        If `pairing` holds <F, hat_i> then this returns the norm of F in the
        dual of the order-r space: || (1+lambda)^{-r/2} Phi^T pairing ||.
        """
        lam, phi = self.node_set.eig()
        w = (1.0 + lam) ** (-self.order / 2.0) * (phi.T @ pairing)
        return float(np.linalg.norm(w))

    def half_factor(self) -> np.ndarray:
        """R with R^T R = G_r; here R = (1+lambda)^{r/2} Phi^T M."""
        lam, phi = self.node_set.eig()
        return ((1.0 + lam) ** (self.order / 2.0))[:, None] * (phi.T * self.node_set.mass)

    def inverse_half_factor(self) -> np.ndarray:
        """R^{-1} = Phi (1+lambda)^{-r/2} (so G_r^{-1} = R^{-1} R^{-T})."""
        lam, phi = self.node_set.eig()
        return phi * ((1.0 + lam) ** (-self.order / 2.0))[None, :]


def gram_matrix(node_set: NodeSet, order: float) -> Gram:
    """Gram of order r in [-2, 2] on the node set.

    r = 0 returns the diagonal mass matrix exactly (no functional calculus).
    """
    if abs(order) > _MAX_ORDER:
        raise InputError(f"Gram order must satisfy |r| <= {_MAX_ORDER}, got {order}")
    node_set.validate()
    if order == 0.0:
        return Gram(node_set, 0.0, np.diag(node_set.mass))
    lam, phi = node_set.eig()
    m = node_set.mass
    core = phi * ((1.0 + lam) ** order)[None, :]
    matrix = (m[:, None] * (core @ phi.T)) * m[None, :]
    matrix = 0.5 * (matrix + matrix.T)
    return Gram(node_set, order, matrix)


def dual_operator_norm(op_matrix: np.ndarray, gram_src: Gram, gram_tgt: Gram) -> float:
    """Largest singular value of G_tgt^{-1/2} . op . G_src^{-1/2}.

    `op_matrix` must be the duality-pairing form of the operator: entry (i, j)
    is <A basis_j, basis_i> (mass-weighted output values).  `gram_tgt` is the
    Gram of the predual of the target space, so for an operator into H^{-s}
    pass the order +s Gram on the target node set.
    """
    if op_matrix.shape != (len(gram_tgt.node_set), len(gram_src.node_set)):
        raise InputError(
            f"operator shape {op_matrix.shape} does not match node sets "
            f"({len(gram_tgt.node_set)}, {len(gram_src.node_set)})"
        )
    lam_t, phi_t = gram_tgt.node_set.eig()
    left = ((1.0 + lam_t) ** (-gram_tgt.order / 2.0))[:, None] * phi_t.T
    right = gram_src.inverse_half_factor()
    core = left @ op_matrix @ right
    return float(np.linalg.svd(core, compute_uv=False)[0])


def h_minus_one_norm(values: np.ndarray, node_set: NodeSet) -> float:
    """H^{-1} norm of nodal values via the order -1 Gram."""
    if len(values) != len(node_set):
        raise InputError("value vector length does not match node set")
    if not np.all(np.isfinite(values)):
        raise InputError("non-finite values in H^{-1} norm input")
    lam, phi = node_set.eig()
    w = (1.0 + lam) ** (-0.5) * (phi.T @ (node_set.mass * values))
    return float(np.linalg.norm(w))


# Node-set builders ---------------------------------------------------------


def _tangential_edges(layout: DomainLayout, mask: np.ndarray):
    """Edges between grid-adjacent included tangential nodes."""
    shape = layout.tan_shape
    idx_grid = -np.ones(shape, dtype=np.int64)
    included = np.nonzero(mask)[0]
    local = {g: l for l, g in enumerate(included)}
    flat_mask = mask.reshape(shape)
    idx_grid[flat_mask] = np.arange(len(included))
    edges = []
    if layout.n == 1:
        for i in range(shape[0] - 1):
            if flat_mask[i] and flat_mask[i + 1]:
                edges.append((idx_grid[i], idx_grid[i + 1]))
    else:
        for i in range(shape[0]):
            for j in range(shape[1]):
                if not flat_mask[i, j]:
                    continue
                if i + 1 < shape[0] and flat_mask[i + 1, j]:
                    edges.append((idx_grid[i, j], idx_grid[i + 1, j]))
                if j + 1 < shape[1] and flat_mask[i, j + 1]:
                    edges.append((idx_grid[i, j], idx_grid[i, j + 1]))
    edges = np.array(edges, dtype=np.int64) if edges else np.zeros((0, 2), dtype=np.int64)
    return included, edges, local


def _cell_counted_mass(layout: DomainLayout, mask: np.ndarray, included: np.ndarray) -> np.ndarray:
    """Per-node mass: each fully-included tangential cell spreads h^n evenly."""
    shape = layout.tan_shape
    h = layout.hx
    flat_mask = mask.reshape(shape)
    contrib = np.zeros(shape)
    if layout.n == 1:
        both = flat_mask[:-1] & flat_mask[1:]
        contrib[:-1][both] += h / 2.0
        contrib[1:][both] += h / 2.0
    else:
        inc = (
            flat_mask[:-1, :-1]
            & flat_mask[1:, :-1]
            & flat_mask[:-1, 1:]
            & flat_mask[1:, 1:]
        )
        q = h * h / 4.0
        for di in (0, 1):
            for dj in (0, 1):
                view = contrib[di : shape[0] - 1 + di, dj : shape[1] - 1 + dj]
                view[inc] += q
    return contrib.reshape(-1)[included]


def trace_nodeset(layout: DomainLayout, mask: np.ndarray, kind: str = "trace_patch") -> NodeSet:
    """Node set on tangential trace nodes selected by a boolean mask."""
    if mask.dtype != bool or len(mask) != layout.n_tan:
        raise InputError("mask must be a boolean array over tangential nodes")
    if not mask.any():
        raise InputError("empty trace node set")
    included, edges, _ = _tangential_edges(layout, mask)
    mass = _cell_counted_mass(layout, mask, included)
    if np.any(mass <= 0):
        raise InputError(
            "trace node set contains nodes with no included neighbor cell "
            "(isolated or degenerate set)"
        )
    h = layout.hx
    edge_w = np.full(len(edges), h ** (layout.n - 2), dtype=float)
    ns = NodeSet(
        kind=kind,
        indices=included,
        coords=layout.coords[included],
        mass=mass,
        edges=edges,
        edge_w=edge_w,
    )
    ns.validate()
    return ns


def boundary_loop_nodeset(layout: DomainLayout, box) -> NodeSet:
    """Ordered cyclic node set on the edges of an axis-aligned box.

    For one tangential dimension the "loop" degenerates to the two endpoints
    with unit counting measure and no edges.
    """
    tol = 1e-9 * max(1.0, layout.hx)
    if layout.n == 1:
        (lo, hi) = box[0]
        xs = layout.axes[0]
        ilo = int(np.argmin(np.abs(xs - lo)))
        ihi = int(np.argmin(np.abs(xs - hi)))
        if abs(xs[ilo] - lo) > tol or abs(xs[ihi] - hi) > tol:
            raise InputError(f"box endpoints {box} do not lie on grid nodes")
        indices = np.array([ilo, ihi], dtype=np.int64)
        ns = NodeSet(
            kind="boundary_loop",
            indices=indices,
            coords=layout.coords[indices],
            mass=np.ones(2),
            edges=np.zeros((0, 2), dtype=np.int64),
            edge_w=np.zeros(0),
        )
        ns.validate()
        return ns

    (x0, x1), (z0, z1) = box
    xs, zs = layout.axes
    nx, nz = layout.tan_shape

    def axis_index(axis_vals, value):
        k = int(np.argmin(np.abs(axis_vals - value)))
        if abs(axis_vals[k] - value) > tol:
            raise InputError(f"box coordinate {value} does not lie on a grid line")
        return k

    i0, i1 = axis_index(xs, x0), axis_index(xs, x1)
    j0, j1 = axis_index(zs, z0), axis_index(zs, z1)
    if i1 - i0 < 2 or j1 - j0 < 2:
        raise InputError("boundary loop box must span at least two cells per axis")

    def flat(i, j):
        return i * nz + j

    loop = []
    loop.extend(flat(i, j0) for i in range(i0, i1))          # bottom, left->right
    loop.extend(flat(i1, j) for j in range(j0, j1))          # right, up
    loop.extend(flat(i, j1) for i in range(i1, i0, -1))      # top, right->left
    loop.extend(flat(i0, j) for j in range(j1, j0, -1))      # left, down
    indices = np.array(loop, dtype=np.int64)
    npts = len(indices)
    h = layout.hx
    edges = np.column_stack([np.arange(npts), (np.arange(npts) + 1) % npts]).astype(np.int64)
    ns = NodeSet(
        kind="boundary_loop",
        indices=indices,
        coords=layout.coords[indices],
        mass=np.full(npts, h),
        edges=edges,
        edge_w=np.full(npts, 1.0 / h),
    )
    ns.validate()
    return ns
