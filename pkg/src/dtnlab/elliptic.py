"""Degenerate-weight elliptic solver on the half-space grid.

Discretizes - div( y^(1-2s) A grad u ) with A = diag(a(x'), 1) by a
summation-by-parts finite-difference form: exact weighted measures
int_cell y^(1-2s) dy on vertical edges, corner-quadrature tangential cells
(which reduces to the classical flux form for diagonal coefficients and
stays symmetric for full SPD tensors).  The assembled matrix is the energy
matrix: u^T A u equals the discrete weighted Dirichlet energy, interior rows
are the PDE stencil, and constants are annihilated exactly.

Boundary conditions for the mixed exterior-data problem:
  * bottom trace, exterior nodes (everything but the strict interior of
    omega): Dirichlet, data supplied per tangential node;
  * bottom trace over omega: free (the variational form imposes the zero
    weighted-flux condition naturally);
  * top and lateral faces: homogeneous Dirichlet truncation.

The weighted Neumann trace is recovered by the two-layer fit
u(y) ~ u(0) + c y^(2s) + b y^2 on the first two levels; the reported value is
2s*c per node (so the synthetic field y^(2s) maps to the constant 2s).  The
sign convention for downstream Dirichlet-to-Neumann assembly is documented in
dtn.py.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    DomainError,
    InputError,
    MetricError,
    SolverError,
    TraceExtractionError,
)
from .grid import DomainLayout, ball_cell_fractions

_SPLU_NODE_LIMIT = 400_000


# Metric --------------------------------------------------------------------


@dataclass
class Metric:
    """Per-node tangential coefficient field a(x') with admissibility data.

    a has shape (N_tan, n, n), symmetric positive definite per node, with
    spectrum inside [theta1, 1/theta1] and a = I at every trace node outside
    the strict interior of omega.  `c2_bound` is metadata only (never used in
    assembly).  `gamma` carries the scalar factor for isotropic fields.
    """

    a: np.ndarray
    theta1: float
    c2_bound: float | None = None
    isotropic: bool = False
    gamma: np.ndarray | None = None

    @classmethod
    def identity(cls, layout: DomainLayout) -> "Metric":
        n = layout.n
        a = np.broadcast_to(np.eye(n), (layout.n_tan, n, n)).copy()
        return cls(a=a, theta1=1.0, isotropic=True, gamma=np.ones(layout.n_tan))

    @classmethod
    def isotropic_from_gamma(cls, layout: DomainLayout, gamma: np.ndarray) -> "Metric":
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (layout.n_tan,):
            raise MetricError(
                f"gamma must have shape ({layout.n_tan},), got {gamma.shape}"
            )
        if np.any(gamma <= 0):
            raise MetricError("gamma must be strictly positive")
        n = layout.n
        a = gamma[:, None, None] * np.eye(n)[None, :, :]
        theta1 = float(min(gamma.min(), 1.0 / gamma.max()))
        return cls(a=a, theta1=theta1, isotropic=True, gamma=gamma)

    def validate(self, layout: DomainLayout) -> None:
        n = layout.n
        if self.a.shape != (layout.n_tan, n, n):
            raise MetricError(
                f"coefficient array must have shape ({layout.n_tan}, {n}, {n}), "
                f"got {self.a.shape}"
            )
        if not np.allclose(self.a, np.swapaxes(self.a, 1, 2), atol=1e-12):
            raise MetricError("coefficient tensors must be symmetric")
        evs = np.linalg.eigvalsh(self.a)
        lo, hi = float(evs.min()), float(evs.max())
        if lo < self.theta1 - 1e-12 or hi > 1.0 / self.theta1 + 1e-12:
            raise MetricError(
                f"eigenvalues [{lo:.6g}, {hi:.6g}] escape the admissible band "
                f"[{self.theta1:.6g}, {1.0 / self.theta1:.6g}]"
            )
        outside = ~layout.omega_mask
        eye = np.eye(n)
        dev = np.abs(self.a[outside] - eye[None, :, :]).max() if outside.any() else 0.0
        if dev > 1e-12:
            raise MetricError(
                f"coefficient must equal the identity outside omega "
                f"(max deviation {dev:.3e})"
            )


# Fields --------------------------------------------------------------------


@dataclass
class ExtensionField:
    """Grid function on the full half-space grid, stored (levels, tangential)."""

    values: np.ndarray
    s: float
    layout: DomainLayout = field(repr=False)
    provenance: str = "elliptic-solve"

    @property
    def trace(self) -> np.ndarray:
        return self.values[0]

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise InputError("extension field contains non-finite values")


@dataclass
class TraceField:
    """Weighted Neumann trace values on the trace plane.

    Semantics: the two-layer fit coefficient 2s*c of u ~ u(0) + c y^(2s),
    i.e. lim y^(1-2s) du/dy, *without* any calibration constant.  The
    fractional DtN applies c_s to the negated value (see dtn.py).
    """

    values: np.ndarray
    s: float
    layers: tuple[int, int]


@dataclass
class SolveInfo:
    method: str
    iterations: int
    residual: float
    energy: float


# Assembly ------------------------------------------------------------------


def tangential_stiffness(
    layout: DomainLayout,
    metric: Metric,
    cell_mask: np.ndarray | None = None,
) -> sp.csr_matrix:
    """Corner-quadrature stiffness of the form int grad(u) . a grad(v) dx'.

    For diagonal coefficients this is exactly the flux finite-difference form
    with arithmetically averaged edge coefficients; mixed entries add the
    symmetric cross terms.  Unit vertical measure (callers scale per level).
    cell_mask (tangential cell shape) restricts the quadrature to a subregion,
    e.g. for boundary-value problems posed on an interior box.
    """
    h = layout.hx
    nt = layout.n_tan
    tan_cells = tuple(m - 1 for m in layout.tan_shape)
    if cell_mask is None:
        mask = np.ones(tan_cells)
    else:
        mask = np.asarray(cell_mask, dtype=float)
        if mask.shape != tan_cells:
            raise InputError(
                f"cell mask must have shape {tan_cells}, got {mask.shape}"
            )
    if layout.n == 1:
        a = metric.a[:, 0, 0]
        w = mask * (a[:-1] + a[1:]) / (2.0 * h)
        i = np.arange(nt - 1)
        rows = np.concatenate([i, i + 1, i, i + 1])
        cols = np.concatenate([i, i + 1, i + 1, i])
        vals = np.concatenate([w, w, -w, -w])
        return sp.coo_matrix((vals, (rows, cols)), shape=(nt, nt)).tocsr()

    nx, nz = layout.tan_shape
    axx = metric.a[:, 0, 0].reshape(nx, nz)
    azz = metric.a[:, 1, 1].reshape(nx, nz)
    axy = metric.a[:, 0, 1].reshape(nx, nz)
    cmask = mask.reshape(-1)

    def flat(i, j):
        return (i * nz + j).reshape(-1)

    ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(nz - 1), indexing="ij")
    n00, n10 = flat(ii, jj), flat(ii + 1, jj)
    n01, n11 = flat(ii, jj + 1), flat(ii + 1, jj + 1)

    # Corner table: (corner node, x-edge (A,B), z-edge (C,D)).
    corners = [
        (n00, n00, n10, n00, n01),
        (n10, n00, n10, n10, n11),
        (n01, n01, n11, n00, n01),
        (n11, n01, n11, n10, n11),
    ]
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    for node, ax_a, ax_b, az_c, az_d in corners:
        wxx = cmask * axx.reshape(-1)[node] / 4.0
        wzz = cmask * azz.reshape(-1)[node] / 4.0
        wxy = cmask * axy.reshape(-1)[node] / 4.0
        # (h^2/4) * a_xx * ((uB-uA)/h)^2  ->  weight a_xx/4 on the x edge
        add(ax_a, ax_a, wxx); add(ax_b, ax_b, wxx)
        add(ax_a, ax_b, -wxx); add(ax_b, ax_a, -wxx)
        add(az_c, az_c, wzz); add(az_d, az_d, wzz)
        add(az_c, az_d, -wzz); add(az_d, az_c, -wzz)
        if np.any(wxy):
            # (h^2/4) * 2 a_xy gx gz = (a_xy/2)(uB-uA)(uD-uC), symmetrized
            half = wxy  # = a_xy/4; two symmetric entries of a_xy/4 each
            add(ax_b, az_d, half); add(az_d, ax_b, half)
            add(ax_a, az_c, half); add(az_c, ax_a, half)
            add(ax_b, az_c, -half); add(az_c, ax_b, -half)
            add(ax_a, az_d, -half); add(az_d, ax_a, -half)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.coo_matrix((vals, (rows, cols)), shape=(nt, nt)).tocsr()


@dataclass
class ExtensionOperator:
    """Assembled weighted operator with boundary bookkeeping."""

    layout: DomainLayout
    metric: Metric
    s: float
    matrix: sp.csr_matrix          # full symmetric energy matrix
    free_mask: np.ndarray          # (n_nodes,) bool
    bottom_dirichlet: np.ndarray   # (N_tan,) bool: Dirichlet trace nodes
    _splu: object = field(default=None, repr=False)
    _free_matrix: sp.csr_matrix = field(default=None, repr=False)
    _diag: np.ndarray = field(default=None, repr=False)

    @property
    def n_free(self) -> int:
        return int(self.free_mask.sum())

    def free_matrix(self) -> sp.csr_matrix:
        if self._free_matrix is None:
            f = self.free_mask
            self._free_matrix = self.matrix[f][:, f].tocsr()
        return self._free_matrix

    def factor(self):
        if self._splu is None:
            self._splu = spla.splu(self.free_matrix().tocsc())
        return self._splu

    def jacobi_diag(self) -> np.ndarray:
        if self._diag is None:
            d = self.free_matrix().diagonal()
            if np.any(d <= 0):
                raise SolverError("free block has non-positive diagonal entries")
            self._diag = d
        return self._diag


def assemble_extension_operator(
    layout: DomainLayout,
    metric: Metric,
    *,
    bottom: str = "exterior",
) -> ExtensionOperator:
    """Assemble the weighted operator.

    bottom = "exterior": Dirichlet on exterior trace nodes, free over omega
             (the mixed problem of the laboratory);
    bottom = "all":      Dirichlet on the whole trace plane (pure extension
             problem, used for calibration and cross-validation oracles).
    """
    metric.validate(layout)
    s = layout.s
    nt, nl = layout.n_tan, layout.n_levels

    k_tan = tangential_stiffness(layout, metric)
    a_tan = sp.kron(sp.diags(layout.dual_w), k_tan, format="csr")

    hy = layout.hy
    wv = layout.cell_w / hy**2
    d_vert = sp.diags([np.ones(nl - 1), -np.ones(nl - 1)], [1, 0], shape=(nl - 1, nl))
    k_vert = (d_vert.T @ sp.diags(wv) @ d_vert).tocsr()
    a_vert = sp.kron(k_vert, sp.diags(layout.dual_x), format="csr")

    matrix = (a_tan + a_vert).tocsr()

    if bottom == "exterior":
        bottom_dirichlet = ~layout.omega_mask
    elif bottom == "all":
        bottom_dirichlet = np.ones(nt, dtype=bool)
    else:
        raise InputError(f"unknown bottom condition {bottom!r}")

    free = np.ones(nl * nt, dtype=bool)
    free[(nl - 1) * nt :] = False                     # top cap
    lateral = layout.lateral_mask
    for j in range(nl):
        free[j * nt : (j + 1) * nt][lateral] = False  # lateral faces
    free[:nt][bottom_dirichlet] = False               # exterior trace

    return ExtensionOperator(
        layout=layout,
        metric=metric,
        s=s,
        matrix=matrix,
        free_mask=free,
        bottom_dirichlet=bottom_dirichlet,
    )


# Solvers -------------------------------------------------------------------


def pcg(
    amat: sp.csr_matrix,
    b: np.ndarray,
    diag: np.ndarray,
    tol: float = 1e-10,
    maxiter: int = 20000,
) -> tuple[np.ndarray, int, float]:
    """Jacobi-preconditioned conjugate gradients with fixed iteration order."""
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x, 0, 0.0
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxiter + 1):
        ap = amat @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        res = float(np.linalg.norm(r))
        if res <= tol * bnorm:
            return x, it, res / bnorm
        z = r / diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"PCG did not reach tol {tol:g} in {maxiter} iterations",
        residual=res / bnorm,
    )


def solve_mixed_problem(
    op: ExtensionOperator,
    trace_values: np.ndarray | None = None,
    rhs: np.ndarray | None = None,
    *,
    method: str = "auto",
    tol: float = 1e-10,
    maxiter: int = 20000,
) -> tuple[ExtensionField, SolveInfo]:
    """Solve the mixed problem with exterior Dirichlet data and/or a source.

    trace_values: per-tangential-node Dirichlet data; only values at bottom
    Dirichlet nodes are used (entries over omega are ignored).  rhs: optional
    full-length load functional <source, hat_i> (e.g. from assemble_rhs).
    """
    layout = op.layout
    nt, nl = layout.n_tan, layout.n_levels
    u = np.zeros(nl * nt)
    if trace_values is not None:
        trace_values = np.asarray(trace_values, dtype=float)
        if trace_values.shape != (nt,):
            raise InputError(
                f"trace data must have shape ({nt},), got {trace_values.shape}"
            )
        if not np.all(np.isfinite(trace_values)):
            raise InputError("trace data contains non-finite values")
        u[:nt][op.bottom_dirichlet] = trace_values[op.bottom_dirichlet]

    b = -(op.matrix @ u)
    if rhs is not None:
        if rhs.shape != (nl * nt,):
            raise InputError(f"rhs must have shape ({nl * nt},), got {rhs.shape}")
        b = b + rhs
    bf = b[op.free_mask]

    if method == "auto":
        method = "splu" if op.n_free <= _SPLU_NODE_LIMIT else "pcg"
    if method == "splu":
        lu = op.factor()
        xf = lu.solve(bf)
        xf += lu.solve(bf - op.free_matrix() @ xf)  # one refinement step
        res = float(
            np.linalg.norm(op.free_matrix() @ xf - bf)
            / max(np.linalg.norm(bf), 1e-300)
        )
        iters = 2
        if not np.all(np.isfinite(xf)):
            raise SolverError("direct factorization produced non-finite values")
    elif method == "pcg":
        xf, iters, res = pcg(op.free_matrix(), bf, op.jacobi_diag(), tol, maxiter)
    else:
        raise InputError(f"unknown solver method {method!r}")

    u[op.free_mask] = xf
    energy = float(u @ (op.matrix @ u))
    fld = ExtensionField(
        values=u.reshape(nl, nt), s=op.s, layout=layout, provenance="elliptic-solve"
    )
    return fld, SolveInfo(method=method, iterations=iters, residual=res, energy=energy)


def assemble_rhs(
    layout: DomainLayout,
    scalar: np.ndarray | None = None,
    vector: tuple[np.ndarray, ...] | None = None,
) -> np.ndarray:
    """Load functional for sources against the weight y^(1-2s).

    scalar: field h(x', y) as (levels, N_tan); contributes
            <y^(1-2s) h, hat_i> via lumped dual measures.
    vector: tuple of (levels, N_tan) components (tangential..., vertical);
            contributes <y^(1-2s) H, grad hat_i> via edge-midpoint averages.
    """
    nt, nl = layout.n_tan, layout.n_levels
    b = np.zeros(nl * nt)
    if scalar is not None:
        if scalar.shape != (nl, nt):
            raise InputError(f"scalar source must have shape ({nl}, {nt})")
        b += (scalar * layout.dual_w[:, None] * layout.dual_x[None, :]).reshape(-1)
    if vector is not None:
        if len(vector) != layout.n + 1:
            raise InputError(f"vector source needs {layout.n + 1} components")
        comps = [np.asarray(c, dtype=float) for c in vector]
        for c in comps:
            if c.shape != (nl, nt):
                raise InputError(f"vector components must have shape ({nl}, {nt})")
        bb = b.reshape(nl, nt)
        h = layout.hx
        # Vertical component: sum_cells cell_w * nu_i * H_avg * d(hat)/dy
        hv = comps[-1]
        havg = 0.5 * (hv[1:] + hv[:-1])
        w = layout.cell_w[:, None] / layout.hy[:, None] * layout.dual_x[None, :] * havg
        bb[1:] += w
        bb[:-1] -= w
        # Tangential components, per axis
        if layout.n == 1:
            hx_comp = comps[0]
            avg = 0.5 * (hx_comp[:, 1:] + hx_comp[:, :-1])
            wt = layout.dual_w[:, None] * avg  # cell measure h * (1/h) = 1
            bb[:, 1:] += wt
            bb[:, :-1] -= wt
        else:
            nx, nz = layout.tan_shape
            for axis in range(2):
                comp = comps[axis].reshape(nl, nx, nz)
                if axis == 0:
                    avg = 0.5 * (comp[:, 1:, :] + comp[:, :-1, :])
                    wt = layout.dual_w[:, None, None] * avg * h  # h^2 * (1/h)
                    bbv = bb.reshape(nl, nx, nz)
                    bbv[:, 1:, :] += wt
                    bbv[:, :-1, :] -= wt
                else:
                    avg = 0.5 * (comp[:, :, 1:] + comp[:, :, :-1])
                    wt = layout.dual_w[:, None, None] * avg * h
                    bbv = bb.reshape(nl, nx, nz)
                    bbv[:, :, 1:] += wt
                    bbv[:, :, :-1] -= wt
    return b


# Trace extraction ----------------------------------------------------------


def weighted_neumann_trace(
    fld: ExtensionField,
    layers: tuple[int, int] = (1, 2),
) -> TraceField:
    """Two-layer fit of the weighted normal derivative on the trace plane.

    Fits u(y) ~ u(0) + c y^(2s) + b y^2 through levels `layers` and returns
    2s*c per tangential node.  The quadratic term absorbs the leading smooth
    correction; for s = 1/2 the fit is the exact (y, y^2) Vandermonde.
    """
    fld.check_finite()
    layout = fld.layout
    s = fld.s
    j1, j2 = layers
    if not (0 < j1 < j2 < layout.n_levels):
        raise TraceExtractionError(f"invalid fit layers {layers}")
    y1, y2 = layout.y[j1], layout.y[j2]
    vand = np.array([[y1 ** (2 * s), y1**2], [y2 ** (2 * s), y2**2]])
    det = float(np.linalg.det(vand))
    scale = float(np.abs(vand).max()) ** 2
    if abs(det) <= 1e-12 * scale:
        raise TraceExtractionError(
            f"two-layer fit is degenerate at layers {layers} "
            f"(y1={y1:.3e}, y2={y2:.3e}, s={s})"
        )
    d1 = fld.values[j1] - fld.values[0]
    d2 = fld.values[j2] - fld.values[0]
    inv = np.linalg.inv(vand)
    c = inv[0, 0] * d1 + inv[0, 1] * d2
    return TraceField(values=2.0 * s * c, s=s, layers=(j1, j2))


# Norms and checks ----------------------------------------------------------


def _region_cell_weights(layout: DomainLayout, region_mask: np.ndarray | None) -> np.ndarray:
    """Tangential per-node weights from cells fully inside the region."""
    if region_mask is None:
        return layout.dual_x
    from .sobolev import _cell_counted_mass  # shared cell-spreading rule

    included = np.arange(layout.n_tan)
    w = np.zeros(layout.n_tan)
    vals = _cell_counted_mass(layout, region_mask, included)
    w[:] = vals
    return w


def weighted_norm(
    fld: ExtensionField,
    region_mask: np.ndarray | None = None,
    y_range: tuple[float, float] | None = None,
) -> float:
    """Weighted L^2 norm ||y^((1-2s)/2) u|| over (region) x (y-range).

    With no restrictions this is exact for constants:
    ||1||^2 = |D| * Y^(2-2s)/(2-2s).
    """
    fld.check_finite()
    layout = fld.layout
    wx = _region_cell_weights(layout, region_mask)
    if y_range is None:
        wy = layout.dual_w
    else:
        y0, y1 = y_range
        if not 0.0 <= y0 < y1 <= layout.y[-1] + 1e-12:
            raise DomainError(f"invalid y-range {y_range}")
        p = 2.0 - 2.0 * fld.s
        lo = np.clip(layout.y[:-1], y0, y1)
        hi = np.clip(layout.y[1:], y0, y1)
        cw = (hi**p - lo**p) / p
        wy = np.zeros(layout.n_levels)
        wy[:-1] += cw / 2.0
        wy[1:] += cw / 2.0
    val = np.einsum("j,i,ji->", wy, wx, fld.values**2)
    return math.sqrt(max(val, 0.0))


def cell_gradients(fld: ExtensionField) -> tuple[np.ndarray, ...]:
    """Cell-centered gradient components (face-averaged differences)."""
    layout = fld.layout
    h = layout.hx
    hy = layout.hy
    if layout.n == 1:
        u = fld.values  # (levels, nx)
        gx = 0.5 * ((u[:-1, 1:] - u[:-1, :-1]) + (u[1:, 1:] - u[1:, :-1])) / h
        gy = 0.5 * ((u[1:, :-1] - u[:-1, :-1]) + (u[1:, 1:] - u[:-1, 1:])) / hy[:, None]
        return gx, gy
    nx, nz = layout.tan_shape
    u = fld.values.reshape(layout.n_levels, nx, nz)
    gx = 0.25 * (
        (u[:-1, 1:, :-1] - u[:-1, :-1, :-1])
        + (u[:-1, 1:, 1:] - u[:-1, :-1, 1:])
        + (u[1:, 1:, :-1] - u[1:, :-1, :-1])
        + (u[1:, 1:, 1:] - u[1:, :-1, 1:])
    ) / h
    gz = 0.25 * (
        (u[:-1, :-1, 1:] - u[:-1, :-1, :-1])
        + (u[:-1, 1:, 1:] - u[:-1, 1:, :-1])
        + (u[1:, :-1, 1:] - u[1:, :-1, :-1])
        + (u[1:, 1:, 1:] - u[1:, 1:, :-1])
    ) / h
    gy = 0.25 * (
        (u[1:, :-1, :-1] - u[:-1, :-1, :-1])
        + (u[1:, 1:, :-1] - u[:-1, 1:, :-1])
        + (u[1:, :-1, 1:] - u[:-1, :-1, 1:])
        + (u[1:, 1:, 1:] - u[:-1, 1:, 1:])
    ) / hy[:, None, None]
    return gx, gz, gy


def _cell_measures(layout: DomainLayout) -> np.ndarray:
    """Weighted (n+1)-cell measures, shape (M, *tan cells)."""
    h = layout.hx
    tan_cells = tuple(m - 1 for m in layout.tan_shape)
    tan_vol = h**layout.n
    return layout.cell_w.reshape((-1,) + (1,) * layout.n) * np.full(tan_cells, tan_vol)


def _cell_average(fld: ExtensionField) -> np.ndarray:
    layout = fld.layout
    if layout.n == 1:
        u = fld.values
        return 0.25 * (u[:-1, :-1] + u[:-1, 1:] + u[1:, :-1] + u[1:, 1:])
    nx, nz = layout.tan_shape
    u = fld.values.reshape(layout.n_levels, nx, nz)
    return 0.125 * (
        u[:-1, :-1, :-1] + u[:-1, 1:, :-1] + u[:-1, :-1, 1:] + u[:-1, 1:, 1:]
        + u[1:, :-1, :-1] + u[1:, 1:, :-1] + u[1:, :-1, 1:] + u[1:, 1:, 1:]
    )


def ball_weighted_norm_sq(fld: ExtensionField, center: np.ndarray, radius: float) -> float:
    """|| y^((1-2s)/2) u ||^2 over a rasterized ball (cell-averaged values)."""
    frac = ball_cell_fractions(fld.layout, center, radius)
    meas = _cell_measures(fld.layout)
    avg = _cell_average(fld)
    return float(np.sum(frac * meas * avg**2))


def ball_weighted_gradient_sq(fld: ExtensionField, center: np.ndarray, radius: float) -> float:
    """|| y^((1-2s)/2) grad u ||^2 over a rasterized ball."""
    frac = ball_cell_fractions(fld.layout, center, radius)
    meas = _cell_measures(fld.layout)
    grads = cell_gradients(fld)
    g2 = sum(g**2 for g in grads)
    return float(np.sum(frac * meas * g2))


@dataclass
class CaccioppoliReport:
    lhs: float
    rhs: float
    c_emp: float
    radius: float
    center: np.ndarray


def caccioppoli_check(
    fld: ExtensionField,
    center: np.ndarray,
    radius: float,
    rhs_scalar: ExtensionField | None = None,
    rhs_vector: tuple[np.ndarray, ...] | None = None,
) -> CaccioppoliReport:
    """Empirical constant for the energy bound on concentric balls.

    lhs = weighted gradient energy over B_r;
    rhs = r^-2 * weighted L^2 over B_2r plus the weighted L^2 of the scalar
    and vector source data over B_2r.  c_emp = lhs / rhs.
    """
    center = np.asarray(center, dtype=float)
    lhs = ball_weighted_gradient_sq(fld, center, radius)
    rhs = ball_weighted_norm_sq(fld, center, 2.0 * radius) / radius**2
    if rhs_scalar is not None:
        rhs += ball_weighted_norm_sq(rhs_scalar, center, 2.0 * radius)
    if rhs_vector is not None:
        layout = fld.layout
        frac = ball_cell_fractions(layout, center, 2.0 * radius)
        meas = _cell_measures(layout)
        for comp in rhs_vector:
            cf = ExtensionField(values=comp, s=fld.s, layout=layout, provenance="synthetic")
            rhs += float(np.sum(frac * meas * _cell_average(cf) ** 2))
    if rhs <= 0.0:
        raise InputError("caccioppoli check: vanishing right-hand side")
    return CaccioppoliReport(
        lhs=lhs, rhs=rhs, c_emp=lhs / rhs, radius=radius, center=center
    )
