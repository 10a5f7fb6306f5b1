"""Dirichlet-to-Neumann matrices: fractional, local, and Schrodinger.

All matrices are stored in duality-pairing form: for sources g1 and targets
g2 given as node values, g2^T B g1 is the bilinear pairing <Lambda g1, g2>.
Value-form output (the operator applied to data, sampled at target nodes)
is the pairing matrix with the target mass divided out.

Fractional map: column j solves the mixed exterior-data problem with a hat
datum at the j-th data-window node and reads off the variational weighted
flux (the residual of the energy form at trace rows).  That extraction makes
the pairing matrix symmetric up to solver tolerance, and the calibration
constant absorbs the first-cell bias of representing the y^(2s) boundary
layer in the vertical basis; the calibrated constant is compared against the
closed form 2^(2s-1) Gamma(s)/Gamma(1-s) in the report.

Local and Schrodinger maps live on the tangential slice: the weak form over
the first enlargement box, condensed to its boundary nodes by a Schur
complement, which is exactly the discrete-harmonic-extension energy.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import gamma as gamma_fn

from .elliptic import (
    ExtensionField,
    ExtensionOperator,
    Metric,
    assemble_extension_operator,
    solve_mixed_problem,
    tangential_stiffness,
)
from .errors import (
    CalibrationError,
    EigenvalueCollisionError,
    GeometryError,
    InputError,
    NumericError,
    SolverError,
)
from .grid import Box, DomainLayout, GridSpec, RegionSpec, build_grid
from .sobolev import _cell_counted_mass, boundary_loop_nodeset


def closed_form_constant(s: float) -> float:
    """Closed-form normalization 2^(2s-1) Gamma(s) / Gamma(1-s)."""
    if not 0.0 < s < 1.0:
        raise InputError(f"s must lie in (0, 1), got {s}")
    return 2.0 ** (2.0 * s - 1.0) * gamma_fn(s) / gamma_fn(1.0 - s)


def metric_fingerprint(layout: DomainLayout, metric: Metric) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(metric.a).tobytes())
    h.update(np.float64(layout.s).tobytes())
    h.update(repr(layout.tan_shape).encode())
    h.update(np.float64(layout.y[-1]).tobytes())
    return h.hexdigest()[:16]


@dataclass
class DtnMatrix:
    """Duality-pairing matrix of a DtN map on hat-function bases."""

    matrix: np.ndarray          # (n_target, n_source) pairing form
    source_order: float
    target_order: float
    source_nodes: np.ndarray    # tangential node indices
    target_nodes: np.ndarray
    target_mass: np.ndarray     # (n_target,) boundary/trace mass weights
    kind: str                   # fractional | local | schrodinger
    fingerprint: str
    c_s: float | None = None

    @property
    def n_source(self) -> int:
        return int(self.source_nodes.size)

    @property
    def n_target(self) -> int:
        return int(self.target_nodes.size)

    def pairing(self, g1: np.ndarray, g2: np.ndarray) -> float:
        """<Lambda g1, g2> for node-value vectors on source/target sets."""
        return float(g2 @ (self.matrix @ g1))

    def apply_values(self, g: np.ndarray) -> np.ndarray:
        """Operator output as values at the target nodes."""
        return (self.matrix @ g) / self.target_mass

    def symmetry_defect(self) -> float:
        """Relative asymmetry of the pairing matrix (square maps only)."""
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise InputError("symmetry defect requires a square matrix")
        scale = float(np.abs(self.matrix).max())
        if scale == 0.0:
            return 0.0
        return float(np.abs(self.matrix - self.matrix.T).max()) / scale


# Fractional map ------------------------------------------------------------


def variational_neumann_values(
    op: ExtensionOperator,
    fld: ExtensionField,
    rhs: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted flux at the trace plane from the energy-form residual.

    Returns (A u - b) at trace rows divided by the trace mass: the discrete
    counterpart of lim y^(1-2s) d_y u as a values field.  Positive on data
    that the fractional operator maps to positive values (for example the
    reaction of sin(kx) under a = I is +|k|^(2s)-like), so no extra sign is
    applied downstream.
    """
    nt = op.layout.n_tan
    resid = op.matrix @ fld.values.reshape(-1)
    if rhs is not None:
        resid = resid - rhs
    return resid[:nt] / op.layout.dual_x


def fractional_dtn_matrix(
    layout: DomainLayout,
    metric: Metric,
    *,
    c_s: float | None = None,
    method: str = "splu",
) -> DtnMatrix:
    """Fractional DtN on hat data at the data-window trace nodes.

    Column j: solve the mixed problem with a unit hat at window node j (zero
    on the rest of the exterior trace, natural condition over omega), then
    read the variational weighted flux at the window nodes and scale by the
    calibration constant.  Pairing form: B_ij = c_s * mass_i * flux_i(e_j).
    """
    if c_s is None:
        c_s = calibrated_constant(layout.s)
    if c_s <= 0:
        raise InputError(f"calibration constant must be positive, got {c_s}")
    window = np.flatnonzero(layout.window_mask)
    if window.size == 0:
        raise GeometryError("layout has no data-window trace nodes")
    op = assemble_extension_operator(layout, metric)
    nt = layout.n_tan
    cols = np.zeros((window.size, window.size))
    for jc, node in enumerate(window):
        data = np.zeros(nt)
        data[node] = 1.0
        try:
            fld, _ = solve_mixed_problem(op, trace_values=data, method=method)
        except SolverError as exc:
            raise SolverError(
                f"fractional DtN column {jc} (node {node}) failed: {exc}"
            ) from exc
        flux = variational_neumann_values(op, fld)
        cols[:, jc] = c_s * layout.dual_x[window] * flux[window]
    return DtnMatrix(
        matrix=cols,
        source_order=layout.s,
        target_order=-layout.s,
        source_nodes=window,
        target_nodes=window.copy(),
        target_mass=layout.dual_x[window].copy(),
        kind="fractional",
        fingerprint=metric_fingerprint(layout, metric),
        c_s=c_s,
    )


# Local maps on the tangential slice ----------------------------------------


def _single_box(boxes: tuple[Box, ...], name: str) -> Box:
    if len(boxes) != 1:
        raise InputError(f"{name} must be a single box for boundary problems")
    return boxes[0]


def _omega1_sets(layout: DomainLayout, box: Box | None = None):
    """(ordered boundary nodes, boundary mass, interior nodes, cell mask)."""
    if box is None:
        box = _single_box(layout.regions.omega_one, "the first enlargement")
    loop = boundary_loop_nodeset(layout, box)
    # Box edges need not be binary-exact grid coordinates, so the open-box
    # test can misclassify edge nodes by one ulp; the loop nodes are
    # authoritative and must never appear in the condensed interior.
    interior_mask = layout.strict_interior_mask((box,))
    interior_mask[loop.indices] = False
    interior = np.flatnonzero(interior_mask)
    closed = layout.closed_mask((box,))
    if layout.n == 1:
        cells = closed[:-1] & closed[1:]
    else:
        nx, nz = layout.tan_shape
        c2 = closed.reshape(nx, nz)
        cells = c2[:-1, :-1] & c2[1:, :-1] & c2[:-1, 1:] & c2[1:, 1:]
    return loop.indices, loop.mass, interior, cells


def _schur_condense(
    k_sub: sp.csr_matrix,
    boundary: np.ndarray,
    interior: np.ndarray,
    extra_diag: np.ndarray | None = None,
    solver: str = "splu",
):
    """Boundary Schur complement of the (stiffness + diagonal) form.

    Returns (B, solve_interior) where B = K_bb - K_bi K_ii^{-1} K_ib and
    solve_interior(g) is the discrete harmonic interior extension of g.
    """
    if extra_diag is not None:
        k_sub = k_sub + sp.diags(extra_diag)
    k_bb = k_sub[boundary][:, boundary].toarray()
    k_bi = k_sub[boundary][:, interior].toarray()
    k_ib = k_sub[interior][:, boundary].toarray()
    k_ii = k_sub[interior][:, interior]
    if solver == "dense":
        x = np.linalg.solve(k_ii.toarray(), k_ib)
        def solve_interior(g: np.ndarray) -> np.ndarray:
            return -np.linalg.solve(k_ii.toarray(), k_ib @ g)
    elif solver == "splu":
        lu = spla.splu(k_ii.tocsc())
        x = np.column_stack([lu.solve(k_ib[:, j]) for j in range(k_ib.shape[1])])
        def solve_interior(g: np.ndarray) -> np.ndarray:
            return -lu.solve(k_ib @ g)
    else:
        raise InputError(f"unknown solver {solver!r}")
    return k_bb - k_bi @ x, solve_interior


def local_dtn_matrix(
    layout: DomainLayout,
    metric: Metric,
    *,
    box: Box | None = None,
    solver: str = "splu",
) -> DtnMatrix:
    """Local DtN of div(a grad v) = 0 on a box (default: first enlargement).

    Entries realize the weak form int_box grad(v^{g1}) . a grad(e^{g2}) with
    the discrete harmonic extension; the Schur complement of the masked
    stiffness is exactly that bilinear form on boundary hat functions.
    """
    metric.validate(layout)
    boundary, mass, interior, cells = _omega1_sets(layout, box)
    k_sub = tangential_stiffness(layout, metric, cell_mask=cells)
    b_mat, _ = _schur_condense(k_sub, boundary, interior, solver=solver)
    return DtnMatrix(
        matrix=b_mat,
        source_order=0.5,
        target_order=-0.5,
        source_nodes=boundary,
        target_nodes=boundary.copy(),
        target_mass=mass.copy(),
        kind="local",
        fingerprint=metric_fingerprint(layout, metric),
    )


def schrodinger_dtn_matrix(
    layout: DomainLayout,
    q: np.ndarray,
    *,
    solver: str = "splu",
    eigenvalue_floor: float = 1e-8,
) -> DtnMatrix:
    """DtN of (-Laplace + q) w = 0 on the first enlargement box.

    The potential enters through the lumped cell mass restricted to the box.
    Guard: the interior operator must not be (near-)singular; the smallest
    generalized eigenvalue magnitude below eigenvalue_floor raises an
    eigenvalue-collision error, since condensation divides by it.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (layout.n_tan,):
        raise InputError(f"potential must have shape ({layout.n_tan},), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise InputError("potential contains non-finite values")
    boundary, mass, interior, cells = _omega1_sets(layout)
    met = Metric.identity(layout)
    k_sub = tangential_stiffness(layout, met, cell_mask=cells)
    closed = np.zeros(layout.n_tan, dtype=bool)
    closed[boundary] = True
    closed[interior] = True
    cell_mass = _cell_counted_mass(layout, closed, np.arange(layout.n_tan))
    mq = q * cell_mass

    k_ii = (k_sub + sp.diags(mq))[interior][:, interior]
    m_ii = cell_mass[interior]
    if interior.size <= 400:
        evals = np.linalg.eigvalsh(
            k_ii.toarray() / np.sqrt(np.outer(m_ii, m_ii))
        )
        lam_min = float(np.abs(evals).min())
    else:
        msqrt = sp.diags(1.0 / np.sqrt(m_ii))
        sym = (msqrt @ k_ii @ msqrt).tocsc()
        try:
            lam = spla.eigsh(
                sym, k=1, sigma=0.0, which="LM", return_eigenvectors=False
            )
            lam_min = float(np.abs(lam[0]))
        except RuntimeError as exc:  # factorization hit an exact singularity
            raise EigenvalueCollisionError(
                f"interior Schrodinger operator is singular: {exc}"
            ) from exc
    if lam_min < eigenvalue_floor:
        raise EigenvalueCollisionError(
            f"smallest interior eigenvalue magnitude {lam_min:.3e} is below "
            f"the floor {eigenvalue_floor:g}; zero is (numerically) a "
            "Dirichlet eigenvalue of the Schrodinger operator"
        )
    b_mat, _ = _schur_condense(k_sub, boundary, interior, extra_diag=mq, solver=solver)
    return DtnMatrix(
        matrix=b_mat,
        source_order=0.5,
        target_order=-0.5,
        source_nodes=boundary,
        target_nodes=boundary.copy(),
        target_mass=mass.copy(),
        kind="schrodinger",
        fingerprint=hashlib.sha256(q.tobytes()).hexdigest()[:16],
    )


def dtn_eigenvalues(dtn: DtnMatrix, count: int | None = None) -> np.ndarray:
    """Generalized eigenvalues of the pairing form against the boundary mass
    (the discrete Steklov spectrum), ascending."""
    import scipy.linalg as sla

    vals = sla.eigh(
        dtn.matrix, np.diag(dtn.target_mass), eigvals_only=True
    )
    return vals if count is None else vals[:count]


# Alessandrini identity ------------------------------------------------------


def alessandrini_residual(
    layout: DomainLayout,
    metric1: Metric,
    metric2: Metric,
    g1: np.ndarray,
    g2: np.ndarray,
    *,
    solver: str = "splu",
) -> float:
    """Defect of the DtN-difference identity on the first enlargement box.

    |<(Lambda_1 - Lambda_2) g1, g2> - v1^T (K_1 - K_2) v2| / scale, where
    v_i is the discrete a_i-harmonic extension of g_i and K_i the masked
    stiffness: the volume term evaluated in the assembled forms, so the
    identity holds to solver tolerance.  Both metrics equal the identity
    outside omega by admissibility, matching the identity's hypothesis.
    """
    metric1.validate(layout)
    metric2.validate(layout)
    boundary, mass, interior, cells = _omega1_sets(layout)
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    if g1.shape != (boundary.size,) or g2.shape != (boundary.size,):
        raise InputError(
            f"boundary data must have shape ({boundary.size},), got "
            f"{g1.shape} and {g2.shape}"
        )
    k1 = tangential_stiffness(layout, metric1, cell_mask=cells)
    k2 = tangential_stiffness(layout, metric2, cell_mask=cells)
    b1, ext1 = _schur_condense(k1, boundary, interior, solver=solver)
    b2, ext2 = _schur_condense(k2, boundary, interior, solver=solver)

    pair1 = float(g2 @ (b1 @ g1))
    pair2 = float(g2 @ (b2 @ g1))

    v1 = np.zeros(layout.n_tan)
    v1[boundary] = g1
    v1[interior] = ext1(g1)
    v2 = np.zeros(layout.n_tan)
    v2[boundary] = g2
    v2[interior] = ext2(g2)
    volume = float(v2 @ ((k1 - k2) @ v1))

    defect = abs((pair1 - pair2) - volume)
    scale = max(abs(pair1), abs(pair2), abs(volume), 1e-30)
    return defect / scale


# Calibration ----------------------------------------------------------------


@dataclass
class CalibrationReport:
    estimate: float
    reference: float              # closed form 2^(2s-1) Gamma(s)/Gamma(1-s)
    s: float
    fit_modes: tuple[int, ...]
    mode_errors: dict[int, float] # per-mode relative symbol error, calibrated
    raw_symbols: dict[int, float] # uncalibrated flux projections

    def validate(self) -> None:
        if self.estimate <= 0:
            raise CalibrationError("calibration produced a non-positive constant")


def calibration_layout(
    s: float,
    *,
    nodes_x: int = 257,
    nodes_y: int = 80,
    height: float = 6.0,
    grading_ratio: float = 1.10,
) -> DomainLayout:
    """Standard n=1 calibration grid on [-pi, pi].

    The tangential extent is exactly pi so integer sine modes vanish at the
    walls and are exact eigenvectors of the lateral-Dirichlet second
    difference; region boxes are placeholders (unused by calibration).
    """
    spec = GridSpec(
        n_tangential=1,
        extent_x=math.pi,
        nodes_x=nodes_x,
        height_y=height,
        nodes_y=nodes_y,
        grading_ratio=grading_ratio,
    )
    regions = RegionSpec.create(
        omega_prime=(((-0.4, 0.4),),),
        omega=(((-0.8, 0.8),),),
        omega_one=(((-1.2, 1.2),),),
        window_w=(((1.8, 2.6),),),
        n=1,
    )
    return build_grid(spec, regions, s=s)


def symbol_calibration(
    s: float,
    layout: DomainLayout | None = None,
    *,
    fit_modes: tuple[int, ...] = (1, 2),
    check_modes: tuple[int, ...] = (1, 2, 4),
) -> CalibrationReport:
    """Fit the normalization constant from low sine modes under a = I.

    On [-pi, pi] with lateral Dirichlet walls, sin(kx) for integer k is an
    exact eigenvector of the tangential part, so the full-trace solve
    separates; the constant is the log-mean of k^(2s) over the raw flux
    projections.  Fails if any fit mode misses k^(2s) by more than 10% after
    calibration.
    """
    if layout is None:
        layout = calibration_layout(s)
    if layout.n != 1:
        raise InputError("calibration requires an n=1 layout")
    if abs(layout.axes[0][-1] - math.pi) > 1e-9:
        raise InputError(
            "calibration layout must span [-pi, pi] so integer sine modes "
            "vanish at the lateral walls"
        )
    if abs(layout.s - s) > 1e-12:
        raise InputError(f"layout was built for s={layout.s}, requested {s}")
    met = Metric.identity(layout)
    op = assemble_extension_operator(layout, met, bottom="all")
    x = layout.coords[:, 0]
    msin = {}
    raw = {}
    modes = sorted(set(fit_modes) | set(check_modes))
    for k in modes:
        data = np.sin(k * x)
        fld, _ = solve_mixed_problem(op, trace_values=data)
        flux = variational_neumann_values(op, fld)
        wnorm = float(np.sum(layout.dual_x * data * data))
        raw[k] = float(np.sum(layout.dual_x * data * flux)) / wnorm
        msin[k] = data
    if any(raw[k] <= 0 for k in fit_modes):
        raise CalibrationError("non-positive flux projection on a fit mode")
    logs = [2.0 * s * math.log(k) - math.log(raw[k]) for k in fit_modes]
    estimate = math.exp(float(np.mean(logs)))
    errors = {k: abs(estimate * raw[k] / k ** (2.0 * s) - 1.0) for k in modes}
    for k in fit_modes:
        if errors[k] > 0.10:
            raise CalibrationError(
                f"calibrated symbol misses mode {k} by {errors[k]:.1%}"
            )
    report = CalibrationReport(
        estimate=estimate,
        reference=closed_form_constant(s),
        s=s,
        fit_modes=tuple(fit_modes),
        mode_errors=errors,
        raw_symbols=raw,
    )
    report.validate()
    return report


_CALIBRATION_CACHE: dict[float, float] = {}


def calibrated_constant(s: float) -> float:
    """Cached calibration estimate on the standard grid."""
    key = round(float(s), 12)
    if key not in _CALIBRATION_CACHE:
        _CALIBRATION_CACHE[key] = symbol_calibration(s).estimate
    return _CALIBRATION_CACHE[key]


def vertical_mode_reaction(layout: DomainLayout, lam: float) -> float:
    """Trace reaction of the separated vertical problem for one tangential
    eigenvalue: the dual-route oracle for the calibration solves.

    Solves the vertical tridiagonal system with unit trace value and zero top
    value, returning the bottom-row energy residual per unit trace mass (the
    raw symbol of the full solve on an exact tangential eigenvector).
    """
    import scipy.linalg as sla

    if lam <= 0:
        raise InputError(f"tangential eigenvalue must be positive, got {lam}")
    m = layout.n_levels
    wv = layout.cell_w / layout.hy**2
    dw = layout.dual_w
    # interior unknowns j = 1 .. m-2 with v[0] = 1, v[m-1] = 0 eliminated
    n_i = m - 2
    diag = wv[:-1] + wv[1:] + lam * dw[1:-1]
    a = np.zeros((3, n_i))
    a[0, 1:] = -wv[1:-1]
    a[1, :] = diag
    a[2, :-1] = -wv[1:-1]
    rhs = np.zeros(n_i)
    rhs[0] = wv[0]
    v = sla.solve_banded((1, 1), a, rhs)
    return float(wv[0] * (1.0 - v[0]) + lam * dw[0])
