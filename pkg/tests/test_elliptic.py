"""Weighted elliptic machinery: metrics, assembly, solves, norms, traces."""

import math

import numpy as np
import pytest
from scipy.integrate import dblquad

from dtnlab.elliptic import (
    ExtensionField,
    Metric,
    assemble_extension_operator,
    assemble_rhs,
    ball_weighted_norm_sq,
    caccioppoli_check,
    cell_gradients,
    solve_mixed_problem,
    tangential_stiffness,
    weighted_neumann_trace,
    weighted_norm,
)
from dtnlab.errors import (
    DomainError,
    InputError,
    MetricError,
    TraceExtractionError,
)

from conftest import bump_gamma, window_bump_datum


# ---------------------------------------------------------------------------
# metric admissibility


def test_metric_requires_positive_gamma(layout_1d):
    gamma = np.ones(layout_1d.n_tan)
    gamma[5] = -0.2
    with pytest.raises(MetricError):
        Metric.isotropic_from_gamma(layout_1d, gamma).validate(layout_1d)


def test_metric_requires_identity_outside_omega(layout_1d):
    gamma = np.ones(layout_1d.n_tan)
    gamma[layout_1d.window_mask] = 2.0   # perturbation outside omega
    with pytest.raises(MetricError):
        Metric.isotropic_from_gamma(layout_1d, gamma).validate(layout_1d)


def test_bump_metric_is_admissible(layout_1d, metric_1d):
    metric_1d.validate(layout_1d)
    assert not metric_1d.isotropic or metric_1d.gamma.min() >= 1.0


# ---------------------------------------------------------------------------
# tangential stiffness


def test_stiffness_annihilates_linears_in_the_interior(layout_1d):
    k = tangential_stiffness(layout_1d, Metric.identity(layout_1d))
    x = layout_1d.coords[:, 0]
    resid = k @ x
    interior = ~layout_1d.lateral_mask
    assert np.max(np.abs(resid[interior])) < 1e-12
    # symmetry and zero row sums (constants in the kernel)
    assert np.abs((k - k.T).toarray()).max() < 1e-14
    assert np.max(np.abs(k @ np.ones_like(x))) < 1e-12


def test_stiffness_quadratic_energy_oracle(layout_1d):
    """x^T K x equals the Dirichlet energy of the interpolant of x -> x."""
    k = tangential_stiffness(layout_1d, Metric.identity(layout_1d))
    x = layout_1d.coords[:, 0]
    energy = float(x @ (k @ x))
    assert math.isclose(energy, 8.0, rel_tol=1e-12)  # int_{-4}^{4} 1 dx


# ---------------------------------------------------------------------------
# mixed solves


def test_zero_data_gives_zero_solution(layout_1d, metric_1d):
    op = assemble_extension_operator(layout_1d, metric_1d)
    fld, info = solve_mixed_problem(op, trace_values=np.zeros(layout_1d.n_tan))
    assert np.all(fld.values == 0.0)
    assert info.energy == 0.0


def test_solution_satisfies_boundary_conditions(layout_1d, solved_1d):
    op, fld, info = solved_1d
    f = window_bump_datum(layout_1d)
    # Dirichlet rows reproduce the datum exactly; the top cap is zero.
    assert np.array_equal(fld.trace[op.bottom_dirichlet], f[op.bottom_dirichlet])
    assert np.all(fld.values[-1] == 0.0)
    assert info.residual < 1e-9
    assert info.energy > 0.0


def test_splu_and_pcg_agree(layout_1d, metric_1d):
    op = assemble_extension_operator(layout_1d, metric_1d)
    f = window_bump_datum(layout_1d)
    fld_d, _ = solve_mixed_problem(op, trace_values=f, method="splu")
    fld_i, _ = solve_mixed_problem(op, trace_values=f, method="pcg", tol=1e-12)
    scale = np.abs(fld_d.values).max()
    assert np.abs(fld_d.values - fld_i.values).max() < 1e-8 * scale


def test_maximum_principle_for_nonnegative_data(layout_1d, solved_1d):
    _, fld, _ = solved_1d
    f = window_bump_datum(layout_1d)
    assert fld.values.min() >= -1e-12
    assert fld.values.max() <= f.max() * (1.0 + 1e-12)


def test_solver_input_validation(layout_1d, metric_1d):
    op = assemble_extension_operator(layout_1d, metric_1d)
    with pytest.raises(InputError):
        solve_mixed_problem(op, trace_values=np.zeros(3))
    bad = np.zeros(layout_1d.n_tan)
    bad[0] = np.nan
    with pytest.raises(InputError):
        solve_mixed_problem(op, trace_values=bad)
    with pytest.raises(InputError):
        solve_mixed_problem(
            op, trace_values=np.zeros(layout_1d.n_tan), method="cholesky"
        )


def test_scalar_rhs_total_load(layout_1d):
    """Lumped scalar load sums to the full weighted volume."""
    shape = (layout_1d.n_levels, layout_1d.n_tan)
    b = assemble_rhs(layout_1d, scalar=np.ones(shape))
    s = layout_1d.s
    weighted_height = layout_1d.spec.height_y ** (2 - 2 * s) / (2 - 2 * s)
    assert math.isclose(float(b.sum()), weighted_height * 8.0, rel_tol=1e-12)


def test_vector_rhs_is_divergence_like(layout_1d):
    """A constant tangential field loads only the wall columns.

    The weight does not vary tangentially, so the per-cell contributions of a
    constant tangential component telescope at every interior column.  (The
    vertical component does not telescope: the weight varies in y.)
    """
    shape = (layout_1d.n_levels, layout_1d.n_tan)
    b = assemble_rhs(layout_1d, vector=(np.ones(shape), np.zeros(shape)))
    bb = b.reshape(shape)
    assert np.abs(bb[:, 1:-1]).max() < 1e-12
    assert np.abs(bb[:, 0]).max() > 0.0


# ---------------------------------------------------------------------------
# weighted norms


def test_weighted_norm_of_constant_is_exact(layout_1d):
    ones = ExtensionField(
        values=np.ones((layout_1d.n_levels, layout_1d.n_tan)),
        s=layout_1d.s,
        layout=layout_1d,
        provenance="synthetic",
    )
    s = layout_1d.s
    expected = math.sqrt(8.0 * layout_1d.spec.height_y ** (2 - 2 * s) / (2 - 2 * s))
    assert math.isclose(weighted_norm(ones), expected, rel_tol=1e-12)


def test_weighted_norm_y_range_restriction(layout_1d):
    ones = ExtensionField(
        values=np.ones((layout_1d.n_levels, layout_1d.n_tan)),
        s=layout_1d.s,
        layout=layout_1d,
        provenance="synthetic",
    )
    s = layout_1d.s
    lo, hi = 0.5, 2.0
    expected = math.sqrt(8.0 * (hi ** (2 - 2 * s) - lo ** (2 - 2 * s)) / (2 - 2 * s))
    got = weighted_norm(ones, y_range=(lo, hi))
    assert math.isclose(got, expected, rel_tol=1e-12)
    with pytest.raises(DomainError):
        weighted_norm(ones, y_range=(2.0, 1.0))


def test_ball_norm_matches_quadrature_oracle(layout_1d):
    """Rasterized weighted ball norm vs adaptive 2-d quadrature."""
    ones = ExtensionField(
        values=np.ones((layout_1d.n_levels, layout_1d.n_tan)),
        s=layout_1d.s,
        layout=layout_1d,
        provenance="synthetic",
    )
    center = np.array([2.5, 1.5])
    radius = 0.7
    got = ball_weighted_norm_sq(ones, center, radius)
    p = 1.0 - 2.0 * layout_1d.s

    def half_width(y):
        return math.sqrt(max(radius**2 - (y - center[1]) ** 2, 0.0))

    oracle, _ = dblquad(
        lambda x, y: y**p,
        center[1] - radius,
        center[1] + radius,
        lambda y: center[0] - half_width(y),
        lambda y: center[0] + half_width(y),
    )
    assert math.isclose(got, oracle, rel_tol=2e-2)


# ---------------------------------------------------------------------------
# weighted Neumann trace


def synthetic_profile(layout, a, b, c):
    """u(x, y) = c + a y^(2s) + b y^2, constant in x."""
    s = layout.s
    col = c + a * layout.y ** (2 * s) + b * layout.y**2
    return ExtensionField(
        values=np.tile(col[:, None], (1, layout.n_tan)),
        s=s,
        layout=layout,
        provenance="synthetic",
    )


def test_trace_extraction_reproduces_pure_power(layout_1d):
    fld = synthetic_profile(layout_1d, a=1.0, b=0.0, c=0.3)
    tr = weighted_neumann_trace(fld)
    assert np.allclose(tr.values, 2.0 * layout_1d.s, rtol=1e-10)


def test_trace_extraction_removes_quadratic_correction(layout_1d):
    fld = synthetic_profile(layout_1d, a=-0.7, b=2.1, c=0.0)
    tr = weighted_neumann_trace(fld)
    assert np.allclose(tr.values, 2.0 * layout_1d.s * (-0.7), rtol=1e-8)


def test_trace_extraction_rejects_bad_layers(layout_1d):
    fld = synthetic_profile(layout_1d, a=1.0, b=0.0, c=0.0)
    with pytest.raises(TraceExtractionError):
        weighted_neumann_trace(fld, layers=(2, 1))
    with pytest.raises(TraceExtractionError):
        weighted_neumann_trace(fld, layers=(0, 1))


# ---------------------------------------------------------------------------
# energy bound on balls


def test_caccioppoli_constant_is_moderate(layout_1d, solved_1d):
    _, fld, _ = solved_1d
    report = caccioppoli_check(fld, np.array([2.5, 1.2]), 0.4)
    assert report.lhs > 0.0 and report.rhs > 0.0
    assert report.c_emp < 10.0


def test_cell_gradients_of_linear_field(layout_1d):
    x = layout_1d.coords[:, 0]
    vals = np.tile(x[None, :], (layout_1d.n_levels, 1)) + 2.0 * layout_1d.y[:, None]
    fld = ExtensionField(
        values=vals, s=layout_1d.s, layout=layout_1d, provenance="synthetic"
    )
    gx, gy = cell_gradients(fld)
    assert np.allclose(gx, 1.0, atol=1e-12)
    assert np.allclose(gy, 2.0, atol=1e-12)
