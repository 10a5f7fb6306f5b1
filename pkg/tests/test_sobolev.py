"""Discrete Sobolev scale: node sets, Gram matrices, norms, dual norms."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtnlab.errors import InputError
from dtnlab.grid import GridSpec, build_grid
from dtnlab.sobolev import (
    NodeSet,
    boundary_loop_nodeset,
    dual_operator_norm,
    gram_matrix,
    h_minus_one_norm,
    trace_nodeset,
)

from conftest import make_regions_1d


@pytest.fixture(scope="module")
def line_layout():
    spec = GridSpec(n_tangential=1, extent_x=4.0, nodes_x=41, height_y=2.0,
                    nodes_y=8, grading_ratio=1.3)
    return build_grid(spec, make_regions_1d(), s=0.5)


@pytest.fixture(scope="module")
def line_nodeset(line_layout):
    return trace_nodeset(line_layout, np.ones(line_layout.n_tan, dtype=bool))


def _rng_values(node_set, seed=0):
    return np.random.default_rng(seed).standard_normal(len(node_set))


# Gram structure ------------------------------------------------------------


def test_order_zero_is_exact_mass_matrix(line_nodeset):
    gram = gram_matrix(line_nodeset, 0.0)
    assert np.array_equal(gram.matrix, np.diag(line_nodeset.mass))


def test_uniform_line_mass_and_stiffness(line_layout, line_nodeset):
    h = line_layout.hx
    mass = line_nodeset.mass
    assert mass[0] == pytest.approx(h / 2, rel=1e-14)
    assert mass[-1] == pytest.approx(h / 2, rel=1e-14)
    np.testing.assert_allclose(mass[1:-1], h, rtol=1e-14)

    k = line_nodeset.stiffness()
    n = len(line_nodeset)
    oracle = np.zeros((n, n))
    for i in range(n - 1):
        oracle[i, i] += 1 / h
        oracle[i + 1, i + 1] += 1 / h
        oracle[i, i + 1] -= 1 / h
        oracle[i + 1, i] -= 1 / h
    np.testing.assert_allclose(k, oracle, atol=1e-14)
    # constants lie in the kernel
    np.testing.assert_allclose(k @ np.ones(n), 0.0, atol=1e-12)


def test_eigenbasis_is_mass_orthonormal(line_nodeset):
    lam, phi = line_nodeset.eig()
    assert np.all(lam >= 0.0)
    gram0 = phi.T @ np.diag(line_nodeset.mass) @ phi
    np.testing.assert_allclose(gram0, np.eye(len(line_nodeset)), atol=1e-10)


def test_low_eigenvalues_match_neumann_modes(line_layout):
    # Free ends on [-4, 4]: continuum eigenvalues (k pi / 8)^2.
    ns = trace_nodeset(line_layout, np.ones(line_layout.n_tan, dtype=bool))
    lam, _ = ns.eig()
    length = 2 * 4.0
    for k in (1, 2, 3, 4):
        assert lam[k] == pytest.approx((k * np.pi / length) ** 2, rel=2e-2)


def test_order_two_gram_matches_resolvent_product(line_nodeset):
    m = np.diag(line_nodeset.mass)
    k = line_nodeset.stiffness()
    a = m + k
    g2 = gram_matrix(line_nodeset, 2.0).matrix
    oracle = a @ np.linalg.solve(m, a)
    np.testing.assert_allclose(g2, oracle, rtol=1e-9, atol=1e-11)

    g_m2 = gram_matrix(line_nodeset, -2.0).matrix
    oracle_neg = m @ np.linalg.solve(a, m @ np.linalg.solve(a, m))
    np.testing.assert_allclose(g_m2, oracle_neg, rtol=1e-9, atol=1e-13)


def test_gram_rejects_large_order(line_nodeset):
    with pytest.raises(InputError):
        gram_matrix(line_nodeset, 2.5)
    with pytest.raises(InputError):
        gram_matrix(line_nodeset, -2.1)


# Norm identities -----------------------------------------------------------


@pytest.mark.parametrize("order", [0.5, 1.0, 2.0])
def test_norm_equals_quadratic_form(line_nodeset, order):
    gram = gram_matrix(line_nodeset, order)
    v = _rng_values(line_nodeset)
    assert gram.norm(v) ** 2 == pytest.approx(v @ gram.matrix @ v, rel=1e-10)


@pytest.mark.parametrize("order", [0.5, 1.0])
def test_dual_norm_of_mass_pairing_is_negative_order_norm(line_nodeset, order):
    v = _rng_values(line_nodeset, seed=3)
    pairing = line_nodeset.mass * v
    dual = gram_matrix(line_nodeset, order).dual_norm(pairing)
    direct = gram_matrix(line_nodeset, -order).norm(v)
    assert dual == pytest.approx(direct, rel=1e-12)


def test_half_factor_squares_to_gram(line_nodeset):
    gram = gram_matrix(line_nodeset, 1.0)
    r = gram.half_factor()
    np.testing.assert_allclose(r.T @ r, gram.matrix, rtol=1e-9, atol=1e-12)
    rinv = gram.inverse_half_factor()
    np.testing.assert_allclose(r @ rinv, np.eye(len(line_nodeset)), atol=1e-9)


def test_h_minus_one_matches_gram_route(line_nodeset):
    v = _rng_values(line_nodeset, seed=5)
    assert h_minus_one_norm(v, line_nodeset) == pytest.approx(
        gram_matrix(line_nodeset, -1.0).norm(v), rel=1e-13
    )


def test_h_minus_one_rejects_bad_values(line_nodeset):
    with pytest.raises(InputError):
        h_minus_one_norm(np.zeros(3), line_nodeset)
    bad = np.zeros(len(line_nodeset))
    bad[0] = np.nan
    with pytest.raises(InputError):
        h_minus_one_norm(bad, line_nodeset)


@given(seed=st.integers(0, 2**31 - 1), r1=st.floats(-2.0, 2.0), r2=st.floats(-2.0, 2.0))
@settings(max_examples=25, deadline=None)
def test_norms_are_monotone_and_log_convex_in_order(line_nodeset, seed, r1, r2):
    v = np.random.default_rng(seed).standard_normal(len(line_nodeset))
    lo, hi = sorted((r1, r2))
    n_lo = gram_matrix(line_nodeset, lo).norm(v)
    n_hi = gram_matrix(line_nodeset, hi).norm(v)
    assert n_lo <= n_hi * (1 + 1e-10)
    n_mid = gram_matrix(line_nodeset, (lo + hi) / 2.0).norm(v)
    assert n_mid**2 <= n_lo * n_hi * (1 + 1e-9)


@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_duality_pairing_cauchy_schwarz(line_nodeset, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(len(line_nodeset))
    p = rng.standard_normal(len(line_nodeset))
    gram = gram_matrix(line_nodeset, 1.0)
    assert abs(v @ p) <= gram.dual_norm(p) * gram.norm(v) * (1 + 1e-9)


# Operator norms ------------------------------------------------------------


@pytest.mark.parametrize("order", [0.0, 0.5, 1.0])
def test_mass_pairing_identity_has_unit_norm(line_nodeset, order):
    gram = gram_matrix(line_nodeset, order)
    value = dual_operator_norm(np.diag(line_nodeset.mass), gram, gram)
    assert value == pytest.approx(1.0, rel=1e-10)


def test_dual_operator_norm_rejects_shape_mismatch(line_nodeset):
    gram = gram_matrix(line_nodeset, 1.0)
    with pytest.raises(InputError):
        dual_operator_norm(np.zeros((3, 4)), gram, gram)


# Node-set builders ---------------------------------------------------------


def test_trace_nodeset_rejects_bad_masks(line_layout):
    with pytest.raises(InputError):
        trace_nodeset(line_layout, np.ones(line_layout.n_tan))  # not bool
    with pytest.raises(InputError):
        trace_nodeset(line_layout, np.ones(5, dtype=bool))
    with pytest.raises(InputError):
        trace_nodeset(line_layout, np.zeros(line_layout.n_tan, dtype=bool))
    single = np.zeros(line_layout.n_tan, dtype=bool)
    single[7] = True
    with pytest.raises(InputError):
        trace_nodeset(line_layout, single)


def test_trace_nodeset_rejects_disconnected_mask(line_layout):
    mask = np.zeros(line_layout.n_tan, dtype=bool)
    mask[2:6] = True
    mask[20:26] = True
    with pytest.raises(InputError):
        trace_nodeset(line_layout, mask)


def test_boundary_loop_degenerates_to_endpoints(line_layout):
    ns = boundary_loop_nodeset(line_layout, [(-1.2, 1.2)])
    assert len(ns) == 2
    np.testing.assert_array_equal(ns.mass, [1.0, 1.0])
    assert len(ns.edges) == 0
    np.testing.assert_allclose(ns.coords[:, 0], [-1.2, 1.2], atol=1e-12)
    with pytest.raises(InputError):
        boundary_loop_nodeset(line_layout, [(-1.25, 1.2)])


def test_boundary_loop_is_ordered_cycle(layout_2d):
    lay = layout_2d
    ns = boundary_loop_nodeset(lay, ((-1.25, 1.25), (-1.25, 1.25)))
    h = lay.hx
    cells_per_side = round(2.5 / h)
    assert len(ns) == 4 * cells_per_side
    assert len(np.unique(ns.indices)) == len(ns)
    # consecutive nodes (cyclically) are one grid step apart
    diffs = np.diff(np.vstack([ns.coords, ns.coords[:1]]), axis=0)
    steps = np.linalg.norm(diffs, axis=1)
    np.testing.assert_allclose(steps, h, rtol=1e-12)
    # counting measure integrates the perimeter exactly
    assert ns.mass.sum() == pytest.approx(4 * 2.5, rel=1e-12)
    ns.validate()


def test_boundary_loop_rejects_bad_boxes(layout_2d):
    lay = layout_2d
    h = lay.hx
    with pytest.raises(InputError):
        boundary_loop_nodeset(lay, ((-1.2, 1.25), (-1.25, 1.25)))  # off-grid
    with pytest.raises(InputError):
        boundary_loop_nodeset(lay, ((0.0, h), (0.0, h)))  # single cell


def test_nodeset_validate_guards(line_layout):
    ns = trace_nodeset(line_layout, np.ones(line_layout.n_tan, dtype=bool))
    bad_mass = NodeSet(kind="trace_patch", indices=ns.indices, coords=ns.coords,
                       mass=np.zeros_like(ns.mass), edges=ns.edges,
                       edge_w=ns.edge_w)
    with pytest.raises(InputError):
        bad_mass.validate()
    no_edges = NodeSet(kind="trace_patch", indices=ns.indices, coords=ns.coords,
                       mass=ns.mass, edges=np.zeros((0, 2), dtype=np.int64),
                       edge_w=np.zeros(0))
    with pytest.raises(InputError):
        no_edges.validate()
    empty = NodeSet(kind="trace_patch", indices=np.array([], dtype=np.int64),
                    coords=np.zeros((0, 1)), mass=np.array([]),
                    edges=np.zeros((0, 2), dtype=np.int64), edge_w=np.zeros(0))
    with pytest.raises(InputError):
        empty.validate()
