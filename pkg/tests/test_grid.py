"""Grid geometry: specs, regions, graded measures, ball quadrature, chains."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from dtnlab.errors import ChainError, GeometryError, PreconditionError
from dtnlab.grid import (
    Ball,
    BallChain,
    ChainPolicy,
    GridSpec,
    RegionSpec,
    ball_cell_fractions,
    ball_chain,
    build_grid,
    tangential_distance_to_boxes,
)

from conftest import make_regions_1d, make_regions_2d


def small_spec(**overrides):
    base = dict(
        n_tangential=1, extent_x=4.0, nodes_x=41, height_y=4.0,
        nodes_y=12, grading_ratio=1.3,
    )
    base.update(overrides)
    return GridSpec(**base)


# ---------------------------------------------------------------------------
# spec validation


@pytest.mark.parametrize(
    "overrides",
    [
        {"n_tangential": 3},
        {"n_tangential": 0},
        {"extent_x": 0.0},
        {"extent_x": -1.0},
        {"nodes_x": 7},
        {"height_y": 0.0},
        {"nodes_y": 5},
        {"grading_ratio": 1.0},
        {"grading_ratio": 2.5},
    ],
)
def test_grid_spec_rejects_bad_parameters(overrides):
    with pytest.raises(GeometryError):
        small_spec(**overrides).validate()


def test_grid_spec_accepts_valid_parameters():
    small_spec().validate()


def test_regions_must_nest_strictly():
    with pytest.raises(GeometryError):
        RegionSpec.create(
            omega_prime=[((-1.0, 1.0),)],   # not strictly inside omega
            omega=[((-1.0, 1.0),)],
            omega_one=[((-1.3, 1.3),)],
            window_w=[((1.6, 3.4),)],
            n=1,
        ).validate(4.0)


def test_window_must_be_disjoint_from_first_enlargement():
    with pytest.raises(GeometryError):
        RegionSpec.create(
            omega_prime=[((-0.5, 0.5),)],
            omega=[((-1.0, 1.0),)],
            omega_one=[((-1.3, 1.3),)],
            window_w=[((1.3, 3.4),)],       # touches omega_one at 1.3
            n=1,
        ).validate(4.0)


def test_regions_must_fit_inside_grid_box():
    with pytest.raises(GeometryError):
        make_regions_1d().validate(3.0)     # window reaches 3.4 > 3.0


# ---------------------------------------------------------------------------
# build_grid invariants


def test_weighted_measures_sum_to_closed_form(layout_1d):
    s = layout_1d.s
    y_top = layout_1d.spec.height_y
    expected = y_top ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
    assert math.isclose(layout_1d.weighted_measure_total(), expected, rel_tol=1e-12)


def test_vertical_levels_are_graded(layout_1d):
    y = layout_1d.y
    assert y[0] == 0.0
    assert y[-1] == layout_1d.spec.height_y
    hy = np.diff(y)
    assert np.all(hy > 0)
    ratios = hy[1:] / hy[:-1]
    assert np.allclose(ratios, layout_1d.effective_ratio, rtol=1e-9)


def test_cell_measures_match_quadrature_oracle(layout_1d):
    """Each cell measure equals the adaptive quadrature of y^(1-2s)."""
    s = layout_1d.s
    y = layout_1d.y
    for j in [0, 1, len(y) // 2, len(y) - 2]:
        oracle, _ = quad(lambda t: t ** (1.0 - 2.0 * s), y[j], y[j + 1])
        assert math.isclose(layout_1d.cell_w[j], oracle, rel_tol=1e-9)


def test_first_layer_floor_relaxes_extreme_grading():
    # grading 2.0 with many cells would push y_1 below the extraction floor
    spec = small_spec(nodes_y=60, grading_ratio=2.0, height_y=1.0)
    lay = build_grid(spec, make_regions_1d(), s=0.75)
    assert lay.effective_ratio < 2.0
    assert lay.y[1] ** (2.0 * lay.s) >= 1e-8 * (1.0 - 1e-12)


def test_fractional_order_must_be_in_unit_interval():
    with pytest.raises(PreconditionError):
        build_grid(small_spec(), make_regions_1d(), s=1.0)


def test_trace_tags_partition_regions(layout_1d):
    x = layout_1d.coords[:, 0]
    window = layout_1d.window_mask
    omega = layout_1d.omega_mask
    annulus = layout_1d.annulus_mask
    # the three tagged regions are pairwise disjoint
    assert not np.any(window & omega)
    assert not np.any(window & annulus)
    assert not np.any(omega & annulus)
    # omega is the open interval, window the closed one
    assert np.array_equal(omega, np.abs(x) < 1.0)
    assert np.array_equal(window, (x >= 1.6) & (x <= 3.4))
    # the first-enlargement mask is the closed box
    assert np.array_equal(layout_1d.omega1_mask, np.abs(x) <= 1.3 + 1e-12)


def test_dual_volumes_sum_to_box_measure(layout_1d, layout_2d):
    assert math.isclose(layout_1d.dual_x.sum(), 8.0, rel_tol=1e-12)
    assert math.isclose(layout_2d.dual_x.sum(), 25.0, rel_tol=1e-12)


def test_node_index_is_level_major(layout_1d):
    nt = layout_1d.n_tan
    assert layout_1d.node_index(0, 3) == 3
    assert layout_1d.node_index(2, 5) == 2 * nt + 5


def test_lateral_mask_marks_walls(layout_2d):
    on_wall = np.any(np.abs(layout_2d.coords) >= 2.5 - 1e-12, axis=1)
    assert np.array_equal(layout_2d.lateral_mask, on_wall)


# ---------------------------------------------------------------------------
# ball quadrature


def test_ball_fractions_classify_cells(layout_1d):
    center = np.array([2.5, 1.5])
    frac = ball_cell_fractions(layout_1d, center, 0.8)
    assert frac.min() >= 0.0 and frac.max() <= 1.0
    # a cell containing the center is fully covered for a large-enough ball
    i = np.searchsorted(layout_1d.axes[0], 2.5) - 1
    j = np.searchsorted(layout_1d.y, 1.5) - 1
    assert frac[j, i] == 1.0
    # distant cells see nothing
    assert frac[0, 0] == 0.0


def test_ball_fractions_reproduce_disk_area(layout_1d):
    """Total covered volume matches the closed-form ball volume."""
    center = np.array([2.5, 1.5])
    radius = 0.9
    frac = ball_cell_fractions(layout_1d, center, radius, subsamples=8)
    hx = layout_1d.hx
    cell_vol = hx * layout_1d.hy  # (M,) vertical by tangential cell volume
    total = float(np.sum(frac * cell_vol[:, None]))
    assert math.isclose(total, math.pi * radius**2, rel_tol=1.5e-2)


def test_ball_fractions_reject_bad_center(layout_1d):
    with pytest.raises(GeometryError):
        ball_cell_fractions(layout_1d, np.array([2.5]), 0.5)


def test_tangential_distance_to_boxes():
    boxes = (((-1.0, 1.0),),)
    assert tangential_distance_to_boxes(np.array([2.5]), boxes) == 1.5
    assert tangential_distance_to_boxes(np.array([0.3]), boxes) == 0.0


# ---------------------------------------------------------------------------
# ball chains


def test_chain_policy_bounds():
    with pytest.raises(ChainError):
        ChainPolicy(rho1=1.3).validate()       # above 7/6
    with pytest.raises(ChainError):
        ChainPolicy(rho2=2.0).validate()
    with pytest.raises(ChainError):
        ChainPolicy(q_factor=2.0).validate()
    ChainPolicy().validate()


def test_ball_chain_reaches_target(layout_1d):
    omega = layout_1d.regions.omega
    start = Ball(center=np.array([3.0, 1.0]), radius=0.2)
    target = Ball(center=np.array([2.0, 2.2]), radius=0.1)
    chain = ball_chain(start, target, omega)
    chain.validate(omega)
    assert len(chain) >= 2
    last = chain.balls[-1]
    gap = np.linalg.norm(target.center - last.center) + target.radius
    assert gap <= last.radius + 1e-9


def test_ball_chain_rejects_start_over_omega(layout_1d):
    start = Ball(center=np.array([0.0, 1.0]), radius=0.1)
    target = Ball(center=np.array([2.0, 1.0]), radius=0.1)
    with pytest.raises(PreconditionError):
        ball_chain(start, target, layout_1d.regions.omega)


def test_chain_validate_flags_tampered_ball(layout_1d):
    omega = layout_1d.regions.omega
    start = Ball(center=np.array([3.0, 1.0]), radius=0.2)
    target = Ball(center=np.array([2.2, 1.8]), radius=0.1)
    chain = ball_chain(start, target, omega)
    chain.balls[0] = Ball(center=np.array([3.0, 0.1]), radius=0.2)
    with pytest.raises(ChainError):
        chain.validate(omega)


@settings(max_examples=25, deadline=None)
@given(
    cx=st.floats(min_value=-3.0, max_value=3.0),
    cy=st.floats(min_value=0.5, max_value=3.0),
    r=st.floats(min_value=0.05, max_value=1.0),
)
def test_ball_fraction_range_property(layout_1d, cx, cy, r):
    frac = ball_cell_fractions(layout_1d, np.array([cx, cy]), r, subsamples=2)
    assert np.all(frac >= 0.0) and np.all(frac <= 1.0)
