"""Heat semigroup, kernel bounds, and the subordination extension route."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from dtnlab.elliptic import ExtensionField, Metric
from dtnlab.errors import InputError, UnderflowError
from dtnlab.grid import GridSpec, build_grid
from dtnlab.heat import (
    cross_validate_extensions,
    gaussian_bound_check,
    heat_kernel_samples,
    heat_semigroup,
    normalization_check,
    poisson_constant,
    poisson_extend,
    subordination_weight,
    vertical_decay_fit,
)

from conftest import make_regions_1d, window_bump_datum


@pytest.fixture(scope="module")
def wide_layout():
    spec = GridSpec(n_tangential=1, extent_x=12.0, nodes_x=241, height_y=2.0,
                    nodes_y=8, grading_ratio=1.3)
    return build_grid(spec, make_regions_1d(), s=0.5)


@pytest.fixture(scope="module")
def poisson_layout():
    spec = GridSpec(n_tangential=1, extent_x=8.0, nodes_x=161, height_y=4.0,
                    nodes_y=24, grading_ratio=1.2)
    return build_grid(spec, make_regions_1d(), s=0.5)


@pytest.fixture(scope="module")
def kernel_layout():
    spec = GridSpec(n_tangential=1, extent_x=6.0, nodes_x=121, height_y=2.0,
                    nodes_y=8, grading_ratio=1.3)
    return build_grid(spec, make_regions_1d(), s=0.5)


# Subordination weight and normalization ------------------------------------


@pytest.mark.parametrize("s", [0.3, 0.5, 0.75, 0.9])
def test_normalization_matches_closed_form(s):
    numeric, closed, rel = normalization_check(s)
    assert closed == pytest.approx(4.0**s * gamma_fn(s), rel=1e-14)
    assert rel <= 1e-6

    # Independent log-substitution trapezoid oracle for the same mass; the
    # upper cut must outrun the tau^(-s) tail even at the smallest s.
    u = np.linspace(np.log(1e-8), np.log(1e40), 40001)
    tau = np.exp(u)
    vals = subordination_weight(tau, s) * tau
    oracle = np.trapezoid(vals, u)
    assert numeric == pytest.approx(oracle, rel=1e-7)


@pytest.mark.parametrize("s", [0.3, 0.75])
def test_poisson_constant_inverts_mass(s):
    numeric, _, _ = normalization_check(s)
    assert poisson_constant(s) * numeric == pytest.approx(1.0, rel=1e-6)


@pytest.mark.parametrize("s", [0.3, 0.75])
def test_weight_peaks_at_quarter_inverse(s):
    tau = np.geomspace(1e-3, 1e2, 20001)
    peak = tau[int(np.argmax(subordination_weight(tau, s)))]
    assert peak == pytest.approx(1.0 / (4.0 * (1.0 + s)), rel=2e-2)


def test_weight_vanishes_at_origin():
    vals = subordination_weight(np.array([1e-6, 1e-4]), 0.5)
    assert vals[0] == 0.0
    assert vals[1] < 1e-300


@given(
    s=st.floats(0.05, 0.95),
    t1=st.floats(1.0, 50.0),
    bump=st.floats(1e-3, 100.0),
)
@settings(max_examples=50, deadline=None)
def test_weight_decreasing_past_peak(s, t1, bump):
    lo = 1.0 / (4.0 * (1.0 + s))
    a, b = lo * t1, lo * t1 * (1.0 + bump)
    wa, wb = subordination_weight(np.array([a, b]), s)
    assert wb <= wa * (1.0 + 1e-12)


def test_normalization_rejects_bad_s():
    with pytest.raises(InputError):
        normalization_check(0.0)
    with pytest.raises(InputError):
        normalization_check(1.0)


# Semigroup -----------------------------------------------------------------


def test_semigroup_matches_free_gaussian(wide_layout):
    lay = wide_layout
    x = lay.coords[:, 0]
    t0 = 0.5
    u0 = np.exp(-(x**2) / (4 * t0)) / np.sqrt(4 * np.pi * t0)
    times = np.array([0.0, 0.25, 1.0])
    ev = heat_semigroup(lay, Metric.identity(lay), u0, times)

    np.testing.assert_array_equal(ev.fields[0], u0)
    for k, t in enumerate(times[1:], start=1):
        exact = np.exp(-(x**2) / (4 * (t0 + t))) / np.sqrt(4 * np.pi * (t0 + t))
        rel = np.abs(ev.fields[k] - exact).max() / exact.max()
        assert rel <= 1e-3

    # Datum decays to ~1e-63 at the walls: mass is conserved and the sup
    # follows the parabolic maximum principle.
    np.testing.assert_allclose(ev.mass, ev.mass[0], rtol=1e-10)
    sups = np.abs(ev.fields).max(axis=1)
    assert np.all(np.diff(sups) <= 1e-12)


def test_semigroup_rejects_bad_input(wide_layout):
    lay = wide_layout
    met = Metric.identity(lay)
    u0 = np.zeros(lay.n_tan)
    with pytest.raises(InputError):
        heat_semigroup(lay, met, u0, np.array([0.5, 0.2]))
    with pytest.raises(InputError):
        heat_semigroup(lay, met, u0, np.array([-0.1, 0.2]))
    with pytest.raises(InputError):
        heat_semigroup(lay, met, np.zeros(3), np.array([0.1]))
    with pytest.raises(InputError):
        heat_semigroup(lay, met, u0, np.array([]))


# Kernel columns ------------------------------------------------------------


def test_kernel_symmetry_mass_and_positivity(kernel_layout):
    lay = kernel_layout
    x = lay.coords[:, 0]
    src = np.array([int(np.argmin(np.abs(x))), int(np.argmin(np.abs(x - 0.5)))])
    samples = heat_kernel_samples(lay, Metric.identity(lay),
                                  np.array([0.1, 0.4]), src)
    samples.validate()
    assert samples.columns.min() >= -1e-10

    a12 = samples.columns[:, 0, src[1]]
    a21 = samples.columns[:, 1, src[0]]
    np.testing.assert_allclose(a12, a21, rtol=1e-12)

    masses = np.einsum("i,tsi->ts", lay.dual_x, samples.columns)
    assert masses.max() <= 1.0 + 1e-8
    assert masses.min() >= 0.99


def test_kernel_rejects_bad_sources(kernel_layout):
    lay = kernel_layout
    met = Metric.identity(lay)
    times = np.array([0.1])
    wall = np.array([0])
    assert lay.lateral_mask[0]
    with pytest.raises(InputError):
        heat_kernel_samples(lay, met, times, wall)
    with pytest.raises(InputError):
        heat_kernel_samples(lay, met, times, np.array([lay.n_tan]))
    with pytest.raises(InputError):
        heat_kernel_samples(lay, met, times, np.array([], dtype=int))
    with pytest.raises(InputError):
        heat_kernel_samples(lay, met, np.array([0.0, 0.1]), np.array([5]))


def test_gaussian_bound_report(kernel_layout):
    lay = kernel_layout
    x = lay.coords[:, 0]
    src = np.array([int(np.argmin(np.abs(x)))])
    samples = heat_kernel_samples(lay, Metric.identity(lay),
                                  np.geomspace(0.05, 0.8, 6), src)
    report = gaussian_bound_check(samples, theta1=1.0, delta=0.5)
    assert report.c_min > 0.0
    assert report.min_value >= -1e-10
    # identity metric, n = 1: on-diagonal decay t^(-1/2)
    assert report.decay_slope == pytest.approx(-0.5, rel=0.15)

    with pytest.raises(InputError):
        gaussian_bound_check(samples, theta1=0.0, delta=0.5)
    with pytest.raises(InputError):
        gaussian_bound_check(samples, theta1=1.5, delta=0.5)
    with pytest.raises(InputError):
        gaussian_bound_check(samples, theta1=1.0, delta=0.0)


# Subordination extension ---------------------------------------------------


def test_poisson_extend_matches_cauchy_kernel(poisson_layout):
    # At s = 1/2 the extension is the classical harmonic Poisson integral:
    # compare against direct quadrature of the Cauchy kernel.
    lay = poisson_layout
    x = lay.coords[:, 0]
    u0 = np.exp(-(x**2) / 2.0)
    heights = np.array([0.5, 1.0])
    arr = poisson_extend(lay, Metric.identity(lay), u0, heights=heights)
    assert arr.shape == (2, lay.n_tan)

    tols = {0.5: 7e-3, 1.0: 2e-2}
    for row, yv in enumerate(heights):
        for xv in (0.0, 1.0):
            node = int(np.argmin(np.abs(x - xv)))
            ref = quad(
                lambda z: (yv / np.pi) / (yv**2 + (x[node] - z) ** 2)
                * np.exp(-(z**2) / 2.0),
                -np.inf, np.inf, limit=200,
            )[0]
            assert arr[row, node] == pytest.approx(ref, rel=tols[float(yv)])


def test_poisson_extend_preserves_constants(poisson_layout):
    lay = poisson_layout
    fld = poisson_extend(lay, Metric.identity(lay), np.ones(lay.n_tan),
                         max_height=0.5)
    assert fld.provenance == "poisson-representation"
    np.testing.assert_array_equal(fld.trace, np.ones(lay.n_tan))
    node0 = int(np.argmin(np.abs(lay.coords[:, 0])))
    vals = fld.values[1:4, node0]
    np.testing.assert_allclose(vals, 1.0, atol=5e-3)
    assert np.all(fld.values[lay.y > 0.5] == 0.0)


def test_poisson_extend_rejects_bad_input(poisson_layout):
    lay = poisson_layout
    met = Metric.identity(lay)
    u0 = np.ones(lay.n_tan)
    with pytest.raises(InputError):
        poisson_extend(lay, met, u0, s=1.2)
    with pytest.raises(InputError):
        poisson_extend(lay, met, np.ones(5))
    with pytest.raises(InputError):
        poisson_extend(lay, met, u0, heights=np.array([0.0, 1.0]))
    with pytest.raises(InputError):
        poisson_extend(lay, met, u0, heights=np.array([[0.5]]))
    with pytest.raises(InputError):
        poisson_extend(lay, met, u0, heights=np.array([]))
    with pytest.raises(InputError):
        poisson_extend(lay, met, u0, points_per_decade=20)
    with pytest.raises(InputError):
        poisson_extend(lay, met, u0, max_height=1e-9)


# Cross-validation ----------------------------------------------------------


def test_cross_validation_smoke(layout_1d):
    lay = layout_1d
    f = window_bump_datum(lay)
    cv = cross_validate_extensions(lay, Metric.identity(lay), f)
    assert cv.discrepancy <= 0.05
    assert cv.absolute <= 0.05 * cv.reference_norm * 1.0001
    assert cv.y_band == (0.2, 2.0)


def test_cross_validation_rejects_bad_band(layout_1d):
    lay = layout_1d
    met = Metric.identity(lay)
    f = window_bump_datum(lay)
    with pytest.raises(InputError):
        cross_validate_extensions(lay, met, f, y_band=(0.0, 2.0))
    with pytest.raises(InputError):
        cross_validate_extensions(lay, met, f, y_band=(1.0, 9.0))
    with pytest.raises(InputError):
        cross_validate_extensions(lay, met, np.ones(3))


# Vertical decay fit --------------------------------------------------------


def _synthetic_field(layout, profile):
    x = layout.coords[:, 0]
    vals = profile(layout.y)[:, None] * np.exp(-(x**2))[None, :]
    return ExtensionField(values=vals, s=layout.s, layout=layout,
                          provenance="synthetic")


def test_vertical_decay_fit_recovers_power(layout_1d):
    fld = _synthetic_field(layout_1d, lambda y: np.maximum(y, 1e-9) ** -1.0)
    slope = vertical_decay_fit(fld, (-0.5, 0.5), (1.0, 2.0))
    assert slope == pytest.approx(-1.0, abs=1e-10)


def test_vertical_decay_fit_rejects_bad_ranges(layout_1d):
    fld = _synthetic_field(layout_1d, lambda y: np.exp(-y))
    with pytest.raises(InputError):
        vertical_decay_fit(fld, (-0.5, 0.5), (0.5, 2.0))
    with pytest.raises(InputError):
        vertical_decay_fit(fld, (-0.5, 0.5), (1.0, 3.9))
    with pytest.raises(InputError):
        vertical_decay_fit(fld, (50.0, 60.0), (1.0, 2.0))
    zero = ExtensionField(values=np.zeros_like(fld.values), s=fld.s,
                          layout=fld.layout, provenance="synthetic")
    with pytest.raises(UnderflowError):
        vertical_decay_fit(zero, (-0.5, 0.5), (1.0, 2.0))
