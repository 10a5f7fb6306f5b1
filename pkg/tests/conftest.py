"""Shared fixtures: small layouts, metrics, and solved fields.

Session-scoped fixtures carry the expensive objects (grids, factorizations,
solved extension fields); tests must treat them as read-only.
"""

from __future__ import annotations

import numpy as np
import pytest

from dtnlab.elliptic import (
    Metric,
    assemble_extension_operator,
    solve_mixed_problem,
)
from dtnlab.grid import GridSpec, RegionSpec, build_grid


def c_infinity_bump(q):
    """Unit-peak bump exp(1 - 1/(1 - q^2)) on |q| < 1, zero outside."""
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    inside = np.abs(q) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - q[inside] ** 2))
    return out


def make_regions_1d():
    return RegionSpec.create(
        omega_prime=[((-0.5, 0.5),)],
        omega=[((-1.0, 1.0),)],
        omega_one=[((-1.3, 1.3),)],
        window_w=[((1.6, 3.4),)],
        n=1,
    )


def make_regions_2d():
    return RegionSpec.create(
        omega_prime=[((-0.5, 0.5), (-0.5, 0.5))],
        omega=[((-1.0, 1.0), (-1.0, 1.0))],
        omega_one=[((-1.25, 1.25), (-1.25, 1.25))],
        window_w=[((1.4, 2.2), (-2.2, 2.2))],
        n=2,
    )


def bump_gamma(layout, amplitude=0.3, radius=0.8):
    """Isotropic conductivity 1 + amplitude * bump(|x|/radius)."""
    r = np.sqrt(np.sum(layout.coords**2, axis=1))
    return 1.0 + amplitude * c_infinity_bump(r / radius)


def window_bump_datum(layout, center=2.5, width=0.9):
    """Smooth datum supported in the 1-d data window."""
    f = c_infinity_bump((layout.coords[:, 0] - center) / width)
    return np.where(layout.window_mask, f, 0.0)


@pytest.fixture(scope="session")
def layout_1d():
    spec = GridSpec(
        n_tangential=1, extent_x=4.0, nodes_x=81, height_y=4.0,
        nodes_y=16, grading_ratio=1.25,
    )
    return build_grid(spec, make_regions_1d(), s=0.75)


@pytest.fixture(scope="session")
def layout_2d():
    spec = GridSpec(
        n_tangential=2, extent_x=2.5, nodes_x=17, height_y=2.0,
        nodes_y=10, grading_ratio=1.3,
    )
    return build_grid(spec, make_regions_2d(), s=0.75)


@pytest.fixture(scope="session")
def metric_1d(layout_1d):
    return Metric.isotropic_from_gamma(layout_1d, bump_gamma(layout_1d))


@pytest.fixture(scope="session")
def solved_1d(layout_1d, metric_1d):
    """(operator, field, info) for the window-bump datum on the bump metric."""
    op = assemble_extension_operator(layout_1d, metric_1d)
    fld, info = solve_mixed_problem(op, trace_values=window_bump_datum(layout_1d))
    return op, fld, info
