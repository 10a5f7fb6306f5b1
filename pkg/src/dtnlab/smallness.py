"""Propagation-of-smallness diagnostics on the weighted half space.

A solution of the pure-weight equation that is small on one ball is small
on nearby balls: this module measures that effect.  It evaluates the
logarithmic convexity weight and its derivative, computes empirical
three-ball interpolation exponents from weighted norms on concentric
triples, fits how smallness of boundary data on a window patch transfers
to interior half-balls, and propagates norm decay along admissible ball
chains.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .elliptic import (
    ExtensionField,
    Metric,
    assemble_extension_operator,
    ball_weighted_norm_sq,
    solve_mixed_problem,
)
from .errors import DomainError, FitWarning, InputError
from .grid import BallChain, DomainLayout, tangential_distance_to_boxes

__all__ = [
    "BallTriple",
    "ExponentReport",
    "TransferFit",
    "ChainReport",
    "carleman_weight",
    "exponent_from_norms",
    "three_balls_exponent",
    "boundary_bulk_transfer",
    "propagate_chain",
]


# ---------------------------------------------------------------------------
# logarithmic convexity weight


def carleman_weight(t):
    """Convexity weight and its derivative, evaluated in closed form.

    Returns (value, derivative) with
    value = -t + (t * arctan(t) - log(1 + t^2) / 2) / 10 and
    derivative = -1 + arctan(t) / 10.  The derivative stays inside
    (-1 - pi/20, -1 + pi/20), so the weight is strictly decreasing.
    """
    t = np.asarray(t, dtype=float)
    value = -t + 0.1 * (t * np.arctan(t) - 0.5 * np.log1p(t**2))
    derivative = -1.0 + 0.1 * np.arctan(t)
    if value.ndim == 0:
        return float(value), float(derivative)
    return value, derivative


# ---------------------------------------------------------------------------
# three-ball exponents


@dataclass(frozen=True)
class BallTriple:
    """Concentric radii (r, 2r, 4r) about a point of the upper half space.

    The quadruple ball must stay inside the exterior slab: above the trace
    plane, below the truncation height, clear of the central-region
    cylinder and of the lateral walls, with the radius-to-height ratio
    bounded by q_factor over the whole quadruple ball.
    """

    center: np.ndarray
    radius: float
    q_factor: float = 4.0

    @property
    def radii(self) -> tuple[float, float, float]:
        return (self.radius, 2.0 * self.radius, 4.0 * self.radius)

    def validate(self, layout: DomainLayout) -> None:
        center = np.asarray(self.center, dtype=float)
        if center.shape != (layout.n + 1,):
            raise InputError(
                f"triple center must have {layout.n + 1} coordinates, "
                f"got {center.shape}"
            )
        r = float(self.radius)
        if not r > 0.0:
            raise InputError(f"triple radius must be positive, got {r}")
        height = float(center[-1])
        floor = height - 4.0 * r
        if floor <= 0.0:
            raise DomainError(
                f"quadruple ball dips below the trace plane "
                f"(height {height:.3g}, radius {r:.3g})"
            )
        if height + 4.0 * r > float(layout.y[-1]) + 1e-12:
            raise DomainError(
                f"quadruple ball exceeds the truncation height "
                f"{layout.y[-1]:.3g}"
            )
        if r / floor > self.q_factor + 1e-12:
            raise DomainError(
                f"radius-to-height ratio {r / floor:.3g} exceeds the bound "
                f"{self.q_factor:.3g} on the quadruple ball"
            )
        ext = layout.spec.extent_x
        if np.any(np.abs(center[:-1]) + 4.0 * r > ext + 1e-12):
            raise DomainError("quadruple ball reaches the lateral walls")
        dist = tangential_distance_to_boxes(center[:-1], layout.regions.omega)
        if dist < 4.0 * r - 1e-12:
            raise DomainError(
                f"quadruple ball meets the central-region cylinder "
                f"(tangential clearance {dist:.3g} < {4.0 * r:.3g})"
            )


@dataclass
class ExponentReport:
    """Weighted norms on a ball triple and the interpolation exponent.

    alpha_emp is the exact log-interpolation exponent defined by
    n2 = n1^alpha * n4^(1-alpha); it is reported (and the validity flag
    set) only when the norms are strictly increasing in the radius.
    """

    triple: BallTriple
    n1: float
    n2: float
    n4: float
    alpha_emp: float
    valid: bool


def exponent_from_norms(n1: float, n2: float, n4: float) -> tuple[float, bool]:
    """Interpolation exponent for norms on radii (r, 2r, 4r).

    Solving n2 = n1^alpha * n4^(1-alpha) for alpha gives
    alpha = log(n4/n2) / log(n4/n1).  Returns (nan, False) unless
    0 < n1 < n2 < n4 strictly.
    """
    if not (np.isfinite(n1) and np.isfinite(n2) and np.isfinite(n4)):
        raise InputError("ball norms must be finite")
    if not 0.0 < n1 < n2 < n4:
        return float("nan"), False
    alpha = np.log(n4 / n2) / np.log(n4 / n1)
    return float(alpha), True


def three_balls_exponent(fld: ExtensionField, triple: BallTriple) -> ExponentReport:
    """Empirical three-ball exponent of a field on one admissible triple."""
    fld.check_finite()
    triple.validate(fld.layout)
    center = np.asarray(triple.center, dtype=float)
    norms = [
        float(np.sqrt(ball_weighted_norm_sq(fld, center, rad)))
        for rad in triple.radii
    ]
    alpha, valid = exponent_from_norms(*norms)
    return ExponentReport(
        triple=triple,
        n1=norms[0],
        n2=norms[1],
        n4=norms[2],
        alpha_emp=alpha,
        valid=valid,
    )


# ---------------------------------------------------------------------------
# boundary-bulk transfer


@dataclass
class TransferFit:
    """Fitted decay of an interior half-ball norm against the data scale.

    The family scales the boundary data on one window patch by eps while
    (in the mixed mode) a fixed background solution keeps the global
    energy at one; the slope of log(interior norm) against log(eps) then
    sits between 0 and 1, reaching 1 when the background is absent
    because the family becomes linear in eps.
    """

    center: np.ndarray
    radius: float
    eps: np.ndarray
    interior_norms: np.ndarray
    slope: float
    r_squared: float
    mode: str


def _c_infinity_bump(q_sq: np.ndarray) -> np.ndarray:
    """exp(1 - 1/(1 - q^2)) for q^2 < 1, zero outside; unit peak."""
    out = np.zeros_like(q_sq)
    inside = q_sq < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - q_sq[inside]))
    return out


def _patch_inside_window(layout: DomainLayout, x0: np.ndarray, rad: float) -> None:
    for box in layout.regions.window_w:
        if all(
            box[ax][0] <= x0[ax] - rad and x0[ax] + rad <= box[ax][1]
            for ax in range(layout.n)
        ):
            return
    raise DomainError(
        f"data patch of radius {rad:.3g} at {np.round(x0, 3)} is not "
        "contained in the data window"
    )


def boundary_bulk_transfer(
    layout: DomainLayout,
    metric: Metric,
    x0: np.ndarray,
    r: float,
    eps_ladder: np.ndarray,
    *,
    mode: str = "mixed",
    method: str = "auto",
    tol: float = 1e-10,
) -> TransferFit:
    """Fit how smallness of patch data transfers to an interior half-ball.

    The data patch is the tangential ball of radius 3r about x0, required
    to sit inside the data window; the interior norm is the weighted L2
    norm over the half-ball of radius 1.5r about (x0, 0).  In the mixed
    mode each family member is eps * (patch-bump solution) plus a fixed
    background solution driven from the far part of the window, rescaled
    to unit global energy; the pure-data mode drops the background and
    the normalization, making the family linear in eps.  Degenerate
    ladders or poor fits (R^2 < 0.9) emit a fit warning.
    """
    if mode not in ("mixed", "pure-data"):
        raise InputError(f"unknown transfer mode {mode!r}")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (layout.n,):
        raise InputError(
            f"patch center must have {layout.n} coordinates, got {x0.shape}"
        )
    r = float(r)
    if not r > 0.0:
        raise InputError(f"patch radius must be positive, got {r}")
    eps = np.asarray(eps_ladder, dtype=float)
    if eps.ndim != 1 or eps.size < 2:
        raise InputError("data-scale ladder must be a 1-d array with >= 2 entries")
    if not np.all(np.isfinite(eps)) or np.any(eps <= 0):
        raise InputError("data-scale ladder entries must be positive and finite")
    _patch_inside_window(layout, x0, 3.0 * r)

    coords = layout.coords
    q_data = np.sum((coords - x0[None, :]) ** 2, axis=1) / (3.0 * r) ** 2
    f_data = _c_infinity_bump(q_data)
    op = assemble_extension_operator(layout, metric)
    u_data, _ = solve_mixed_problem(op, trace_values=f_data, method=method, tol=tol)
    half_center = np.append(x0, 0.0)
    half_radius = 1.5 * r

    if mode == "pure-data":
        base = float(np.sqrt(ball_weighted_norm_sq(u_data, half_center, half_radius)))
        norms = eps * base
    else:
        # Background data: window mass vanishing on the doubled patch and
        # ramping up beyond it, so the patch data is controlled by eps alone.
        dist = np.sqrt(np.sum((coords - x0[None, :]) ** 2, axis=1)) / (6.0 * r)
        ramp = np.clip(dist - 1.0, 0.0, 1.0)
        f_bg = np.where(layout.window_mask, ramp * ramp * (3.0 - 2.0 * ramp), 0.0)
        if not np.any(f_bg > 0):
            raise DomainError(
                "window has no room for background data outside the patch"
            )
        u_bg, _ = solve_mixed_problem(op, trace_values=f_bg, method=method, tol=tol)
        flat_d = u_data.values.reshape(-1)
        flat_b = u_bg.values.reshape(-1)
        e_d = float(flat_d @ (op.matrix @ flat_d))
        e_b = float(flat_b @ (op.matrix @ flat_b))
        cross = float(flat_d @ (op.matrix @ flat_b))
        norms = np.empty(eps.size)
        for i, e in enumerate(eps):
            combo = ExtensionField(
                values=e * u_data.values + u_bg.values,
                s=layout.s,
                layout=layout,
                provenance="transfer-family",
            )
            energy = e * e * e_d + 2.0 * e * cross + e_b
            norms[i] = float(
                np.sqrt(ball_weighted_norm_sq(combo, half_center, half_radius))
                / np.sqrt(energy)
            )

    log_e = np.log(eps)
    if np.ptp(log_e) < 1e-12 or np.any(norms <= 0):
        warnings.warn(
            "degenerate data-scale ladder: transfer slope is undefined",
            FitWarning,
            stacklevel=2,
        )
        return TransferFit(
            center=x0,
            radius=r,
            eps=eps,
            interior_norms=norms,
            slope=float("nan"),
            r_squared=float("nan"),
            mode=mode,
        )
    log_n = np.log(norms)
    slope, intercept = np.polyfit(log_e, log_n, 1)
    fitted = slope * log_e + intercept
    ss_res = float(np.sum((log_n - fitted) ** 2))
    ss_tot = float(np.sum((log_n - log_n.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 1e-30 else 0.0
    if r_squared < 0.9:
        warnings.warn(
            f"transfer fit is ill-conditioned (R^2 = {r_squared:.3f})",
            FitWarning,
            stacklevel=2,
        )
    return TransferFit(
        center=x0,
        radius=r,
        eps=eps,
        interior_norms=norms,
        slope=float(slope),
        r_squared=float(r_squared),
        mode=mode,
    )


# ---------------------------------------------------------------------------
# chain propagation


@dataclass
class ChainReport:
    """Per-ball norms and exponents along a chain, with the cumulative product.

    Rows follow the chain order.  Invalid triples (norms not strictly
    increasing) keep their norms but contribute neither an exponent nor a
    factor to the cumulative product.
    """

    centers: np.ndarray        # (m, n+1)
    radii: np.ndarray          # (m,)
    n1: np.ndarray
    n2: np.ndarray
    n4: np.ndarray
    alpha_emp: np.ndarray      # nan on invalid rows
    valid: np.ndarray          # bool
    cumulative_exponent: float

    def __len__(self) -> int:
        return len(self.radii)


def propagate_chain(fld: ExtensionField, chain: BallChain) -> ChainReport:
    """Evaluate the three-ball exponent on every ball of an admissible chain.

    Each chain ball is treated as the base radius of a concentric triple;
    the cumulative exponent is the product of the valid per-ball
    exponents, the desk-scale counterpart of iterating the three-ball
    step along the chain.
    """
    if len(chain) == 0:
        raise InputError("chain has no balls")
    reports = []
    for ball in chain.balls:
        triple = BallTriple(
            center=np.asarray(ball.center, dtype=float),
            radius=float(ball.radius),
            q_factor=chain.q_factor,
        )
        reports.append(three_balls_exponent(fld, triple))
    valid = np.array([rep.valid for rep in reports])
    alpha = np.array([rep.alpha_emp for rep in reports])
    cumulative = float(np.prod(alpha[valid])) if valid.any() else float("nan")
    return ChainReport(
        centers=np.array([rep.triple.center for rep in reports]),
        radii=np.array([rep.triple.radius for rep in reports]),
        n1=np.array([rep.n1 for rep in reports]),
        n2=np.array([rep.n2 for rep in reports]),
        n4=np.array([rep.n4 for rep in reports]),
        alpha_emp=alpha,
        valid=valid,
        cumulative_exponent=cumulative,
    )
