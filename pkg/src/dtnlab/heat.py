"""Tangential heat semigroup and the subordination route to the extension.

Provides an independent construction of the weighted extension: evolve the
trace datum by the tangential heat flow w_t = div(a grad w) (Crank-Nicolson,
adaptive substeps, backward-Euler start-up to damp rough data), then
superpose heat snapshots against the subordination weight

    u(x, y) = c_P(s) * int_0^inf  e^(-1/(4 tau)) tau^(-1-s) w(x, tau y^2) dtau,

with c_P(s) = 1/(4^s Gamma(s)).  The tau-substitution makes the weight
independent of the height, so constants extend to constants up to pure
quadrature error and the peak is resolved uniformly in y.

The elliptic solver (elliptic.py) discretizes the same extension problem
directly; cross_validate_extensions measures the discrepancy of the two
routes on a band above the trace plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from .elliptic import ExtensionField, Metric, tangential_stiffness
from .errors import InputError, NumericError, SolverError, UnderflowError
from .grid import DomainLayout

_ENERGY_TOL = 1e-3
_STOP_FLOOR = 1e-14
_GROWTH = 1.4


def poisson_constant(s: float) -> float:
    """Normalization c_P(s) = 1/(4^s Gamma(s)) forced by the boundary limit."""
    return 1.0 / (4.0**s * gamma_fn(s))


def subordination_weight(tau: np.ndarray, s: float) -> np.ndarray:
    """Density e^(-1/(4 tau)) tau^(-1-s) of the subordination measure."""
    tau = np.asarray(tau, dtype=float)
    with np.errstate(over="ignore"):
        return np.exp(-0.25 / tau) * tau ** (-1.0 - s)


def normalization_check(s: float) -> tuple[float, float, float]:
    """Adaptive quadrature of the subordination mass against 4^s Gamma(s).

    Returns (numeric, closed_form, relative_error).
    """
    if not 0.0 < s < 1.0:
        raise InputError(f"s must lie in (0, 1), got {s}")
    f = lambda t: subordination_weight(t, s)
    head, _ = quad(f, 0.0, 1.0, limit=200)
    tail, _ = quad(f, 1.0, np.inf, limit=200)
    numeric = head + tail
    closed = 4.0**s * gamma_fn(s)
    return numeric, closed, abs(numeric - closed) / closed


# Stepper -------------------------------------------------------------------


class _TangentialHeat:
    """Interior-node stepper for w_t = div(a grad w), Dirichlet walls.

    n=1 uses a tridiagonal banded solve per step (no caching needed); n=2
    factorizes sparsely and caches per (scheme, dt), which pays off because
    the step controller quantizes dt to powers of two.
    """

    def __init__(self, layout: DomainLayout, metric: Metric):
        metric.validate(layout)
        self.layout = layout
        k_full = tangential_stiffness(layout, metric)
        self.interior = ~layout.lateral_mask
        idx = np.flatnonzero(self.interior)
        self.k = k_full[idx][:, idx].tocsr()
        self.m = layout.dual_x[idx]
        self.n_int = idx.size
        self.banded = layout.n == 1
        if self.banded:
            self._k_ab = np.zeros((3, self.n_int))
            self._k_ab[0, 1:] = self.k.diagonal(1)
            self._k_ab[1, :] = self.k.diagonal(0)
            self._k_ab[2, :-1] = self.k.diagonal(-1)
        self._lu_cache: dict[tuple[str, float], object] = {}

    def embed(self, w_int: np.ndarray) -> np.ndarray:
        full = np.zeros(self.layout.n_tan)
        full[self.interior] = w_int
        return full

    def restrict(self, w_full: np.ndarray) -> np.ndarray:
        return w_full[self.interior]

    def energy(self, w: np.ndarray) -> float:
        return float(np.sum(self.m * w * w))

    def mass(self, w: np.ndarray) -> float:
        return float(np.sum(self.m * w))

    def _banded_solve(self, coef: float, rhs: np.ndarray) -> np.ndarray:
        ab = coef * self._k_ab
        ab[1, :] += self.m
        return sla.solve_banded((1, 1), ab, rhs)

    def _solver(self, kind: str, dt: float):
        key = (kind, dt)
        hit = self._lu_cache.get(key)
        if hit is not None:
            return hit
        coef = 0.5 * dt if kind == "cn" else dt
        mat = (sp.diags(self.m) + coef * self.k).tocsc()
        lu = spla.splu(mat)
        if len(self._lu_cache) > 64:
            self._lu_cache.clear()
        self._lu_cache[key] = lu
        return lu

    def cn_step(self, w: np.ndarray, dt: float) -> np.ndarray:
        rhs = self.m * w - 0.5 * dt * (self.k @ w)
        if self.banded:
            return self._banded_solve(0.5 * dt, rhs)
        return self._solver("cn", dt).solve(rhs)

    def be_half_steps(self, w: np.ndarray, dt: float) -> np.ndarray:
        if self.banded:
            w1 = self._banded_solve(0.5 * dt, self.m * w)
            return self._banded_solve(0.5 * dt, self.m * w1)
        lu = self._solver("be", 0.5 * dt)
        w1 = lu.solve(self.m * w)
        return lu.solve(self.m * w1)


def _walk_times(
    stepper: _TangentialHeat,
    w0: np.ndarray,
    times: np.ndarray,
    energy_tol: float = _ENERGY_TOL,
):
    """March through the sorted times, yielding (index, interior snapshot).

    Adaptive step control: a trial step is accepted when the relative change
    of the discrete L^2 energy is at most energy_tol; rejected steps halve dt
    and accepted quiet steps double it (power-of-two dt, so solver factors
    recur).  The change is measured against the current energy while the
    field is significant and against 1e-4 of the peak energy once it has
    decayed that far -- pure exponential tails are then crossed in
    logarithmically many steps instead of being resolved forever.  The first
    two accepted advances are pairs of backward-Euler half steps (damps rough
    initial data), Crank-Nicolson afterwards.  Once the field decays below a
    floor relative to the initial datum, the walk stops; indices not yielded
    are zero snapshots.
    """
    if times.size == 0:
        return
    sup0 = float(np.abs(w0).max())
    if sup0 == 0.0:
        return
    w = w0.copy()
    t = 0.0
    dt = max(float(times[0]), 1e-12) / 16.0
    accepted = 0
    e_peak = stepper.energy(w0)
    k = 0
    while k < times.size:
        target = float(times[k])
        if target - t <= 1e-12 * max(target, 1e-30):
            yield k, w
            k += 1
            continue
        if float(np.abs(w).max()) < _STOP_FLOOR * sup0:
            return  # remaining snapshots stay zero
        while target - t > 1e-12 * max(target, 1e-30):
            clamped = dt > target - t
            dt_try = (target - t) if clamped else dt
            if accepted < 2:
                w_new = stepper.be_half_steps(w, dt_try)
            else:
                w_new = stepper.cn_step(w, dt_try)
            e0 = stepper.energy(w)
            e1 = stepper.energy(w_new)
            rel = abs(e1 - e0) / max(e0, 1e-4 * e_peak, 1e-300)
            if rel > energy_tol:
                if dt_try <= 1e-15 * max(t, target):
                    raise SolverError(
                        "heat step control collapsed the substep to zero"
                    )
                dt = dt_try / 2.0
                continue
            w = w_new
            t += dt_try
            accepted += 1
            e_peak = max(e_peak, e1)
            if rel < 0.2 * energy_tol and not clamped:
                dt = 2.0 * dt
        yield k, w
        k += 1


def _evolve_to_times(
    stepper: _TangentialHeat,
    w0: np.ndarray,
    times: np.ndarray,
    energy_tol: float = _ENERGY_TOL,
) -> np.ndarray:
    """Materialized snapshots (T, n_int); early-stopped rows are zero."""
    out = np.zeros((times.size, stepper.n_int))
    for k, w in _walk_times(stepper, w0, times, energy_tol):
        out[k] = w
    return out


# Semigroup and kernel sampling --------------------------------------------


@dataclass
class EvolvedTraces:
    times: np.ndarray    # (T,)
    fields: np.ndarray   # (T, N_tan)
    mass: np.ndarray     # (T,)


@dataclass
class HeatKernelSamples:
    """Kernel columns K_t(., z') for selected source nodes."""

    times: np.ndarray     # (T,)
    columns: np.ndarray   # (T, n_sources, N_tan)
    sources: np.ndarray   # (n_sources,) tangential node indices
    layout: DomainLayout = field(repr=False)

    def validate(self) -> None:
        low = float(self.columns.min())
        if low < -1e-10:
            raise NumericError(
                f"kernel column dips to {low:.3e}, below the -1e-10 floor"
            )
        masses = np.einsum("i,tsi->ts", self.layout.dual_x, self.columns)
        if float(masses.max()) > 1.0 + 1e-8:
            raise NumericError(
                f"kernel mass {masses.max():.12f} exceeds 1 beyond tolerance"
            )


def _check_times(times: np.ndarray, positive: bool) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise InputError("times must be a nonempty 1-d array")
    if np.any(np.diff(times) <= 0):
        raise InputError("times must be strictly increasing")
    if positive and times[0] <= 0:
        raise InputError("times must be strictly positive")
    if not positive and times[0] < 0:
        raise InputError("times must be nonnegative")
    return times


def heat_semigroup(
    layout: DomainLayout,
    metric: Metric,
    u0: np.ndarray,
    times: np.ndarray,
    *,
    energy_tol: float = _ENERGY_TOL,
) -> EvolvedTraces:
    """Evolve the trace field u0 by the tangential heat flow.

    Dirichlet truncation at lateral walls: wall values are forced to zero for
    t > 0, so mass leaks once the field reaches the boundary.
    """
    times = _check_times(times, positive=False)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (layout.n_tan,):
        raise InputError(f"u0 must have shape ({layout.n_tan},), got {u0.shape}")
    stepper = _TangentialHeat(layout, metric)
    pos = times > 0
    snaps_int = _evolve_to_times(stepper, stepper.restrict(u0), times[pos], energy_tol)
    fields = np.zeros((times.size, layout.n_tan))
    fields[~pos] = u0
    fields[pos] = np.array([stepper.embed(w) for w in snaps_int])
    mass = fields @ layout.dual_x
    return EvolvedTraces(times=times, fields=fields, mass=mass)


def heat_kernel_samples(
    layout: DomainLayout,
    metric: Metric,
    times: np.ndarray,
    sources: np.ndarray,
) -> HeatKernelSamples:
    """Columns of the discrete heat kernel: evolution of renormalized deltas."""
    times = _check_times(times, positive=True)
    sources = np.asarray(sources, dtype=int)
    if sources.ndim != 1 or sources.size == 0:
        raise InputError("sources must be a nonempty 1-d index array")
    if np.any(sources < 0) or np.any(sources >= layout.n_tan):
        raise InputError("source indices out of range")
    if np.any(layout.lateral_mask[sources]):
        raise InputError("kernel sources must be interior tangential nodes")
    stepper = _TangentialHeat(layout, metric)
    cols = np.zeros((times.size, sources.size, layout.n_tan))
    for si, node in enumerate(sources):
        delta = np.zeros(layout.n_tan)
        delta[node] = 1.0 / layout.dual_x[node]
        snaps = _evolve_to_times(stepper, stepper.restrict(delta), times)
        cols[:, si, :] = np.array([stepper.embed(w) for w in snaps])
    return HeatKernelSamples(times=times, columns=cols, sources=sources, layout=layout)


# Subordination quadrature --------------------------------------------------


def _log_trapezoid(lo: float, hi: float, per_decade: float, s: float):
    decades = math.log10(hi / lo)
    npts = max(int(math.ceil(decades * per_decade)) + 1, 2)
    x = np.linspace(math.log(lo), math.log(hi), npts)
    tau = np.exp(x)
    dens = subordination_weight(tau, s) * tau  # integrand in d(log tau)
    dx = x[1] - x[0]
    w = np.full(npts, dx)
    w[0] = w[-1] = dx / 2.0
    return tau, w * dens


def _tau_grid(s: float, y: float, points_per_decade: int, t_range: tuple[float, float]):
    """Geometric tau nodes and trapezoid weights against the subordination
    density, covering t = tau*y^2 over t_range and the full weight mass.

    The requested density applies on the peak block [1e-4, 1e3] (the weight
    peaks at tau = 1/(4(1+s))); the far tails, where the smooth integrand
    carries a vanishing fraction of the mass, use a quarter of the density.
    """
    t_lo, t_hi = t_range
    # relative mass beyond tau_hi is about tau_hi^(-s)/(s * 4^s Gamma(s))
    tail = (1e-9 * s * 4.0**s * gamma_fn(s)) ** (-1.0 / s)
    tau_lo = min(1e-4, t_lo / y**2)
    tau_hi = min(max(1e3, t_hi / y**2, tail), 1e18)
    peak_lo, peak_hi = max(tau_lo, 1e-4), min(tau_hi, 1e3)
    # Joint nodes appear once per adjacent block, each carrying its block's
    # half-interval weight; the sum is the composite trapezoid rule.
    parts = []
    if tau_lo < peak_lo:
        parts.append(_log_trapezoid(tau_lo, peak_lo, points_per_decade / 4.0, s))
    parts.append(_log_trapezoid(peak_lo, peak_hi, float(points_per_decade), s))
    if tau_hi > peak_hi:
        parts.append(_log_trapezoid(peak_hi, tau_hi, points_per_decade / 4.0, s))
    tau = np.concatenate([p[0] for p in parts])
    w = np.concatenate([p[1] for p in parts])
    return tau, w


def poisson_extend(
    layout: DomainLayout,
    metric: Metric,
    u0: np.ndarray,
    *,
    s: float | None = None,
    heights: np.ndarray | None = None,
    max_height: float = np.inf,
    points_per_decade: int = 40,
    t_range: tuple[float, float] = (1e-4, 1e3),
    energy_tol: float = _ENERGY_TOL,
):
    """Extension by subordination of the tangential heat flow.

    heights = None: evaluate at every positive grid level up to max_height
    (rows above stay zero) and return an ExtensionField whose trace row is u0
    (the representation's boundary limit); provenance
    "poisson-representation".  Explicit heights must be strictly positive;
    the return is then a plain (H, N_tan) array.
    """
    if s is None:
        s = layout.s
    if not 0.0 < s < 1.0:
        raise InputError(f"s must lie in (0, 1), got {s}")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (layout.n_tan,):
        raise InputError(f"u0 must have shape ({layout.n_tan},), got {u0.shape}")
    as_field = heights is None
    if as_field:
        hs = layout.y[1:][layout.y[1:] <= max_height]
        if hs.size == 0:
            raise InputError("max_height excludes every grid level")
    else:
        hs = np.asarray(heights, dtype=float)
        if hs.ndim != 1 or hs.size == 0:
            raise InputError("heights must be a nonempty 1-d array")
        if np.any(hs <= 0):
            raise InputError(
                "heights must be strictly positive; the trace is the y->0 "
                "limit of the representation, not a quadrature value"
            )
    if points_per_decade < 40:
        raise InputError("points_per_decade must be at least 40")

    # Per-height tau grids -> a single sorted list of evolution times, each
    # carrying (height row, weight) contributions.
    entries: list[tuple[float, int, float]] = []
    for row, y in enumerate(hs):
        tau, w = _tau_grid(s, float(y), points_per_decade, t_range)
        tvals = tau * y**2
        for t, wk in zip(tvals, w):
            entries.append((float(t), row, float(wk)))
    entries.sort(key=lambda e: e[0])
    times = np.array([e[0] for e in entries])

    stepper = _TangentialHeat(layout, metric)
    cP = poisson_constant(s)
    acc_int = np.zeros((hs.size, stepper.n_int))
    for k, snap in _walk_times(stepper, stepper.restrict(u0), times, energy_tol):
        _, row, wk = entries[k]
        acc_int[row] += cP * wk * snap
    acc = np.zeros((hs.size, layout.n_tan))
    acc[:, stepper.interior] = acc_int

    if not as_field:
        return acc
    values = np.zeros((layout.n_levels, layout.n_tan))
    values[0] = u0
    values[1 : 1 + hs.size] = acc
    return ExtensionField(
        values=values, s=s, layout=layout, provenance="poisson-representation"
    )


# Cross-validation and diagnostics ------------------------------------------


@dataclass
class CrossValidation:
    discrepancy: float       # relative weighted-L2 over region x band
    absolute: float
    reference_norm: float
    y_band: tuple[float, float]


def cross_validate_extensions(
    layout: DomainLayout,
    metric: Metric,
    f: np.ndarray,
    *,
    s: float | None = None,
    y_band: tuple[float, float] = (0.2, 2.0),
    points_per_decade: int = 40,
) -> CrossValidation:
    """Discrepancy of the elliptic and subordination extensions.

    Solves the mixed exterior-data problem for f, feeds the FULL computed
    trace (not just f) to the subordination route, and compares in the
    weighted L^2 norm over (closure of the first enlargement union the data
    window) x y_band, relative to the elliptic field on the same set.
    """
    from .elliptic import assemble_extension_operator, solve_mixed_problem, weighted_norm

    if s is None:
        s = layout.s
    f = np.asarray(f, dtype=float)
    if f.shape != (layout.n_tan,):
        raise InputError(f"datum must have shape ({layout.n_tan},), got {f.shape}")
    lo, hi = y_band
    if not 0.0 < lo < hi <= layout.y[-1] + 1e-12:
        raise InputError(f"invalid y band {y_band}")

    op = assemble_extension_operator(layout, metric)
    fld_e, _ = solve_mixed_problem(op, trace_values=f)
    # Evaluate one level past the band so straddling dual cells see data.
    above = layout.y[layout.y > hi]
    cap = float(above[1]) if above.size > 1 else layout.y[-1]
    fld_p = poisson_extend(
        layout,
        metric,
        fld_e.trace,
        s=s,
        max_height=cap,
        points_per_decade=points_per_decade,
    )

    mask = layout.closed_mask(layout.regions.omega_one) | layout.closed_mask(
        layout.regions.window_w
    )
    diff = ExtensionField(
        values=fld_e.values - fld_p.values, s=s, layout=layout, provenance="synthetic"
    )
    absolute = weighted_norm(diff, region_mask=mask, y_range=y_band)
    reference = weighted_norm(fld_e, region_mask=mask, y_range=y_band)
    if reference < 1e-300:
        return CrossValidation(0.0, 0.0, 0.0, y_band)
    return CrossValidation(
        discrepancy=absolute / reference,
        absolute=absolute,
        reference_norm=reference,
        y_band=y_band,
    )


def vertical_decay_fit(
    fld: ExtensionField,
    x_window: tuple[float, float],
    y_range: tuple[float, float],
) -> float:
    """Least-squares slope of log sup_window |u(., y)| against log y.

    The admissible fit band is y in [1, Y/2]: below 1 the decay has not set
    in, above Y/2 the top truncation pollutes the field.
    """
    layout = fld.layout
    ymax = layout.y[-1]
    lo, hi = y_range
    if not 1.0 - 1e-12 <= lo < hi <= ymax / 2.0 + 1e-12:
        raise InputError(
            f"y range {y_range} must sit inside [1, {ymax / 2:g}]"
        )
    sel = (layout.y >= lo - 1e-12) & (layout.y <= hi + 1e-12)
    if int(sel.sum()) < 3:
        raise InputError("need at least three grid levels inside the fit range")
    wlo, whi = x_window
    in_win = np.all(
        (layout.coords >= wlo - 1e-12) & (layout.coords <= whi + 1e-12), axis=1
    )
    if not in_win.any():
        raise InputError(f"x window {x_window} contains no tangential nodes")
    sups = np.abs(fld.values[sel][:, in_win]).max(axis=1)
    if np.any(sups < 1e-14):
        raise UnderflowError(
            "field drops below 1e-14 in the window; decay fit is noise"
        )
    slope = np.polyfit(np.log(layout.y[sel]), np.log(sups), 1)[0]
    return float(slope)


@dataclass
class GaussianBoundReport:
    c_min: float          # smallest admissible prefactor
    min_value: float      # most negative kernel sample
    decay_slope: float    # slope of log sup K_t vs log t
    delta: float
    theta1: float


def gaussian_bound_check(
    samples: HeatKernelSamples,
    theta1: float,
    delta: float,
) -> GaussianBoundReport:
    """Smallest c with K_t(x,z) <= c t^(-n/2) exp(-|x-z|^2 theta1/(4(1+delta)t)).

    Also reports the most negative kernel sample (alarm below -1e-10) and the
    slope of log sup_x K_t versus log t (the bound predicts -n/2).
    """
    if not 0.0 < theta1 <= 1.0:
        raise InputError(f"theta1 must lie in (0, 1], got {theta1}")
    if delta <= 0.0:
        raise InputError(f"delta must be positive, got {delta}")
    layout = samples.layout
    n = layout.n
    low = float(samples.columns.min())
    if low < -1e-10:
        raise NumericError(
            f"kernel sample {low:.3e} below the -1e-10 nonnegativity floor; "
            "refine the time stepping"
        )
    c_req = 0.0
    for ti, t in enumerate(samples.times):
        for si, node in enumerate(samples.sources):
            d2 = np.sum((layout.coords - layout.coords[node]) ** 2, axis=1)
            envelope = t ** (-n / 2.0) * np.exp(-d2 * theta1 / (4.0 * (1.0 + delta) * t))
            ratio = np.max(samples.columns[ti, si] / envelope)
            c_req = max(c_req, float(ratio))
    sups = samples.columns.max(axis=(1, 2))
    if np.any(sups <= 0):
        raise NumericError("kernel sup vanished; cannot fit the decay slope")
    decay = float(np.polyfit(np.log(samples.times), np.log(sups), 1)[0])
    return GaussianBoundReport(
        c_min=c_req, min_value=low, decay_slope=decay, delta=delta, theta1=theta1
    )
