"""Tensor-product half-space grids, region bookkeeping, and ball chains.

The computational domain is the box [-X, X]^n x [0, Y] discretizing the upper
half space R^n x R_+.  Tangential axes are uniform; the vertical axis is
geometrically graded toward y = 0 so that the boundary layer of the degenerate
weight y^(1-2s) is resolved.  All weighted vertical cell measures
int_cell y^(1-2s) dy are stored in closed form, never by midpoint rules.

Region semantics on the trace plane y = 0:

    omega_prime  c  omega  c  omega_one        (strictly nested boxes/unions)
    window_w     : exterior data window, closure disjoint from closure(omega_one)

Trace nodes are tagged with exactly one of the five region labels; nodes on
the topological boundary of `omega` count as exterior (Dirichlet) nodes, so
the zero-flux window is the strict interior of `omega`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChainError, GeometryError, PreconditionError

# Trace tags ----------------------------------------------------------------

TAG_OMEGA_PRIME = 0
TAG_OMEGA_ANNULUS = 1
TAG_OMEGA1_ANNULUS = 2
TAG_WINDOW = 3
TAG_FAR = 4

TAG_NAMES = {
    TAG_OMEGA_PRIME: "omega_prime",
    TAG_OMEGA_ANNULUS: "omega_annulus",
    TAG_OMEGA1_ANNULUS: "omega1_annulus",
    TAG_WINDOW: "window",
    TAG_FAR: "far_exterior",
}

# Smallest admissible first-layer trace weight y1^(2s); below this the
# two-layer Neumann fit is numerically meaningless.
_FIRST_LAYER_FLOOR = 1.0e-8

Box = tuple[tuple[float, float], ...]  # ((lo, hi), ...) one pair per axis


def _as_boxes(raw, n: int, name: str) -> tuple[Box, ...]:
    """Normalize a box union to a tuple of per-axis (lo, hi) tuples."""
    boxes = []
    for b in raw:
        box = tuple((float(lo), float(hi)) for lo, hi in b)
        if len(box) != n:
            raise GeometryError(f"{name}: box {b!r} has {len(box)} axes, expected {n}")
        for lo, hi in box:
            if not lo < hi:
                raise GeometryError(f"{name}: degenerate interval ({lo}, {hi})")
        boxes.append(box)
    if not boxes:
        raise GeometryError(f"{name}: empty box union")
    return tuple(boxes)


def _inside(points: np.ndarray, boxes: tuple[Box, ...], *, closed: bool, tol: float = 0.0) -> np.ndarray:
    """Vectorized membership of points (N, n) in a union of boxes."""
    mask = np.zeros(points.shape[0], dtype=bool)
    for box in boxes:
        inside = np.ones(points.shape[0], dtype=bool)
        for ax, (lo, hi) in enumerate(box):
            x = points[:, ax]
            if closed:
                inside &= (x >= lo - tol) & (x <= hi + tol)
            else:
                inside &= (x > lo + tol) & (x < hi - tol)
        mask |= inside
    return mask


def _box_in_box(inner: Box, outer: Box) -> float:
    """Smallest margin by which `inner` sits inside `outer` (negative if not)."""
    return min(
        min(ilo - olo, ohi - ihi)
        for (ilo, ihi), (olo, ohi) in zip(inner, outer)
    )


def _union_strictly_inside(inner: tuple[Box, ...], outer: tuple[Box, ...]) -> bool:
    # Pragmatic check: each inner box must sit inside a single outer box with
    # positive margin.  Unions that straddle several outer boxes are not
    # supported (axis-aligned set algebra is not worth the complexity here).
    return all(any(_box_in_box(ib, ob) > 0.0 for ob in outer) for ib in inner)


def _boxes_disjoint(a: Box, b: Box) -> bool:
    """Closed boxes separated along at least one axis with a strict gap."""
    return any(alo > bhi or ahi < blo for (alo, ahi), (blo, bhi) in zip(a, b))


def tangential_distance_to_boxes(point: np.ndarray, boxes: tuple[Box, ...]) -> float:
    """Euclidean distance from a tangential point to a union of closed boxes."""
    best = math.inf
    for box in boxes:
        d2 = 0.0
        for ax, (lo, hi) in enumerate(box):
            x = point[ax]
            if x < lo:
                d2 += (lo - x) ** 2
            elif x > hi:
                d2 += (x - hi) ** 2
        best = min(best, math.sqrt(d2))
    return best


# Specs ---------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the tensor grid.

    Parameters
    ----------
    n_tangential : 1 or 2, number of tangential axes.
    extent_x     : half-width X of the tangential box [-X, X]^n.
    nodes_x      : nodes per tangential axis (>= 8).
    height_y     : vertical truncation height Y.
    nodes_y      : number of vertical cells (>= 8); levels are nodes_y + 1
                   counting y = 0 and y = Y.
    grading_ratio: geometric cell-growth ratio in (1, 2].  Cells shrink
                   toward y = 0 by this factor.
    """

    n_tangential: int
    extent_x: float
    nodes_x: int
    height_y: float
    nodes_y: int
    grading_ratio: float = 1.15

    def validate(self) -> None:
        if self.n_tangential not in (1, 2):
            raise GeometryError(f"n_tangential must be 1 or 2, got {self.n_tangential}")
        if not self.extent_x > 0:
            raise GeometryError(f"extent_x must be positive, got {self.extent_x}")
        if self.nodes_x < 8:
            raise GeometryError(f"nodes_x must be >= 8, got {self.nodes_x}")
        if not self.height_y > 0:
            raise GeometryError(f"height_y must be positive, got {self.height_y}")
        if self.nodes_y < 8:
            raise GeometryError(f"nodes_y must be >= 8, got {self.nodes_y}")
        if not 1.0 < self.grading_ratio <= 2.0:
            raise GeometryError(
                f"grading_ratio must lie in (1, 2], got {self.grading_ratio}"
            )


@dataclass(frozen=True)
class RegionSpec:
    """Axis-aligned box unions for the nested regions and the data window."""

    omega_prime: tuple[Box, ...]
    omega: tuple[Box, ...]
    omega_one: tuple[Box, ...]
    window_w: tuple[Box, ...]

    @classmethod
    def create(cls, omega_prime, omega, omega_one, window_w, n: int) -> "RegionSpec":
        return cls(
            omega_prime=_as_boxes(omega_prime, n, "omega_prime"),
            omega=_as_boxes(omega, n, "omega"),
            omega_one=_as_boxes(omega_one, n, "omega_one"),
            window_w=_as_boxes(window_w, n, "window_w"),
        )

    def validate(self, extent_x: float) -> None:
        named = {
            "omega_prime": self.omega_prime,
            "omega": self.omega,
            "omega_one": self.omega_one,
            "window_w": self.window_w,
        }
        for name, boxes in named.items():
            for box in boxes:
                for lo, hi in box:
                    if lo < -extent_x or hi > extent_x:
                        raise GeometryError(
                            f"region {name} box {box} exceeds the grid box "
                            f"[-{extent_x}, {extent_x}]"
                        )
        if not _union_strictly_inside(self.omega_prime, self.omega):
            raise GeometryError("omega_prime must be strictly inside omega")
        if not _union_strictly_inside(self.omega, self.omega_one):
            raise GeometryError("omega must be strictly inside omega_one")
        for wb in self.window_w:
            for ob in self.omega_one:
                if not _boxes_disjoint(wb, ob):
                    raise GeometryError(
                        f"window box {wb} touches omega_one box {ob}: "
                        "closures must be disjoint"
                    )


# Layout --------------------------------------------------------------------


def _weighted_cell_measures(y: np.ndarray, s: float) -> np.ndarray:
    """Exact per-cell integrals of y^(1-2s) between consecutive levels."""
    p = 2.0 - 2.0 * s
    return (y[1:] ** p - y[:-1] ** p) / p


def _graded_levels(height: float, m: int, ratio: float) -> np.ndarray:
    if abs(ratio - 1.0) < 1e-12:
        return np.linspace(0.0, height, m + 1)
    j = np.arange(m + 1, dtype=float)
    return height * (ratio**j - 1.0) / (ratio**m - 1.0)


@dataclass
class DomainLayout:
    """Concrete grid: coordinates, weighted measures, and trace tags."""

    spec: GridSpec
    regions: RegionSpec
    s: float
    axes: tuple[np.ndarray, ...]          # per-axis tangential coordinates
    y: np.ndarray                         # vertical levels, y[0] = 0, y[-1] = Y
    cell_w: np.ndarray                    # (M,) weighted vertical cell measures
    dual_w: np.ndarray                    # (M+1,) weighted vertical dual measures
    trace_tags: np.ndarray                # (N_tan,) one tag per trace node
    effective_ratio: float                # grading ratio actually used
    coords: np.ndarray = field(repr=False, default=None)  # (N_tan, n)

    # -- derived sizes ------------------------------------------------------

    @property
    def n(self) -> int:
        return self.spec.n_tangential

    @property
    def tan_shape(self) -> tuple[int, ...]:
        return tuple(len(ax) for ax in self.axes)

    @property
    def n_tan(self) -> int:
        return int(np.prod(self.tan_shape))

    @property
    def n_levels(self) -> int:
        return len(self.y)

    @property
    def n_nodes(self) -> int:
        return self.n_tan * self.n_levels

    @property
    def hx(self) -> float:
        return float(self.axes[0][1] - self.axes[0][0])

    @property
    def hy(self) -> np.ndarray:
        return np.diff(self.y)

    # -- masks --------------------------------------------------------------

    def tag_mask(self, *tags: int) -> np.ndarray:
        mask = np.zeros(self.n_tan, dtype=bool)
        for t in tags:
            mask |= self.trace_tags == t
        return mask

    @property
    def omega_mask(self) -> np.ndarray:
        """Strict interior of omega (the zero-flux window on the trace)."""
        return self.tag_mask(TAG_OMEGA_PRIME, TAG_OMEGA_ANNULUS)

    @property
    def window_mask(self) -> np.ndarray:
        return self.tag_mask(TAG_WINDOW)

    @property
    def omega1_mask(self) -> np.ndarray:
        return self.tag_mask(TAG_OMEGA_PRIME, TAG_OMEGA_ANNULUS, TAG_OMEGA1_ANNULUS)

    @property
    def annulus_mask(self) -> np.ndarray:
        """omega_one minus closure(omega)."""
        return self.tag_mask(TAG_OMEGA1_ANNULUS)

    @property
    def lateral_mask(self) -> np.ndarray:
        """Tangential nodes on the boundary of the big box (per-column Dirichlet)."""
        mask = np.zeros(self.n_tan, dtype=bool)
        for ax in range(self.n):
            coord = self.coords[:, ax]
            lo, hi = self.axes[ax][0], self.axes[ax][-1]
            mask |= np.isclose(coord, lo) | np.isclose(coord, hi)
        return mask

    # -- tangential dual volumes --------------------------------------------

    @property
    def dual_x(self) -> np.ndarray:
        """Per-node tangential dual volume (trapezoid weights, tensorized)."""
        weights = []
        for ax in self.axes:
            w = np.full(len(ax), self.hx)
            w[0] = w[-1] = self.hx / 2.0
            weights.append(w)
        if self.n == 1:
            return weights[0].copy()
        return np.outer(weights[0], weights[1]).reshape(-1)

    # -- indexing -----------------------------------------------------------

    def node_index(self, level: int, tan_index: int) -> int:
        """Global index with level-major ordering."""
        return level * self.n_tan + tan_index

    def strict_interior_mask(self, boxes: tuple[Box, ...], margin: float = 0.0) -> np.ndarray:
        return _inside(self.coords, boxes, closed=False, tol=margin)

    def closed_mask(self, boxes: tuple[Box, ...]) -> np.ndarray:
        return _inside(self.coords, boxes, closed=True, tol=1e-12)

    def weighted_measure_total(self) -> float:
        return float(np.sum(self.cell_w))


def build_grid(spec: GridSpec, regions: RegionSpec, *, s: float = 0.75) -> DomainLayout:
    """Construct a DomainLayout with exact weighted vertical measures.

    The vertical mesh is y_j = Y (rho^j - 1)/(rho^M - 1).  If the requested
    grading would push the first layer below the trace-extraction floor
    (y_1^(2s) >= 1e-8), the ratio is relaxed by bisection until the floor is
    met; the ratio actually used is recorded on the layout.
    """
    spec.validate()
    regions.validate(spec.extent_x)
    if not 0.0 < s < 1.0:
        raise PreconditionError(f"fractional order s must lie in (0, 1), got {s}")

    m = spec.nodes_y
    y_floor = _FIRST_LAYER_FLOOR ** (1.0 / (2.0 * s))

    def first_layer(ratio: float) -> float:
        return float(_graded_levels(spec.height_y, m, ratio)[1])

    ratio = spec.grading_ratio
    if first_layer(ratio) < y_floor:
        lo, hi = 1.0 + 1e-9, ratio
        if first_layer(lo) < y_floor:
            raise GeometryError(
                f"even a uniform vertical mesh has first layer "
                f"{first_layer(lo):.3e} < floor {y_floor:.3e}; reduce nodes_y"
            )
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if first_layer(mid) >= y_floor:
                lo = mid
            else:
                hi = mid
        ratio = lo

    y = _graded_levels(spec.height_y, m, ratio)
    cell_w = _weighted_cell_measures(y, s)
    dual_w = np.empty(m + 1)
    dual_w[0] = cell_w[0] / 2.0
    dual_w[-1] = cell_w[-1] / 2.0
    dual_w[1:-1] = (cell_w[:-1] + cell_w[1:]) / 2.0

    axes = tuple(
        np.linspace(-spec.extent_x, spec.extent_x, spec.nodes_x)
        for _ in range(spec.n_tangential)
    )
    if spec.n_tangential == 1:
        coords = axes[0][:, None].copy()
    else:
        xg, zg = np.meshgrid(axes[0], axes[1], indexing="ij")
        coords = np.column_stack([xg.reshape(-1), zg.reshape(-1)])

    tags = np.full(coords.shape[0], TAG_FAR, dtype=np.uint8)
    in_w = _inside(coords, regions.window_w, closed=True, tol=1e-12)
    in_o1 = _inside(coords, regions.omega_one, closed=True, tol=1e-12)
    in_o = _inside(coords, regions.omega, closed=False, tol=1e-12)
    in_op = _inside(coords, regions.omega_prime, closed=True, tol=1e-12)
    tags[in_w] = TAG_WINDOW
    tags[in_o1] = TAG_OMEGA1_ANNULUS
    tags[in_o] = TAG_OMEGA_ANNULUS
    tags[in_op & in_o] = TAG_OMEGA_PRIME

    layout = DomainLayout(
        spec=spec,
        regions=regions,
        s=s,
        axes=axes,
        y=y,
        cell_w=cell_w,
        dual_w=dual_w,
        trace_tags=tags,
        effective_ratio=ratio,
        coords=coords,
    )

    # Exact-measure invariant: the closed forms telescope.
    total = layout.weighted_measure_total()
    expected = spec.height_y ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
    if not math.isclose(total, expected, rel_tol=1e-12):
        raise GeometryError(
            f"weighted measures sum to {total!r}, expected {expected!r}"
        )
    return layout


# Ball quadrature -----------------------------------------------------------


def ball_cell_fractions(
    layout: DomainLayout,
    center: np.ndarray,
    radius: float,
    subsamples: int = 4,
) -> np.ndarray:
    """Per-cell volume fraction covered by the ball B_radius(center).

    Cells are the tensor cells of the layout (tangential cells x vertical
    cells).  Fully inside/outside cells are decided from their corner farthest
    from / closest to the center; straddling cells are subsampled with
    `subsamples` points per axis (default 4, i.e. 4^(n+1) per cell).  Returns
    an array of shape (M, *tangential cell shape).
    """
    center = np.asarray(center, dtype=float)
    naxes = layout.n + 1
    if center.shape != (naxes,):
        raise GeometryError(
            f"ball center must have {naxes} coordinates, got {center.shape}"
        )
    lows = [ax[:-1] for ax in layout.axes] + [layout.y[:-1]]
    highs = [ax[1:] for ax in layout.axes] + [layout.y[1:]]
    shape = tuple(len(lo) for lo in lows)  # (tan cells ..., vertical cells)

    # Per-axis distances from the center to the near/far side of each cell.
    near_sq = np.zeros(shape)
    far_sq = np.zeros(shape)
    for ax in range(naxes):
        lo, hi = lows[ax], highs[ax]
        c = center[ax]
        near = np.clip(np.maximum(lo - c, c - hi), 0.0, None)
        far = np.maximum(np.abs(lo - c), np.abs(hi - c))
        sl = [None] * naxes
        sl[ax] = slice(None)
        near_sq = near_sq + (near**2)[tuple(sl)]
        far_sq = far_sq + (far**2)[tuple(sl)]

    r2 = radius * radius
    frac = np.zeros(shape)
    frac[far_sq <= r2] = 1.0
    straddle = (near_sq < r2) & (far_sq > r2)
    if np.any(straddle):
        idx = np.nonzero(straddle)
        offsets = (np.arange(subsamples) + 0.5) / subsamples
        inside_count = np.zeros(len(idx[0]))
        # Tensor subsample loop; subsamples^(n+1) iterations of vectorized work.
        grids = np.meshgrid(*([offsets] * naxes), indexing="ij")
        for pt in zip(*(g.reshape(-1) for g in grids)):
            d2 = np.zeros(len(idx[0]))
            for ax in range(naxes):
                lo = lows[ax][idx[ax]]
                hi = highs[ax][idx[ax]]
                coord = lo + pt[ax] * (hi - lo)
                d2 += (coord - center[ax]) ** 2
            inside_count += d2 <= r2
        frac[idx] = inside_count / subsamples**naxes
    # Reorder to (vertical, tangential...) to match field storage.
    return np.moveaxis(frac, -1, 0)


# Ball chains ---------------------------------------------------------------


@dataclass
class Ball:
    center: np.ndarray  # (n+1,) last coordinate is the height
    radius: float

    @property
    def height(self) -> float:
        return float(self.center[-1])


@dataclass
class ChainPolicy:
    """Greedy chain parameters.

    rho1 is the per-step growth ratio; containment of each ball in the double
    of its predecessor with centers at height 5r caps it at 7/6, so the
    admissible range here is (1, 7/6].  rho2 in (1, 2) is the shrink ratio
    used when approaching a small target.
    """

    rho1: float = 1.15
    rho2: float = 1.5
    q_factor: float = 4.0
    max_balls: int = 4000

    def validate(self) -> None:
        if not 1.0 < self.rho1 <= 7.0 / 6.0 + 1e-12:
            raise ChainError(f"rho1 must lie in (1, 7/6], got {self.rho1}")
        if not 1.0 < self.rho2 < 2.0:
            raise ChainError(f"rho2 must lie in (1, 2), got {self.rho2}")
        if self.q_factor < 4.0:
            raise ChainError(f"q_factor must be >= 4, got {self.q_factor}")


@dataclass
class BallChain:
    balls: list[Ball]
    q_factor: float
    policy: ChainPolicy

    def __len__(self) -> int:
        return len(self.balls)

    def validate(self, omega_boxes: tuple[Box, ...]) -> None:
        """Check the three chain invariants; raise ChainError on violation."""
        q = self.q_factor
        for idx, ball in enumerate(self.balls):
            min_height = ball.height - 4.0 * ball.radius
            if min_height <= 0.0:
                raise ChainError(
                    f"ball {idx}: quadruple ball dips below the trace plane"
                )
            if 4.0 * ball.radius > q * min_height + 1e-12:
                raise ChainError(
                    f"ball {idx}: 4r = {4 * ball.radius:.3g} exceeds "
                    f"Q * min-height = {q * min_height:.3g}"
                )
            dist = tangential_distance_to_boxes(ball.center[:-1], omega_boxes)
            if dist < 4.0 * ball.radius - 1e-12:
                raise ChainError(
                    f"ball {idx}: quadruple ball meets the omega cylinder "
                    f"(tangential distance {dist:.3g} < {4 * ball.radius:.3g})"
                )
        for idx in range(1, len(self.balls)):
            prev, cur = self.balls[idx - 1], self.balls[idx]
            gap = np.linalg.norm(cur.center - prev.center) + cur.radius
            if gap > 2.0 * prev.radius + 1e-12:
                raise ChainError(
                    f"balls {idx - 1}->{idx}: containment in the doubled "
                    f"predecessor fails ({gap:.3g} > {2 * prev.radius:.3g})"
                )


def ball_chain(
    start: Ball,
    target: Ball,
    omega_boxes: tuple[Box, ...],
    policy: ChainPolicy | None = None,
) -> BallChain:
    """Greedy chain of balls from `start` to `target` in the upper half space.

    Marches along straight segments toward the target center, growing the
    radius by at most rho1 per step while staying admissible (quadruple balls
    above the trace plane with height factor Q, and clear of the omega
    cylinder), shrinking by roughly rho2 as the target scale is approached.
    Raises ChainError if the start is inadmissible or progress stalls (no
    routing around obstacles is attempted).
    """
    policy = policy or ChainPolicy()
    policy.validate()

    def geom_cap(center: np.ndarray) -> float:
        # Largest admissible radius at this center.
        height_cap = center[-1] / (4.0 / policy.q_factor + 4.0)
        avoid_cap = tangential_distance_to_boxes(center[:-1], omega_boxes) / 4.0
        return min(height_cap, avoid_cap)

    if tangential_distance_to_boxes(start.center[:-1], omega_boxes) == 0.0:
        raise PreconditionError(
            "chain start lies over omega: propagation must begin outside the "
            "omega cylinder"
        )
    if start.radius > geom_cap(start.center) + 1e-12:
        raise PreconditionError("start ball violates the chain admissibility bounds")

    balls = [Ball(np.asarray(start.center, dtype=float).copy(), float(start.radius))]
    dist0 = float(np.linalg.norm(target.center - start.center))
    for _ in range(policy.max_balls):
        cur = balls[-1]
        to_target = target.center - cur.center
        dist = float(np.linalg.norm(to_target))
        if dist + target.radius <= cur.radius + 1e-12:
            break  # target ball contained in the current ball
        direction = to_target / dist
        # Candidate radius: grow while admissible, taper toward the target
        # scale so the final ball can swallow the target.
        scale_cap = max(target.radius, dist / 4.0)
        r_next = min(policy.rho1 * cur.radius, scale_cap)
        step = min(0.95 * (2.0 * cur.radius - r_next), dist)
        center = cur.center + step * direction
        cap = geom_cap(center)
        if cap <= 0.0:
            raise ChainError("chain blocked: no admissible ball at the next center")
        r_next = min(r_next, cap)
        if step <= 1e-9 * max(1.0, dist0):
            # Radii were squeezed toward zero by the admissibility caps; the
            # straight segment cannot make progress (no routing is attempted).
            raise ChainError("chain stalled: admissibility caps squeeze the radius to zero")
        balls.append(Ball(center, float(r_next)))
    else:
        raise ChainError(
            f"chain exceeded {policy.max_balls} balls without reaching the target"
        )

    chain = BallChain(balls=balls, q_factor=policy.q_factor, policy=policy)
    chain.validate(omega_boxes)
    return chain
