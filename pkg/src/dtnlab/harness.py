"""Experiment orchestration: configs, run manifests, sweeps, and plot scripts.

Configuration format (TOML)
---------------------------

Top-level keys::

    kind = "tails"        # reduce | runge | smallness | tails | stability |
                          # selftest | solve-extension | dtn
    seed = 0              # RNG seed for randomized families (default 0)
    out  = "runs/demo"    # default output directory (CLI --out overrides)

Sections (regions are lists of boxes; a box is a list of per-axis
``[lo, hi]`` intervals, so a 1-d region is ``[[[-0.5, 0.5]]]``)::

    [grid]      n, extent, nodes_x, height, nodes_y, grading
    [regions]   omega_prime, omega, omega_one, window
    [problem]   s
    [metric]    family = "identity" | "isotropic-bump";
                amplitude, radius, center (bump family)
    [data]      kind = "window-bump" | "window-random"; center, width
    [solver]    method = "auto" | "splu" | "pcg"; tol
    [refinement] factor_x, factor_y, grading_shrink, height_factor
                (what one refinement level does to the grid)

Per-kind sections: ``[tails]`` (l_count, l_min, l_max, h_count, h_min,
h_max, decay_band, decay_window), ``[runge]`` (tau_count, target),
``[smallness]`` (center, radius, samples, q_factor, chain_target,
chain_target_radius), ``[stability]`` (thetas).

Every run writes its tables as CSV plus a ``manifest.json`` with fields
``{config_hash, version, stages[], budget{}, files[{path, digest}]}``.
CSV content is a pure function of (config, seed): repeated runs produce
byte-identical tables.

Plot-script format ("plotscript 1")
-----------------------------------

Renderer-agnostic text files, one plot per file, one directive per line::

    plotscript 1
    title  <text>
    xlabel <text>
    ylabel <text>
    xscale log|linear
    yscale log|linear
    series file=<csv> x=<column> y=<column> label=<text> style=line|scatter
    guide  slope=<float> through=<x>,<y> label=<text>

A ``guide`` is a straight line of the given slope through the anchor point
in the declared axis scales (so on log-log axes it is a power law).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .dtn import (
    closed_form_constant,
    dtn_eigenvalues,
    fractional_dtn_matrix,
    local_dtn_matrix,
    variational_neumann_values,
)
from .elliptic import (
    ExtensionField,
    Metric,
    assemble_extension_operator,
    solve_mixed_problem,
)
from .errors import ConfigError, InputError, LabError, ListingError
from .grid import (
    Ball,
    ChainPolicy,
    DomainLayout,
    GridSpec,
    RegionSpec,
    ball_cell_fractions,
    ball_chain,
    build_grid,
)
from .reduction import (
    PotentialField,
    cauchy_data,
    liouville_reduce,
    reduction_residual,
    tail_bound_experiment,
    vertical_integral,
)
from .runge import (
    assemble_operator_t,
    beta_cutoff,
    cost_curve,
    generalized_svd,
    runge_approximate,
)
from .smallness import (
    BallTriple,
    carleman_weight,
    exponent_from_norms,
    propagate_chain,
    three_balls_exponent,
)
from .sobolev import boundary_loop_nodeset, dual_operator_norm, gram_matrix, trace_nodeset

__all__ = [
    "ExperimentConfig",
    "RunManifest",
    "StageRecord",
    "ModulusFit",
    "EXPERIMENT_KINDS",
    "load_config",
    "config_from_mapping",
    "run_experiment",
    "stability_sweep",
    "emit_plots",
]

EXPERIMENT_KINDS = (
    "reduce",
    "runge",
    "smallness",
    "tails",
    "stability",
    "selftest",
    "solve-extension",
    "dtn",
)

_MANIFEST_NAME = "manifest.json"


# ---------------------------------------------------------------------------
# configuration


def _require(mapping: dict, key: str, path: str, kind: type, *, default=None):
    """Fetch a typed scalar from a config mapping with a precise error path."""
    if key not in mapping:
        if default is not None:
            return default
        raise ConfigError("required field is missing", field=f"{path}.{key}")
    value = mapping[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(
            f"expected {kind.__name__}, got {type(value).__name__}",
            field=f"{path}.{key}",
        )
    return value


def _section(mapping: dict, key: str, *, required: bool = False) -> dict:
    value = mapping.get(key, {})
    if required and not value:
        raise ConfigError("required section is missing", field=key)
    if not isinstance(value, dict):
        raise ConfigError("expected a table", field=key)
    return value


def _region_boxes(raw, n: int, path: str):
    if not isinstance(raw, list) or not raw:
        raise ConfigError("expected a non-empty list of boxes", field=path)
    boxes = []
    for bi, box in enumerate(raw):
        if not isinstance(box, list) or len(box) != n:
            raise ConfigError(
                f"box must list {n} per-axis [lo, hi] intervals",
                field=f"{path}[{bi}]",
            )
        intervals = []
        for ai, pair in enumerate(box):
            if (
                not isinstance(pair, list)
                or len(pair) != 2
                or not all(isinstance(v, (int, float)) for v in pair)
            ):
                raise ConfigError(
                    "interval must be [lo, hi]", field=f"{path}[{bi}][{ai}]"
                )
            intervals.append((float(pair[0]), float(pair[1])))
        boxes.append(tuple(intervals))
    return boxes


def _float_list(raw, path: str) -> list[float]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("expected a non-empty list of numbers", field=path)
    out = []
    for i, v in enumerate(raw):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError("expected a number", field=f"{path}[{i}]")
        out.append(float(v))
    return out


@dataclass
class ExperimentConfig:
    """Validated experiment description with a canonical hashable form."""

    kind: str
    seed: int
    out: str
    grid: GridSpec
    regions: RegionSpec
    s: float
    metric_family: str
    metric_params: dict
    data_params: dict
    solver: dict
    refinement: dict
    extras: dict
    normalized: dict = field(repr=False)

    def config_hash(self) -> str:
        blob = json.dumps(self.normalized, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(
        self, *, kind: str | None = None, seed: int | None = None, out: str | None = None
    ) -> "ExperimentConfig":
        mapping = json.loads(json.dumps(self.normalized))
        if kind is not None:
            mapping["kind"] = kind
        if seed is not None:
            mapping["seed"] = seed
        if out is not None:
            mapping["out"] = out
        return config_from_mapping(mapping)

    # -- realized objects ---------------------------------------------------

    def refined_spec(self, level: int) -> GridSpec:
        """Grid after `level` steps of the declared refinement family."""
        if level < 0:
            raise InputError(f"refinement level must be >= 0, got {level}")
        r = self.refinement
        fx, fy = r["factor_x"], r["factor_y"]
        shrink, hf = r["grading_shrink"], r["height_factor"]
        g = self.grid
        return GridSpec(
            n_tangential=g.n_tangential,
            extent_x=g.extent_x,
            nodes_x=int(round((g.nodes_x - 1) * fx**level)) + 1,
            height_y=g.height_y * hf**level,
            nodes_y=int(round(g.nodes_y * fy**level)),
            grading_ratio=1.0 + (g.grading_ratio - 1.0) / shrink**level,
        )

    def build_layout(self, level: int = 0) -> DomainLayout:
        return build_grid(self.refined_spec(level), self.regions, s=self.s)

    def bump_profile(self, layout: DomainLayout) -> np.ndarray:
        """C-infinity bump of the metric family, amplitude one."""
        p = self.metric_params
        center = np.asarray(p["center"], dtype=float)
        q2 = np.sum((layout.coords - center[None, :]) ** 2, axis=1) / p["radius"] ** 2
        out = np.zeros(layout.n_tan)
        inside = q2 < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - q2[inside]))
        return out

    def build_metric(self, layout: DomainLayout) -> Metric:
        if self.metric_family == "identity":
            return Metric.identity(layout)
        gamma = 1.0 + self.metric_params["amplitude"] * self.bump_profile(layout)
        return Metric.isotropic_from_gamma(layout, gamma)

    def build_data(self, layout: DomainLayout, sample: int | None = None) -> np.ndarray:
        """Exterior datum on the trace, supported in the data window."""
        p = self.data_params
        f = np.zeros(layout.n_tan)
        wmask = layout.window_mask
        if p["kind"] == "window-random":
            rng = np.random.default_rng(self.seed + (0 if sample is None else sample))
            f[wmask] = rng.standard_normal(int(wmask.sum()))
            return f
        center = np.asarray(p["center"], dtype=float)
        q2 = np.sum((layout.coords - center[None, :]) ** 2, axis=1) / p["width"] ** 2
        inside = (q2 < 1.0) & wmask
        f[inside] = np.exp(1.0 - 1.0 / (1.0 - q2[inside]))
        return f


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    """Validate a plain mapping (parsed TOML) into an ExperimentConfig."""
    if not isinstance(mapping, dict):
        raise ConfigError("configuration root must be a table")
    kind = _require(mapping, "kind", "", str).strip()
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(
            f"unknown experiment kind {kind!r}; expected one of "
            + ", ".join(EXPERIMENT_KINDS),
            field="kind",
        )
    seed = _require(mapping, "seed", "", int, default=0)
    if seed < 0:
        raise ConfigError("seed must be non-negative", field="seed")
    out = _require(mapping, "out", "", str, default=f"runs/{kind}")

    g = _section(mapping, "grid", required=True)
    n = _require(g, "n", "grid", int)
    if n not in (1, 2):
        raise ConfigError("tangential dimension must be 1 or 2", field="grid.n")
    grid = GridSpec(
        n_tangential=n,
        extent_x=_require(g, "extent", "grid", float),
        nodes_x=_require(g, "nodes_x", "grid", int),
        height_y=_require(g, "height", "grid", float),
        nodes_y=_require(g, "nodes_y", "grid", int),
        grading_ratio=_require(g, "grading", "grid", float, default=1.15),
    )
    grid.validate()

    r = _section(mapping, "regions", required=True)
    regions = RegionSpec.create(
        omega_prime=_region_boxes(r.get("omega_prime"), n, "regions.omega_prime"),
        omega=_region_boxes(r.get("omega"), n, "regions.omega"),
        omega_one=_region_boxes(r.get("omega_one"), n, "regions.omega_one"),
        window_w=_region_boxes(r.get("window"), n, "regions.window"),
        n=n,
    )
    regions.validate(grid.extent_x)

    prob = _section(mapping, "problem", required=True)
    s = _require(prob, "s", "problem", float)
    if not 0.0 < s < 1.0:
        raise ConfigError("fractional order must lie in (0, 1)", field="problem.s")

    met = _section(mapping, "metric")
    family = _require(met, "family", "metric", str, default="identity")
    if family not in ("identity", "isotropic-bump"):
        raise ConfigError(
            f"unknown metric family {family!r}", field="metric.family"
        )
    metric_params = {}
    if family == "isotropic-bump":
        metric_params = {
            "amplitude": _require(met, "amplitude", "metric", float, default=0.3),
            "radius": _require(met, "radius", "metric", float, default=0.8),
            "center": met.get("center", [0.0] * n),
        }
        metric_params["center"] = _float_list(metric_params["center"], "metric.center")
        if len(metric_params["center"]) != n:
            raise ConfigError(
                f"center must have {n} coordinates", field="metric.center"
            )
        if metric_params["radius"] <= 0:
            raise ConfigError("radius must be positive", field="metric.radius")
        if metric_params["amplitude"] <= -1.0:
            raise ConfigError(
                "amplitude must exceed -1 (ellipticity)", field="metric.amplitude"
            )

    d = _section(mapping, "data")
    data_kind = _require(d, "kind", "data", str, default="window-bump")
    if data_kind not in ("window-bump", "window-random"):
        raise ConfigError(f"unknown data kind {data_kind!r}", field="data.kind")
    data_params: dict = {"kind": data_kind}
    if data_kind == "window-bump":
        wboxes = regions.window_w
        default_center = [0.5 * (lo + hi) for lo, hi in wboxes[0]]
        data_params["center"] = _float_list(
            d.get("center", default_center), "data.center"
        )
        if len(data_params["center"]) != n:
            raise ConfigError(f"center must have {n} coordinates", field="data.center")
        data_params["width"] = _require(d, "width", "data", float, default=0.9)
        if data_params["width"] <= 0:
            raise ConfigError("width must be positive", field="data.width")

    sol = _section(mapping, "solver")
    method = _require(sol, "method", "solver", str, default="auto")
    if method not in ("auto", "splu", "pcg"):
        raise ConfigError(f"unknown solver method {method!r}", field="solver.method")
    tol = _require(sol, "tol", "solver", float, default=1e-10)
    if tol <= 0:
        raise ConfigError("tolerance must be positive", field="solver.tol")
    solver = {"method": method, "tol": tol}

    ref = _section(mapping, "refinement")
    refinement = {
        "factor_x": _require(ref, "factor_x", "refinement", float, default=2.0),
        "factor_y": _require(ref, "factor_y", "refinement", float, default=2.0),
        "grading_shrink": _require(ref, "grading_shrink", "refinement", float, default=2.0),
        "height_factor": _require(ref, "height_factor", "refinement", float, default=1.0),
    }
    for key, value in refinement.items():
        if value < 1.0:
            raise ConfigError("refinement factors must be >= 1", field=f"refinement.{key}")

    extras = {}
    for name in ("tails", "runge", "smallness", "stability"):
        extras[name] = _section(mapping, name)

    normalized = {
        "kind": kind,
        "seed": seed,
        "out": out,
        "grid": {
            "n": n,
            "extent": grid.extent_x,
            "nodes_x": grid.nodes_x,
            "height": grid.height_y,
            "nodes_y": grid.nodes_y,
            "grading": grid.grading_ratio,
        },
        "regions": {
            key: [[list(pair) for pair in box] for box in boxes]
            for key, boxes in (
                ("omega_prime", regions.omega_prime),
                ("omega", regions.omega),
                ("omega_one", regions.omega_one),
                ("window", regions.window_w),
            )
        },
        "problem": {"s": s},
        "metric": {"family": family, **metric_params},
        "data": data_params,
        "solver": solver,
        "refinement": refinement,
        **{name: extras[name] for name in extras if extras[name]},
    }

    return ExperimentConfig(
        kind=kind,
        seed=seed,
        out=out,
        grid=grid,
        regions=regions,
        s=s,
        metric_family=family,
        metric_params=metric_params,
        data_params=data_params,
        solver=solver,
        refinement=refinement,
        extras=extras,
        normalized=normalized,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a TOML experiment configuration."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"configuration file not found: {p}")
    try:
        with open(p, "rb") as fh:
            mapping = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return config_from_mapping(mapping)


# ---------------------------------------------------------------------------
# manifests


def _json_scalar(value):
    """Coerce numpy scalars so stage info survives JSON serialization."""
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


@dataclass
class StageRecord:
    name: str
    seconds: float
    info: dict


@dataclass
class RunManifest:
    """Provenance record of one run directory."""

    config_hash: str
    version: str
    stages: list[StageRecord]
    budget: dict
    files: list[dict]  # [{"path": relative path, "digest": sha256 hex}]

    def write(self, run_dir: Path) -> Path:
        path = Path(run_dir) / _MANIFEST_NAME
        payload = {
            "config_hash": self.config_hash,
            "version": self.version,
            "stages": [
                {"name": st.name, "seconds": st.seconds, "info": st.info}
                for st in self.stages
            ],
            "budget": self.budget,
            "files": self.files,
        }
        path.write_text(
            json.dumps(payload, indent=2, sort_keys=True, default=_json_scalar) + "\n"
        )
        return path

    @staticmethod
    def load(run_dir: Path) -> "RunManifest":
        path = Path(run_dir) / _MANIFEST_NAME
        if not path.is_file():
            raise ListingError(
                f"no {_MANIFEST_NAME} in {run_dir}", missing=[_MANIFEST_NAME]
            )
        payload = json.loads(path.read_text())
        return RunManifest(
            config_hash=payload["config_hash"],
            version=payload["version"],
            stages=[
                StageRecord(st["name"], st["seconds"], st.get("info", {}))
                for st in payload["stages"]
            ],
            budget=payload["budget"],
            files=payload["files"],
        )


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fmt(value) -> str:
    """Stable, round-trippable CSV cell formatting."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


class _RunContext:
    """Accumulates stages, output files, and budget terms for one run."""

    def __init__(self, config: ExperimentConfig, out_dir: Path, refine: int):
        self.config = config
        self.out_dir = out_dir
        self.refine = refine
        self.stages: list[StageRecord] = []
        self.budget: dict = {"mesh_level": refine}
        self.paths: list[Path] = []

    @contextmanager
    def stage(self, name: str):
        info: dict = {}
        start = time.perf_counter()
        try:
            yield info
        finally:
            self.stages.append(
                StageRecord(name, round(time.perf_counter() - start, 6), info)
            )

    def write_csv(self, name: str, header: list[str], rows: list[list]) -> Path:
        path = self.out_dir / name
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        self.paths.append(path)
        return path

    def solve(self, op, trace_values=None, rhs=None):
        return solve_mixed_problem(
            op,
            trace_values=trace_values,
            rhs=rhs,
            method=self.config.solver["method"],
            tol=self.config.solver["tol"],
        )


# ---------------------------------------------------------------------------
# modulus fits (stability reporting)


@dataclass
class ModulusFit:
    """Empirical relation between the nonlocal and local discrepancies.

    The family fit is descriptive only; the load-bearing verdicts are the
    monotonicity flags and the rank correlation, and they are recomputable
    from the stored samples.
    """

    x: np.ndarray  # nonlocal-map discrepancies, one per ladder point
    y: np.ndarray  # local-map discrepancies
    family: str  # "log" | "loglog"
    params: tuple[float, float]  # (log-amplitude, exponent)
    r_squared: float
    x_monotone: bool
    y_monotone: bool
    spearman: float

    def recompute_verdict(self) -> tuple[bool, bool, float]:
        return (
            bool(np.all(np.diff(self.x) > 0.0)),
            bool(np.all(np.diff(self.y) > 0.0)),
            _spearman(self.x, self.y),
        )

    def verdict_consistent(self) -> bool:
        xm, ym, sp = self.recompute_verdict()
        return (
            xm == self.x_monotone
            and ym == self.y_monotone
            and abs(sp - self.spearman) < 1e-15
        )


def _spearman(x: np.ndarray, y: np.ndarray) -> float:
    rx, ry = rankdata(x), rankdata(y)
    if np.array_equal(rx, ry):
        return 1.0
    return float(np.corrcoef(rx, ry)[0, 1])


def _fit_modulus(x: np.ndarray, y: np.ndarray) -> tuple[str, tuple[float, float], float]:
    """Fit y against x with y = exp(c) * |log x|^-p ("log") or the iterated
    variant with log|log x| ("loglog"); returns the better family by R^2."""
    usable = (x > 0) & (x < math.exp(-1.0)) & (y > 0)
    best = ("log", (math.nan, math.nan), math.nan)
    if int(usable.sum()) < 3:
        return best
    xv, yv = x[usable], y[usable]
    logy = np.log(yv)
    for name, abscissa in (
        ("log", np.log(np.abs(np.log(xv)))),
        ("loglog", None),
    ):
        if name == "loglog":
            inner = np.log(np.abs(np.log(xv)))
            if np.any(inner <= 0):
                continue
            abscissa = np.log(inner)
        coeffs = np.polyfit(abscissa, logy, 1)
        pred = np.polyval(coeffs, abscissa)
        ss_res = float(np.sum((logy - pred) ** 2))
        ss_tot = float(np.sum((logy - logy.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan
        if math.isnan(best[2]) or (not math.isnan(r2) and r2 > best[2]):
            best = (name, (float(coeffs[1]), float(-coeffs[0])), r2)
    return best


# ---------------------------------------------------------------------------
# stability sweep


def stability_sweep(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    *,
    refine: int = 0,
) -> ModulusFit:
    """Discrepancy ladder of the nonlocal and local boundary maps.

    For each amplitude theta in the configured family the coefficient is
    a_theta = (1 + theta * bump) I; the sweep records the Gram-weighted
    operator gaps of the exterior fractional map (on the data window) and
    of the local map (on the first enlargement boundary) against theta = 0,
    together with the sup-norm coefficient gap.  If any ladder point fails,
    the rows computed so far are persisted before the error propagates.
    """
    if config.metric_family != "isotropic-bump":
        raise ConfigError(
            "stability sweeps require the isotropic-bump metric family",
            field="metric.family",
        )
    thetas = config.extras["stability"].get("thetas")
    if thetas is None:
        thetas = [round(0.02 * k, 10) for k in range(1, 11)]
    thetas = _float_list(thetas, "stability.thetas")
    arr = np.asarray(thetas)
    if np.any(arr <= 0) or np.any(np.diff(arr) <= 0):
        raise ConfigError(
            "amplitudes must be positive and strictly increasing",
            field="stability.thetas",
        )

    layout = config.build_layout(refine)
    bump = config.bump_profile(layout)
    ns_w = trace_nodeset(layout, layout.window_mask)
    gram_w = gram_matrix(ns_w, layout.s)
    loop = boundary_loop_nodeset(layout, layout.regions.omega_one[0])
    gram_loop = gram_matrix(loop, 0.5)

    def maps_for(theta: float):
        metric = Metric.isotropic_from_gamma(layout, 1.0 + theta * bump)
        metric.validate(layout)
        frac = fractional_dtn_matrix(layout, metric)
        loc = local_dtn_matrix(layout, metric)
        return frac, loc

    header = ["theta", "delta_s", "delta_1", "coefficient_gap_inf"]
    rows: list[list] = []

    def persist():
        if out_dir is not None:
            path = Path(out_dir)
            path.mkdir(parents=True, exist_ok=True)
            with open(path / "stability.csv", "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_fmt(v) for v in row])

    try:
        frac0, loc0 = maps_for(0.0)
        for theta in thetas:
            frac, loc = maps_for(theta)
            delta_s = dual_operator_norm(frac.matrix - frac0.matrix, gram_w, gram_w)
            delta_1 = dual_operator_norm(loc.matrix - loc0.matrix, gram_loop, gram_loop)
            rows.append([theta, delta_s, delta_1, theta * float(bump.max())])
    except LabError:
        persist()
        raise
    persist()

    x = np.array([row[1] for row in rows])
    y = np.array([row[2] for row in rows])
    family, params, r2 = _fit_modulus(x, y)
    return ModulusFit(
        x=x,
        y=y,
        family=family,
        params=params,
        r_squared=r2,
        x_monotone=bool(np.all(np.diff(x) > 0.0)),
        y_monotone=bool(np.all(np.diff(y) > 0.0)),
        spearman=_spearman(x, y),
    )


# ---------------------------------------------------------------------------
# experiment runners


def _declared_cauchy_budget(layout: DomainLayout, flux_norm: float) -> float:
    """A-priori envelope for the Cauchy-graph gap: second-order tangential
    discretization plus the algebraic vertical-truncation tail, scaled by
    the measured flux size."""
    tail = layout.y[-1] ** (2.0 - layout.n - 2.0 * layout.s)
    return (layout.hx**2 + tail) * flux_norm


def _run_reduce(ctx: _RunContext) -> None:
    cfg = ctx.config
    rows = []
    max_resid = 0.0
    for level in range(ctx.refine + 1):
        with ctx.stage(f"level-{level}") as info:
            layout = cfg.build_layout(level)
            metric = cfg.build_metric(layout)
            op = assemble_extension_operator(layout, metric)
            f = cfg.build_data(layout)
            fld, solve_info = ctx.solve(op, trace_values=f)
            pot = vertical_integral(fld)
            residual = reduction_residual(pot, metric)
            box = layout.regions.omega[0]
            pair = cauchy_data(pot, metric, box)
            lam = local_dtn_matrix(layout, metric, box=box)
            diff = lam.matrix @ pair.g - lam.target_mass * pair.flux
            gram_half = gram_matrix(pair.loop, 0.5)
            gap = gram_half.dual_norm(diff)
            flux_norm = gram_half.dual_norm(lam.target_mass * pair.flux)
            budget = _declared_cauchy_budget(layout, flux_norm)
            max_resid = max(max_resid, solve_info.residual)
            spec = layout.spec
            rows.append(
                [
                    level,
                    spec.nodes_x,
                    spec.nodes_y,
                    spec.grading_ratio,
                    spec.height_y,
                    layout.hx,
                    solve_info.residual,
                    residual,
                    gap,
                    flux_norm,
                    budget,
                ]
            )
            info["h1dual_residual"] = residual
            info["cauchy_gap"] = gap
    ctx.write_csv(
        "reduction.csv",
        [
            "level",
            "nodes_x",
            "nodes_y",
            "grading",
            "height",
            "hx",
            "solver_residual",
            "h1dual_residual",
            "cauchy_gap",
            "flux_norm",
            "declared_budget",
        ],
        rows,
    )
    last = rows[-1]
    ctx.budget.update(
        {
            "tail_h": 0.0,
            "tail_l": last[4],
            "solver_residual": max_resid,
            "cauchy_budget": last[10],
        }
    )


def _run_tails(ctx: _RunContext) -> None:
    cfg = ctx.config
    opts = cfg.extras["tails"]
    with ctx.stage("solve-and-fit") as info:
        layout = cfg.build_layout(ctx.refine)
        metric = cfg.build_metric(layout)
        top = float(layout.y[-1])
        l_count = _require(opts, "l_count", "tails", int, default=6)
        h_count = _require(opts, "h_count", "tails", int, default=6)
        l_min = _require(opts, "l_min", "tails", float, default=1.0)
        l_max = _require(opts, "l_max", "tails", float, default=top / 2.0)
        h_min = _require(opts, "h_min", "tails", float, default=0.02)
        h_max = _require(opts, "h_max", "tails", float, default=0.5)
        f = cfg.build_data(layout)
        report = tail_bound_experiment(
            layout,
            metric,
            f,
            np.geomspace(l_min, l_max, l_count),
            np.geomspace(h_min, h_max, h_count),
        )
        info["tail_slope"] = report.tail_slope
        info["head_slope"] = report.head_slope
        info["head_direct_slope"] = report.head_direct_slope
        info["envelope_valid"] = report.envelope_valid
    ctx.write_csv(
        "tails.csv",
        ["l_value", "tail_norm"],
        [[l, t] for l, t in zip(report.l_values, report.tail_norms)],
    )
    ctx.write_csv(
        "heads.csv",
        ["h_value", "envelope", "direct"],
        [
            [h, e, d]
            for h, e, d in zip(
                report.h_values, report.head_envelopes, report.head_direct_norms
            )
        ],
    )
    fit_rows = [
        ["tail", report.tail_slope, report.theory_tail],
        ["head_envelope", report.head_slope, report.theory_head],
        ["head_direct", report.head_direct_slope, report.theory_head],
    ]

    with ctx.stage("vertical-decay") as info:
        decay_rows = []
        band = opts.get("decay_band")
        if band is None:
            band = [1.0, top / 2.0]
        band = _float_list(band, "tails.decay_band")
        sel = (layout.y >= band[0] - 1e-12) & (layout.y <= band[1] + 1e-12)
        if band[0] >= 1.0 and band[1] <= top / 2.0 + 1e-12 and int(sel.sum()) >= 3:
            from .heat import vertical_decay_fit

            op = assemble_extension_operator(layout, metric)
            fld, _ = ctx.solve(op, trace_values=f)
            window = opts.get("decay_window")
            if window is None:
                window = [-layout.spec.extent_x, layout.spec.extent_x]
            window = _float_list(window, "tails.decay_window")
            slope = vertical_decay_fit(fld, (window[0], window[1]), (band[0], band[1]))
            in_win = np.all(
                (layout.coords >= window[0] - 1e-12)
                & (layout.coords <= window[1] + 1e-12),
                axis=1,
            )
            sups = np.abs(fld.values[sel][:, in_win]).max(axis=1)
            decay_rows = [[y, sup] for y, sup in zip(layout.y[sel], sups)]
            fit_rows.append(["vertical_decay", slope, -float(layout.n)])
            info["decay_slope"] = slope
        else:
            info["skipped"] = "fit band too short for this grid"
    if decay_rows:
        ctx.write_csv("decay.csv", ["y", "sup_abs"], decay_rows)
    ctx.write_csv("fits.csv", ["name", "slope", "theory"], fit_rows)
    ctx.budget.update(
        {
            "tail_h": report.h_values[0],
            "tail_l": report.l_values[-1],
            "solver_residual": cfg.solver["tol"],
            "tail_exponent": report.theory_tail,
            "head_exponent": report.theory_head,
        }
    )


def _run_runge(ctx: _RunContext) -> None:
    cfg = ctx.config
    opts = cfg.extras["runge"]
    with ctx.stage("assemble-operator") as info:
        layout = cfg.build_layout(ctx.refine)
        metric = cfg.build_metric(layout)
        t_op = assemble_operator_t(
            layout, metric, method=cfg.solver["method"], tol=cfg.solver["tol"]
        )
        info["n_source"] = t_op.n_source
        info["n_target"] = t_op.n_target
    with ctx.stage("svd") as info:
        svd = generalized_svd(t_op)
        info["modes"] = int(svd.sigma.size)
        info["sigma_1"] = float(svd.sigma[0])
    with ctx.stage("cost-curve") as info:
        target_kind = _require(opts, "target", "runge", str, default="auto")
        if target_kind == "auto":
            target_kind = "a-harmonic" if layout.n == 1 else "bump"
        if target_kind not in ("a-harmonic", "bump"):
            raise ConfigError(
                f"unknown control target {target_kind!r}", field="runge.target"
            )
        target_nodes = t_op.target_nodes
        if target_kind == "a-harmonic":
            if layout.n != 1:
                raise ConfigError(
                    "the a-harmonic target is one-dimensional", field="runge.target"
                )
            gamma = (
                cfg.build_metric(layout).gamma
                if cfg.metric_family == "isotropic-bump"
                else np.ones(layout.n_tan)
            )
            xs = layout.axes[0]
            anti = np.concatenate(
                ([0.0], np.cumsum((xs[1:] - xs[:-1]) * 0.5
                                  * (1.0 / gamma[1:] + 1.0 / gamma[:-1])))
            )
            v = 0.7 + 1.5 * anti[target_nodes]
        else:
            box = layout.regions.omega_prime[0]
            center = np.array([0.5 * (lo + hi) for lo, hi in box])
            width = 0.5 * min(hi - lo for lo, hi in box)
            q2 = (
                np.sum((layout.coords[target_nodes] - center[None, :]) ** 2, axis=1)
                / width**2
            )
            v = np.zeros(target_nodes.size)
            inside = q2 < 1.0
            v[inside] = np.exp(1.0 - 1.0 / (1.0 - q2[inside]))
        tau_count = _require(opts, "tau_count", "runge", int, default=8)
        if tau_count < 2:
            raise ConfigError("need at least two thresholds", field="runge.tau_count")
        ladder = np.geomspace(
            0.9 * svd.sigma[0], 0.5 * svd.sigma[-1], tau_count
        )
        curve = cost_curve(v, svd, ladder)
        info["mu_hat"] = curve.mu_hat
        info["cost_monotone"] = curve.cost_monotone
        info["eps_monotone"] = curve.eps_monotone
        info["bound_ok"] = curve.bound_ok
        info["target_norm"] = float(t_op.target_norm(v))
    ctx.write_csv(
        "runge.csv",
        ["tau", "cost", "eps_ach", "modes"],
        [
            [t, c, e, m]
            for t, c, e, m in zip(curve.tau, curve.cost, curve.eps_ach, curve.modes)
        ],
    )
    ctx.write_csv(
        "spectrum.csv",
        ["index", "sigma"],
        [[j + 1, sig] for j, sig in enumerate(svd.sigma_full)],
    )
    ctx.budget.update(
        {
            "tail_h": t_op.window[0],
            "tail_l": t_op.window[1],
            "solver_residual": t_op.solver_residual,
        }
    )


def _run_smallness(ctx: _RunContext) -> None:
    cfg = ctx.config
    opts = cfg.extras["smallness"]
    with ctx.stage("setup") as info:
        layout = cfg.build_layout(ctx.refine)
        metric = cfg.build_metric(layout)
        op = assemble_extension_operator(layout, metric)
        center = opts.get("center")
        if center is None:
            raise ConfigError("required field is missing", field="smallness.center")
        center = np.asarray(_float_list(center, "smallness.center"))
        if center.size != layout.n + 1:
            raise ConfigError(
                f"ball center needs {layout.n + 1} coordinates (tangential + height)",
                field="smallness.center",
            )
        radius = _require(opts, "radius", "smallness", float)
        q_factor = _require(opts, "q_factor", "smallness", float, default=4.0)
        triple = BallTriple(center=center, radius=radius, q_factor=q_factor)
        triple.validate(layout)
        samples = _require(opts, "samples", "smallness", int, default=50)
        if samples < 1:
            raise ConfigError("need at least one sample", field="smallness.samples")
        t_grid = np.linspace(0.0, 12.0, 4001)
        _, dphi = carleman_weight(t_grid)
        info["weight_derivative_min"] = float(dphi.min())
        info["weight_derivative_max"] = float(dphi.max())
        band = math.pi / 20.0
        info["weight_band_ok"] = bool(
            dphi.min() >= -1.0 - band and dphi.max() <= -1.0 + band
        )
    rows = []
    first_field: ExtensionField | None = None
    with ctx.stage("sample-family") as info:
        wmask = layout.window_mask
        n_window = int(wmask.sum())
        for i in range(samples):
            rng = np.random.default_rng(cfg.seed + i)
            f = np.zeros(layout.n_tan)
            f[wmask] = rng.standard_normal(n_window)
            fld, _ = ctx.solve(op, trace_values=f)
            if first_field is None:
                first_field = fld
            rep = three_balls_exponent(fld, triple)
            rows.append([i, rep.n1, rep.n2, rep.n4, rep.alpha_emp, rep.valid])
        valid = [r for r in rows if r[5]]
        info["n_valid"] = len(valid)
        if valid:
            alphas = [r[4] for r in valid]
            info["alpha_min"] = min(alphas)
            info["alpha_max"] = max(alphas)
    ctx.write_csv(
        "smallness.csv",
        ["sample", "norm_r", "norm_2r", "norm_4r", "alpha_emp", "valid"],
        rows,
    )

    target = opts.get("chain_target")
    if target is not None:
        with ctx.stage("chain") as info:
            target = np.asarray(_float_list(target, "smallness.chain_target"))
            if target.size != layout.n + 1:
                raise ConfigError(
                    f"chain target needs {layout.n + 1} coordinates",
                    field="smallness.chain_target",
                )
            t_radius = _require(opts, "chain_target_radius", "smallness", float)
            chain = ball_chain(
                Ball(center.copy(), radius),
                Ball(target, t_radius),
                layout.regions.omega,
                ChainPolicy(q_factor=q_factor),
            )
            report = propagate_chain(first_field, chain)
            chain_rows = [
                [
                    j,
                    *report.centers[j],
                    report.radii[j],
                    report.n1[j],
                    report.n2[j],
                    report.n4[j],
                    report.alpha_emp[j],
                    report.valid[j],
                ]
                for j in range(len(chain.balls))
            ]
            coord_names = ["x", "z"][: layout.n] + ["y"]
            ctx.write_csv(
                "chain.csv",
                ["ball", *coord_names, "radius", "norm_r", "norm_2r", "norm_4r",
                 "alpha_emp", "valid"],
                chain_rows,
            )
            info["cumulative_exponent"] = report.cumulative_exponent
            info["balls"] = len(chain.balls)
    ctx.budget.update(
        {
            "tail_h": 0.0,
            "tail_l": float(layout.y[-1]),
            "solver_residual": cfg.solver["tol"],
        }
    )


def _run_stability(ctx: _RunContext) -> None:
    with ctx.stage("sweep") as info:
        fit = stability_sweep(ctx.config, ctx.out_dir, refine=ctx.refine)
        info["spearman"] = fit.spearman
        info["x_monotone"] = fit.x_monotone
        info["y_monotone"] = fit.y_monotone
        info["family"] = fit.family
        info["r_squared"] = fit.r_squared
    ctx.paths.append(ctx.out_dir / "stability.csv")
    ctx.write_csv(
        "modulus.csv",
        ["family", "log_amplitude", "exponent", "r_squared", "spearman",
         "x_monotone", "y_monotone"],
        [[fit.family, fit.params[0], fit.params[1], fit.r_squared, fit.spearman,
          fit.x_monotone, fit.y_monotone]],
    )
    ctx.budget.update(
        {"tail_h": 0.0, "tail_l": ctx.config.grid.height_y,
         "solver_residual": ctx.config.solver["tol"]}
    )


def _run_solve(ctx: _RunContext) -> None:
    cfg = ctx.config
    with ctx.stage("solve") as info:
        layout = cfg.build_layout(ctx.refine)
        metric = cfg.build_metric(layout)
        op = assemble_extension_operator(layout, metric)
        f = cfg.build_data(layout)
        fld, solve_info = ctx.solve(op, trace_values=f)
        flux = variational_neumann_values(op, fld)
        pot = vertical_integral(fld)
        info["energy"] = solve_info.energy
        info["method"] = solve_info.method
        info["iterations"] = solve_info.iterations
        info["residual"] = solve_info.residual
    coord_names = ["x", "z"][: layout.n]
    trace_rows = [
        [*layout.coords[i], layout.trace_tags[i], f[i], fld.trace[i], flux[i]]
        for i in range(layout.n_tan)
    ]
    ctx.write_csv(
        "trace.csv",
        [*coord_names, "region_tag", "datum", "trace", "weighted_flux"],
        trace_rows,
    )
    ctx.write_csv(
        "potential.csv",
        [*coord_names, "potential"],
        [[*layout.coords[i], pot.values[i]] for i in range(layout.n_tan)],
    )
    ctx.budget.update(
        {
            "tail_h": 0.0,
            "tail_l": float(layout.y[-1]),
            "solver_residual": solve_info.residual,
        }
    )


def _run_dtn(ctx: _RunContext) -> None:
    cfg = ctx.config
    with ctx.stage("fractional-map") as info:
        layout = cfg.build_layout(ctx.refine)
        metric = cfg.build_metric(layout)
        frac = fractional_dtn_matrix(layout, metric)
        info["shape"] = list(frac.matrix.shape)
        info["symmetry_defect"] = frac.symmetry_defect()
    with ctx.stage("local-map") as info:
        loc = local_dtn_matrix(layout, metric)
        info["shape"] = list(loc.matrix.shape)
        info["symmetry_defect"] = loc.symmetry_defect()
    for name, dtn in (("fractional", frac), ("local", loc)):
        rows = [
            [int(dtn.target_nodes[i]), int(dtn.source_nodes[j]), dtn.matrix[i, j]]
            for i in range(dtn.n_target)
            for j in range(dtn.n_source)
        ]
        ctx.write_csv(f"dtn_{name}.csv", ["target_node", "source_node", "value"], rows)
        eigs = dtn_eigenvalues(dtn)
        ctx.write_csv(
            f"eigen_{name}.csv",
            ["index", "eigenvalue"],
            [[k + 1, lam] for k, lam in enumerate(eigs)],
        )
    ctx.budget.update(
        {"tail_h": 0.0, "tail_l": cfg.grid.height_y,
         "solver_residual": cfg.solver["tol"]}
    )


def _selftest_checks(cfg: ExperimentConfig):
    """Quick invariant battery; yields (name, value, bound, passed)."""
    spec = GridSpec(
        n_tangential=1, extent_x=4.0, nodes_x=41, height_y=4.0, nodes_y=12,
        grading_ratio=1.3,
    )
    regions = RegionSpec.create(
        omega_prime=[((-0.5, 0.5),)],
        omega=[((-1.0, 1.0),)],
        omega_one=[((-1.3, 1.3),)],
        window_w=[((1.6, 3.4),)],
        n=1,
    )
    layout = build_grid(spec, regions, s=0.75)
    metric = Metric.identity(layout)
    op = assemble_extension_operator(layout, metric)

    t_grid = np.linspace(0.0, 20.0, 2001)
    _, dphi = carleman_weight(t_grid)
    dev = float(np.abs(dphi + 1.0).max())
    yield ("carleman-derivative-band", dev, math.pi / 20.0, dev <= math.pi / 20.0)

    _, valid = exponent_from_norms(1.0, 1.0, 1.0)
    yield ("degenerate-norm-triple", float(valid), 0.0, not valid)

    a1, _ = exponent_from_norms(1.0, 2.0, 8.0)
    a2, _ = exponent_from_norms(3.0, 6.0, 24.0)
    yield ("exponent-scale-invariance", abs(a1 - a2), 0.0, a1 == a2)

    cut = beta_cutoff(3, 0.75)
    err = abs(cut.normalization - 1.0)
    yield ("cutoff-normalization", err, 1e-8, err <= 1e-8)

    c_half = abs(closed_form_constant(0.5) - 1.0)
    yield ("symbol-constant-midpoint", c_half, 1e-12, c_half <= 1e-12)

    fld0, _ = solve_mixed_problem(op, trace_values=np.zeros(layout.n_tan))
    z = float(np.abs(fld0.values).max())
    yield ("zero-data-solve", z, 0.0, z == 0.0)

    ones = ExtensionField(
        values=np.ones((layout.n_levels, layout.n_tan)), s=layout.s,
        layout=layout, provenance="synthetic",
    )
    pot = vertical_integral(ones, (0.5, 2.0))
    p0 = 2.0 - 2.0 * layout.s
    exact = (2.0**p0 - 0.5**p0) / p0
    cerr = float(np.abs(pot.values - exact).max())
    yield ("constant-reproduction", cerr, 1e-12, cerr <= 1e-12)

    linear = PotentialField(
        values=layout.coords[:, 0].copy(), window=(0.0, 4.0), s=layout.s,
        layout=layout, quadrature="synthetic",
    )
    pair = cauchy_data(linear, metric, layout.regions.omega[0])
    ferr = float(np.abs(pair.flux - np.array([-1.0, 1.0])).max())
    yield ("linear-flux-stencil", ferr, 1e-8, ferr <= 1e-8)

    red = liouville_reduce(layout, np.ones(layout.n_tan), np.ones(layout.n_tan))
    qerr = float(np.abs(red.q).max())
    yield ("liouville-identity-coefficient", qerr, 1e-12, qerr <= 1e-12)

    t_op = assemble_operator_t(layout, metric)
    svd = generalized_svd(t_op)
    mres = svd.map_residual()
    yield ("svd-reconstruction", mres, 1e-8, mres <= 1e-8)

    res = runge_approximate(
        np.ones(t_op.n_target), svd, 2.0 * float(svd.sigma[0])
    )
    yield ("over-threshold-control", res.cost, 0.0, res.cost == 0.0)

    frac = ball_cell_fractions(layout, np.array([2.5, 2.0]), 0.8)
    inr = float(frac.max())
    ok = 0.0 <= float(frac.min()) and inr <= 1.0 and inr == 1.0
    yield ("ball-fraction-range", inr, 1.0, ok)


def _run_selftest(ctx: _RunContext) -> None:
    rows = []
    failures = 0
    with ctx.stage("invariants") as info:
        for name, value, bound, passed in _selftest_checks(ctx.config):
            rows.append([name, value, bound, bool(passed)])
            if not passed:
                failures += 1
        info["checks"] = len(rows)
        info["failures"] = failures
    ctx.write_csv("selftest.csv", ["check", "value", "bound", "passed"], rows)
    ctx.budget.update(
        {"tail_h": 0.0, "tail_l": 0.0, "solver_residual": 0.0, "failures": failures}
    )


_RUNNERS = {
    "reduce": _run_reduce,
    "tails": _run_tails,
    "runge": _run_runge,
    "smallness": _run_smallness,
    "stability": _run_stability,
    "selftest": _run_selftest,
    "solve-extension": _run_solve,
    "dtn": _run_dtn,
}


def run_experiment(
    config: ExperimentConfig,
    *,
    out_dir: str | Path | None = None,
    refine: int = 0,
) -> RunManifest:
    """Execute the configured pipeline and write CSVs plus a manifest.

    `refine` selects the refinement level of the declared family; the
    `reduce` pipeline runs the whole ladder 0..refine (its diagnostics are
    about convergence), every other pipeline runs at the single level
    `refine`.  Outputs are a pure function of (config, seed): repeating a
    run reproduces the CSV bytes exactly.
    """
    if refine < 0:
        raise InputError(f"refinement level must be >= 0, got {refine}")
    runner = _RUNNERS.get(config.kind)
    if runner is None:
        raise ConfigError(f"unknown experiment kind {config.kind!r}", field="kind")
    out = Path(out_dir) if out_dir is not None else Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _RunContext(config, out, refine)
    runner(ctx)
    seen = []
    for path in ctx.paths:
        if path not in seen:
            seen.append(path)
    files = sorted(
        ({"path": p.name, "digest": _digest(p)} for p in seen),
        key=lambda item: item["path"],
    )
    manifest = RunManifest(
        config_hash=config.config_hash(),
        version=__version__,
        stages=ctx.stages,
        budget=ctx.budget,
        files=files,
    )
    manifest.write(out)
    return manifest


# ---------------------------------------------------------------------------
# plot-script emission


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    return rows[0], rows[1:]


def _plot_lines(title, xlabel, ylabel, xscale, yscale, series, guides=()):
    lines = [
        "plotscript 1",
        f"title {title}",
        f"xlabel {xlabel}",
        f"ylabel {ylabel}",
        f"xscale {xscale}",
        f"yscale {yscale}",
    ]
    for csv_name, x, y, label, style in series:
        lines.append(
            f"series file={csv_name} x={x} y={y} label={label} style={style}"
        )
    for slope, (ax, ay), label in guides:
        lines.append(f"guide slope={_fmt(slope)} through={_fmt(ax)},{_fmt(ay)} label={label}")
    return "\n".join(lines) + "\n"


def emit_plots(run_dir: str | Path) -> list[Path]:
    """Write renderer-agnostic plot scripts for the tables of one run.

    Covers tail slopes (with the theoretical reference exponents as guide
    lines), vertical decay, control cost curves, chain norm decay, the
    stability scatter, and the reduction-residual ladder — whichever tables
    the run produced.
    """
    run = Path(run_dir)
    manifest = RunManifest.load(run)
    listed = [item["path"] for item in manifest.files]
    missing = [name for name in listed if not (run / name).is_file()]
    if missing:
        raise ListingError(
            f"run directory {run} is missing listed tables", missing=missing
        )
    csvs = {name for name in listed if name.endswith(".csv")}
    if not csvs:
        raise ListingError(f"run directory {run} contains no tables", missing=[])

    theory = {}
    if "fits.csv" in csvs:
        _, rows = _read_csv(run / "fits.csv")
        for name, slope, theo in rows:
            theory[name] = (float(slope), float(theo))

    written: list[Path] = []

    def emit(name: str, content: str):
        path = run / name
        path.write_text(content)
        written.append(path)

    if "tails.csv" in csvs:
        _, rows = _read_csv(run / "tails.csv")
        anchor = (float(rows[0][0]), float(rows[0][1]))
        guides = []
        if "tail" in theory:
            guides.append((theory["tail"][1], anchor, "reference L^(2-n-2s)"))
        emit(
            "tail_slope.plot",
            _plot_lines(
                "Upper truncation tail", "L", "tail norm", "log", "log",
                [("tails.csv", "l_value", "tail_norm", "measured", "line")],
                guides,
            ),
        )
    if "heads.csv" in csvs:
        _, rows = _read_csv(run / "heads.csv")
        anchor = (float(rows[0][0]), float(rows[0][1]))
        guides = []
        if "head_envelope" in theory:
            guides.append((theory["head_envelope"][1], anchor, "reference h^(1-s)"))
        emit(
            "head_slope.plot",
            _plot_lines(
                "Lower truncation envelope", "h", "lower-integral size", "log", "log",
                [
                    ("heads.csv", "h_value", "envelope", "certified envelope", "line"),
                    ("heads.csv", "h_value", "direct", "direct norm", "line"),
                ],
                guides,
            ),
        )
    if "decay.csv" in csvs:
        _, rows = _read_csv(run / "decay.csv")
        anchor = (float(rows[0][0]), float(rows[0][1]))
        guides = []
        if "vertical_decay" in theory:
            guides.append((theory["vertical_decay"][1], anchor, "reference y^(-n)"))
        emit(
            "decay_slope.plot",
            _plot_lines(
                "Vertical sup-norm decay", "y", "sup |u|", "log", "log",
                [("decay.csv", "y", "sup_abs", "measured", "line")],
                guides,
            ),
        )
    if "runge.csv" in csvs:
        emit(
            "cost_curve.plot",
            _plot_lines(
                "Control cost against achieved error", "eps_ach", "control cost",
                "log", "log",
                [("runge.csv", "eps_ach", "cost", "cost curve", "line")],
            ),
        )
    if "spectrum.csv" in csvs:
        emit(
            "spectrum.plot",
            _plot_lines(
                "Restricted-map singular values", "index", "sigma", "linear", "log",
                [("spectrum.csv", "index", "sigma", "spectrum", "scatter")],
            ),
        )
    if "chain.csv" in csvs:
        emit(
            "chain_decay.plot",
            _plot_lines(
                "Weighted norms along the ball chain", "ball", "norm", "linear", "log",
                [
                    ("chain.csv", "ball", "norm_r", "radius r", "line"),
                    ("chain.csv", "ball", "norm_2r", "radius 2r", "line"),
                    ("chain.csv", "ball", "norm_4r", "radius 4r", "line"),
                ],
            ),
        )
    if "stability.csv" in csvs:
        emit(
            "stability_scatter.plot",
            _plot_lines(
                "Local against nonlocal discrepancy", "delta_s", "delta_1",
                "log", "log",
                [("stability.csv", "delta_s", "delta_1", "amplitude ladder", "scatter")],
            ),
        )
    if "reduction.csv" in csvs:
        emit(
            "reduction_ladder.plot",
            _plot_lines(
                "Reduction diagnostics per refinement level", "level", "size",
                "linear", "log",
                [
                    ("reduction.csv", "level", "h1dual_residual", "divergence residual", "line"),
                    ("reduction.csv", "level", "cauchy_gap", "Cauchy-graph gap", "line"),
                    ("reduction.csv", "level", "declared_budget", "declared budget", "line"),
                ],
            ),
        )
    if not written:
        raise ListingError(
            f"run directory {run} has no tables with a plot mapping", missing=[]
        )
    return sorted(written)
