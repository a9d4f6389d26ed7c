"""Experiment driver: seeded power sweeps across schemes and patterns.

Reads a JSON config, runs the optimizer for every (power, pattern, scheme,
seed) cell, and writes a CSV of per-seed and aggregate sum rates plus a JSON
metadata sidecar. Output is deterministic for a given config; wall-clock
timings are only recorded when explicitly requested so repeated runs produce
byte-identical CSV files.
"""

from __future__ import annotations

import dataclasses
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from csv import DictReader
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy
from scipy.spatial.distance import cdist

from . import rng
from .channel import Problem, RateEvaluator, bs_steering
from .geometry import SiteRegion, rotation_matrix
from .optimizer import OptimizerConfig, RunResult, ao_optimize
from .radiation import PATTERN_KINDS, RadiationPattern
from .scenario import (
    SCHEMES,
    ScenarioParams,
    assigned_poses,
    fixed_pose,
    generate_scenario,
    params_for_scheme,
    strongest_pairs,
    tiled_poses,
)

SCHEMA_VERSION = 1

CSV_COLUMNS = (
    "row_type",
    "scheme",
    "pattern",
    "power_dbm",
    "seed",
    "sum_rate_bps_hz",
    "sum_rate_std_bps_hz",
    "outer_iters",
    "runtime_s",
)

# schemes ordered by how much pose freedom they get; each stage of a chain
# cell warm-starts from the previous one
CHAIN_ORDER = ("fixed-irs", "centralized-6dma", "distributed-6dma")

# sphere radius (meters) of the per-user pointing start for the
# distributed stage (see assigned_poses)
POINTING_RADIUS = 0.35


class ValidationError(ValueError):
    """Config or input-data problem the user has to fix; CLI exit code 1."""


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioParams
    optimizer: OptimizerConfig
    powers_dbm: tuple
    patterns: tuple
    schemes: tuple
    seeds: tuple
    csv_name: str = "results.csv"
    record_runtime_s: bool = False
    render_figures: bool = True
    raw: dict | None = None


def _expect(cond: bool, path: str, message: str):
    if not cond:
        raise ValidationError(f"{path}: {message}")


def _check_keys(obj: dict, allowed, path: str):
    unknown = sorted(set(obj) - set(allowed))
    _expect(not unknown, path, f"unknown keys {unknown}; allowed: {sorted(allowed)}")


def _positive_int(obj: dict, key: str, default: int, path: str) -> int:
    value = obj.get(key, default)
    _expect(isinstance(value, int) and not isinstance(value, bool) and value >= 1,
            f"{path}.{key}", f"must be an integer >= 1, got {value!r}")
    return value


def _number(obj: dict, key: str, default: float, path: str) -> float:
    value = obj.get(key, default)
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool),
            f"{path}.{key}", f"must be a number, got {value!r}")
    return float(value)


def _parse_scenario(obj: dict) -> ScenarioParams:
    _expect(isinstance(obj, dict), "scenario", "must be an object")
    allowed = {
        "users", "bs_antennas", "paths_per_user", "bs_paths", "surfaces",
        "elements_x", "elements_y", "wavelength_m", "noise_dbm", "d_min_m",
        "region_center_m", "region_side_m",
    }
    _check_keys(obj, allowed, "scenario")
    d_min = obj.get("d_min_m")
    if d_min is not None:
        _expect(isinstance(d_min, (int, float)) and d_min > 0,
                "scenario.d_min_m", f"must be a positive number or null, got {d_min!r}")
    center = obj.get("region_center_m", [1.5, 0.0, 0.0])
    _expect(isinstance(center, list) and len(center) == 3
            and all(isinstance(c, (int, float)) for c in center),
            "scenario.region_center_m", f"must be a list of 3 numbers, got {center!r}")
    side = _number(obj, "region_side_m", 1.0, "scenario")
    _expect(side > 0, "scenario.region_side_m", "must be positive")
    wavelength = _number(obj, "wavelength_m", 0.125, "scenario")
    _expect(wavelength > 0, "scenario.wavelength_m", "must be positive")
    return ScenarioParams(
        users=_positive_int(obj, "users", 6, "scenario"),
        bs_antennas=_positive_int(obj, "bs_antennas", 6, "scenario"),
        paths_per_user=_positive_int(obj, "paths_per_user", 2, "scenario"),
        bs_paths=_positive_int(obj, "bs_paths", 6, "scenario"),
        surfaces=_positive_int(obj, "surfaces", 4, "scenario"),
        elements_x=_positive_int(obj, "elements_x", 2, "scenario"),
        elements_y=_positive_int(obj, "elements_y", 2, "scenario"),
        wavelength=wavelength,
        noise_dbm=_number(obj, "noise_dbm", -80.0, "scenario"),
        d_min=float(d_min) if d_min is not None else None,
        region=SiteRegion(center=[float(c) for c in center], side=float(side)),
    )


def _parse_optimizer(obj: dict) -> OptimizerConfig:
    _expect(isinstance(obj, dict), "optimizer", "must be an object")
    allowed = {"outer_iters", "inner_sweeps", "phase_sweeps", "tolerance"}
    _check_keys(obj, allowed, "optimizer")
    tolerance = _number(obj, "tolerance", 1e-5, "optimizer")
    _expect(tolerance > 0, "optimizer.tolerance", "must be positive")
    return OptimizerConfig(
        outer_iters=_positive_int(obj, "outer_iters", 120, "optimizer"),
        inner_sweeps=_positive_int(obj, "inner_sweeps", 2, "optimizer"),
        phase_sweeps=_positive_int(obj, "phase_sweeps", 4, "optimizer"),
        tolerance=tolerance,
    )


def _parse_seeds(value) -> tuple:
    if isinstance(value, dict):
        _check_keys(value, {"start", "count"}, "sweep.seeds")
        start = value.get("start", 0)
        _expect(isinstance(start, int) and start >= 0, "sweep.seeds.start",
                f"must be an integer >= 0, got {start!r}")
        count = value.get("count")
        _expect(isinstance(count, int) and count >= 1, "sweep.seeds.count",
                f"must be an integer >= 1, got {count!r}")
        return tuple(range(start, start + count))
    _expect(isinstance(value, list) and value, "sweep.seeds",
            f"must be a non-empty list or a start/count object, got {value!r}")
    for s in value:
        _expect(isinstance(s, int) and not isinstance(s, bool) and s >= 0,
                "sweep.seeds", f"entries must be integers >= 0, got {s!r}")
    _expect(len(set(value)) == len(value), "sweep.seeds", "entries must be distinct")
    return tuple(value)


def _parse_sweep(obj: dict):
    _expect(isinstance(obj, dict), "sweep", "must be an object")
    _check_keys(obj, {"powers_dbm", "patterns", "schemes", "seeds"}, "sweep")
    powers = obj.get("powers_dbm")
    _expect(isinstance(powers, list) and powers
            and all(isinstance(p, (int, float)) and not isinstance(p, bool)
                    for p in powers),
            "sweep.powers_dbm", f"must be a non-empty list of numbers, got {powers!r}")
    patterns = obj.get("patterns", list(PATTERN_KINDS))
    _expect(isinstance(patterns, list) and patterns, "sweep.patterns",
            "must be a non-empty list")
    for p in patterns:
        _expect(p in PATTERN_KINDS, "sweep.patterns",
                f"unknown pattern {p!r}; allowed: {list(PATTERN_KINDS)}")
    schemes = obj.get("schemes", list(SCHEMES))
    _expect(isinstance(schemes, list) and schemes, "sweep.schemes",
            "must be a non-empty list")
    for s in schemes:
        _expect(s in SCHEMES, "sweep.schemes",
                f"unknown scheme {s!r}; allowed: {list(SCHEMES)}")
    _expect("seeds" in obj, "sweep.seeds", "is required")
    return (tuple(float(p) for p in powers), tuple(patterns), tuple(schemes),
            _parse_seeds(obj["seeds"]))


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a parsed JSON object; error messages name the offending key."""
    _expect(isinstance(data, dict), "config", "top level must be an object")
    allowed = {"schema_version", "scenario", "optimizer", "sweep", "output"}
    _check_keys(data, allowed, "config")
    version = data.get("schema_version")
    _expect(version == SCHEMA_VERSION, "schema_version",
            f"must be {SCHEMA_VERSION}, got {version!r}")
    _expect("sweep" in data, "sweep", "is required")
    scenario = _parse_scenario(data.get("scenario", {}))
    optimizer = _parse_optimizer(data.get("optimizer", {}))
    powers, patterns, schemes, seeds = _parse_sweep(data["sweep"])
    out = data.get("output", {})
    _expect(isinstance(out, dict), "output", "must be an object")
    _check_keys(out, {"csv_name", "record_runtime_s", "render_figures"}, "output")
    csv_name = out.get("csv_name", "results.csv")
    _expect(isinstance(csv_name, str) and csv_name.endswith(".csv"),
            "output.csv_name", f"must be a .csv filename, got {csv_name!r}")
    record_runtime = out.get("record_runtime_s", False)
    _expect(isinstance(record_runtime, bool), "output.record_runtime_s",
            "must be a boolean")
    render = out.get("render_figures", True)
    _expect(isinstance(render, bool), "output.render_figures", "must be a boolean")
    return ExperimentConfig(
        scenario=scenario,
        optimizer=optimizer,
        powers_dbm=powers,
        patterns=patterns,
        schemes=schemes,
        seeds=seeds,
        csv_name=csv_name,
        record_runtime_s=record_runtime,
        render_figures=render,
        raw=data,
    )


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file; syntax errors carry line and column."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"
        ) from exc
    return parse_config(data)


def _carry_theta(theta, src_pose, src_layout, poses, layout) -> np.ndarray:
    """Re-index reflection coefficients onto a re-blocked element layout.

    Elements are matched by nearest physical position, so an exact re-tiling
    carries every coefficient to the element it belonged to, and the curved
    re-tiling hands each element the coefficient of its nearest flat
    counterpart.
    """
    rot = rotation_matrix(src_pose.rotation)
    src_positions = src_pose.position + src_layout.offsets @ rot.T
    n = layout.num_elements
    out = np.empty(n * len(poses), dtype=complex)
    for b, pose in enumerate(poses):
        rot_b = rotation_matrix(pose.rotation)
        positions = pose.position + layout.offsets @ rot_b.T
        nearest = cdist(positions, src_positions).argmin(axis=1)
        out[b * n:(b + 1) * n] = theta[nearest]
    return out


def _matched_theta(problem: Problem, poses, pairs) -> np.ndarray:
    """Phases aligning each surface's assigned relay route.

    Surface b carries user k_b to BS path p_b (see strongest_pairs). Its
    coefficients cancel the cascade phase of that route projected on the
    path's steering vector, so each assigned user arrives coherently along
    its own BS direction. That gives the receiver one separable stream per
    surface to start from, instead of whatever a random phase draw sums to.
    """
    sc = problem.scenario
    n = problem.layout.num_elements
    ones = np.ones(n * len(poses), dtype=complex)
    ev = RateEvaluator.from_surface_poses(problem, poses, ones)
    g_all, v_all = ev.stacked_blocks()
    theta = np.empty_like(ones)
    for b, (user, path) in enumerate(pairs):
        sl = slice(b * n, (b + 1) * n)
        along = bs_steering(sc.bs_aoas[path], sc.bs_antennas).conj() @ v_all[:, sl]
        theta[sl] = np.exp(-1j * np.angle(along * g_all[user, sl]))
    return theta


def _fixed_inits(problem: Problem, anchor, seed: int) -> list:
    """Reflection starts for the anchored stage: the seeded draw, phases
    matched to the two strongest relay routes, and a second draw.

    Phase-only optimization lands in basins that differ by whole bits per
    hertz depending on the start, and the anchored stage is the baseline
    every moving scheme is compared against. A handful of cheap restarts
    keeps that baseline honest; without them the comparison mostly
    measures that the moving schemes optimized harder, not that they
    moved.
    """
    n = problem.layout.num_elements
    pairs = strongest_pairs(problem.scenario, 2)
    gen = rng.substream(seed, rng.REFLECTION_INIT, 1)
    return [
        None,
        _matched_theta(problem, [anchor], [pairs[0]]),
        _matched_theta(problem, [anchor], [pairs[1]]),
        np.exp(1j * gen.uniform(0.0, 2.0 * math.pi, n)),
    ]


def run_chain(
    base: ScenarioParams,
    optimizer: OptimizerConfig,
    pattern: str,
    power_dbm: float,
    seed: int,
    schemes,
) -> dict:
    """Optimize one (pattern, power, seed) cell for the requested schemes.

    The schemes form a continuation chain: the aggregate surface is first
    phase-optimized in place (fixed-irs), then freed to move (centralized),
    and the converged aggregate is finally split into blocks that keep their
    element positions and phases as the distributed starting point. Each
    stage therefore starts at least as good as the previous one finished,
    which keeps the scheme ordering stable seed by seed instead of only on
    average. The distributed stage also tries a per-user pointing start
    (see assigned_poses) with phases matched to the assigned routes and
    keeps the better result; the continuation tiling inherits the
    aggregate's one-aperture shape, which under-uses the blocks'
    independent rotations.
    """
    depth = max(CHAIN_ORDER.index(s) for s in schemes)
    powered = dataclasses.replace(base, power_dbm=power_dbm)
    aggregate = params_for_scheme(powered, "centralized-6dma")
    scenario = generate_scenario(aggregate, seed)
    pattern_obj = RadiationPattern.create(pattern, aggregate.wavelength)
    agg_problem = Problem(
        scenario, aggregate.layout(), pattern_obj, aggregate.region, aggregate.d_min
    )

    def stage(scheme):
        return dataclasses.replace(optimizer, scheme=scheme)

    results = {}
    anchor_pose = fixed_pose(aggregate)
    anchored = max(
        (
            ao_optimize(agg_problem, [anchor_pose], stage("fixed-irs"),
                        initial_theta=theta)
            for theta in _fixed_inits(agg_problem, anchor_pose, seed)
        ),
        key=lambda r: r.sum_rate,
    )
    results["fixed-irs"] = anchored
    if depth >= 1:
        freed = ao_optimize(
            agg_problem, anchored.poses, stage("centralized-6dma"),
            initial_theta=anchored.theta,
        )
        results["centralized-6dma"] = freed
    if depth >= 2:
        split = params_for_scheme(powered, "distributed-6dma")
        problem = Problem(
            scenario, split.layout(), pattern_obj, split.region, split.d_min
        )
        anchor = freed.poses[0]
        tiles = tiled_poses(split, anchor)
        carried = _carry_theta(
            freed.theta, anchor, aggregate.layout(), tiles, split.layout()
        )
        legs = [(tiles, carried)]
        pointed = assigned_poses(split, scenario, POINTING_RADIUS)
        if pointed is not None:
            pairs = strongest_pairs(scenario, split.surfaces)
            legs.append((pointed, _matched_theta(problem, pointed, pairs)))
        runs = [
            ao_optimize(problem, poses, stage("distributed-6dma"),
                        initial_theta=theta)
            for poses, theta in legs
        ]
        results["distributed-6dma"] = max(runs, key=lambda r: r.sum_rate)
    return {s: results[s] for s in schemes}


def _chain_cell(args):
    return run_chain(*args)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _aggregate_rows(sample_rows, config: ExperimentConfig):
    rows = []
    for power in config.powers_dbm:
        for pattern in config.patterns:
            for scheme in config.schemes:
                rates = [
                    r["sum_rate_bps_hz"] for r in sample_rows
                    if r["power_dbm"] == power and r["pattern"] == pattern
                    and r["scheme"] == scheme
                ]
                rates = np.array(rates)
                rows.append({
                    "row_type": "aggregate",
                    "scheme": scheme,
                    "pattern": pattern,
                    "power_dbm": power,
                    "seed": None,
                    "sum_rate_bps_hz": float(rates.mean()),
                    "sum_rate_std_bps_hz": float(rates.std()),
                    "outer_iters": None,
                    "runtime_s": None,
                })
    return rows


@dataclass
class ExperimentOutput:
    csv_path: Path
    metadata_path: Path
    figure_paths: list
    rows: list


def run_experiment(config: ExperimentConfig, out_dir, jobs: int = 1) -> ExperimentOutput:
    """Run every configured cell and write CSV, metadata and figures.

    Cells are keyed (power, pattern, seed); all requested schemes of a cell
    come from one optimization chain. With jobs > 1 the cells run in worker
    processes; rows are buffered and written in config order either way, so
    the CSV bytes do not depend on the job count.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = [
        (power, pattern, seed)
        for power in config.powers_dbm
        for pattern in config.patterns
        for seed in config.seeds
    ]
    args = [
        (config.scenario, config.optimizer, pattern, power, seed, config.schemes)
        for power, pattern, seed in cells
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_chain_cell, args))
    else:
        outcomes = [_chain_cell(a) for a in args]

    by_cell = dict(zip(cells, outcomes))
    sample_rows = []
    for power in config.powers_dbm:
        for pattern in config.patterns:
            for scheme in config.schemes:
                for seed in config.seeds:
                    result: RunResult = by_cell[(power, pattern, seed)][scheme]
                    sample_rows.append({
                        "row_type": "sample",
                        "scheme": scheme,
                        "pattern": pattern,
                        "power_dbm": power,
                        "seed": seed,
                        "sum_rate_bps_hz": result.sum_rate,
                        "sum_rate_std_bps_hz": None,
                        "outer_iters": result.outer_iters,
                        "runtime_s": result.runtime_s if config.record_runtime_s else None,
                    })
    rows = sample_rows + _aggregate_rows(sample_rows, config)

    csv_path = out_dir / config.csv_name
    lines = [",".join(CSV_COLUMNS)]
    lines += [",".join(_fmt(row[c]) for c in CSV_COLUMNS) for row in rows]
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

    metadata_path = out_dir / (csv_path.stem + "_metadata.json")
    metadata_path.write_text(
        json.dumps(_metadata(config), indent=2) + "\n", encoding="utf-8"
    )

    figure_paths = []
    if config.render_figures:
        from . import figures

        figure_paths = figures.render_all(rows, out_dir, config)
    return ExperimentOutput(csv_path, metadata_path, figure_paths, rows)


def _metadata(config: ExperimentConfig) -> dict:
    from . import __version__

    return {
        "schema_version": SCHEMA_VERSION,
        "config": config.raw,
        "versions": {
            "python": platform.python_version(),
            "passive6dma": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "policies": {
            "fixed_pose": "region center, normal bisecting the mean user and "
                          "BS look directions, tilted to clear the outward "
                          "constraint",
            "fixed_stage_restarts": "two seeded draws plus phases matched to "
                                    "the two strongest relay routes, best "
                                    "kept",
            "warm_start_chain": "fixed-irs -> centralized (same aggregate) -> "
                                "distributed (aggregate split into blocks, "
                                "phases carried by element position)",
            "distributed_second_leg": (
                f"per-user pointing on a {POINTING_RADIUS} m sphere, "
                "best of the two starts kept"
            ),
            "aggregate_std": "population standard deviation over seeds",
        },
    }


def summarize(csv_path):
    """Per-scheme isotropic-minus-directive mean-rate gaps per power point.

    Works from the sample rows so it also accepts CSV files whose aggregate
    rows were stripped. Raises ValidationError when either pattern is missing
    for a (scheme, power) pair.
    """
    csv_path = Path(csv_path)
    try:
        with csv_path.open(newline="", encoding="utf-8") as fh:
            reader = DictReader(fh)
            missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValidationError(
                    f"{csv_path}: missing columns {sorted(missing)}"
                )
            samples = [row for row in reader if row["row_type"] == "sample"]
    except OSError as exc:
        raise ValidationError(f"{csv_path}: {exc.strerror or exc}") from exc
    if not samples:
        raise ValidationError(f"{csv_path}: no sample rows")
    rates = {}
    for row in samples:
        key = (row["scheme"], float(row["power_dbm"]), row["pattern"])
        rates.setdefault(key, []).append(float(row["sum_rate_bps_hz"]))
    pairs = sorted({(s, p) for s, p, _ in rates})
    gaps = []
    for scheme, power in pairs:
        means = {}
        for pattern in PATTERN_KINDS:
            values = rates.get((scheme, power, pattern))
            if not values:
                raise ValidationError(
                    f"{csv_path}: no {pattern} rows for scheme {scheme!r} "
                    f"at {power:g} dBm; gaps need both patterns"
                )
            means[pattern] = float(np.mean(values))
        gaps.append({
            "scheme": scheme,
            "power_dbm": power,
            "gap_bps_hz": means["isotropic"] - means["directive"],
        })
    return gaps
