"""Config validation, the experiment driver, CSV output and the CLI."""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from passive6dma.experiment import (
    CSV_COLUMNS,
    ValidationError,
    load_config,
    parse_config,
    run_chain,
    run_experiment,
    summarize,
)


def tiny_config(**overrides):
    data = {
        "schema_version": 1,
        "scenario": {"users": 2, "bs_antennas": 4, "surfaces": 2,
                     "elements_x": 2, "elements_y": 2},
        "optimizer": {"outer_iters": 2, "tolerance": 1e-4},
        "sweep": {
            "powers_dbm": [10.0],
            "patterns": ["directive", "isotropic"],
            "schemes": ["distributed-6dma", "centralized-6dma", "fixed-irs"],
            "seeds": [0],
        },
        "output": {"render_figures": False},
    }
    for key, value in overrides.items():
        if isinstance(value, dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return data


# ------------------------------------------------------------- validation


def test_parse_config_accepts_minimal():
    config = parse_config({
        "schema_version": 1,
        "sweep": {"powers_dbm": [5], "seeds": [0]},
    })
    assert config.powers_dbm == (5.0,)
    assert config.patterns == ("directive", "isotropic")
    assert len(config.schemes) == 3
    assert config.scenario.users == 6
    assert config.optimizer.outer_iters == 120
    assert config.csv_name == "results.csv"
    assert not config.record_runtime_s


@pytest.mark.parametrize("mutate,needle", [
    (lambda d: d.update(schema_version=2), "schema_version"),
    (lambda d: d.pop("sweep"), "sweep"),
    (lambda d: d.update(extra=1), "unknown keys"),
    (lambda d: d["scenario"].update(wavelength=0.1), "scenario"),
    (lambda d: d["scenario"].update(users=0), "scenario.users"),
    (lambda d: d["scenario"].update(region_center_m=[1, 2]), "region_center_m"),
    (lambda d: d["optimizer"].update(tolerance=-1), "optimizer.tolerance"),
    (lambda d: d["sweep"].update(powers_dbm=[]), "powers_dbm"),
    (lambda d: d["sweep"].update(powers_dbm=["5"]), "powers_dbm"),
    (lambda d: d["sweep"].update(patterns=["omni"]), "patterns"),
    (lambda d: d["sweep"].update(schemes=["hybrid"]), "schemes"),
    (lambda d: d["sweep"].update(seeds=[]), "seeds"),
    (lambda d: d["sweep"].update(seeds=[0, 0]), "distinct"),
    (lambda d: d["sweep"].update(seeds=[-1]), "seeds"),
    (lambda d: d["sweep"].update(seeds={"count": 0}), "seeds.count"),
    (lambda d: d["output"].update(csv_name="results.txt"), "csv_name"),
    (lambda d: d["output"].update(record_runtime_s="yes"), "record_runtime_s"),
])
def test_parse_config_rejects(mutate, needle):
    data = tiny_config()
    mutate(data)
    with pytest.raises(ValidationError, match=needle):
        parse_config(data)


def test_seed_range_sugar():
    config = parse_config(tiny_config(sweep={"seeds": {"start": 3, "count": 4}}))
    assert config.seeds == (3, 4, 5, 6)


def test_load_config_reports_syntax_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "schema_version": 1,\n}\n')
    with pytest.raises(ValidationError, match=r"broken\.json:3:1"):
        load_config(path)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ValidationError, match="absent"):
        load_config(tmp_path / "absent.json")


# ---------------------------------------------------------------- driver


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    config = parse_config(tiny_config())
    return config, run_experiment(config, tmp)


def test_csv_layout(tiny_run):
    config, output = tiny_run
    lines = output.csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    cells = len(config.powers_dbm) * len(config.patterns) * len(config.schemes)
    samples = cells * len(config.seeds)
    assert len(lines) == 1 + samples + cells
    body = [line.split(",") for line in lines[1:]]
    assert [r[0] for r in body] == ["sample"] * samples + ["aggregate"] * cells
    for row in body[:samples]:
        assert row[4] != "" and row[6] == "" and row[7] != ""
        assert row[8] == ""  # runtime off by default
    for row in body[samples:]:
        assert row[4] == "" and row[6] != "" and row[7] == ""


def test_aggregates_match_samples(tiny_run):
    config, output = tiny_run
    samples = [r for r in output.rows if r["row_type"] == "sample"]
    for agg in (r for r in output.rows if r["row_type"] == "aggregate"):
        rates = [
            s["sum_rate_bps_hz"] for s in samples
            if (s["scheme"], s["pattern"], s["power_dbm"])
            == (agg["scheme"], agg["pattern"], agg["power_dbm"])
        ]
        assert len(rates) == len(config.seeds)
        assert agg["sum_rate_bps_hz"] == pytest.approx(np.mean(rates), abs=1e-15)
        assert agg["sum_rate_std_bps_hz"] == pytest.approx(np.std(rates), abs=1e-15)


def test_metadata_sidecar(tiny_run):
    config, output = tiny_run
    meta = json.loads(output.metadata_path.read_text())
    assert meta["config"] == config.raw
    assert "numpy" in meta["versions"] and "passive6dma" in meta["versions"]
    assert "warm_start_chain" in meta["policies"]


def test_rerun_is_byte_identical(tiny_run, tmp_path):
    config, output = tiny_run
    again = run_experiment(config, tmp_path)
    assert again.csv_path.read_bytes() == output.csv_path.read_bytes()


def test_jobs_do_not_change_output(tiny_run, tmp_path):
    config, output = tiny_run
    pooled = run_experiment(config, tmp_path, jobs=2)
    assert pooled.csv_path.read_bytes() == output.csv_path.read_bytes()


def test_runtime_column_opt_in(tmp_path):
    config = parse_config(tiny_config(
        sweep={"schemes": ["fixed-irs"], "patterns": ["directive"]},
        output={"record_runtime_s": True},
    ))
    output = run_experiment(config, tmp_path)
    sample = output.csv_path.read_text().splitlines()[1].split(",")
    assert float(sample[8]) > 0.0


def test_figures_rendered(tmp_path):
    config = parse_config(tiny_config(output={"render_figures": True}))
    output = run_experiment(config, tmp_path)
    names = sorted(p.name for p in output.figure_paths)
    assert names == [
        "pattern_gap_vs_power.png",
        "rate_vs_power_directive.png",
        "rate_vs_power_isotropic.png",
    ]
    for path in output.figure_paths:
        assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_chain_orders_schemes_per_seed():
    config = parse_config(tiny_config())
    for seed in (0, 1, 2):
        results = run_chain(config.scenario, config.optimizer, "directive",
                            10.0, seed, config.schemes)
        d = results["distributed-6dma"].sum_rate
        c = results["centralized-6dma"].sum_rate
        f = results["fixed-irs"].sum_rate
        assert d >= c - 1e-9 >= f - 2e-9, (d, c, f)


def test_matched_theta_aligns_assigned_routes():
    from passive6dma import Problem, RadiationPattern
    from passive6dma.channel import RateEvaluator, bs_steering
    from passive6dma.experiment import _matched_theta
    from passive6dma.scenario import (ScenarioParams, assigned_poses,
                                      generate_scenario, params_for_scheme,
                                      strongest_pairs)

    params = params_for_scheme(ScenarioParams(power_dbm=10.0),
                               "distributed-6dma")
    sc = generate_scenario(params, 1)
    poses = assigned_poses(params, sc, 0.35)
    assert poses is not None
    pattern = RadiationPattern.create("directive", params.wavelength)
    problem = Problem(sc, params.layout(), pattern, params.region, params.d_min)
    pairs = strongest_pairs(sc, params.surfaces)
    theta = _matched_theta(problem, poses, pairs)
    np.testing.assert_allclose(np.abs(theta), 1.0, atol=1e-12)
    n = params.layout().num_elements
    ev = RateEvaluator.from_surface_poses(problem, poses,
                                          np.ones_like(theta))
    g_all, v_all = ev.stacked_blocks()
    for b, (user, path) in enumerate(pairs):
        sl = slice(b * n, (b + 1) * n)
        route = (bs_steering(sc.bs_aoas[path], sc.bs_antennas).conj()
                 @ v_all[:, sl]) * g_all[user, sl]
        aligned = route @ theta[sl]
        # phase-cancelled terms add up coherently along the assigned route
        assert abs(aligned) == pytest.approx(np.abs(route).sum(), rel=1e-12)
        assert abs(np.angle(aligned)) < 1e-12


# ------------------------------------------------------------- summarize


def synthetic_csv(tmp_path, rows):
    path = tmp_path / "synthetic.csv"
    lines = [",".join(CSV_COLUMNS)]
    for scheme, pattern, power, seed, rate in rows:
        lines.append(f"sample,{scheme},{pattern},{power},{seed},{rate},,5,")
    path.write_text("\n".join(lines) + "\n")
    return path


def test_summarize_hand_values(tmp_path):
    path = synthetic_csv(tmp_path, [
        ("fixed-irs", "directive", 15, 0, 2.0),
        ("fixed-irs", "directive", 15, 1, 4.0),
        ("fixed-irs", "isotropic", 15, 0, 7.0),
        ("fixed-irs", "isotropic", 15, 1, 9.0),
        ("fixed-irs", "directive", 5, 0, 1.0),
        ("fixed-irs", "isotropic", 5, 0, 1.5),
    ])
    gaps = summarize(path)
    assert gaps == [
        {"scheme": "fixed-irs", "power_dbm": 5.0, "gap_bps_hz": 0.5},
        {"scheme": "fixed-irs", "power_dbm": 15.0, "gap_bps_hz": 5.0},
    ]


def test_summarize_zero_gap(tmp_path):
    path = synthetic_csv(tmp_path, [
        ("fixed-irs", "directive", 15, 0, 3.25),
        ("fixed-irs", "isotropic", 15, 0, 3.25),
    ])
    assert summarize(path)[0]["gap_bps_hz"] == 0.0


def test_summarize_requires_both_patterns(tmp_path):
    path = synthetic_csv(tmp_path, [("fixed-irs", "directive", 15, 0, 3.0)])
    with pytest.raises(ValidationError, match="both patterns"):
        summarize(path)


def test_summarize_rejects_foreign_csv(tmp_path):
    path = tmp_path / "foreign.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValidationError, match="missing columns"):
        summarize(path)


def test_summarize_rejects_empty(tmp_path):
    path = synthetic_csv(tmp_path, [])
    with pytest.raises(ValidationError, match="no sample rows"):
        summarize(path)


# ------------------------------------------------------------------- CLI


def run_cli(*argv):
    return subprocess.run(
        [sys.executable, "-m", "passive6dma.cli", *argv],
        capture_output=True, text=True,
    )


def test_cli_validate_paths(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(tiny_config()))
    ok = run_cli("validate", "--config", str(path))
    assert ok.returncode == 0 and "valid" in ok.stdout

    path.write_text(json.dumps(tiny_config(schema_version=9)))
    bad = run_cli("validate", "--config", str(path))
    assert bad.returncode == 1 and "schema_version" in bad.stderr

    missing = run_cli("validate", "--config", str(tmp_path / "nope.json"))
    assert missing.returncode == 1


def test_cli_run_and_summarize(tmp_path):
    config = tiny_config(
        sweep={"schemes": ["fixed-irs"]},
        output={"render_figures": False},
    )
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    out_dir = tmp_path / "out"
    run = run_cli("run", "--config", str(path), "--out", str(out_dir))
    assert run.returncode == 0, run.stderr
    csv_path = out_dir / "results.csv"
    assert csv_path.exists()
    assert (out_dir / "results_metadata.json").exists()

    summary = run_cli("summarize", "--in", str(csv_path))
    assert summary.returncode == 0, summary.stderr
    lines = summary.stdout.splitlines()
    assert lines[0] == "scheme,power_dbm,gap_bps_hz"
    assert lines[1].startswith("fixed-irs,10,")

    bad_jobs = run_cli("run", "--config", str(path), "--out", str(out_dir),
                       "--jobs", "0")
    assert bad_jobs.returncode == 1
