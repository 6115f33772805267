import csv
import filecmp
import json

import pytest

from vmint.cli import main
from vmint.harness import (
    ConfigError,
    RunConfig,
    apply_overrides,
    config_hash,
    emit_plot_data,
    parse_config,
    run_all,
    verdict_passes,
)

MINIMAL = """\
[run]
master_seed = 99

[tightness_sweep]
kernel = nearest_neighbor
reps = 100
t = 4.0, 16.0
M = 1, 2
"""

TWO_EXPERIMENTS = """\
[run]
master_seed = 7
workers = 2
output_dir = {out}

[vk]
kernel = uniform_range(2)
reps = 400
k = 3
t = 9.0

[akr]
kernel = uniform_range(2)
reps = 400
seed = 123
k = 4
r = 0, 1
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_minimal_config(tmp_path):
    config = parse_config(write(tmp_path, MINIMAL))
    assert len(config.experiments) == 1
    spec = config.experiments[0]
    assert spec.name == "tightness_sweep"
    assert spec.grid == {"t": [4.0, 16.0], "M": [1, 2]}
    assert spec.seed == 99  # defaults to the master seed
    assert config.workers == 1
    assert config.caps["hybrid_cap"] > 0


def test_parse_rejects_zero_workers(tmp_path):
    bad = MINIMAL.replace("master_seed = 99",
                          "master_seed = 99\nworkers = 0")
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, bad))


def test_parse_rejects_unknown_key_with_line(tmp_path):
    bad = MINIMAL + "volume = 11\n"
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, bad))
    assert "volume" in str(err.value) and "line 9" in str(err.value)


def test_parse_rejects_unknown_experiment(tmp_path):
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, MINIMAL + "\n[warp]\nkernel = x\n"))
    assert "warp" in str(err.value)


def test_parse_rejects_duplicate_sections(tmp_path):
    dup = MINIMAL + "\n[tightness_sweep]\nkernel = nearest_neighbor\n"
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, dup))
    assert "duplicate section" in str(err.value)


def test_parse_rejects_missing_grid_keys(tmp_path):
    text = """\
[run]
master_seed = 1

[vk]
kernel = nearest_neighbor
reps = 200
k = 2
"""
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, text))
    assert "missing grid keys" in str(err.value) and "'t'" in str(err.value)


def test_parse_rejects_bad_number(tmp_path):
    bad = MINIMAL.replace("t = 4.0, 16.0", "t = four")
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, bad))
    assert "four" in str(err.value)


def test_parse_rejects_bad_kernel_with_field(tmp_path):
    bad = MINIMAL.replace("kernel = nearest_neighbor", "kernel = warp(3)")
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, bad))
    assert "kernel" in str(err.value)


def test_parse_rejects_cutoff_over_ceiling(tmp_path):
    text = """\
[run]
master_seed = 1
kernel_cutoff_ceiling = 1000

[vk]
kernel = power_law(1.2, 5000)
reps = 200
k = 2
t = 4.0
"""
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, text))
    assert "ceiling" in str(err.value)


def test_config_hash_ignores_order_and_whitespace(tmp_path):
    a = parse_config(write(tmp_path, MINIMAL, "a.cfg"))
    reordered = """\
[run]
master_seed =   99

[tightness_sweep]
M = 1,2
t = 4.0,   16.0
reps = 100
kernel = nearest_neighbor
"""
    b = parse_config(write(tmp_path, reordered, "b.cfg"))
    assert config_hash(a) == config_hash(b)
    c = parse_config(write(tmp_path, MINIMAL.replace("reps = 100",
                                                     "reps = 200"), "c.cfg"))
    assert config_hash(a) != config_hash(c)


def test_config_hash_excludes_operational_knobs(tmp_path):
    a = parse_config(write(tmp_path, MINIMAL, "a.cfg"))
    b = apply_overrides(a, workers=8, out=str(tmp_path / "elsewhere"))
    assert config_hash(a) == config_hash(b)


def test_apply_overrides_reseeds_only_defaulted_specs(tmp_path):
    cfg = parse_config(write(tmp_path, TWO_EXPERIMENTS.format(out=tmp_path)))
    bumped = apply_overrides(cfg, seed=31)
    by_name = {s.name: s for s in bumped.experiments}
    assert by_name["vk"].seed == 31       # followed the master seed
    assert by_name["akr"].seed == 123     # explicitly pinned
    assert bumped.master_seed == 31


def test_run_all_empty_is_silent(tmp_path):
    config = RunConfig(experiments=(), master_seed=1, workers=1,
                       output_dir=tmp_path / "out", caps={})
    assert run_all(config) == []
    assert not (tmp_path / "out").exists()


def test_run_all_writes_csv_and_verdicts(tmp_path):
    out = tmp_path / "results"
    config = parse_config(write(tmp_path, TWO_EXPERIMENTS.format(out=out)))
    records = run_all(config)
    assert [r.experiment for r in records] == ["vk", "akr"]
    assert (out / "vk.csv").exists() and (out / "akr.csv").exists()
    with open(out / "akr.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 and rows[0]["r"] == "0"
    lines = (out / "verdicts.jsonl").read_text().splitlines()
    assert len(lines) == 2
    payload = json.loads(lines[1])
    assert payload["experiment"] == "akr"
    assert payload["seed"] == 123
    assert payload["config_hash"] == config.config_hash
    assert "duration_seconds" in payload and "rows" not in payload
    # single-instance experiment gets its point lifted into the record
    vk_payload = json.loads(lines[0])
    assert vk_payload["point"] is not None


def test_run_all_byte_identical_across_workers(tmp_path):
    outs = []
    for w, name in ((1, "w1"), (2, "w2")):
        out = tmp_path / name
        text = TWO_EXPERIMENTS.format(out=out).replace(
            "workers = 2", f"workers = {w}")
        run_all(parse_config(write(tmp_path, text, f"{name}.cfg")))
        outs.append(out)
    for csv_name in ("vk.csv", "akr.csv"):
        assert filecmp.cmp(outs[0] / csv_name, outs[1] / csv_name,
                           shallow=False)


def test_different_master_seed_changes_draws(tmp_path):
    base = parse_config(write(tmp_path, MINIMAL))
    recs_a = run_all(apply_overrides(base, out=str(tmp_path / "a")))
    recs_b = run_all(apply_overrides(base, seed=100,
                                     out=str(tmp_path / "b")))
    assert recs_a[0].verdict == recs_b[0].verdict == "bounded"
    assert recs_a[0].config_hash != recs_b[0].config_hash


def test_verdict_classification():
    for v in ("bounded", "band-held", "floor-held", "identity-held",
              "identity-held (mc-only)", "nonincreasing", "ratio-bounded",
              "floors-held", "reported: nonincreasing"):
        assert verdict_passes(v)
    for v in ("growing", "band-broken", "floor-violated", "identity-broken",
              "increase-detected", "ratio-unbounded", "non-monotone",
              "inconclusive: censored"):
        assert not verdict_passes(v)


def test_emit_plot_data_tightness(tmp_path):
    rows = [{"t": 4.0, "M": 1, "p_hat": 0.0, "ci_low": 0.0,
             "ci_high": 0.01, "reps": 100, "censored": 0}]
    text = emit_plot_data(rows, "tightness")
    lines = text.strip().splitlines()
    assert lines[0] == "t,M,p_hat,ci_low,ci_high"
    assert lines[1].startswith("4.0,1,0.0")


def test_emit_plot_data_density_and_schedule():
    text = emit_plot_data(
        [{"K": 4, "density": 0.27, "ci_low": 0.26, "ci_high": 0.28}],
        "density")
    assert text.splitlines()[0] == "K,density,ci_low,ci_high"
    text = emit_plot_data(
        [{"k": 3, "M_k": 8, "t_k": 56.2, "p_hat": 0.9, "ci_low": 0.8,
          "ci_high": 0.95, "extra": 1}], "schedule")
    assert text.splitlines()[0] == "k,M_k,t_k,p_hat,ci_low,ci_high"


def test_emit_plot_data_errors():
    with pytest.raises(ValueError) as err:
        emit_plot_data([{"t": 1}], "sonogram")
    assert "density" in str(err.value)  # lists the supported kinds
    with pytest.raises(ValueError):
        emit_plot_data([], "density")
    with pytest.raises(ValueError) as err:
        emit_plot_data([{"K": 4}], "density")
    assert "missing" in str(err.value)


def test_cli_run_roundtrip(tmp_path, capsys):
    out = tmp_path / "res"
    cfg = write(tmp_path, TWO_EXPERIMENTS.format(out=out))
    code = main(["run", str(cfg)])
    captured = capsys.readouterr().out
    assert code == 0
    assert "vk: PASS" in captured and "run PASS" in captured
    assert (out / "verdicts.jsonl").exists()


def test_cli_run_bad_config_exits_2(tmp_path, capsys):
    code = main(["run", str(tmp_path / "missing.cfg")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_cli_run_failing_verdict_exits_1(tmp_path, capsys):
    # growth_band = 0 turns any nonzero late survival into "growing"
    text = """\
[run]
master_seed = 5
output_dir = {out}

[tightness_sweep]
kernel = uniform_range(2)
reps = 150
t = 4.0, 40.0
M = 2
tol.growth_band = 0.0
""".format(out=tmp_path / "res")
    code = main(["run", str(write(tmp_path, text))])
    assert code == 1
    assert "FAIL" in capsys.readouterr().out


def test_cli_verify_unknown_suite(capsys):
    assert main(["verify", "everything"]) == 2
    assert "unknown suite" in capsys.readouterr().err


def test_cli_kernel_inspect(capsys):
    assert main(["kernel", "inspect", "uniform_range(2)"]) == 0
    captured = capsys.readouterr().out
    assert "second moment: 2.5" in captured
    assert main(["kernel", "inspect", "warp(1)"]) == 2


def test_cli_plot_data_roundtrip(tmp_path, capsys):
    out = tmp_path / "res"
    run_all(parse_config(write(tmp_path, MINIMAL.replace(
        "master_seed = 99", f"master_seed = 99\noutput_dir = {out}"))))
    dest = tmp_path / "plot.csv"
    code = main(["plot-data", str(out / "tightness_sweep.csv"),
                 "--kind", "tightness", "--out", str(dest)])
    assert code == 0
    assert dest.read_text().splitlines()[0] == "t,M,p_hat,ci_low,ci_high"
    assert main(["plot-data", str(out / "tightness_sweep.csv"),
                 "--kind", "sonogram"]) == 2


def test_cli_workers_env_var(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("VMINT_WORKERS", "not-a-number")
    with pytest.raises(SystemExit):
        main(["run", str(write(tmp_path, MINIMAL))])
