import json
import math

import pytest

from cbxopt.cli import main
from cbxopt.config import effective_config, parse_config
from cbxopt.core import ConfigError

TRACE_KEYS = {"iteration", "consensus", "best_value", "diameter", "eval_count"}
REPORT_KEYS = {"runs", "successes", "success_rate", "tolerance", "per_run", "effective_config"}


@pytest.fixture
def write(tmp_path):
    def _write(name, obj_or_text):
        p = tmp_path / name
        p.write_text(obj_or_text if isinstance(obj_or_text, str) else json.dumps(obj_or_text, indent=2))
        return str(p)

    return _write


def test_minimal_document_gets_defaults():
    cfg, obj, out = parse_config('{"objective": "sphere", "dimension": 2}')
    assert cfg.variant == "cbo" and cfg.n_particles == 50
    assert (cfg.alpha, cfg.lam, cfg.sigma, cfg.dt) == (1e4, 1.0, 1.0, 0.1)
    assert cfg.init.lower == (-3.0, -3.0)
    assert obj.name == "sphere" and out.trace is None


def test_batch_size_too_large_names_key_and_line():
    text = '{\n  "objective": "sphere",\n  "dimension": 2,\n  "n_particles": 5,\n  "batch_size": 9\n}'
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.key == "batch_size" and err.value.line == 5
    assert "batch_size" in str(err.value)


@pytest.mark.parametrize(
    "extra, key",
    [
        ({"colour": 1}, "colour"),
        ({"alpha": "big"}, "alpha"),
        ({"n_particles": 2.5}, "n_particles"),
        ({"lambda": -1}, "lambda"),
        ({"init": {"kind": "uniform_box", "lower": [1, 1], "upper": [0, 0]}}, "init.lower"),
        ({"init": {"kind": "gaussian", "lower": [0, 0]}}, "init.lower"),
        ({"init": {"kind": "sobol"}}, "init.kind"),
        ({"termination": {"max_iterations": 10, "patience": 3}}, "termination.patience"),
        ({"termination": {"max_evals": 0}}, "termination.max_evals"),
        ({"termination": {"consensus_stall": {"window": 3}}}, "termination.consensus_stall.tol"),
        ({"output": {"plot": "x.png"}}, "output.plot"),
        ({"variant": "sa"}, "variant"),
        ({"seed": -1}, "seed"),
    ],
)
def test_strict_parsing_names_key(extra, key):
    doc = {"objective": "sphere", "dimension": 2, **extra}
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps(doc, indent=1))
    assert err.value.key == key
    assert err.value.line is not None


def test_missing_required_and_bad_json():
    with pytest.raises(ConfigError) as err:
        parse_config('{"dimension": 2}')
    assert err.value.key == "objective"
    with pytest.raises(ConfigError) as err:
        parse_config('{"objective": "sphere",\n "dimension": }')
    assert err.value.line == 2


def test_echo_round_trip():
    text = json.dumps(
        {
            "objective": "ackley",
            "dimension": 3,
            "variant": "polarized_cbo",
            "kernel_width": "inf",
            "batch_size": 10,
            "init": {"kind": "gaussian", "mean": 1.0, "stddev": 0.5},
            "termination": {"max_iterations": 40, "consensus_stall": {"window": 4, "tol": 1e-6}},
        }
    )
    cfg, obj, out = parse_config(text)
    assert math.isinf(cfg.kernel_width)
    echo = effective_config(cfg, obj, out)
    cfg2, obj2, out2 = parse_config(json.dumps(echo))
    assert cfg2 == cfg and obj2.name == obj.name and out2 == out
    assert effective_config(cfg2, obj2, out2) == echo


def test_run_writes_trace_and_result(write, tmp_path, capsys):
    cfg = write("c.json", {"objective": "sphere", "dimension": 2, "termination": {"max_iterations": 200}})
    trace = tmp_path / "t.jsonl"
    assert main(["run", "--config", cfg, "--seed", "0", "--trace", str(trace)]) == 0
    result = json.loads(capsys.readouterr().out.strip())
    lines = trace.read_text().splitlines()
    assert len(lines) == result["iterations"] == 200
    records = [json.loads(line) for line in lines]
    assert all(set(r) == TRACE_KEYS for r in records)
    assert records[-1]["best_value"] < 1e-3
    assert result["effective_config"]["seed"] == 0


def test_seed_flag_overrides_file(write, capsys):
    cfg = write("c.json", {"objective": "sphere", "dimension": 2, "seed": 5, "termination": {"max_iterations": 3}})
    assert main(["run", "--config", cfg, "--seed", "9"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["seed"] == 9 and result["effective_config"]["seed"] == 9


def test_missing_config_exits_3(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert main(["run", "--config", missing]) == 3
    assert missing in capsys.readouterr().err


def test_unwritable_trace_exits_3(write, tmp_path, capsys):
    cfg = write("c.json", {"objective": "sphere", "dimension": 2})
    assert main(["run", "--config", cfg, "--trace", str(tmp_path / "no" / "dir" / "t.jsonl")]) == 3


def test_malformed_config_exits_2(write, capsys):
    cfg = write("c.json", {"objective": "sphere", "dimension": 2, "n_particles": 4, "batch_size": 8})
    assert main(["run", "--config", cfg]) == 2
    assert "batch_size" in capsys.readouterr().err


def test_numerical_failure_exits_4(write, capsys):
    cfg = write("c.json", {"objective": "sphere", "dimension": 1, "lambda": 1e308, "alpha": 0})
    assert main(["run", "--config", cfg]) == 4
    assert "iteration" in capsys.readouterr().err


def test_bench_report_schema_and_determinism(write, tmp_path, capsys):
    cfg = write("c.json", {"objective": "sphere", "dimension": 2, "termination": {"max_iterations": 200}})
    report = tmp_path / "r.json"
    texts = []
    for _ in range(2):
        assert main(["bench", "--config", cfg, "--runs", "20", "--report", str(report)]) == 0
        texts.append(report.read_text())
    summary = capsys.readouterr().out
    assert "success_rate=1.0000" in summary
    a, b = (json.loads(t) for t in texts)
    assert set(a) == REPORT_KEYS and a["runs"] == 20 and "success_rate" in a
    assert set(a["per_run"][0]) == {"seed", "distance", "iterations", "eval_count", "wall_ms"}
    for rep in (a, b):
        for run in rep["per_run"]:
            run.pop("wall_ms")
    assert json.dumps(a) == json.dumps(b)


def test_bench_without_report_prints_json(write, capsys):
    cfg = write("c.json", {"objective": "ackley", "dimension": 2, "termination": {"max_iterations": 5}})
    assert main(["bench", "--config", cfg, "--runs", "2", "--base-seed", "3", "--tolerance", "1e9"]) == 0
    first, summary = capsys.readouterr().out.strip().splitlines()
    rep = json.loads(first)
    assert [r["seed"] for r in rep["per_run"]] == [3, 4] and rep["success_rate"] == 1.0
    assert summary.startswith("success_rate=")


def test_bench_zero_runs_exits_2(write):
    cfg = write("c.json", {"objective": "sphere", "dimension": 2})
    assert main(["bench", "--config", cfg, "--runs", "0"]) == 2


def test_list_objectives(capsys):
    assert main(["list-objectives"]) == 0
    out = capsys.readouterr().out
    assert "ackley" in out and "sphere" in out and "rastrigin" in out


def test_help_exits_cleanly(capsys):
    for cmd in (["--help"], ["run", "--help"], ["bench", "--help"], ["list-objectives", "--help"]):
        with pytest.raises(SystemExit) as exc:
            main(cmd)
        assert exc.value.code == 0
