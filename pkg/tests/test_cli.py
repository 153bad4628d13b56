import json

import pytest

from sparsegossip import cli, datasets
from sparsegossip.metrics import load_trace

MINIMAL = """
[topology]
kind = complete:10

[problem]
kind = quadratic

[run]
method = zeroth
seed = 1
"""


def _cfg_text(topology="complete:10", problem_lines="kind = quadratic",
              run_lines="method = zeroth\nseed = 1", extra=""):
    return (
        f"[topology]\nkind = {topology}\n\n"
        f"[problem]\n{problem_lines}\n\n"
        f"[run]\n{run_lines}\n\n{extra}"
    )


def _write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_minimal_config_fills_defaults(tmp_path):
    spec = cli.parse_config(_write(tmp_path, MINIMAL))
    assert spec.methods == ["zeroth"] and spec.seeds == [1]
    assert spec.resolved["protocol"]["tau"] == "0.5"
    assert spec.resolved["protocol"]["epsilon"] == "0.25"
    assert spec.resolved["smoothing"]["sampler"] == "gaussian"
    assert float(spec.resolved["smoothing"]["delta"]) == pytest.approx(1 / 6)
    config = spec.build("zeroth", 1)
    assert config.steps.alpha0 == pytest.approx(1.05 / config.problem.mu)
    assert config.smoothing.c0 == pytest.approx(1.0 / 35.0)
    first = spec.build("first", 1)
    assert first.steps.alpha0 == pytest.approx(2.1 / first.problem.mu)


def test_parse_rejects_bad_exponents(tmp_path):
    path = _write(tmp_path, MINIMAL + "\n[protocol]\ntau = 0.7\n")
    with pytest.raises(cli.CliConfigError, match="0 < epsilon < tau <= 1/2"):
        cli.parse_config(path)
    assert cli.main(["validate", "--config", str(path)]) == cli.EXIT_CONFIG


def test_parse_rejects_unknown_keys(tmp_path):
    with pytest.raises(cli.CliConfigError, match="unknown key"):
        cli.parse_config(_write(tmp_path, MINIMAL + "\n[steps]\nalpha = 1\n"))
    with pytest.raises(cli.CliConfigError, match="unknown config section"):
        cli.parse_config(_write(tmp_path, MINIMAL + "\n[stepss]\nalpha0 = 1\n"))


def test_resolved_config_round_trip(tmp_path):
    spec = cli.parse_config(
        _write(tmp_path, _cfg_text(run_lines="method = zeroth\nseed = 1\nensemble = 3"))
    )
    resolved_path = tmp_path / "resolved.cfg"
    resolved_path.write_text(spec.render())
    again = cli.parse_config(resolved_path)
    assert again.resolved == spec.resolved
    assert again.seeds == spec.seeds == [1, 2, 3]
    assert again.methods == spec.methods


def test_seed_expansion_and_overrides(tmp_path):
    spec = cli.parse_config(
        _write(tmp_path, _cfg_text(run_lines="method = zeroth\nseed = 4,5"))
    )
    assert spec.seeds == [4, 5]
    ns = cli.build_parser().parse_args(
        ["run", "--config", "x", "--seed", "7", "--seed", "9", "--method", "first"]
    )
    spec = cli.parse_config(_write(tmp_path, MINIMAL), overrides=ns)
    assert spec.seeds == [7, 9] and spec.methods == ["first"]


def test_cmd_validate_ok(tmp_path, capsys):
    path = _write(tmp_path, MINIMAL)
    assert cli.main(["validate", "--config", str(path)]) == cli.EXIT_OK
    assert "config ok" in capsys.readouterr().out


def test_cmd_run_outputs_and_determinism(tmp_path):
    out = tmp_path / "results"
    path = _write(tmp_path, _cfg_text(
        problem_lines="kind = quadratic\ndim = 2",
        run_lines=f"method = zeroth\nseed = 1\nhorizon = 400\nout = {out}",
    ))
    code = cli.main(["run", "--config", str(path), "--seed", "7", "--seed", "8"])
    assert code == cli.EXIT_OK
    for name in ("resolved.cfg", "ensemble_zeroth.csv", "ratefit.txt", "plot.gp",
                 "trace_zeroth_seed7.csv", "trace_zeroth_seed8.csv"):
        assert (out / name).exists(), name
    first = (out / "trace_zeroth_seed7.csv").read_bytes()
    assert cli.main(["run", "--config", str(path), "--seed", "7", "--seed", "7"]) == cli.EXIT_OK
    assert (out / "trace_zeroth_seed7.csv").read_bytes() == first
    trace = load_trace(out / "trace_zeroth_seed7.csv")
    assert trace.rows[-1].k == 400


def test_cmd_run_check_failure_writes_report(tmp_path):
    out = tmp_path / "failing"
    path = _write(tmp_path, _cfg_text(
        problem_lines="kind = quadratic\ndim = 2",
        run_lines=(
            f"method = zeroth\nseed = 1\nhorizon = 400\nout = {out}\n"
            "check_mse_k_slope = -5.0\ncheck_mse_k_tol = 0.01\nfit_lo = 10"
        ),
    ))
    assert cli.main(["run", "--config", str(path)]) == cli.EXIT_CHECK_FAILED
    lines = (out / "failures.jsonl").read_text().splitlines()
    item = json.loads(lines[0])
    assert item["expected"] == -5.0 and "tolerance" in item and "got" in item


def test_cmd_run_divergence_exit_code(tmp_path):
    out = tmp_path / "div"
    path = _write(tmp_path, _cfg_text(
        problem_lines="kind = quadratic\ndim = 2",
        run_lines=f"method = first\nseed = 1\nhorizon = 60\nout = {out}",
        extra="[steps]\nalpha0 = 1e9\n",
    ))
    assert cli.main(["run", "--config", str(path)]) == cli.EXIT_DIVERGED


def test_cmd_ingest_abalone_shaped(tmp_path):
    feats, targs = datasets.synthetic_regression(4177, 8, seed=5)
    raw = tmp_path / "raw.csv"
    datasets.write_csv(raw, feats, targs)
    out = tmp_path / "ingested"
    code = cli.main(["ingest", "--data", str(raw), "--format", "csv",
                     "--test", "577", "--nodes", "10", "--out", str(out)])
    assert code == cli.EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["train_rows"] == 3600 and summary["test_rows"] == 577
    assert summary["per_node"] == [360] * 10
    assert (out / "train.csv").exists() and (out / "test.csv").exists()

    out2 = tmp_path / "ingested2"
    assert cli.main(["ingest", "--data", str(raw), "--test", "0",
                     "--out", str(out2)]) == cli.EXIT_OK
    assert not (out2 / "test.csv").exists()


def test_cmd_ingest_malformed_cell(tmp_path, capsys):
    raw = tmp_path / "bad.csv"
    raw.write_text("1.0,2.0\n1.0,oops\n")
    assert cli.main(["ingest", "--data", str(raw), "--out", str(tmp_path / "x")]) == cli.EXIT_CONFIG
    assert "column 2" in capsys.readouterr().err


def test_erm_pipeline_through_cli(tmp_path):
    feats, targs = datasets.synthetic_regression(300, 3, seed=9)
    raw = tmp_path / "raw.csv"
    datasets.write_csv(raw, feats, targs)
    out = tmp_path / "ing"
    assert cli.main(["ingest", "--data", str(raw), "--test", "50",
                     "--nodes", "5", "--out", str(out)]) == cli.EXIT_OK
    run_out = tmp_path / "erm_run"
    cfg = _write(tmp_path, _cfg_text(
        topology="complete:5",
        problem_lines=f"kind = erm\ntrain = {out / 'train.csv'}\ntest = {out / 'test.csv'}\nreg = 1.0",
        run_lines=f"method = first\nseed = 2\nhorizon = 300\nout = {run_out}",
    ), name="erm.cfg")
    assert cli.main(["run", "--config", str(cfg)]) == cli.EXIT_OK
    trace = load_trace(run_out / "trace_first_seed2.csv")
    assert trace.has_test_error
    assert trace.rows[-1].test_error < trace.rows[0].test_error


def test_cmd_bias_small_sample(tmp_path):
    out = tmp_path / "bias"
    code = cli.main(["bias", "--dim", "3", "--samples", "20000",
                     "--seed", "7", "--out", str(out)])
    assert code == cli.EXIT_OK
    assert (out / "bias.csv").exists()
    assert "slope" in (out / "biasfit.txt").read_text()


def test_out_env_var_sets_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "root"))
    spec = cli.parse_config(_write(tmp_path, MINIMAL))
    assert str(spec.out).startswith(str(tmp_path / "root"))
