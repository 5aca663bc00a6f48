import json

import pytest

from slope_tradeoff import cli


def run_cli(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr().out
    return code, out


def test_prox_subcommand(capsys):
    code, out = run_cli(["prox", "--v", "20,13,10,6,4", "--theta", "12,10,5,5,5"], capsys)
    assert code == 0
    assert out.strip() == "8,4,4,1,0"


def test_prox_bad_vector_exits_2(capsys):
    code, _ = run_cli(["prox", "--v", "1,2,oops", "--theta", "1,1,1"], capsys)
    assert code == 2


def test_missing_required_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.build_parser().parse_args(["curves", "--delta", "0.3"])
    assert exc.value.code == 2


def test_curves_header_and_determinism(tmp_path, capsys):
    args = [
        "curves", "--delta", "0.3", "--eps", "0.5", "--points", "9", "--lower", "none",
    ]
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    assert cli.main(args + ["--output", str(out1)]) == 0
    assert cli.main(args + ["--output", str(out2)]) == 0
    text = out1.read_text()
    assert text == out2.read_text()  # byte-identical reruns
    header = text.splitlines()[0]
    assert header.startswith("# schema=slope-tradeoff/v1")
    assert "u_star_dt=0.366901" in header
    assert text.splitlines()[1] == "u,q_upper,q_lower,q_lasso"
    # q_upper(1) = 1 - eps in the last row
    last = text.strip().splitlines()[-1].split(",")
    assert last[0] == "1" and abs(float(last[1]) - 0.5) < 1e-9


def test_curves_with_coarse_lower(tmp_path):
    out = tmp_path / "c.csv"
    code = cli.main(
        ["curves", "--delta", "0.3", "--eps", "0.2", "--points", "5",
         "--lower", "coarse", "--output", str(out)]
    )
    assert code == 0
    rows = [l for l in out.read_text().splitlines() if not l.startswith("#")][1:]
    for row in rows:
        u, qu, ql, _ = row.split(",")
        if ql:
            assert float(ql) <= float(qu) + 1e-12


def test_lower_bound_csv(tmp_path):
    out = tmp_path / "lb.csv"
    code = cli.main(
        ["lower-bound", "--delta", "0.3", "--eps", "0.2", "--points", "3",
         "--u-min", "0.3", "--u-max", "0.7", "--dz", "0.05", "--t-points", "20",
         "--output", str(out)]
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "u,t_star_lower,q_lower"
    assert len(lines) == 5


def test_simulate_schema(tmp_path):
    out = tmp_path / "sim.json"
    code = cli.main(
        ["simulate", "--preset", "fig3", "--trials", "1", "--format", "json",
         "--output", str(out)]
    )
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["schema"] == "slope-tradeoff/v1"
    assert payload["columns"] == ["config_id", "trial", "tpp", "fdp", "mse", "seed"]
    assert len(payload["rows"]) == 8


def test_example_d3_report_only(capsys):
    code, out = run_cli(["example-d3", "--report-only"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert set(payload["values"]) == {
        "t_star", "lasso_fdp", "t1", "se_value", "tau", "pi_star",
        "alpha_max", "t1_prime", "slope_fdp", "u_dagger",
    }
    assert payload["worst_rel_err"] < 5e-3


def test_simulate_json_config(tmp_path):
    cfg = {
        "name": "custom", "n": 60, "p": 150, "sigma": 0.0, "trials": 2,
        "signal": {"kind": "sparse_gaussian", "eps": 0.2},
        "penalties": [
            {"label": "lasso", "spec": {"kind": "constant", "lam": 0.5}},
            {"label": "two", "spec": {"kind": "two_level", "a": 1.0, "b": 0.3, "w": 0.2}},
        ],
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out.csv"
    assert cli.main(["simulate", "--config", str(path), "--output", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "config_id,trial,tpp,fdp,mse,seed"
    assert len(lines) == 6


def test_simulate_requires_preset_or_config(capsys):
    assert cli.main(["simulate"]) == 2
