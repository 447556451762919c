import json
import math
import subprocess
import sys

import pytest

from jumplq.cli import effective_config, main

R_, MU, SIG = 0.03, 0.2, 0.3


def write(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return str(p)


def run_cli(tmp_path, cfg, *extra, out="out"):
    out_dir = tmp_path / out
    code = main(["--config", write(tmp_path, cfg), "--out", str(out_dir),
                 *extra])
    return code, out_dir


def classical_market(targets):
    return {"T": 1.0, "r": R_, "mu": MU, "sigma": SIG, "x0": 1.0,
            "targets": targets}


def test_sre_zero_instance(tmp_path):
    cfg = {"mode": "sre", "model": {"T": 1.0, "G": 1.0},
           "numerics": {"steps": 20}}
    with pytest.warns(UserWarning):
        code, out = run_cli(tmp_path, cfg)
    assert code == 0
    rows = (out / "riccati.csv").read_text().splitlines()
    assert rows[0].startswith("t,P1,P2")
    assert len(rows) == 22
    for r in rows[1:]:
        _, p1, p2 = r.split(",")[:3]
        assert float(p1) == 1.0 and float(p2) == 1.0
    assert "PASS" in (out / "report.txt").read_text()


def test_inequality_mode(tmp_path):
    cfg = {"mode": "check-inequality", "inequality": {"samples": 5000}}
    code, out = run_cli(tmp_path, cfg)
    assert code == 0
    assert (out / "report.txt").read_text().rstrip().endswith("PASS")


def test_frontier_classical(tmp_path):
    zs = [1.05 + 0.05 * k for k in range(10)]
    cfg = {"mode": "frontier", "market": classical_market(zs),
           "numerics": {"steps": 2000}}
    code, out = run_cli(tmp_path, cfg)
    assert code == 0
    rows = (out / "frontier.csv").read_text().splitlines()
    assert rows[0] == "z,lambda_star,variance,std_dev" and len(rows) == 11
    theta2 = (MU / SIG) ** 2
    for r in rows[1:]:
        z, _, var, sd = (float(x) for x in r.split(","))
        exact = (z - math.exp(R_)) ** 2 / (math.exp(theta2) - 1)
        assert var == pytest.approx(exact, rel=1e-6)
        assert sd == pytest.approx(math.sqrt(var))
    assert (out / "feedback.csv").read_text().startswith("# shift(t)")


def test_simulate_and_determinism(tmp_path):
    cfg = {"mode": "simulate",
           "model": {"T": 1.0, "A": 0.1, "B": 0.5, "C": 0.2, "D": 0.4,
                     "Q": 1.0, "R": 0.5, "S": 0.1, "G": 1.0,
                     "marks": [{"E": -0.3, "F": 0.5, "nu": 1.0}]},
           "cone": {"kind": "nonneg", "dim": 1},
           "numerics": {"steps": 200},
           "mc": {"paths": 4000, "steps": 50},
           "simulate": {"x0": -1.0, "per_path_csv": True}}
    code1, out1 = run_cli(tmp_path, cfg, "--seed", "3", out="a")
    code2, out2 = run_cli(tmp_path, cfg, "--seed", "3", out="b")
    assert code1 == code2
    for name in ("report.txt", "paths.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    code3, out3 = run_cli(tmp_path, cfg, "--seed", "4", out="c")
    assert (out3 / "paths.csv").read_bytes() != (out1 / "paths.csv")\
        .read_bytes()


def test_dump_effective_config_round_trips(tmp_path, capsys):
    cfg = {"mode": "frontier", "market": classical_market([1.1, 1.2])}
    assert main(["--config", write(tmp_path, cfg),
                 "--dump-effective-config"]) == 0
    dumped = json.loads(capsys.readouterr().out)
    assert effective_config(dumped) == dumped
    assert dumped["numerics"]["steps"] == 2000
    assert dumped["output"] == "out"


def test_seed_override_reaches_every_section():
    cfg = {"mode": "check-comparison", "comparison": {"pairs": 2, "seed": 1}}
    assert effective_config(cfg, seed=9)["comparison"]["seed"] == 9
    assert effective_config(cfg)["comparison"]["seed"] == 1


def test_explicit_comparison_pair(tmp_path):
    spec = {"dim": 1, "steps": 10, "T": 1.0, "nu": [1.0],
            "generator": {"jump_coef": [[0.5]]},
            "terminal": {"scale": 1.0, "terms": [
                {"comp": 0, "kind": "count", "coef": 1.0}]}}
    higher = json.loads(json.dumps(spec))
    higher["terminal"]["terms"].append({"comp": 0, "kind": "const",
                                        "coef": 0.1})
    cfg = {"mode": "check-comparison",
           "comparison": {"a": spec, "b": higher}}
    code, out = run_cli(tmp_path, cfg)
    assert code == 0
    assert "PASS" in (out / "report.txt").read_text()
    swapped = {"mode": "check-comparison",
               "comparison": {"a": higher, "b": spec}}
    assert run_cli(tmp_path, swapped)[0] == 3


def test_small_harness(tmp_path):
    cfg = {"mode": "check-comparison",
           "comparison": {"pairs": 6, "steps": 20}}
    code, out = run_cli(tmp_path, cfg)
    assert code == 0
    assert "pairs=6" in (out / "report.txt").read_text()


@pytest.mark.parametrize("text, status", [
    ("{not json", 2),
    ("[1, 2]", 2),
    ('{"mode": "nope"}', 3),
    ('{"mode": "sre", "model": {"T": -1}}', 3),
    ('{"mode": "sre", "model": {"T": 1}, "numerics": {"steps": 0}}', 3),
    ('{"mode": "sre", "model": {"T": 1}, "extra": {}}', 3),
    ('{"mode": "frontier", "market": {"T": 1, "mu": 0.1, "sigma": 0.3}}', 3),
    ('{"mode": "simulate", "market": {"T": 1, "mu": 0.1, "sigma": 0.3}}', 3),
])
def test_error_statuses(tmp_path, text, status, capsys):
    assert main(["--config", write(tmp_path, text)]) == status
    assert capsys.readouterr().err


def test_missing_file_and_solver_error(tmp_path):
    assert main(["--config", str(tmp_path / "none.json")]) == 2
    cfg = {"mode": "frontier",
           "market": {"T": 1.0, "r": 0.0, "mu": 1e-7, "sigma": 1.0,
                      "targets": [1.1]}, "numerics": {"steps": 50}}
    assert run_cli(tmp_path, cfg)[0] == 4


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, {"mode": "check-inequality",
                           "inequality": {"samples": 100}})
    res = subprocess.run([sys.executable, "-m", "jumplq", "--config", cfg,
                          "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "PASS" in res.stdout
