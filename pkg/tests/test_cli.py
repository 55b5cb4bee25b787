import csv
import json

import numpy as np
import pytest

from digitew import cli
from digitew import config as cfgmod
from digitew.exceptions import ParameterError
from digitew.numeration import fibonacci


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("n,system,expected", [
    ("100", "zeckendorf", "F_11+F_6+F_4"),
    ("17", "qary:3", "122 (base 3)"),
    ("0", "qary:3", "0"),
    ("17", "cantor:2,3,4", "2,2,1 (cantor:2,3,4)"),
])
def test_expand(n, system, expected, capsys):
    code, out, _ = run(["expand", n, "--system", system], capsys)
    assert code == 0 and out.strip() == expected


def test_expand_error_exit(capsys):
    code, _, err = run(["expand", "24", "--system", "cantor:2,3,4"], capsys)
    assert code == 1 and "error" in err


def test_dist_s2(tmp_path, capsys):
    code, *_ = run(["dist", "--system", "qary:2", "--function", "sum_of_digits", "--N", "8",
                    "--out", str(tmp_path)], capsys)
    assert code == 0
    text = (tmp_path / "dist_N8.csv").read_text()
    assert "# provenance: config_sha256=" in text
    rows = list(csv.reader(line for line in text.splitlines() if not line.startswith("#")))
    assert rows[0] == ["value", "mass", "cum_mass"]
    assert [float(r[1]) * 8 for r in rows[1:]] == [1, 3, 3, 1]


def test_dist_zeckendorf_oracle(tmp_path, capsys):
    code, *_ = run(["dist", "--system", "zeckendorf", "--function", "zeck_indicator",
                    "--N", str(fibonacci(10)), "--set", "oracle=true", "--out", str(tmp_path)],
                   capsys)
    assert code == 0
    summary = json.loads((tmp_path / "dist_summary.json").read_text())
    assert summary[0]["kolmogorov_vs_bruteforce"] == 0.0


def test_dist_zero_single_atom(tmp_path, capsys):
    run(["dist", "--function", "zero", "--N", "100", "--out", str(tmp_path)], capsys)
    rows = [l for l in (tmp_path / "dist_N100.csv").read_text().splitlines() if l[0] != "#"]
    assert len(rows) == 2


def test_bound_exit_codes(capsys):
    code, _, err = run(["bound", "--function", "sum_of_digits", "--N", "1024", "--T", "4"], capsys)
    assert code == 2
    code, _, err = run(["bound", "--function", "geometric:0.5", "--N", "8", "--T", "1000"], capsys)
    assert code == 3


def test_bound_json(tmp_path, capsys):
    code, *_ = run(["bound", "--function", "geometric:0.5", "--N", "1048576", "--T", "32",
                    "--theorem", "Th2A", "--theorem", "Th2A_refined",
                    "--set", 'q_source="closed-form"', "--out", str(tmp_path)], capsys)
    assert code == 0
    data = json.loads((tmp_path / "bound.json").read_text())
    assert [d["theorem"] for d in data] == ["Th2A", "Th2A_refined"]


def test_rates_vdc(tmp_path, capsys):
    code, *_ = run(["rates", "--scenario", "vdc_binary", "--N", "[1024, 4096]",
                    "--out", str(tmp_path)], capsys)
    assert code == 0
    lines = [l for l in (tmp_path / "rates.csv").read_text().splitlines() if l[0] != "#"]
    rows = list(csv.DictReader(lines))
    assert [int(r["N"]) for r in rows] == [1024, 4096]
    assert float(rows[0]["measured_distance"]) == pytest.approx(2**-10)


def test_rates_rows_parallel_match(monkeypatch):
    cfg = cfgmod.load_scenario("vdc_binary").replace(N=(1024, 2048, 4096))
    monkeypatch.setenv("DIGITEW_THREADS", "1")
    _, serial = cli._rates_rows(cfg)
    monkeypatch.setenv("DIGITEW_THREADS", "3")
    _, parallel = cli._rates_rows(cfg)
    assert serial == parallel


def test_charfun_csv(tmp_path, capsys):
    code, *_ = run(["charfun", "--function", "vdc", "--set", 't="linspace:-10:10:5"',
                    "--out", str(tmp_path)], capsys)
    assert code == 0
    lines = [l for l in (tmp_path / "charfun.csv").read_text().splitlines() if l[0] != "#"]
    rows = list(csv.DictReader(lines))
    assert list(rows[0]) == ["t", "re", "im", "abs", "trunc_bound", "upper_bound"]
    t = float(rows[0]["t"])
    assert float(rows[0]["abs"]) == pytest.approx(abs(np.sin(t / 2) / (t / 2)), abs=1e-9)


def test_pisot(tmp_path, capsys):
    code, *_ = run(["pisot", "--set", "beta=[0.5]", "--set", 'k="range:0:10"',
                    "--out", str(tmp_path)], capsys)
    assert code == 0
    lines = [l for l in (tmp_path / "pisot.csv").read_text().splitlines() if l[0] != "#"]
    rows = list(csv.DictReader(lines))
    for r in rows:
        t = float(r["t"])
        # uniform law on [0, 2]
        assert float(r["abs_phi"]) == pytest.approx(abs(np.sin(t) / t), abs=1e-9)


def test_pisot_empty_ladder(tmp_path, capsys):
    code, *_ = run(["pisot", "--set", "k=[]", "--out", str(tmp_path)], capsys)
    assert code == 0
    lines = [l for l in (tmp_path / "pisot.csv").read_text().splitlines() if l[0] != "#"]
    assert lines == ["beta,k,t,abs_phi,trunc_bound"]


def test_sjdecay_small(tmp_path, capsys):
    code, *_ = run(["sjdecay", "--set", "B=[2.0]", "--set", 'J="range:0:6"',
                    "--out", str(tmp_path)], capsys)
    assert code == 0
    fit = json.loads((tmp_path / "sjdecay_fit.json").read_text())
    assert fit[0]["slope"] < 0


def test_config_roundtrip_scenarios():
    for name in cfgmod.scenario_names():
        cfg = cfgmod.load_scenario(name)
        assert cfgmod.loads(cfg.to_toml()) == cfg


def test_config_validation():
    with pytest.raises(ParameterError):
        cfgmod.loads('N = [10, 5]')
    with pytest.raises(ParameterError):
        cfgmod.loads('T = "preset:nope"')
    with pytest.raises(ParameterError):
        cfgmod.loads('theorems = ["Th9"]')
    with pytest.raises(ParameterError):
        cfgmod.loads('[section]\nx = 1')
    with pytest.raises(ParameterError):
        cfgmod.loads('N = "geometric:2"')


def test_schedules():
    assert cfgmod.loads('N = "geometric:2:3:5"').N_schedule == (8, 16, 32)
    assert cfgmod.loads('N = "fibonacci:5:7"').N_schedule == (5, 8, 13)
    assert cfgmod.loads('J = "range:1:3"').J_range == (1, 2, 3)
    assert cfgmod.loads('T = 32').T_policy == ("fixed", 32.0)
    assert cfgmod.loads('T = "auto"').T_policy == ("auto", None)


def test_provenance_hash_stable():
    a = cfgmod.load_scenario("vdc_binary")
    assert a.digest() == cfgmod.loads(a.to_toml()).digest()
    assert a.digest() != a.replace(N=(1024,)).digest()
