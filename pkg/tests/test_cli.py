import csv
import io
import json
import subprocess
import sys

import pytest

from demandex.cli import TRADEOFF_COLUMNS, main
from demandex.curves import PriceDomain, constant_curve, inv_sqrt_curve, linear_curve

D12 = {"pmin": 1.0, "pmax": 2.0}
D14 = {"pmin": 1.0, "pmax": 4.0}


def write(path, obj):
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


@pytest.fixture
def cpmm(tmp_path):
    return write(tmp_path / "cpmm.json", {"kind": "cpmm", "domain": D14})


def test_simulate_empty_script(tmp_path, cpmm):
    out = tmp_path / "ledger.csv"
    assert main(["simulate", write(tmp_path / "e.jsonl", ""), cpmm, "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 1 and rows[0]["op"] == "init"


def test_simulate_round_trip(tmp_path, cpmm):
    script = "\n".join(json.dumps(e) for e in [
        {"op": "mint", "lp": "a", "coeffs": [2.0]},
        {"op": "trade_price", "p1": 3.0},
        {"op": "trade_price", "p1": 1.0},
        {"op": "burn", "lp": "a"},
    ])
    out = tmp_path / "ledger.csv"
    assert main(["simulate", write(tmp_path / "e.jsonl", script), cpmm, "--p0", "1", "--out", str(out)]) == 0
    last = read_csv(out)[-1]
    assert abs(float(last["risky_reserve"])) <= 1e-9
    assert abs(float(last["numeraire_reserve"])) <= 1e-9


def test_simulate_over_withdrawal_exits_1(tmp_path, cpmm, capsys):
    script = "\n".join(json.dumps(e) for e in [
        {"op": "mint", "lp": "a", "coeffs": [1.0]},
        {"op": "burn", "lp": "a"},
        {"op": "burn", "lp": "a"},
    ])
    assert main(["simulate", write(tmp_path / "e.jsonl", script), cpmm]) == 1
    assert "step 3" in capsys.readouterr().err


def test_simulate_parse_error_exits_2(tmp_path, cpmm):
    assert main(["simulate", write(tmp_path / "e.jsonl", "{not json"), cpmm]) == 2
    assert main(["simulate", str(tmp_path / "missing.jsonl"), cpmm]) == 2


def test_approx_linear_on_lob(tmp_path):
    d = PriceDomain(1.0, 2.0)
    curve = write(tmp_path / "f.json", linear_curve(d, 1.0, 0.0).to_json())
    mech = write(tmp_path / "m.json", {"kind": "lob", "domain": D12, "ticks": [1.25, 1.5, 1.75, 2.0]})
    out = tmp_path / "r.json"
    assert main(["approx", curve, mech, "--p", "1", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["distance"] <= 0.0625 + 1e-12
    assert report["bound"] == pytest.approx(0.0625)


def test_approx_v3_without_ones_floor(tmp_path):
    d = PriceDomain(1.0, 2.0)
    curve = write(tmp_path / "f.json", constant_curve(d, 0.5).to_json())
    mech = write(tmp_path / "m.json", {"kind": "univ3", "domain": D12, "ticks": [1.0, 1.5, 2.0],
                                       "include_ones": False})
    out = tmp_path / "r.json"
    assert main(["approx", curve, mech, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["distance"] > 0


def test_approx_domain_mismatch_exits_2(tmp_path, cpmm):
    curve = write(tmp_path / "f.json", inv_sqrt_curve(PriceDomain(1.0, 2.0)).to_json())
    assert main(["approx", curve, cpmm]) == 2


def test_tradeoff_rows(tmp_path):
    cfg = write(tmp_path / "c.json", {"domain": D12, "epsilons": [0.2, 0.1], "n_random": 4})
    out = tmp_path / "t.csv"
    assert main(["tradeoff", cfg, "--seed", "5", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.splitlines()[0] == ",".join(TRADEOFF_COLUMNS)
    rows = read_csv(out)
    lob = [r for r in rows if r["mechanism"] == "lob"]
    assert int(lob[1]["complexity"]) == 2 * int(lob[0]["complexity"])
    for r in rows:
        assert float(r["error_est"]) <= float(r["error_bound"]) + 1e-9
    # v3 complexity is the interval count plus the all-ones curve
    v3 = [r for r in rows if r["mechanism"] == "univ3"]
    assert [int(r["complexity"]) - 1 for r in v3] == [5, 10]


def test_tradeoff_parallel_is_byte_identical(tmp_path):
    cfg = write(tmp_path / "c.json", {"domain": D12, "epsilons": [0.25, 0.2, 0.1], "n_random": 3})
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["tradeoff", cfg, "--seed", "9", "--out", str(a)]) == 0
    assert main(["tradeoff", cfg, "--seed", "9", "--jobs", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_tradeoff_bad_epsilon_exits_2(tmp_path):
    cfg = write(tmp_path / "c.json", {"domain": D12, "epsilons": [1.5]})
    assert main(["tradeoff", cfg]) == 2


def test_lowerbound_report(tmp_path, cpmm):
    out = tmp_path / "lb.json"
    assert main(["lowerbound", cpmm, "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["max_distance"] > 0
    assert report["pigeonhole_index"] is not None
    assert report["case"] in {"left_overshoot", "right_undershoot", "high_plateau", "low_plateau", "interior"}
    assert report["flag"] is None


def test_arbitrage_path(tmp_path, cpmm):
    prices = write(tmp_path / "p.txt", "2.0\n2.0\n9.0\n0.5\n2.0\n")
    out = tmp_path / "arb.csv"
    assert main(["arbitrage", cpmm, prices, "--p0", "2", "--out", str(out)]) == 0
    rows = read_csv(out)[1:]
    assert float(rows[0]["p0"]) == pytest.approx(2.0)
    assert float(rows[2]["p0"]) == 4.0  # pinned at pmax
    assert float(rows[3]["p0"]) == 1.0  # pinned at pmin
    assert float(rows[4]["p0"]) == pytest.approx(2.0)
    assert all(float(r["profit"]) >= 0 for r in rows)
    assert float(rows[-1]["cumulative_profit"]) == pytest.approx(sum(float(r["profit"]) for r in rows))


def test_usage_error_exits_2():
    assert main(["nonsense"]) == 2


def test_module_entry_point(tmp_path, cpmm):
    res = subprocess.run([sys.executable, "-m", "demandex", "lowerbound", cpmm], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["mechanism"] == "cpmm"
