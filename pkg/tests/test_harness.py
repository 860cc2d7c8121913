import json
import threading

import numpy as np
import pytest

from zonebill.billing import MAX_ABS_WH, base_bill
from zonebill.errors import InvalidParams
from zonebill.harness import cli
from zonebill.harness.bench import CSV_COLUMNS, REFERENCE_POINTS, BenchmarkReport, BenchmarkRow, run_benchmark_suite, run_row
from zonebill.harness.scenario import ScenarioParams, Scenario, generate_scenario, load_scenario, write_scenario
from zonebill.harness.verify import verify_against_oracle, verify_supplier_totals
from zonebill.mpc.shares import Backend
from zonebill.runtime.config import USER_OUTPUT, ComparisonMode, role_name
from zonebill.runtime.session import free_endpoints, run_session
from zonebill.runtime.wire import WireMessage, decode_arrays, encode_arrays

HM, DM = Backend.HONEST_MAJORITY, Backend.DISHONEST_MAJORITY
OBL, REV = ComparisonMode.OBLIVIOUS, ComparisonMode.REVEAL_DEVIATIONS


# -- scenarios -------------------------------------------------------------------


def test_generation_is_byte_identical():
    params = ScenarioParams(n_users=1000, n_zones=10)
    assert generate_scenario(params, 1).to_json() == generate_scenario(params, 1).to_json()
    assert generate_scenario(params, 1).to_json() != generate_scenario(params, 2).to_json()


def test_scenario_file_round_trip(tmp_path):
    scenario = generate_scenario(ScenarioParams(n_users=30, n_zones=3, n_periods=2, zone_rule="random"), 4)
    path = tmp_path / "s.json"
    write_scenario(scenario, path)
    back = load_scenario(path)
    assert back == scenario
    assert back.to_json() == path.read_text()


def test_scenario_file_is_checked():
    doc = generate_scenario(ScenarioParams(n_users=5, n_zones=2), 1).to_dict()
    with pytest.raises(InvalidParams):
        Scenario.from_dict({**doc, "format": "other"})
    with pytest.raises(InvalidParams):
        Scenario.from_dict({**doc, "version": 2})
    with pytest.raises(InvalidParams):
        Scenario.from_dict({**doc, "periods": [[[999, 0, 0, 0, 0]]]})


@pytest.mark.parametrize(
    "bad",
    [
        {"n_users": 0},
        {"zone_rule": "spiral"},
        {"activity_rate": 1.5},
        {"min_volume": 10, "max_volume": 5},
        {"max_volume": MAX_ABS_WH},
        {"deviation_spread": -1},
        {"regime_weights": (0, 0, 0)},
        {"fit": -1},
    ],
)
def test_invalid_params(bad):
    with pytest.raises(InvalidParams):
        generate_scenario(ScenarioParams(**bad))


def test_unknown_param_names_are_rejected():
    with pytest.raises(InvalidParams):
        ScenarioParams.from_dict({"users": 3})


def test_zone_rules():
    rr = generate_scenario(ScenarioParams(n_users=8, n_zones=4), 0)
    assert [u.zone_id for u in rr.users] == [1, 2, 3, 4, 1, 2, 3, 4]
    cont = generate_scenario(ScenarioParams(n_users=8, n_zones=4, zone_rule="contiguous"), 0)
    assert [u.zone_id for u in cont.users] == [1, 1, 2, 2, 3, 3, 4, 4]


def test_generated_inputs_stay_in_bounds():
    params = ScenarioParams(n_users=100_000, n_zones=50, n_periods=5, max_volume=MAX_ABS_WH - 5000, deviation_spread=5000)
    scenario = generate_scenario(params, 3)
    m = np.array([r.m for period in scenario.records for r in period])
    b = np.array([r.b for period in scenario.records for r in period])
    assert len(m) + len(b) >= 10**6
    assert np.abs(m).max() <= MAX_ABS_WH and np.abs(b).max() <= MAX_ABS_WH


def test_generator_realises_every_regime():
    scenario = generate_scenario(ScenarioParams(n_users=1000, n_zones=10, n_periods=3), 1)
    totals = set()
    for period in scenario.records:
        for z in scenario.zones:
            t = sum(r.m - r.b for r in period if r.zone_id == z)
            totals.add((t > 0) - (t < 0))
    assert totals == {-1, 0, 1}


def test_zero_activity_gives_zero_bills():
    scenario = generate_scenario(ScenarioParams(n_users=50, n_zones=5, activity_rate=0.0), 2)
    assert all(r.m == r.b == r.d == 0 for r in scenario.records[0])
    result = run_session(scenario.session_config(HM, OBL), scenario.records)
    assert all(b == [0] for b in result.bills.values())


# -- verification --------------------------------------------------------------------


def test_verify_passes_correct_run():
    scenario = generate_scenario(ScenarioParams(n_users=40, n_zones=4, n_periods=2), 5)
    result = run_session(scenario.session_config(DM, REV), scenario.records)
    verdict = verify_against_oracle(scenario, result.bills)
    assert verdict.passed and verdict.checked == 80
    assert verdict.describe() == "pass (80 values match)"
    assert verify_supplier_totals(scenario, result.supplier_totals).passed


def test_verify_pinpoints_a_corrupted_share():
    scenario = generate_scenario(ScenarioParams(n_users=40, n_zones=4, n_periods=1), 6)
    config = scenario.session_config(HM, OBL)
    victim = config.users[3].user_id

    def corrupt(src, dst, frame):
        if frame[4] == 5 and src == 0 and dst == USER_OUTPUT:
            msg = WireMessage.decode(frame)
            ids, bills = decode_arrays(msg.payload, [("arith", (-1,)), ("arith", (-1,))])
            bills = bills.copy()
            bills[3] += np.uint64(7)
            return WireMessage(msg.session_id, msg.phase, msg.sender, msg.round, encode_arrays([ids, bills])).encode()
        return frame

    result = run_session(config, scenario.records, tamper=corrupt)
    verdict = verify_against_oracle(scenario, result.bills)
    assert not verdict.passed
    assert verdict.mismatches == 1
    assert (verdict.first.user_id, verdict.first.period) == (victim, 0)
    assert verdict.first.actual - verdict.first.expected == 7
    assert f"user {victim}, period 0" in verdict.describe()
    # supplier totals travel separately and are still right
    assert verify_supplier_totals(scenario, result.supplier_totals).passed


def test_verify_reports_missing_users():
    scenario = generate_scenario(ScenarioParams(n_users=6, n_zones=2), 1)
    bills = {b.user_id: [b.amount] for b in scenario.expected_bills()}
    first = min(bills)
    del bills[first]
    verdict = verify_against_oracle(scenario, bills)
    assert not verdict.passed and verdict.first.user_id == first and verdict.first.actual is None


def test_balanced_market_gets_base_bills():
    params = ScenarioParams(n_users=60, n_zones=6, regime_weights=(0, 1, 0))
    scenario = generate_scenario(params, 7)
    result = run_session(scenario.session_config(HM, OBL), scenario.records)
    assert result.deviations[0].T == 0
    assert verify_against_oracle(scenario, result.bills).passed
    prices = scenario.prices[0]
    assert all(result.bills[r.user_id] == [base_bill(r, prices)] for r in scenario.records[0])


# -- benchmark reports -----------------------------------------------------------------


@pytest.fixture(scope="module")
def small_report():
    return run_benchmark_suite(backends=[HM], modes=[OBL, REV], sizes=[16, 32], n_zones=4, repeats=2)


def test_bench_rows_are_verified(small_report):
    assert len(small_report.rows) == 8
    assert all(r.passed for r in small_report.rows)
    assert {(r.mode, r.n_users) for r in small_report.rows} == {(m.value, n) for m in (OBL, REV) for n in (16, 32)}


def test_bench_csv_schema(small_report):
    lines = small_report.to_csv().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + len(small_report.rows)
    assert all(len(line.split(",")) == len(CSV_COLUMNS) for line in lines)


def test_bench_report_rerenders_identically(small_report):
    text = small_report.to_json()
    again = BenchmarkReport.from_json(text)
    assert again.to_json() == text
    assert again.to_csv() == small_report.to_csv()
    doc = json.loads(text)
    assert doc["reference_points"] == [dict(p) for p in REFERENCE_POINTS]
    assert "synthetic" in doc["data"]


def test_bench_derived_views(small_report):
    scaling = small_report.scaling()
    assert {(s["mode"], s["n_users"]) for s in scaling} == {(OBL.value, 16), (REV.value, 16)}
    rows = small_report.median_rows()
    for s in scaling:
        small, double = rows[(s["backend"], s["mode"], 16)], rows[(s["backend"], s["mode"], 32)]
        assert s["rounds_ratio"] == round(double.online_rounds / small.online_rounds, 6)
        assert s["time_ratio"] == round(double.online_s / small.online_s, 6)
    assert all(c["reveal_fewer"] for c in small_report.mode_comparison())


def test_bench_records_failures_and_goes_on():
    row = run_row(HM, OBL, 0)
    assert not row.passed and "InvalidParams" in row.detail
    report = BenchmarkReport([row, BenchmarkRow(**{**row.__dict__, "verdict": "pass", "n_users": 1})])
    assert report.scaling() == []


# -- command line -------------------------------------------------------------------------


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    assert cli.main(["generate", "--users", "24", "--zones", "3", "--periods", "2", "--seed", "3", "-o", str(path)]) == 0
    return path


def test_cli_generate_run_verify(tmp_path, scenario_file, capsys):
    bills = tmp_path / "bills.json"
    metrics = tmp_path / "metrics.json"
    assert cli.main(["run", str(scenario_file), "--backend", "dm", "--mode", "reveal", "-o", str(bills), "--metrics", str(metrics)]) == 0
    doc = json.loads(bills.read_text())
    assert doc["format"] == cli.BILLS_FORMAT and doc["mode"] == "reveal-deviations"
    assert set(json.loads(metrics.read_text())) >= {"cp0", "cp1", "cp2", "users"}
    assert cli.main(["verify", str(scenario_file), str(bills)]) == 0
    assert "pass" in capsys.readouterr().out

    uid = sorted(doc["bills"], key=int)[2]
    doc["bills"][uid][1] += 1
    bills.write_text(json.dumps(doc))
    assert cli.main(["verify", str(scenario_file), str(bills)]) == 1
    assert f"user {uid}, period 1" in capsys.readouterr().out


def test_cli_reports_errors(tmp_path, scenario_file, capsys):
    assert cli.main(["verify", str(scenario_file), str(scenario_file)]) == 2
    assert "not a bills file" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "zonebill-scenario", "version": 9}))
    assert cli.main(["run", str(bad)]) == 2
    assert cli.main(["run", str(scenario_file), "--role", "nobody"]) == 2
    assert "unknown role" in capsys.readouterr().err


def test_cli_bench(tmp_path):
    csv_path, json_path = tmp_path / "b.csv", tmp_path / "b.json"
    argv = ["bench", "--backend", "hm", "--mode", "reveal", "--users", "8", "16", "--zones", "2",
            "--csv", str(csv_path), "--json", str(json_path)]
    assert cli.main(argv) == 0
    assert csv_path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert BenchmarkReport.from_json(json_path.read_text()).to_csv() == csv_path.read_text()


def test_cli_single_roles_over_tcp(tmp_path, scenario_file):
    scenario = load_scenario(scenario_file)
    config = scenario.session_config(HM, OBL)
    names = {r: role_name(r, config) for r in config.roles}
    endpoints = free_endpoints(config.roles)
    endpoints_file = tmp_path / "endpoints.json"
    endpoints_file.write_text(json.dumps({names[r]: f"{h}:{p}" for r, (h, p) in endpoints.items()}))
    codes = {}

    def play(role):
        out = tmp_path / f"{names[role]}.json"
        codes[role] = cli.main(["run", str(scenario_file), "--role", names[role], "--endpoints", str(endpoints_file),
                                "--timeout", "30", "-o", str(out)])

    threads = [threading.Thread(target=play, args=(r,)) for r in config.roles]
    for t in threads:
        t.start()
    for t in threads:
        t.join(60)
    assert all(code == 0 for code in codes.values()) and len(codes) == len(config.roles)
    users = json.loads((tmp_path / "users.json").read_text())["output"]
    assert verify_against_oracle(scenario, {int(u): b for u, b in users.items()}).passed
    cp0 = json.loads((tmp_path / "cp0.json").read_text())
    assert set(cp0["output"]["opened"]) <= {"zone_tuple", "masked_comparison", "masked_bit"}
