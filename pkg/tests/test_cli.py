import json
import subprocess
import sys
from fractions import Fraction as F

import pytest

from conftest import two_value_iid
from symmech import Constraints, Setting, io as sio
from symmech.cli import main
from symmech.lp import build, extract, solve
from symmech.model import ModelError

SECTION3 = {"setting": "k-bidders", "delta": "1/5",
            "factors": [{"iid": {"4/5": "1/2", "1": "1/2"}, "n": 2}], "demands": [1]}
TWO_BY_ONE = {"setting": "k-items", "delta": "1/2",
              "factors": [{"types": [[["1/2"], "1/2"], [["1"], "1/2"]]}], "bidders": 2, "demands": [1, 1]}


@pytest.fixture
def problem(tmp_path):
    def write(spec, name="problem.json"):
        p = tmp_path / name
        p.write_text(json.dumps(spec))
        return str(p)
    return write


# -- io -----------------------------------------------------------------------------


def test_parse_refuses_floats():
    with pytest.raises(ModelError):
        sio.parse_q(0.1)
    assert sio.parse_q("1/10") == F(1, 10)


def test_load_problem_forms():
    dist, cons, setting = sio.load_problem(TWO_BY_ONE)
    assert (dist.m, dist.n, setting.kind) == (2, 1, "k-items")
    assert cons.demand(0) == 1
    dist, _, _ = sio.load_problem({"factors": [{"independent": [{"0": "1/2", "1": "1/2"}, {"1": "1"}]}]})
    assert dist.support_size() == 2


@pytest.mark.parametrize("kind", ["naive", "k-items", "k-bidders"])
def test_mechanism_dump_round_trip(kind):
    dist = two_value_iid(2, 2)
    lp = build(dist, Constraints.unit_demand(2), kind)
    M = extract(solve(lp), lp)
    text = sio.dump_mechanism(M, Setting("k-items", 2, 2), F(1, 2))
    M2, header = sio.load_mechanism(text, dist)
    assert header["delta"] == "1/2"
    for prof, _ in dist.support():
        assert M2.outcome(prof) == M.outcome(prof)
    assert sio.dump_mechanism(M2, Setting("k-items", 2, 2), F(1, 2)) == text


# -- solve / verify -----------------------------------------------------------------


def test_solve_section3_end_to_end(problem, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["solve", problem(SECTION3), "--out", str(out), "--emit-lp"])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    audit = json.loads((out / "audit.json").read_text())
    assert summary["lp_objective"] == "17/20" and summary["naive_equal"]
    assert audit["passed"] and audit["strong_monotonicity_violations"] == 0
    assert F(summary["lp_objective"]) >= F(17, 20)  # best deterministic item pricing
    assert (out / "model.lp").exists() and (out / "mechanism.csv").exists()
    assert "LP optimum" in capsys.readouterr().out


def test_verify_clean_and_tampered(problem, tmp_path):
    prob = problem(SECTION3)
    out = tmp_path / "run"
    assert main(["solve", prob, "--out", str(out)]) == 0
    mech = out / "mechanism.csv"
    assert main(["verify", prob, "--mechanism", str(mech)]) == 0
    # raise every price by 1/5 for the first class: IR and incentives break
    lines = mech.read_text().splitlines()
    tampered = [lines[0], lines[1]]
    for row in lines[2:]:
        cid, i, j, phi, price = row.split(",")
        if cid == "0":
            price = str(F(price) + F(1, 5))
        tampered.append(",".join([cid, i, j, phi, price]))
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(tampered) + "\n")
    vout = tmp_path / "verify"
    rc = main(["verify", prob, "--mechanism", str(bad), "--out", str(vout)])
    assert rc == 1
    report = json.loads((vout / "verify.json").read_text())
    assert not report["passed"]
    assert F(report["max_ir_violation"]) > 0 or F(report["max_violation"]) > 0


def test_inconsistent_dump_is_input_error(problem, tmp_path):
    prob = problem(TWO_BY_ONE)
    out = tmp_path / "run"
    assert main(["solve", prob, "--out", str(out)]) == 0
    lines = (out / "mechanism.csv").read_text().splitlines()
    cid, i, j, phi, price = lines[2].split(",")
    lines[2] = ",".join([cid, i, j, phi, str(F(price) + 1)])
    lines.insert(3, ",".join([cid, i, j, phi, price]))
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["verify", prob, "--mechanism", str(bad)]) == 2


def test_bad_inputs_exit_two(problem, tmp_path):
    assert main(["solve", str(tmp_path / "missing.json")]) == 2
    assert main(["solve", problem({"factors": [{"types": [[["1"], "1/2"]]}]})]) == 2
    assert main(["solve", problem(SECTION3), "--delta", "2/5"]) == 2
    assert main(["reduce", problem(TWO_BY_ONE), "--mechanism", "x.csv"]) == 2  # no seed


# -- stochastic subcommands and determinism ---------------------------------------------


def _run_dir(args, out):
    assert main(args + ["--out", str(out)]) in (0, 1)
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_same_seed_byte_identical(problem, tmp_path):
    prob = problem(TWO_BY_ONE)
    solved = [_run_dir(["solve", prob], tmp_path / f"s{k}") for k in range(2)]
    assert solved[0] == solved[1]
    mech = str(tmp_path / "s0" / "mechanism.csv")
    common = ["--mechanism", mech, "--seed", "5"]
    red = [_run_dir(["reduce", prob, *common, "--eta", "1/4", "--scale-r", "8", "--trials", "50",
                     "--traces", "5"], tmp_path / f"r{k}") for k in range(2)]
    assert red[0] == red[1] and b"holds" in red[0]["bound.json"]
    smp = [_run_dir(["sample", prob, *common, "--ir", "expost", "--count", "20"], tmp_path / f"m{k}")
           for k in range(2)]
    assert smp[0] == smp[1]
    other = _run_dir(["sample", prob, "--mechanism", mech, "--seed", "6", "--count", "20"], tmp_path / "m9")
    assert other["samples.jsonl"] != smp[0]["samples.jsonl"]


def test_sample_expost_payments_within_value(problem, tmp_path):
    prob = problem(TWO_BY_ONE)
    assert main(["solve", prob, "--out", str(tmp_path / "s")]) == 0
    out = tmp_path / "m"
    main(["sample", prob, "--mechanism", str(tmp_path / "s" / "mechanism.csv"), "--seed", "1", "--ir", "expost",
          "--count", "200", "--out", str(out)])
    for line in (out / "samples.jsonl").read_text().splitlines():
        rec = json.loads(line)
        for i, (bundle, pay) in enumerate(zip(rec["bundles"], rec["payments"])):
            value = sum((F(rec["profile"][i][j]) for j in bundle), F(0))
            assert value - F(pay) >= 0


def test_mhr_plan(tmp_path):
    out = tmp_path / "mhr"
    rc = main(["mhr-plan", "--marginal", '{"family": "exponential"}', "--items", "2", "--epsilon", "1/2",
               "--seed", "3", "--trials", "2000", "--out", str(out)])
    assert rc == 0
    plan = json.loads((out / "plan.json").read_text())
    assert plan["zeta"] == 2
    assert sum(F(p) for p in plan["grid_masses"].values()) == 1
    prob = json.loads((out / "problem.json").read_text())
    assert prob["setting"] == "k-bidders"


def test_oracle_compare(problem, capsys):
    assert main(["oracle-compare", problem(TWO_BY_ONE)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["naive"] == out["k-items"] == out["k-bidders"] == "3/4"


def test_module_entry_point(problem):
    res = subprocess.run([sys.executable, "-m", "symmech", "oracle-compare", problem(TWO_BY_ONE)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and '"equal": true' in res.stdout
