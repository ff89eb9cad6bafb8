import json

import pytest

from replenish import cli
from replenish.instances import GeneratorParams, generate
from replenish.io import load_instance, serialize
from replenish.verify import SuiteReport


def call(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def example1(tmp_path):
    path = tmp_path / "ex1.json"
    path.write_text(serialize(generate(GeneratorParams("AppendixExample1"))))
    return str(path)


def test_gen_writes_a_loadable_instance(capsys, tmp_path):
    out = tmp_path / "gs.json"
    code, _, _ = call(capsys, "gen", "HardGS", "--c", "4", "--gamma", "1", "-o", str(out))
    assert code == 0
    inst = load_instance(out.read_text())
    assert inst.horizon == 8 and inst.replenishment.bound_M == 4.0


def test_gen_to_stdout(capsys):
    code, out, _ = call(capsys, "gen", "BMatching", "--n", "2", "--c", "3", "--seed", "5")
    assert code == 0 and load_instance(out).horizon == 12


def test_hard_instance_sweep(capsys):
    code, out, _ = call(capsys, "run", "--family", "HardGS", "--gamma", "1", "--alg", "fixed_split:x=c",
                        "--benchmark", "exact", "--exact", "--sweep", "4,8,16")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "c,alg_mean,alg_se,lp_value,exact_opt,ratio,fallback_rate"
    assert [line.split(",")[0] for line in lines[1:]] == ["4", "8", "16"]
    assert all(abs(float(line.split(",")[5]) - 0.8) <= 1e-9 for line in lines[1:])


def test_csv_is_byte_stable(capsys):
    argv = ("run", "--family", "BMatching", "--n", "3", "--c", "5", "--seed", "2", "--trials", "20",
            "--alg", "ib", "--wrapper", "adversarial", "--replenishment", "adversarial", "--M", "1")
    first = call(capsys, *argv)[1]
    second = call(capsys, *argv)[1]
    assert first == second and "\r" not in first


def test_zero_replenishment_wrapper_rows_identical(capsys):
    base = ("run", "--family", "BMatching", "--n", "3", "--c", "6", "--seed", "1", "--trials", "10",
            "--replenishment", "none", "--sweep", "6,12")
    plain = call(capsys, *base)[1]
    wrapped = call(capsys, *base, "--wrapper", "adversarial")[1]
    assert plain == wrapped


def test_stochastic_wrapper_refused_on_adversarial_replenishment(capsys):
    code, _, err = call(capsys, "run", "--family", "BMatching", "--arrivals", "stochastic",
                        "--replenishment", "adversarial", "--wrapper", "stochastic", "--trials", "2")
    assert code == 3 and "no lossless batching" in err


@pytest.mark.parametrize("argv", [
    ("run", "--family", "BMatching", "--wrapper", "stochastic", "--trials", "2"),
    ("run", "--family", "BMatching", "--arrivals", "stochastic", "--replenishment", "stochastic",
     "--wrapper", "adversarial", "--trials", "2"),
])
def test_other_incompatible_wrappers(capsys, argv):
    assert call(capsys, *argv)[0] == 3


@pytest.mark.parametrize("argv", [
    (),
    ("frobnicate",),
    ("gen", "NoSuchFamily"),
    ("run", "--family", "BMatching", "--alg", "nope"),
    ("run", "--family", "BMatching", "--trials", "0"),
    ("run", "--family", "BMatching", "--sweep", "a,b"),
    ("run",),
    ("verify", "nosuchsuite"),
    ("lp",),
    ("lp", "solve", "/nonexistent/file.json"),
    ("gen", "Hypergraph", "--n", "2", "--d", "3"),
])
def test_usage_errors(capsys, argv):
    assert call(capsys, *argv)[0] == 1


def test_config_overrides_flags(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"family": "HardGS", "gamma": 1.0, "alg": "fixed_split:x=c", "benchmark": "exact",
                               "exact": True, "sweep": [4]}))
    code, out, _ = call(capsys, "--config", str(cfg), "run", "--family", "BMatching", "--alg", "greedy")
    assert code == 0
    assert out.splitlines()[1].split(",")[:6] == ["4", "8", "0", "", "10", "0.8"]


def test_config_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "blue"}))
    assert call(capsys, "--config", str(cfg), "run", "--family", "BMatching")[0] == 1


def test_run_trace(capsys, tmp_path, example1):
    trace = tmp_path / "trace.json"
    code, out, _ = call(capsys, "run", "--instance", example1, "--wrapper", "adversarial", "--trials", "1",
                        "--trace", str(trace))
    assert code == 0
    doc = json.loads(trace.read_text())
    assert [e["implemented"] for e in doc["action_trace"]] == ["AB", "AB"]


def test_lp_solve_and_dump(capsys, tmp_path):
    inst = tmp_path / "gs.json"
    inst.write_text(serialize(generate(GeneratorParams("HardGS", c=4, gamma=1.0))))
    dump = tmp_path / "x.csv"
    code, out, _ = call(capsys, "lp", "solve", str(inst), "--dump", str(dump))
    assert code == 0 and float(out) == pytest.approx(10.0, abs=1e-9)
    assert dump.read_text().startswith("j,k,z,x\n")


def test_batch_preview(capsys, example1):
    code, out, _ = call(capsys, "batch", "preview", example1)
    assert code == 0
    assert out == "i,j,zeta_B,new_resource_id\nB,1,10.0,B@1\nA,2,11.0,A@2\n"


def test_batch_build(capsys, tmp_path, example1):
    out = tmp_path / "hb.json"
    assert call(capsys, "batch", "build", example1, "-o", str(out))[0] == 0
    hb = load_instance(out.read_text())
    assert {r.id: r.initial_inventory for r in hb.resources} == {"A": 100, "B": 100, "B@1": 10, "A@2": 11}


def test_batch_refuses_online_only_mode(capsys, tmp_path):
    inst = tmp_path / "x.json"
    inst.write_text(serialize(generate(GeneratorParams("BMatching", n=2, c=4, replenishment="stochastic"))))
    assert call(capsys, "batch", "preview", str(inst))[0] == 3


@pytest.mark.parametrize("suite", ["appendix", "hard_instance"])
def test_verify_passes(capsys, suite):
    code, out, _ = call(capsys, "verify", suite)
    assert code == 0
    assert all(line.startswith("PASS") for line in out.splitlines())


def test_verify_failure_exit_code(capsys, monkeypatch):
    def broken():
        rep = SuiteReport("broken")
        rep.add("always", False, 1, 0)
        return rep

    monkeypatch.setitem(cli.SUITES, "sandwich", broken)
    code, out, _ = call(capsys, "verify", "sandwich")
    assert code == 2 and out.startswith("FAIL")


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "replenish", "verify", "appendix"], capture_output=True, text=True)
    assert res.returncode == 0 and "PASS appendix" in res.stdout
