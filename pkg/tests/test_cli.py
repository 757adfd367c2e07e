import json

import pytest

from dqcsim.cli import main
from dqcsim.config import (
    ConfigError,
    apply_overrides,
    build_scenario,
    bundled_scenarios,
    load_config,
    parse_value,
)
from qasm_golden import CORPUS

REF = 0.8921630426886507


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def summary_fidelity(out):
    line = next(l for l in out.splitlines() if l.startswith("mean fidelity:"))
    return line.split(":")[1].strip()


def test_bundled_scenarios_listed():
    assert {"listing3_noiseless", "listing3_noisy"} <= set(bundled_scenarios())


def test_run_noiseless_prints_exact_one(capsys):
    code, out, _ = run(capsys, "run", "--config", "listing3_noiseless")
    assert code == 0
    assert summary_fidelity(out) == "1.0000000000000000"
    assert out.splitlines()[0] == "shot,fidelity,final_time_ns,seed,classical_bits,error"


def test_run_noisy_within_tolerance(capsys):
    code, out, _ = run(capsys, "run", "--config", "listing3_noisy", "--quiet")
    assert code == 0
    assert abs(float(summary_fidelity(out)) - REF) <= 0.02


def test_ket_override_matches_dm_when_noiseless(capsys):
    _, dm, _ = run(capsys, "run", "--config", "listing3_noiseless", "--quiet")
    _, ket, _ = run(capsys, "run", "--config", "listing3_noiseless", "--quiet", "--set", "run.formalism=ket")
    assert abs(float(summary_fidelity(dm)) - float(summary_fidelity(ket))) < 1e-9


def test_compile_report(capsys):
    code, out, _ = run(capsys, "compile", "--config", "listing3_noiseless")
    assert code == 0
    assert "ebits=1 classical_bits=2" in out
    assert "[node_1]" in out and "COND_APPLY X 0 if m0" in out


def test_compile_all_local_circuit(capsys):
    code, out, _ = run(
        capsys, "compile", "--config", "listing3_noiseless",
        "--set", 'software.circuit="INIT 2@node_0 3@node_0\\nH 2@node_0\\nCNOT 2@node_0 3@node_0"',
    )
    assert code == 0
    assert "ebits=0 classical_bits=0" in out


def test_invalid_topology_exits_2(capsys):
    code, _, err = run(capsys, "compile", "--config", "listing3_noiseless", "--set", "hardware.quantum_topology=[[0, 5]]")
    assert code == 2
    assert "out of range" in err


def test_unknown_config_key_exits_2(capsys):
    code, _, err = run(capsys, "run", "--config", "listing3_noiseless", "--set", "hardware.qpu.warp_speed=9")
    assert code == 2
    assert "warp_speed" in err


def test_missing_config_exits_2(capsys):
    code, _, err = run(capsys, "run", "--config", "no_such_scenario")
    assert code == 2
    assert "listing3_noisy" in err


def test_bad_usage_exits_2(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["run"])
    assert ei.value.code == 2


def test_runtime_failure_exits_1(capsys):
    code, _, err = run(
        capsys, "run", "--config", "listing3_noiseless", "--set", 'software.circuit="H 3@node_0"',
        "--set", "run.collector.targets=[[3, \"node_0\"]]", "--set", "run.collector.desired_state=[1, 0]",
    )
    assert code == 1
    assert "node_0 pc=0" in err


def test_fail_fast_exits_1(capsys):
    code, _, err = run(
        capsys, "run", "--config", "listing3_noiseless", "--fail-fast",
        "--set", 'software.circuit="H 3@node_0"', "--set", "run.collector.targets=[[3, \"node_0\"]]",
        "--set", "run.collector.desired_state=[1, 0]",
    )
    assert code == 1
    assert "runtime error" in err


def test_json_output_and_shots(tmp_path, capsys):
    out_file = tmp_path / "r.json"
    code, _, _ = run(capsys, "run", "--config", "listing3_noisy", "--format", "json",
                     "--shots", "3", "--seed", "7", "--out", str(out_file))
    assert code == 0
    rows = json.loads(out_file.read_text())["rows"]
    assert [r["seed"] for r in rows] == [7, 8, 9]


def test_dumped_config_reproduces_results(tmp_path, capsys):
    dumped = tmp_path / "eff.toml"
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, "run", "--config", "listing3_noisy", "--set", "hardware.connection.werner_fidelity=0.8",
        "--shots", "2", "--dump-config", str(dumped), "--out", str(a))
    code, _, _ = run(capsys, "run", "--config", str(dumped), "--out", str(b))
    assert code == 0
    assert a.read_bytes() == b.read_bytes()


def test_verbose_trace(capsys):
    code, out, _ = run(capsys, "run", "--config", "listing3_noiseless", "--verbose", "--quiet")
    assert code == 0
    assert "t=0.0 node=node_0 INIT 2 3 4" in out.splitlines()


def test_qasm_circuit_is_partitioned(capsys):
    code, out, _ = run(
        capsys, "run", "--config", "listing3_noiseless", "--quiet",
        "--circuit", str(CORPUS / "bell.qasm"),
        "--set", "run.collector.targets=[[2, \"node_0\"], [3, \"node_0\"]]",
    )
    # bell.qasm measures both qubits, so the pair is collapsed to |00> or |11>
    assert code == 0
    assert float(summary_fidelity(out)) == pytest.approx(0.5, abs=1e-9)


def test_parse_command(capsys):
    code, out, _ = run(capsys, "parse", str(CORPUS / "bell.qasm"))
    assert code == 0
    assert out.splitlines()[:2] == ["H 0", "CNOT 0 1"]
    code, out, _ = run(capsys, "parse", str(CORPUS / "macros.qasm"))
    assert out.splitlines()[2] == "RZ(1.5707963267948966) 2"


def test_parse_syntax_error_exits_2(capsys):
    code, _, err = run(capsys, "parse", str(CORPUS / "malformed_missing_semicolon.qasm"))
    assert code == 2
    assert "line 5 col 1" in err


def test_override_parsing():
    assert parse_value("3") == 3
    assert parse_value("1e-3") == 1e-3
    assert parse_value("ket") == "ket"
    assert parse_value("[[0, 1]]") == [[0, 1]]
    data = load_config("listing3_noisy")
    new = apply_overrides(data, ["hardware.connection.delay_ns=100"])
    assert "ent_dist_rate_hz" not in new["hardware"]["connection"]
    assert "ent_dist_rate_hz" in data["hardware"]["connection"]
    with pytest.raises(ConfigError):
        apply_overrides(data, ["no_equals_sign"])


def test_config_requires_exactly_one_delay_and_circuit():
    data = load_config("listing3_noiseless")
    data["hardware"]["connection"]["delay_ns"] = 10.0
    with pytest.raises(ConfigError, match="exactly one"):
        build_scenario(data)
    data = load_config("listing3_noiseless")
    data["software"]["circuit"] = "H 2@node_0"
    with pytest.raises(ConfigError, match="exactly one"):
        build_scenario(data)
