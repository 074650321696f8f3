"""The command-line client: exit codes, output formats, determinism."""

import json

from bilcheck.cli import main
from conftest import FIXTURES


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_parse_text_output(capsys):
    code, out, _ = _run(capsys, "parse", FIXTURES / "example_move.bil.adt")
    assert code == 0
    assert "instructions: 1" in out
    assert "test=0x105dc" in out


def test_parse_stdin(capsys, monkeypatch):
    import io
    monkeypatch.setattr("sys.stdin",
                        io.StringIO((FIXTURES / "example_move.bil.adt").read_text()))
    code, out, _ = _run(capsys, "parse", "-")
    assert code == 0 and "instructions: 1" in out


def test_parse_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.bil.adt"
    bad.write_text("100: 8082\tx\n(Nonsense(1))\n")
    code, _, err = _run(capsys, "parse", bad)
    assert code == 2
    assert "Nonsense" in err


def test_missing_file_exit_code(capsys):
    code, _, err = _run(capsys, "parse", "no_such_file.adt")
    assert code == 2


def test_typecheck_fixture(capsys):
    code, out, _ = _run(capsys, "typecheck", FIXTURES / "double_free_bad.bil.adt")
    assert code == 0
    assert "all ok" in out


def test_run_example(capsys):
    code, out, _ = _run(
        capsys, "run", FIXTURES / "example_move.bil.adt", "--entry", "test")
    assert code == 0
    assert "outcome: terminated" in out
    assert "steps: 1" in out


def test_run_budget(capsys):
    code, out, _ = _run(
        capsys, "run", FIXTURES / "double_free_bad.bil.adt", "--entry", "main",
        "--stub-config", FIXTURES / "double_free.stubs", "--max-steps", "1")
    assert code == 1
    assert "budget_exceeded" in out


def test_run_unknown_entry(capsys):
    code, _, err = _run(
        capsys, "run", FIXTURES / "example_move.bil.adt", "--entry", "nosuch")
    assert code == 2
    assert "entry symbol" in err


def test_check_bad_double_free_incorrect(capsys):
    code, out, _ = _run(
        capsys, "check", FIXTURES / "double_free_bad.bil.adt",
        "--property", "double-free", "--mode", "incorrect",
        "--stub-config", FIXTURES / "double_free.stubs", "--pre-states", "5")
    assert code == 1  # witness found
    assert "verdict: WITNESS" in out


def test_check_good_double_free_correct(capsys):
    code, out, _ = _run(
        capsys, "check", FIXTURES / "double_free_good.bil.adt",
        "--property", "double-free", "--mode", "correct",
        "--stub-config", FIXTURES / "double_free.stubs",
        "--pre-states", "20", "--reg", "X10=0..1")
    assert code == 0
    assert "verdict: HOLDS" in out


def test_check_av_rule(capsys):
    code, out, _ = _run(
        capsys, "check", FIXTURES / "av_rule_23.bil.adt",
        "--property", "av-rule=23", "--mode", "incorrect",
        "--stub-config", FIXTURES / "av.stubs", "--pre-states", "3")
    assert code == 1
    assert "verdict: WITNESS" in out
    assert "forbidden symbols reached: atoi" in out


def test_runtime_parameter_ranges(capsys):
    code, out, _ = _run(
        capsys, "run", FIXTURES / "example_move.bil.adt", "--entry", "test",
        "--range", "stack=0x4000..0x4100", "--range", "ret=0x900000..0x900100",
        "--format", "json")
    assert code == 0
    params = json.loads(out)["report"]["pre_state"]["params"]
    assert 0x4000 <= params["stack"] <= 0x4100
    assert 0x900000 <= params["ret"] <= 0x900100


def test_bad_range_flag(capsys):
    code, _, err = _run(
        capsys, "run", FIXTURES / "example_move.bil.adt", "--entry", "test",
        "--range", "heap=1..2")
    assert code == 2
    assert "unknown runtime parameter" in err


def test_check_json_deterministic(capsys):
    argv = ["check", str(FIXTURES / "double_free_bad.bil.adt"),
            "--property", "double-free", "--mode", "incorrect",
            "--stub-config", str(FIXTURES / "double_free.stubs"),
            "--pre-states", "5", "--seed", "11", "--format", "json"]
    code1, out1, _ = _run(capsys, *argv)
    code2, out2, _ = _run(capsys, *argv)
    assert code1 == code2 == 1
    assert out1 == out2  # byte-identical for a fixed seed
    data = json.loads(out1)
    assert data["report"]["schema"] == 1
    assert data["report"]["seed"] == 11


def test_check_symbol_set_override(capsys, tmp_path):
    override = tmp_path / "set.txt"
    override.write_text("printf\n")
    code, out, _ = _run(
        capsys, "check", FIXTURES / "av_clean.bil.adt",
        "--property", "av-rule=23", "--mode", "incorrect",
        "--stub-config", FIXTURES / "av.stubs", "--pre-states", "3",
        "--symbol-set", override)
    assert code == 1  # printf is now forbidden and the clean fixture calls it
    assert "verdict: WITNESS" in out


def test_stub_config_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("BILCHECK_STUB_CONFIG",
                       str(FIXTURES / "double_free.stubs"))
    code, out, _ = _run(
        capsys, "check", FIXTURES / "double_free_bad.bil.adt",
        "--property", "double-free", "--mode", "incorrect", "--pre-states", "5")
    assert code == 1 and "WITNESS" in out


def test_slice_reports_counts(capsys):
    code, out, _ = _run(
        capsys, "slice", FIXTURES / "slice_plt.bil.adt", "--subroutines", "f")
    assert code == 0
    assert "instructions: 10 -> 8" in out


def test_server_mode_routes_over_http(capsys, monkeypatch):
    # exercise the remote-client path by routing httpx.post at the app
    import httpx
    from fastapi.testclient import TestClient

    from bilcheck.service import app

    test_client = TestClient(app)

    def fake_post(url, json=None, timeout=None):
        path = url.replace("http://svc", "")
        return test_client.post(path, json=json)

    monkeypatch.setattr(httpx, "post", fake_post)
    code, out, _ = _run(
        capsys, "parse", FIXTURES / "example_move.bil.adt",
        "--server", "http://svc")
    assert code == 0 and "instructions: 1" in out

    bad = FIXTURES / "example_move.bil.adt"
    code, out, err = _run(capsys, "run", bad, "--entry", "nosuch",
                          "--server", "http://svc")
    assert code == 2 and "entry symbol" in err


def test_fast_paths_flag_matches_default(capsys):
    base = ["check", str(FIXTURES / "double_free_bad.bil.adt"),
            "--property", "double-free", "--mode", "incorrect",
            "--stub-config", str(FIXTURES / "double_free.stubs"),
            "--pre-states", "5", "--format", "json"]
    _, plain, _ = _run(capsys, *base)
    _, fast, _ = _run(capsys, *base, "--fast-paths")
    plain_data = json.loads(plain)
    fast_data = json.loads(fast)
    run_plain = plain_data["report"]["witness"]["run"]
    run_fast = fast_data["report"]["witness"]["run"]
    assert run_plain["observer"] == run_fast["observer"]
    assert run_plain["final_pc"] == run_fast["final_pc"]
    assert run_plain["steps"] == run_fast["steps"]
    assert run_plain["pc_trace"] == run_fast["pc_trace"]
