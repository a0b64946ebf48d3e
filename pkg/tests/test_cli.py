import json
import os

import pytest

import main
from tests.conftest import CHALLENGE_RESPONSE, MODELS_DIR


def run(tmp_path, *argv):
    return main.main(["--log-file", str(tmp_path / "test.log"), "--no-progress", *argv])


@pytest.fixture
def cr_file(tmp_path):
    path = tmp_path / "cr.lisp"
    path.write_text(CHALLENGE_RESPONSE)
    return str(path)


def test_analyze_writes_one_dot_per_shape(tmp_path, cr_file, capsys):
    out = tmp_path / "out"
    assert run(tmp_path, "analyze", cr_file, "--out-dir", str(out)) == main.EXIT_OK
    assert sorted(os.listdir(out)) == ["cr-init-pov-shape-1.dot"]
    assert "1 shape(s), complete" in capsys.readouterr().out


def test_analyze_json_writes_report(tmp_path, cr_file):
    out = tmp_path / "out"
    assert run(tmp_path, "analyze", cr_file, "--format", "json", "--out-dir", str(out)) == main.EXIT_OK
    report = json.loads((out / "cr-init-pov-report.json").read_text())
    assert report["schema"] == 1
    assert report["shape_count"] == 1


def test_analyze_exhausted_bounds_exit_2(tmp_path, cr_file):
    code = run(tmp_path, "analyze", cr_file, "--max-strands", "1", "--out-dir", str(tmp_path / "out"))
    assert code == main.EXIT_EXHAUSTED


def test_analyze_unknown_pov_exit_1(tmp_path, cr_file):
    assert run(tmp_path, "analyze", cr_file, "--pov", "nobody-pov") == main.EXIT_ERROR


def test_analyze_syntax_error_exit_1(tmp_path):
    bad = tmp_path / "bad.lisp"
    bad.write_text("(defprotocol p diffie-hellman")
    assert run(tmp_path, "analyze", str(bad)) == main.EXIT_ERROR


def test_analyze_invalid_utf8_exit_1(tmp_path):
    bad = tmp_path / "bad.lisp"
    bad.write_bytes(b"\xff\xfe(defprotocol p diffie-hellman)")
    assert run(tmp_path, "analyze", str(bad)) == main.EXIT_ERROR
    assert run(tmp_path, "validate", str(bad)) == main.EXIT_ERROR


def test_analyze_output_is_byte_identical(tmp_path, cr_file):
    first, second = tmp_path / "a", tmp_path / "b"
    run(tmp_path, "analyze", cr_file, "--out-dir", str(first))
    run(tmp_path, "analyze", cr_file, "--out-dir", str(second))
    name = "cr-init-pov-shape-1.dot"
    assert (first / name).read_bytes() == (second / name).read_bytes()


def test_validate_corpus_file(tmp_path, capsys):
    assert run(tmp_path, "validate", os.path.join(MODELS_DIR, "srp3.lisp")) == main.EXIT_OK
    assert "client-pov, server-pov" in capsys.readouterr().out


def test_validate_reports_diagnostics(tmp_path, capsys):
    bad = tmp_path / "bad.lisp"
    bad.write_text("(defprotocol p diffie-hellman (defrole r (vars (a name)) (trace (send zz))))")
    assert run(tmp_path, "validate", str(bad)) == main.EXIT_ERROR
    assert "UndeclaredVariable" in capsys.readouterr().out


def test_demo_handshake_toy(tmp_path, capsys):
    assert run(tmp_path, "demo", "handshake", "--profile", "toy") == main.EXIT_OK
    out = capsys.readouterr().out
    assert "keys equal: yes" in out
    assert "verdict: accept" in out


def test_demo_handshake_tampered(tmp_path, capsys):
    assert run(tmp_path, "demo", "handshake", "--profile", "test", "--tamper", "B") == main.EXIT_ERROR
    out = capsys.readouterr().out
    assert "verdict: reject" in out


def test_demo_malserver_toy(tmp_path, capsys):
    assert run(tmp_path, "demo", "malserver", "--profile", "toy") == main.EXIT_OK
    out = capsys.readouterr().out
    assert "client absent" in out
    assert "client-absent yes" in out
    assert "verdict: accept" in out


def test_demo_is_reproducible(tmp_path, capsys):
    run(tmp_path, "demo", "handshake", "--seed", "7")
    first = capsys.readouterr().out
    run(tmp_path, "demo", "handshake", "--seed", "7")
    assert capsys.readouterr().out == first


def test_check_mapping(tmp_path):
    assert run(tmp_path, "check-mapping") == main.EXIT_OK


def test_regress_subset(tmp_path, capsys):
    report = tmp_path / "report.json"
    assert run(tmp_path, "regress", "--only", "1", "--report", str(report)) == main.EXIT_OK
    assert "1 out of 1 entries pass" in capsys.readouterr().out
    assert json.loads(report.read_text())["passed"] == ["1"]


@pytest.mark.slow
def test_analyze_client_pov_writes_two_dot_files(tmp_path):
    out = tmp_path / "out"
    code = run(tmp_path, "analyze", os.path.join(MODELS_DIR, "srp3.lisp"), "--pov", "client-pov",
               "--format", "dot", "--out-dir", str(out))
    assert code == main.EXIT_OK
    assert len(os.listdir(out)) == 2


@pytest.mark.slow
def test_analyze_listener_is_empty_and_complete(tmp_path, capsys):
    code = run(tmp_path, "analyze", os.path.join(MODELS_DIR, "srp3-listener-v.lisp"),
               "--out-dir", str(tmp_path / "out"))
    assert code == main.EXIT_OK
    assert "0 shape(s), complete" in capsys.readouterr().out


@pytest.mark.slow
def test_analyze_client_pov_with_one_strand_is_exhausted(tmp_path):
    code = run(tmp_path, "analyze", os.path.join(MODELS_DIR, "srp3.lisp"), "--pov", "client-pov",
               "--max-strands", "1", "--out-dir", str(tmp_path / "out"))
    assert code == main.EXIT_EXHAUSTED


@pytest.mark.slow
def test_regress_all(tmp_path):
    assert run(tmp_path, "regress", "--workers", "2") == main.EXIT_OK
