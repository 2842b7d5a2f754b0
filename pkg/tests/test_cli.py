import json
import subprocess
import sys
from pathlib import Path

import pytest

from anigraph.cli import main, parse_config, schema_text
from anigraph.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run_cli(tmp_path, text, *extra, name="c.yaml"):
    cfg = tmp_path / name
    cfg.write_text(text)
    out = tmp_path / "out"
    code = main(["--config", str(cfg), "--out", str(out), "--quiet", *extra])
    return code, out


def report(out):
    return json.loads((out / "report.json").read_text())


# -- config validation --------------------------------------------------------

def test_defaults_filled():
    cfg = parse_config("command: barrier-check\n")
    assert cfg["seed"] == 0
    assert cfg["contact"]["C2"] == 0.1
    assert cfg["rigidity"]["radii"] == [4.0, 8.0, 16.0]
    assert cfg["integrand"]["family"] == "isotropic"


@pytest.mark.parametrize("text, line, fragment", [
    ("command: solve\nsolve:\n  domain: {kind: disk}\n  tolerence: 1e-3\n", 4, "unknown key 'solve.tolerence'"),
    ("command: solve\nresolution: 9\n", 2, "below the minimum 17"),
    ("command: solve\nresolution: 33.5\n", 2, "expected an integer"),
    ("command: dance\n", 1, "not one of"),
    ("seed: 1\n", 1, "missing required key 'command'"),
    ("command: solve\nseed: 1\nseed: 2\n", 3, "duplicate key"),
    ("command: verify-wulff\nintegrand:\n  family: ellipsoidal\n", 2, "matrix is required"),
    ("command: contact\ncontact:\n  band: [1, 2, 3]\n", 3, "expected 2 numbers"),
    ("command: solve\nsolve:\n  data: {kind: grid, path: /nonexistent.wgrf}\n", 3, "does not exist"),
    ("command: solve\n  bad: [\n", 2, "YAML syntax error"),
])
def test_config_errors_are_line_anchored(text, line, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line
    assert fragment in str(exc.value)
    assert str(exc.value).startswith(f"line {line}:")


def test_empty_config():
    with pytest.raises(ConfigError, match="empty"):
        parse_config("")


def test_schema_listing(capsys):
    assert main(["--print-schema"]) == 0
    text = capsys.readouterr().out
    assert text.strip() == schema_text().strip()
    assert "command: str" in text and "tolerances:" in text


def test_exit_code_2_on_bad_config(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "command: solve\nsolve:\n  domain: {kind: disk}\n  tolerence: 1e-3\n")
    assert code == 2
    assert "line 4: unknown key 'solve.tolerence'" in capsys.readouterr().err


def test_exit_code_2_on_cli_misuse(tmp_path):
    assert main([]) == 2
    assert main(["--config", str(tmp_path / "missing.yaml")]) == 2
    (tmp_path / "c.yaml").write_text("command: barrier-check\n")
    assert main(["--config", str(tmp_path / "c.yaml"), "--threads", "0"]) == 2


# -- pipelines ----------------------------------------------------------------

@pytest.mark.parametrize("name, artifacts", [
    ("verify_wulff", {"report.json", "manifest.json"}),
    ("solve", {"solution.csv", "solution.wgrf"}),
    ("barrier", {"barrier_sweep.csv", "barrier_sweep.gp"}),
    ("contact", {"contacts.csv", "contact_summary.json"}),
    ("rigidity", {"decay.csv", "decay.gp", "excision.csv"}),
])
def test_shipped_configs_pass(tmp_path, name, artifacts):
    out = tmp_path / "out"
    code = main(["--config", str(CONFIGS / f"{name}.yaml"), "--out", str(out), "--quiet"])
    assert code == 0
    r = report(out)
    assert r["pass"] and r["failed"] == []
    assert artifacts <= {p.name for p in out.iterdir()}
    m = json.loads((out / "manifest.json").read_text())
    assert "wall_time_s" in m and "wall_time_s" not in r


def test_exit_code_1_on_failed_check(tmp_path):
    code, out = run_cli(tmp_path, "command: solve\nsolve:\n  data: {kind: scherk, scale: 0.9}\n"
                        "tolerances: {max_iter: 1, tol_res: 1.0e-30, tol_step: 1.0e-30}\n")
    assert code == 1
    r = report(out)
    assert not r["pass"] and "solver convergence" in r["failed"]


def test_determinism_byte_identical(tmp_path):
    text = "command: verify-wulff\nintegrand: {family: perturbed-isotropic}\n"
    a = tmp_path / "a"
    b = tmp_path / "b"
    (tmp_path / "c.yaml").write_text(text)
    for out in (a, b):
        assert main(["--config", str(tmp_path / "c.yaml"), "--out", str(out), "--seed", "7",
                     "--quiet"]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    c = tmp_path / "c"
    main(["--config", str(tmp_path / "c.yaml"), "--out", str(c), "--seed", "8", "--quiet"])
    assert (a / "report.json").read_bytes() != (c / "report.json").read_bytes()


def test_threads_flag_recorded(tmp_path):
    code, out = run_cli(tmp_path, "command: barrier-check\n", "--threads", "1")
    assert code == 0
    assert json.loads((out / "manifest.json").read_text())["threads"] == 1


def test_grid_data_round_trip(tmp_path):
    code, out = run_cli(tmp_path, "command: solve\nresolution: 17\n"
                        "solve:\n  data: {kind: affine, constant: 1.0, slope: [0.5, 0.0]}\n")
    assert code == 0
    grid = out / "solution.wgrf"
    text = f"command: solve\nsolve:\n  data: {{kind: grid, path: {grid}}}\n"
    cfg = tmp_path / "g.yaml"
    cfg.write_text(text)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "again"), "--quiet"]) == 0


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("command: barrier-check\n")
    proc = subprocess.run([sys.executable, "-m", "anigraph.cli", "--config", str(cfg),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "PASS  pucci sweep positive" in proc.stdout
