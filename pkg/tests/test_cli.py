import csv
import json
import math
import os
import shutil
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from topomem.cli import DEFAULTS, load_config, main

GOLDEN = Path(__file__).parent / "golden"
REGENERATE = os.environ.get("TOPOMEM_REGEN_GOLDEN") == "1"

SMALL = {
    "phase_diagram": {"gamma_z_min": -3.0, "gamma_z_max": 3.0, "n_gamma_z": 3, "t_so_min": 0.5, "t_so_max": 1.5,
                      "n_t_so": 3, "n_k": 512},
    "edge_modes": {"sizes": [8, 12, 16]},
    "domain": {"n_sites": 40, "x1": 14, "x2": 26},
    "memory_verify": {"n_max": 2, "n_qnd_max": 2, "trials": 5},
    "transfer": {"g": 1.0, "n_samples": 600, "check_convergence": False},
    "mismatch": {"fractions": [-0.1, 0.1]},
    "large_r": {"k_orders": [1, 2]},
    "hopping": {"v0": [5.0, 10.0]},
}


def write_config(tmp_path, data, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
    return path


def run(tmp_path, command, *extra, config=SMALL, out="out"):
    cfg = write_config(tmp_path, config)
    target = tmp_path / out
    code = main([command, "--config", str(cfg), "--out", str(target), *extra])
    return code, target


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def assert_cells_close(got, want):
    for a, b in zip(got, want):
        try:
            fa, fb = float(a), float(b)
        except ValueError:
            assert a == b
            continue
        assert math.isclose(fa, fb, rel_tol=1e-9, abs_tol=1e-14) or (math.isnan(fa) and math.isnan(fb))


def assert_json_close(got, want):
    if isinstance(want, dict):
        assert sorted(got) == sorted(want)
        for key in want:
            assert_json_close(got[key], want[key])
    elif isinstance(want, list):
        assert len(got) == len(want)
        for a, b in zip(got, want):
            assert_json_close(a, b)
    elif isinstance(want, float):
        assert math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-14)
    else:
        assert got == want


def check_golden(produced: Path, name: str):
    golden = GOLDEN / name
    if REGENERATE:
        GOLDEN.mkdir(exist_ok=True)
        shutil.copyfile(produced, golden)
    if name.endswith(".csv"):
        got, want = read_rows(produced), read_rows(golden)
        assert got[0] == want[0]
        assert len(got) == len(want)
        for a, b in zip(got[1:], want[1:]):
            assert_cells_close(a, b)
    else:
        assert_json_close(json.loads(produced.read_text()), json.loads(golden.read_text()))


class TestGolden:
    @pytest.mark.parametrize(
        "command, files",
        [
            ("phase-diagram", ["phase_diagram.csv"]),
            ("edge-modes", ["edge_modes.csv", "edge_modes.json"]),
            ("domain", ["domain.json"]),
            ("budget", ["budget.json"]),
            ("hopping", ["hopping.csv"]),
        ],
    )
    def test_matches_golden(self, tmp_path, command, files):
        code, out = run(tmp_path, command)
        assert code == 0
        for name in files:
            check_golden(out / name, name)


class TestCommands:
    def test_phase_diagram_grid(self, tmp_path):
        _, out = run(tmp_path, "phase-diagram")
        rows = read_rows(out / "phase_diagram.csv")
        assert rows[0] == ["gamma_z", "t_so", "winding", "gap", "status"]
        assert len(rows) == 1 + 9
        for gz, _, w, _, status in rows[1:]:
            assert status == "ok"
            assert int(w) == (1 if abs(float(gz)) < 2 else 0)

    def test_edge_modes_fit(self, tmp_path):
        _, out = run(tmp_path, "edge-modes")
        fit = json.loads((out / "edge_modes.json").read_text())
        assert fit["monotone_decreasing"]
        assert fit["r_squared"] > 0.99

    def test_edge_modes_trivial_rows(self, tmp_path):
        config = {"edge_modes": {"gamma_z": 3.0, "sizes": [8]}}
        code, out = run(tmp_path, "edge-modes", config=config)
        assert code == 0
        assert read_rows(out / "edge_modes.csv")[1][-1] == "NotTopological"

    def test_memory_verify_passes(self, tmp_path):
        code, out = run(tmp_path, "memory-verify")
        assert code == 0
        assert json.loads((out / "memory_verify.json").read_text())["all_passed"]

    def test_memory_verify_corrupted_phase_fails(self, tmp_path):
        config = {"memory_verify": {**SMALL["memory_verify"], "phase_offset": 0.3}}
        code, _ = run(tmp_path, "memory-verify", config=config)
        assert code == 1

    def test_transfer_lossless(self, tmp_path):
        config = {"transfer": {**SMALL["transfer"], "kappa_a": 0.0, "kappa_b": 0.0, "kappa_d": 0.0,
                               "gamma_a": 0.0, "gamma_s": 0.0}}
        code, out = run(tmp_path, "transfer", config=config)
        assert code == 0
        summary = json.loads((out / "transfer.json").read_text())
        assert summary["peak"] == pytest.approx(1, abs=1e-9)
        assert len(read_rows(out / "transfer.csv")) == 1 + 601

    def test_mismatch_rows(self, tmp_path):
        _, out = run(tmp_path, "mismatch")
        rows = read_rows(out / "mismatch.csv")
        assert [r[0] for r in rows[1:]] == ["-0.10000000000000001", "0.10000000000000001"]

    def test_large_r_rows(self, tmp_path):
        _, out = run(tmp_path, "large-r")
        rows = read_rows(out / "large_r.csv")
        assert [int(r[0]) for r in rows[1:]] == [1, 2]

    def test_budget_reports_discrepancy(self, tmp_path):
        _, out = run(tmp_path, "budget")
        report = json.loads((out / "budget.json").read_text())
        assert any("DISCREPANCY" in n for n in report["notes"])
        assert "DISCREPANCY" in (out / "budget_audit.txt").read_text()
        assert report["f1"] == pytest.approx(0.9025)

    def test_linear_frequency_flag(self, tmp_path):
        _, out = run(tmp_path, "transfer", "--linear-frequency", "--samples", "600")
        manifest = yaml.safe_load((out / "manifest.yaml").read_text())
        assert manifest["frequency_convention"] == "linear"
        assert json.loads((out / "transfer.json").read_text())["convention"] == "linear"


class TestReproducibility:
    @pytest.mark.parametrize("command", ["phase-diagram", "memory-verify", "budget", "transfer"])
    def test_reruns_are_byte_identical(self, tmp_path, command):
        _, a = run(tmp_path, command, "--seed", "11", out="a")
        _, b = run(tmp_path, command, "--seed", "11", out="b")
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_manifest_roundtrip(self, tmp_path):
        _, a = run(tmp_path, "memory-verify", "--seed", "5", out="a")
        code = main(["memory-verify", "--config", str(a / "manifest.yaml"), "--out", str(tmp_path / "b")])
        assert code == 0
        for name in ("memory_verify.json", "manifest.yaml"):
            assert (a / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_contents(self, tmp_path):
        _, out = run(tmp_path, "budget")
        manifest = yaml.safe_load((out / "manifest.yaml").read_text())
        assert manifest["run"]["subcommand"] == "budget"
        assert manifest["run"]["outputs"] == ["budget.json", "budget_audit.txt"]
        assert set(manifest) == {"seed", "frequency_convention", "budget", "run"}

    def test_seed_changes_random_trials(self, tmp_path):
        _, a = run(tmp_path, "memory-verify", "--seed", "1", out="a")
        _, b = run(tmp_path, "memory-verify", "--seed", "2", out="b")
        assert (a / "memory_verify.json").read_bytes() != (b / "memory_verify.json").read_bytes()

    def test_out_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TOPOMEM_OUT", str(tmp_path / "env_out"))
        assert main(["hopping", "--config", str(write_config(tmp_path, SMALL))]) == 0
        assert (tmp_path / "env_out" / "hopping.csv").exists()


class TestConfigErrors:
    def test_unknown_field_names_line(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("seed: 1\ntransfer:\n  g: 2.0\n  bogus: 3\n", encoding="utf-8")
        assert main(["transfer", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
        err = capsys.readouterr().err
        assert f"{path}:4" in err and "transfer.bogus" in err

    def test_yaml_syntax_error_has_position(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("seed: 1\nbudget: [\n", encoding="utf-8")
        with pytest.raises(Exception, match=r"broken\.yaml:\d+:\d+"):
            load_config(path)

    def test_wrong_type(self, tmp_path, capsys):
        code, _ = run(tmp_path, "budget", config={"budget": {"g": "strong"}})
        assert code == 2
        assert "budget.g" in capsys.readouterr().err

    def test_invalid_value_exit_code(self, tmp_path):
        code, _ = run(tmp_path, "budget", config={"budget": {"kappa": -1.0}})
        assert code == 2

    def test_domain_too_weak_exit_code(self, tmp_path, capsys):
        code, _ = run(tmp_path, "domain", config={"domain": {**SMALL["domain"], "gamma_0": 0.1}})
        assert code == 2
        assert "DomainTooWeak" in capsys.readouterr().err

    def test_defaults_untouched(self):
        before = json.dumps(DEFAULTS, sort_keys=True)
        load_config(None)
        assert json.dumps(DEFAULTS, sort_keys=True) == before


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    proc = subprocess.run([sys.executable, "-m", "topomem", "hopping", "--config", str(cfg), "--out",
                           str(tmp_path / "o")], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "hopping.csv" in proc.stdout
