import csv
import json
import subprocess
import sys

import pytest

from equikin.cli import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, EXIT_VERIFY, main
from equikin.io import load_bundle, save_bundle


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory, trot_bundle):
    d = tmp_path_factory.mktemp("bundle") / "trot"
    save_bundle(trot_bundle, d)
    return d


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file()}


@pytest.fixture(scope="module")
def analyzed(tmp_path_factory, bundle_dir):
    out = tmp_path_factory.mktemp("run") / "out"
    code = main(["analyze", "--bundle", str(bundle_dir), "--out", str(out)])
    return code, out


def test_analyze_writes_energy_tables(analyzed):
    code, out = analyzed
    assert code == EXIT_OK
    with open(out / "energy_combined.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["joint"] for r in rows] == ["elbow", "carpus", "fetlock", "coffin", "total"]
    assert {"stance_generated_J_per_kg", "swing_absorbed_J_per_kg", "stance_net_J_per_kg"} <= set(rows[0])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["cutoff_kin"] == 10.0 and manifest["trials"][0]["bundle"]
    assert (out / "plots" / "grf.svg").exists()


def test_analyze_rerun_is_byte_identical(analyzed, bundle_dir):
    _, out = analyzed
    before = _tree(out)
    assert main(["analyze", "--bundle", str(bundle_dir), "--out", str(out)]) == EXIT_OK
    assert _tree(out) == before


def test_analyze_from_manifest(tmp_path, bundle_dir):
    manifest = tmp_path / "run.yaml"
    manifest.write_text(f"trials:\n  - id: t1\n    bundle: {bundle_dir}\nout: {tmp_path / 'o'}\n"
                        "plots: false\n")
    assert main(["analyze", "--manifest", str(manifest), "--cutoff-kin", "8"]) == EXIT_OK
    saved = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert saved["cutoff_kin"] == 8.0 and saved["plots"] is False


def test_missing_grf_file_exits_with_input_error(tmp_path, bundle_dir, capsys):
    out = tmp_path / "out"
    code = main(["analyze", "--trial", str(bundle_dir / "markers.csv"), str(tmp_path / "nope.csv"),
                 "--out", str(out)])
    assert code == EXIT_INPUT
    assert [p.name for p in out.iterdir()] == ["error.json"]
    record = json.loads((out / "error.json").read_text())
    assert record["error"] == "ParseError" and record["exit_code"] == EXIT_INPUT
    assert "nope.csv" in json.loads(capsys.readouterr().err)["message"]


def test_analyze_without_trials_is_an_input_error(tmp_path):
    assert main(["analyze", "--out", str(tmp_path / "o")]) == EXIT_INPUT


def test_synth_is_deterministic_and_parses_back(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "synth_trot", "--out", str(a)]) == EXIT_OK
    assert main(["synth", "synth_trot", "--out", str(b)]) == EXIT_OK
    assert _tree(a) == _tree(b)
    bundle = load_bundle(a)
    assert bundle.trial_id == "synth_trot" and bundle.metadata["seed"] == 0


def test_synth_seed_changes_noisy_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["synth", "prescribed_3d", "--noise", "0.001", "--seed", "1", "--out", str(a)])
    main(["synth", "prescribed_3d", "--noise", "0.001", "--seed", "2", "--out", str(b)])
    assert (a / "markers.csv").read_bytes() != (b / "markers.csv").read_bytes()


def test_synth_divergence_exits_numerical(tmp_path, capsys):
    code = main(["synth", "double_pendulum", "--dt", "0.25", "--rate", "4",
                 "--out", str(tmp_path / "x")])
    assert code == EXIT_NUMERICAL
    assert json.loads(capsys.readouterr().err)["error"] == "IntegrationDivergenceError"
    assert not (tmp_path / "x").exists()


def test_synth_unknown_scenario(tmp_path):
    assert main(["synth", "no_such_scenario", "--out", str(tmp_path / "x")]) == EXIT_INPUT


def test_verify_selected_checks_pass(capsys):
    assert main(["verify", "--only", "convention.*", "--only", "statics"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS  convention.sign_table" in out and "3/3 checks passed" in out


def test_verify_detects_injected_sign_flip(tmp_path, capsys):
    report = tmp_path / "verify.json"
    code = main(["verify", "--only", "convention.sign_table", "--inject-fault", "sign-flip",
                 "--report", str(report)])
    assert code == EXIT_VERIFY
    assert "FAIL" in capsys.readouterr().out
    assert json.loads(report.read_text())[0]["passed"] is False


def test_verify_with_no_matching_checks_warns():
    with pytest.warns(UserWarning, match="no checks match"):
        assert main(["verify", "--only", "nothing_here"]) == EXIT_OK


def test_verify_list(capsys):
    assert main(["verify", "--list", "--only", "work_energy"]) == EXIT_OK
    names = capsys.readouterr().out.split()
    assert len(names) == 5 and all(n.startswith("work_energy.") for n in names)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "equikin.cli", "--version"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.startswith("equikin ")
