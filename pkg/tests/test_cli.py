"""Command-line runner: config parsing, artifacts, determinism, exit codes."""

import json
import os

import pytest

from ymflow import cli


def run_cli(args):
    return cli.main(args)


def read_manifest(out_dir):
    with open(os.path.join(out_dir, "manifest.json")) as fh:
        return json.load(fh)


# -- config parsing -------------------------------------------------------------

def test_parse_config_text():
    cfg = cli.parse_config_text(
        "L = 8        # comment\n"
        "\n"
        "dt = 0.03125\n"
        "initial = flat\n"
        'center = [4, 4, 4, 4]\n'
    )
    assert cfg == {
        "L": 8, "dt": 0.03125, "initial": "flat", "center": [4, 4, 4, 4]
    }
    with pytest.raises(cli.ConfigError):
        cli.parse_config_text("no equals sign here")
    with pytest.raises(cli.ConfigError):
        cli.parse_config_text("= 3")


def test_config_hash_is_order_independent():
    assert cli.config_hash({"a": 1, "b": 2}) == cli.config_hash({"b": 2, "a": 1})
    assert cli.config_hash({"a": 1}) != cli.config_hash({"a": 2})


# -- exit codes -----------------------------------------------------------------

def test_missing_required_keys_exit_2(tmp_path, capsys):
    code = run_cli(["flow-run", "--out", str(tmp_path), "--set", "L=8"])
    assert code == 2
    assert "config error" in capsys.readouterr().err
    assert read_manifest(tmp_path)["status"] == "failed"


def test_unknown_report_exit_2(tmp_path):
    ckpt = tmp_path / "run"
    ckpt.mkdir()
    assert run_cli([
        "flow-run", "--out", str(ckpt),
        "--set", "L=4", "--set", "a=1.0", "--set", "dt=0.03125",
        "--set", "t_end=0.0625", "--set", "initial=flat",
    ]) == 0
    out = tmp_path / "diag"
    out.mkdir()
    code = run_cli([
        "diagnose", "--out", str(out),
        "--set", f'checkpoints="{ckpt}"', "--set", "reports=telepathy",
    ])
    assert code == 2


def test_unknown_lemma_exit_2(tmp_path):
    assert run_cli([
        "radial-verify", "--out", str(tmp_path), "--lemma", "u2",
    ]) == 2


def test_bad_config_file_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("broken line without equals")
    code = run_cli(["flow-run", "--config", str(path), "--out", str(tmp_path)])
    assert code == 2


# -- flow-run --------------------------------------------------------------------

FLOW_ARGS = [
    "--set", "L=4", "--set", "a=1.0", "--set", "dt=0.03125",
    "--set", "t_end=0.125", "--set", "initial=random-smooth",
    "--set", "amplitude=0.05", "--set", "sample_stride=2",
]


def test_flow_run_flat_writes_zero_energy_csv(tmp_path):
    code = run_cli([
        "flow-run", "--out", str(tmp_path),
        "--set", "L=4", "--set", "a=1.0", "--set", "dt=0.03125",
        "--set", "t_end=0.0625", "--set", "initial=flat",
    ])
    assert code == 0
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,energy,dissipation_cum"
    assert all(float(l.split(",")[1]) == 0.0 for l in lines[1:])
    man = read_manifest(tmp_path)
    assert man["status"] == "ok"
    for name in man["files"]:
        assert (tmp_path / name).exists()
    assert any(name.endswith(".ymf") for name in man["files"])


def test_flow_run_requires_seed_for_random(tmp_path):
    code = run_cli(["flow-run", "--out", str(tmp_path)] + FLOW_ARGS)
    assert code == 2


def test_flow_run_reruns_byte_identical(tmp_path):
    outs = []
    for sub in ("one", "two"):
        out = tmp_path / sub
        out.mkdir()
        assert run_cli(
            ["flow-run", "--out", str(out), "--seed", "5"] + FLOW_ARGS
        ) == 0
        outs.append(out)
    a, b = outs
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    ckpts = sorted(p.name for p in a.glob("*.ymf"))
    assert ckpts
    for name in ckpts:
        assert (a / name).read_bytes() == (b / name).read_bytes()


# -- diagnose ---------------------------------------------------------------------

def test_diagnose_end_to_end(tmp_path):
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    assert run_cli([
        "flow-run", "--out", str(run_dir),
        "--set", "L=8", "--set", "a=1.0", "--set", "dt=0.03125",
        "--set", "t_end=0.5", "--set", "initial=localized-bump",
        "--set", "scale=2.0", "--set", "amplitude=0.15",
        "--set", "sample_stride=2",
    ]) == 0
    out = tmp_path / "diag"
    out.mkdir()
    code = run_cli([
        "diagnose", "--out", str(out),
        "--set", f'checkpoints="{run_dir}"',
        "--set", 'reports="curvature-scale,antibubble"',
        "--set", "R=2.0", "--set", "tau=0.5", "--set", "t=0.25",
    ])
    assert code == 0
    man = read_manifest(out)
    assert set(man["files"]) == {"curvature-scale.json", "antibubble.json"}
    rep = json.loads((out / "antibubble.json").read_text())
    assert rep["margins"]["passed"]


def test_diagnose_missing_keys_exit_2(tmp_path):
    assert run_cli(["diagnose", "--out", str(tmp_path)]) == 2


def test_diagnose_empty_checkpoint_dir_exit_2(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run_cli([
        "diagnose", "--out", str(tmp_path),
        "--set", f'checkpoints="{empty}"', "--set", "reports=antibubble",
    ]) == 2


# -- radial-verify -----------------------------------------------------------------

def test_radial_verify_prop_exit_0(tmp_path):
    code = run_cli([
        "radial-verify", "--out", str(tmp_path), "--lemma", "prop",
        "--set", "prop=A.5-inner",
    ])
    assert code == 0
    rep = json.loads((tmp_path / "bound_report.json").read_text())
    assert rep["fit"]["exponent"] is not None


def test_radial_verify_holder_writes_report(tmp_path):
    code = run_cli([
        "radial-verify", "--out", str(tmp_path), "--lemma", "holder",
        "--set", "n_samples=10", "--seed", "1",
    ])
    assert code == 0
    rep = json.loads((tmp_path / "bound_report.json").read_text())
    assert rep["name"] == "holder-sweep"
    assert rep["terms"]["n_samples"] == 10


# -- convergence -------------------------------------------------------------------

def test_convergence_fd_manufactured(tmp_path):
    code = run_cli([
        "convergence", "--out", str(tmp_path),
        "--set", "study=fd-manufactured", "--set", 'sizes="64,128"',
        "--set", "T=0.1", "--set", "min_order=1.5",
    ])
    assert code == 0
    result = json.loads((tmp_path / "convergence.json").read_text())
    assert result["orders"][0] > 1.5
    assert read_manifest(tmp_path)["status"] == "ok"


def test_convergence_unknown_study_exit_2(tmp_path):
    assert run_cli([
        "convergence", "--out", str(tmp_path), "--set", "study=astrology",
    ]) == 2
