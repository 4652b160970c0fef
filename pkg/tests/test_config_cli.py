"""Config parsing, manifest, and command-line behavior.

CLI tests run main() in-process against small bond dimensions and short
schedules; the goal is contract coverage (artifact layout, exit codes,
determinism, manifests), not physics accuracy.
"""

import json
import os

import numpy as np
import pytest

from ghm1d import cli
from ghm1d.config import (
    RunConfig,
    build_manifest,
    parse_config,
    serialize_config,
    sha256_file,
    write_manifest,
)
from ghm1d.errors import ConfigError, DivergenceError

CRUDE = """\
[model]
U = -8
mu = -4

[engine]
chi = 6
schedule_dtau = 0.1,0.05
schedule_max_steps = 200
schedule_tol_scale = 1e-6

[observables]
m = 12
k_points = 64
"""


def data_rows(path):
    with open(path) as fh:
        return [ln for ln in fh.read().splitlines()
                if ln and not ln.startswith("#")]


class TestParseConfig:
    def test_empty_text_is_full_default(self):
        config = parse_config("")
        assert config == RunConfig()
        assert config.chi == 80
        assert config.m == 100
        assert config.model.U == -8.0
        assert config.model.t == 1.0
        assert config.model.mu == -4.0
        assert config.seed == 7
        assert config.k_points == 512
        assert config.out_dir is None
        stages = config.schedule()
        assert [s.dtau for s in stages] == [0.1, 0.05, 0.02, 0.01, 0.005, 0.001]
        assert stages[0].energy_tol == pytest.approx(1e-10)
        assert all(s.max_steps == 20000 for s in stages)

    def test_round_trip_identity(self):
        config = parse_config(CRUDE).replace(out_dir="runs/x")
        assert parse_config(serialize_config(config)) == config
        assert parse_config(serialize_config(RunConfig())) == RunConfig()

    def test_comments_blanks_and_inline_comments(self):
        config = parse_config("""
        # leading comment
        ; alt comment

        [engine]
        chi = 16   # inline comment
        """)
        assert config.chi == 16

    def test_schedule_list_tolerates_spaces(self):
        config = parse_config("[engine]\nschedule_dtau = 0.1, 0.05 ,0.02,\n")
        assert config.schedule_dtau == (0.1, 0.05, 0.02)

    def test_classifier_section(self):
        config = parse_config("[classifier]\np_min = 0.05\nk_min = 0.2\n")
        assert config.thresholds.p_min == 0.05
        assert config.thresholds.k_min == 0.2

    @pytest.mark.parametrize("text,fragment", [
        ("[engine]\nchi = 0\n", "chi"),
        ("[engine]\ncutoff = 1.5\n", "cutoff"),
        ("[engine]\nschedule_dtau = 0.1,0.2\n", "decrease"),
        ("[engine]\nschedule_dtau = \n", "schedule_dtau"),
        ("[engine]\nschedule_max_steps = 0\n", "schedule_max_steps"),
        ("[engine]\nschedule_tol_scale = 0\n", "schedule_tol_scale"),
        ("[observables]\nm = 1\n", "m"),
        ("[observables]\nk_points = 1\n", "k_points"),
        ("[model]\nt = -1\n", "model"),
        ("[model]\nU = nan\n", "invalid value"),
        ("[classifier]\nn_vacuum = 1.99\n", "classifier"),
    ])
    def test_semantic_rejections_name_the_key(self, text, fragment):
        with pytest.raises(ConfigError, match=fragment):
            parse_config(text)

    def test_unknown_section_names_line(self):
        with pytest.raises(ConfigError, match=r"line 2: unknown section"):
            parse_config("\n[solver]\n")

    def test_unknown_key_names_line_and_section(self):
        with pytest.raises(ConfigError,
                           match=r"line 2: unknown key 'bond_dim'"):
            parse_config("[engine]\nbond_dim = 4\n")

    def test_duplicate_key_reports_both_lines(self):
        with pytest.raises(ConfigError, match=r"line 3: duplicate key 'chi'.*"
                                              r"line 2"):
            parse_config("[engine]\nchi = 8\nchi = 16\n")

    def test_key_before_section(self):
        with pytest.raises(ConfigError, match="before any"):
            parse_config("chi = 8\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="expected 'key = value'"):
            parse_config("[engine]\nchi 8\n")

    def test_bad_int(self):
        with pytest.raises(ConfigError, match=r"line 2: key 'chi'"):
            parse_config("[engine]\nchi = eight\n")


class TestManifest:
    def test_checksums_and_layout(self, tmp_path):
        f1 = tmp_path / "a.csv"
        f1.write_text("k,S\n0,1\n")
        config = parse_config(CRUDE)
        manifest = build_manifest(config, "ghm1d itebd", {"a.csv": str(f1)},
                                  {"itebd": {"ok": True}}, {"total": 1.25})
        assert manifest["files"]["a.csv"] == sha256_file(str(f1))
        assert manifest["seed"] == config.seed
        assert parse_config(manifest["config"]) == config
        assert manifest["wall_times_s"] == {"total": 1.25}
        assert manifest["command"] == "ghm1d itebd"

    def test_write_manifest_is_deterministic(self, tmp_path):
        manifest = {"b": 1, "a": {"z": 2, "y": 3}}
        p1, p2 = tmp_path / "m1.json", tmp_path / "m2.json"
        write_manifest(p1, manifest)
        write_manifest(p2, manifest)
        assert p1.read_bytes() == p2.read_bytes()
        assert json.loads(p1.read_text()) == manifest


@pytest.fixture
def crude_config(tmp_path):
    path = tmp_path / "crude.ini"
    path.write_text(CRUDE)
    return str(path)


@pytest.fixture(autouse=True)
def isolated_out_root(monkeypatch, tmp_path):
    monkeypatch.delenv(cli.OUT_ROOT_ENV, raising=False)
    monkeypatch.chdir(tmp_path)


def manifest_of(out_dir):
    with open(os.path.join(out_dir, "manifest.json")) as fh:
        return json.load(fh)


def assert_manifest_covers_dir(out_dir):
    manifest = manifest_of(out_dir)
    on_disk = sorted(name for name in os.listdir(out_dir)
                     if name != "manifest.json")
    assert sorted(manifest["files"]) == on_disk
    for name, digest in manifest["files"].items():
        assert digest == sha256_file(os.path.join(out_dir, name))
    return manifest


class TestCliCheckGates:
    def test_table_prints_and_passes(self, capsys):
        rc = cli.main(["check-gates"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "16/16 checks passed" in out
        assert out.count("PASS") == 16


class TestCliEd:
    def test_sector_run_artifacts(self, tmp_path, crude_config, capsys):
        out = str(tmp_path / "edrun")
        rc = cli.main(["ed", "--config", crude_config, "--out", out,
                       "--length", "4", "--sector", "2,2"])
        assert rc == 0
        manifest = assert_manifest_covers_dir(out)
        assert set(manifest["files"]) == {"correlations.csv", "spectra.csv"}
        assert manifest["convergence"]["ed"]["sector"] == [2, 2]
        assert manifest["convergence"]["ed"]["dimension"] == 36
        rows = data_rows(os.path.join(out, "correlations.csv"))
        assert rows[0] == "r,Sx,Sy,Sz,D,P"
        assert len(rows) == 1 + 3  # central site of 4 reaches r = 2
        rows = data_rows(os.path.join(out, "spectra.csv"))
        assert rows[0] == "k,S,D,P"
        assert len(rows) == 1 + 64

    def test_grand_scan_reports_sectors(self, tmp_path, crude_config):
        out = str(tmp_path / "edgrand")
        rc = cli.main(["ed", "--config", crude_config, "--out", out,
                       "--length", "2"])
        assert rc == 0
        manifest = manifest_of(out)
        grand = manifest["convergence"]["ed"]["grand_scan"]
        assert grand["scanned_sectors"] == 9
        assert manifest["convergence"]["ed"]["sector"] == [1, 1]

    def test_bad_sector_is_config_error(self, tmp_path, crude_config,
                                         capsys):
        out = str(tmp_path / "edbad")
        rc = cli.main(["ed", "--config", crude_config, "--out", out,
                       "--length", "4", "--sector", "2-2"])
        assert rc == 2
        assert "config error" in capsys.readouterr().err


class TestCliItebdAndCorrelate:
    def test_itebd_artifacts_and_determinism(self, tmp_path, crude_config):
        out1 = str(tmp_path / "run1")
        out2 = str(tmp_path / "run2")
        assert cli.main(["itebd", "--config", crude_config,
                         "--out", out1]) == 0
        assert cli.main(["itebd", "--config", crude_config,
                         "--out", out2]) == 0
        manifest = assert_manifest_covers_dir(out1)
        assert set(manifest["files"]) == {"correlations.csv", "spectra.csv",
                                          "state.npz"}
        for name in ("correlations.csv", "spectra.csv", "state.npz"):
            b1 = open(os.path.join(out1, name), "rb").read()
            b2 = open(os.path.join(out2, name), "rb").read()
            assert b1 == b2, f"{name} differs between identical runs"
        # Manifests agree except for wall-clock entries.
        m2 = manifest_of(out2)
        assert manifest["files"] == m2["files"]
        assert manifest["config"] == m2["config"]
        assert manifest["wall_times_s"] != {} and m2["wall_times_s"] != {}

    def test_seed_override_changes_manifest_and_state(self, tmp_path,
                                                      crude_config):
        out = str(tmp_path / "seeded")
        assert cli.main(["itebd", "--config", crude_config, "--out", out,
                         "--seed", "9"]) == 0
        manifest = manifest_of(out)
        assert manifest["seed"] == 9
        assert manifest["convergence"]["itebd"]["seed"] == 9

    def test_correlate_reproduces_itebd_measurements(self, tmp_path,
                                                     crude_config):
        src = str(tmp_path / "src")
        assert cli.main(["itebd", "--config", crude_config,
                         "--out", src]) == 0
        dst = str(tmp_path / "dst")
        rc = cli.main(["correlate", "--config", crude_config, "--out", dst,
                       "--state", os.path.join(src, "state.npz")])
        assert rc == 0
        assert_manifest_covers_dir(dst)
        # Same state, same measurement settings: identical data rows.
        assert data_rows(os.path.join(dst, "correlations.csv")) \
            == data_rows(os.path.join(src, "correlations.csv"))
        assert data_rows(os.path.join(dst, "spectra.csv")) \
            == data_rows(os.path.join(src, "spectra.csv"))

    def test_missing_state_is_config_error(self, tmp_path, crude_config):
        rc = cli.main(["correlate", "--config", crude_config,
                       "--out", str(tmp_path / "x"),
                       "--state", str(tmp_path / "nope.npz")])
        assert rc == 2

    def test_compute_failure_leaves_marker_and_partial_manifest(
            self, tmp_path, crude_config, monkeypatch, capsys):
        def boom(*args, **kwargs):
            raise DivergenceError("synthetic instability for the test")

        monkeypatch.setattr(cli, "ground_state_itebd", boom)
        out = str(tmp_path / "failing")
        rc = cli.main(["itebd", "--config", crude_config, "--out", out])
        assert rc == 1
        assert "compute failure" in capsys.readouterr().err
        marker = os.path.join(out, "FAILED.txt")
        assert os.path.exists(marker)
        assert "synthetic instability" in open(marker).read()
        manifest = manifest_of(out)
        assert "failed" in manifest["convergence"]
        assert "FAILED.txt" in manifest["files"]


class TestCliSweep:
    def test_two_point_sweep_artifacts(self, tmp_path, crude_config, capsys):
        out = str(tmp_path / "sweeprun")
        rc = cli.main(["sweep", "--config", crude_config, "--out", out,
                       "--delta-mu", "0", "--mu-list=-3.9,-4.0"])
        assert rc == 0
        manifest = assert_manifest_covers_dir(out)
        assert set(manifest["files"]) == {
            "sweep.csv", "correlations_000.csv", "correlations_001.csv",
            "spectra_000.csv", "spectra_001.csv"}
        rows = data_rows(os.path.join(out, "sweep.csv"))
        header = rows[0].split(",")
        assert header[:6] == ["mu", "delta_mu", "n", "p", "energy_per_site",
                              "phase"]
        assert len(rows) == 3
        first = dict(zip(header, rows[1].split(",")))
        second = dict(zip(header, rows[2].split(",")))
        assert float(first["mu"]) == -3.9
        assert float(second["mu"]) == -4.0
        assert first["point_ref"] == "000"
        assert second["warm_started"] == "True"
        assert first["failed"] == "False"
        printed = capsys.readouterr().out
        assert "2/2 points converged" in printed

    def test_mu_list_validation_exit_code(self, tmp_path, crude_config):
        rc = cli.main(["sweep", "--config", crude_config,
                       "--out", str(tmp_path / "x"),
                       "--delta-mu", "0", "--mu-list=-4.0,-3.9"])
        assert rc == 2
        rc = cli.main(["sweep", "--config", crude_config,
                       "--out", str(tmp_path / "y"),
                       "--delta-mu", "0", "--mu-list=a,b"])
        assert rc == 2


class TestCliReproduce:
    def test_fig2_grid_artifact_shape(self, tmp_path, crude_config):
        out = str(tmp_path / "fig2")
        rc = cli.main(["reproduce", "--config", crude_config, "--out", out,
                       "fig2"])
        assert rc == 0
        manifest = assert_manifest_covers_dir(out)
        names = set(manifest["files"])
        # Three field strengths, each a three-point sweep.
        for dmu in ("2.4", "2.5", "3"):
            assert f"dmu{dmu}_sweep.csv" in names
            for idx in ("000", "001", "002"):
                assert f"dmu{dmu}_correlations_{idx}.csv" in names
                assert f"dmu{dmu}_spectra_{idx}.csv" in names
        assert len(names) == 21
        assert set(manifest["convergence"]) == {"dmu2.4_", "dmu2.5_",
                                                "dmu3_"}

    def test_fig3_runs_in_worker_pool(self, tmp_path, crude_config):
        out = str(tmp_path / "fig3")
        rc = cli.main(["reproduce", "--config", crude_config, "--out", out,
                       "--threads", "2", "fig3"])
        assert rc == 0
        manifest = assert_manifest_covers_dir(out)
        assert len(manifest["files"]) == 14
        assert set(manifest["convergence"]) == {"dmu1.2_", "dmu2.4_"}

    def test_negative_threads_rejected(self, tmp_path, crude_config):
        rc = cli.main(["reproduce", "--config", crude_config,
                       "--out", str(tmp_path / "x"), "--threads", "-1",
                       "fig2"])
        assert rc == 2


class TestOutDirResolution:
    def test_env_root_and_command_subdir(self, tmp_path, monkeypatch,
                                         crude_config):
        root = str(tmp_path / "artifacts")
        monkeypatch.setenv(cli.OUT_ROOT_ENV, root)
        rc = cli.main(["ed", "--config", crude_config, "--length", "2",
                       "--sector", "1,0"])
        assert rc == 0
        assert os.path.isdir(os.path.join(root, "ed"))
        assert_manifest_covers_dir(os.path.join(root, "ed"))

    def test_config_out_dir_used_when_no_flag(self, tmp_path, crude_config):
        target = str(tmp_path / "from-config")
        with open(crude_config, "a") as fh:
            fh.write(f"\n[output]\nout_dir = {target}\n")
        rc = cli.main(["ed", "--config", crude_config, "--length", "2",
                       "--sector", "1,0"])
        assert rc == 0
        assert os.path.exists(os.path.join(target, "manifest.json"))

    def test_missing_config_file_is_exit_2(self, tmp_path, capsys):
        rc = cli.main(["itebd", "--config", str(tmp_path / "absent.ini"),
                       "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "cannot read config" in capsys.readouterr().err

    def test_config_parse_error_is_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[engine]\nchi = 0\n")
        rc = cli.main(["itebd", "--config", str(bad),
                       "--out", str(tmp_path / "x")])
        assert rc == 2
