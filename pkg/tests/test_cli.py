import json
import subprocess
import sys
from pathlib import Path

from rst_lab.cli import main


def run_cli(*args):
    return main(list(args))


def read(path: Path) -> bytes:
    return Path(path).read_bytes()


class TestBasicCommands:
    def test_sample_and_manifest(self, tmp_path):
        out = tmp_path / "s"
        assert run_cli("sample", "--dim", "2", "--radius", "8", "--seed", "3", "--out", str(out)) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "sample"
        assert manifest["config"]["radius"] == 8.0
        assert manifest["config"]["kappa"] == 2.0  # defaults echoed
        assert (out / "points.csv").exists()

    def test_explore_trace_monotone(self, tmp_path):
        out = tmp_path / "e"
        assert run_cli("explore", "--dim", "2", "--start-norm", "100", "--seed", "7", "--out", str(out)) == 0
        rows = (out / "trace.csv").read_text().splitlines()[1:]
        rs = [float(r.split(",")[3]) for r in rows]
        assert all(a > b for a, b in zip(rs, rs[1:]))

    def test_straightness_outputs(self, tmp_path):
        out = tmp_path / "st"
        assert run_cli("straightness", "--radius", "16", "--seed", "2", "--out", str(out)) == 0
        assert (out / "straightness.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert "band_medians" in manifest["results"]

    def test_check_lemmas(self, tmp_path):
        out = tmp_path / "c"
        assert run_cli("check", "lemmas", "--instances", "3000", "--seed", "1", "--out", str(out)) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["results"]["pass"] is True

    def test_experiment_psi_tail(self, tmp_path):
        out = tmp_path / "p"
        assert (
            run_cli(
                "experiment", "psi-tail", "--trials", "200", "--seed", "5", "--out", str(out)
            )
            == 0
        )
        assert (out / "psi_tail.csv").exists()


class TestRoundTrip:
    def test_sample_export_import_build(self, tmp_path):
        direct = tmp_path / "direct"
        assert run_cli("build", "--radius", "10", "--seed", "6", "--out", str(direct)) == 0
        imported = tmp_path / "imported"
        assert (
            run_cli(
                "build",
                "--points",
                str(direct / "points.csv"),
                "--radius",
                "10",
                "--seed",
                "6",
                "--out",
                str(imported),
            )
            == 0
        )
        assert read(direct / "tree.csv") == read(imported / "tree.csv")

    def test_check_imported_tree(self, tmp_path):
        out = tmp_path / "b"
        run_cli("build", "--radius", "8", "--seed", "9", "--out", str(out))
        ok = tmp_path / "ok"
        assert (
            run_cli(
                "check",
                "tree",
                "--points",
                str(out / "points.csv"),
                "--tree",
                str(out / "tree.csv"),
                "--out",
                str(ok),
            )
            == 0
        )

    def test_corrupted_tree_fails(self, tmp_path):
        out = tmp_path / "b"
        run_cli("build", "--radius", "8", "--seed", "9", "--out", str(out))
        rows = (out / "tree.csv").read_text().splitlines()
        # swap the parents of the last two vertices to corrupt the map
        a = rows[-1].split(",")
        b = rows[-2].split(",")
        rows[-1] = f"{a[0]},{b[1]}"
        rows[-2] = f"{b[0]},{a[1]}"
        bad = out / "bad_tree.csv"
        bad.write_text("\n".join(rows) + "\n")
        code = run_cli(
            "check",
            "tree",
            "--points",
            str(out / "points.csv"),
            "--tree",
            str(bad),
            "--out",
            str(tmp_path / "bad"),
        )
        assert code == 1


class TestDeterminism:
    def test_identical_runs_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert (
                run_cli(
                    "experiment",
                    "psi-tail",
                    "--trials",
                    "200",
                    "--seed",
                    "3",
                    "--out",
                    str(out),
                )
                == 0
            )
        assert read(a / "psi_tail.csv") == read(b / "psi_tail.csv")
        assert read(a / "manifest.json") == read(b / "manifest.json")

    def test_worker_count_invariant(self, tmp_path):
        a, b = tmp_path / "w1", tmp_path / "w2"
        run_cli("experiment", "psi-tail", "--trials", "300", "--seed", "4", "--workers", "1", "--out", str(a))
        run_cli("experiment", "psi-tail", "--trials", "300", "--seed", "4", "--workers", "2", "--out", str(b))
        assert read(a / "psi_tail.csv") == read(b / "psi_tail.csv")

    def test_explore_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            run_cli("explore", "--start-norm", "60", "--seed", "11", "--out", str(out))
        assert read(a / "trace.csv") == read(b / "trace.csv")
        assert read(a / "renewals.csv") == read(b / "renewals.csv")


class TestConfigHandling:
    def test_toml_config_with_flag_override(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('radius = 9.0\nseed = 13\n')
        out = tmp_path / "out"
        assert run_cli("sample", "--config", str(cfg), "--seed", "14", "--out", str(out)) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["radius"] == 9.0  # from file
        assert manifest["config"]["seed"] == 14  # flag wins

    def test_missing_config_file_is_config_error(self, tmp_path):
        assert run_cli("sample", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)) == 2

    def test_bad_flag_exits_two(self):
        proc = subprocess.run(
            [sys.executable, "-m", "rst_lab.cli", "sample", "--radius", "oops"],
            capture_output=True,
        )
        assert proc.returncode == 2

    def test_env_outdir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RST_LAB_OUTDIR", str(tmp_path / "envout"))
        assert run_cli("sample", "--radius", "6", "--seed", "2") == 0
        assert (tmp_path / "envout" / "points.csv").exists()

    def test_console_script_help(self):
        proc = subprocess.run(
            [sys.executable, "-m", "rst_lab.cli", "--help"], capture_output=True, text=True
        )
        assert proc.returncode == 0
        assert "kappa=2.0" in proc.stdout  # defaults documented
