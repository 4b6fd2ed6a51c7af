import json
import subprocess
import sys

import pytest

from rst_figures.render import FigureSpec, fit_slope, render
from rst_figures.schemas import SchemaError, load_deviation, load_points, load_tail, load_tree


def png_ok(path) -> bool:
    data = path.read_bytes()
    return data[:8] == b"\x89PNG\r\n\x1a\n" and len(data) > 2000


class TestFiveKinds:
    def test_tree_2d(self, exports, tmp_path):
        out = tmp_path / "tree2d.png"
        render(
            FigureSpec(
                kind="tree",
                inputs={
                    "points": exports / "tree2d" / "points.csv",
                    "tree": exports / "tree2d" / "tree.csv",
                },
                out=str(out),
            )
        )
        assert png_ok(out)

    def test_tree_3d_depth_styling(self, exports, tmp_path):
        out = tmp_path / "tree3d.png"
        render(
            FigureSpec(
                kind="tree",
                inputs={
                    "points": exports / "tree3d" / "points.csv",
                    "tree": exports / "tree3d" / "tree.csv",
                },
                out=str(out),
            )
        )
        assert png_ok(out)

    def test_cones(self, exports, tmp_path):
        out = tmp_path / "cones.png"
        render(
            FigureSpec(
                kind="cones",
                inputs={
                    "points": exports / "tree2d" / "points.csv",
                    "tree": exports / "tree2d" / "tree.csv",
                    "straightness": exports / "tree2d" / "straightness.csv",
                },
                out=str(out),
                style={"aperture_multiplier": 1.5, "n_cones": 4},
            )
        )
        assert png_ok(out)

    def test_lenses(self, exports, tmp_path):
        out = tmp_path / "lenses.png"
        render(
            FigureSpec(
                kind="lenses",
                inputs={"trace": exports / "trace" / "trace.csv"},
                out=str(out),
                style={"max_steps": 12},
            )
        )
        assert png_ok(out)

    def test_deviation_slope_matches_manifest(self, exports, tmp_path):
        out = tmp_path / "deviation.png"
        fig_csv = exports / "deviation" / "deviation.csv"
        render(FigureSpec(kind="deviation", inputs={"deviation": fig_csv}, out=str(out)))
        assert png_ok(out)
        data = load_deviation(fig_csv)
        slope = fit_slope(data[:, 0], data[:, 5])
        manifest = json.loads((exports / "deviation" / "manifest.json").read_text())
        assert round(slope, 3) == round(manifest["results"]["slope"], 3)

    def test_tails_with_bound(self, exports, tmp_path):
        out = tmp_path / "psi_tail.png"
        render(
            FigureSpec(
                kind="tails",
                inputs={"tail": exports / "psi_tail" / "psi_tail.csv"},
                out=str(out),
                style={"shape_exponent": 2.0},
            )
        )
        assert png_ok(out)

    def test_tails_r_theta(self, exports, tmp_path):
        out = tmp_path / "r_theta.png"
        render(
            FigureSpec(
                kind="tails",
                inputs={"tail": exports / "spacing" / "r_theta.csv"},
                out=str(out),
            )
        )
        assert png_ok(out)


class TestEdgeCases:
    def test_empty_tree_renders_origin_only(self, tmp_path):
        pts = tmp_path / "points.csv"
        pts.write_text("id,x1,x2\n")
        tre = tmp_path / "tree.csv"
        tre.write_text("child_id,parent_id\n")
        out = tmp_path / "empty.png"
        render(FigureSpec(kind="tree", inputs={"points": pts, "tree": tre}, out=str(out)))
        assert png_ok(out)

    def test_rendering_is_deterministic(self, exports, tmp_path):
        outs = []
        for name in ("a.png", "b.png"):
            out = tmp_path / name
            render(
                FigureSpec(
                    kind="deviation",
                    inputs={"deviation": exports / "deviation" / "deviation.csv"},
                    out=str(out),
                )
            )
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            FigureSpec(kind="sparkline", inputs={}, out="x.png")


class TestSchemaValidation:
    def test_header_drift_rejected(self, tmp_path):
        bad = tmp_path / "tree.csv"
        bad.write_text("child,parent\n1,0\n")
        with pytest.raises(SchemaError):
            load_tree(bad)

    def test_extra_column_rejected(self, exports, tmp_path):
        rows = (exports / "deviation" / "deviation.csv").read_text().splitlines()
        bad = tmp_path / "deviation.csv"
        bad.write_text("\n".join(r + ",1" for r in rows) + "\n")
        with pytest.raises(SchemaError):
            load_deviation(bad)

    def test_parse_error_names_row(self, tmp_path):
        bad = tmp_path / "t.csv"
        bad.write_text("threshold,survival,half_width,trials\n1,0.5,0.1,100\n2,oops,0.1,100\n")
        with pytest.raises(SchemaError) as err:
            load_tail(bad)
        assert "row 3" in str(err.value)

    def test_points_header_checked(self, tmp_path):
        bad = tmp_path / "p.csv"
        bad.write_text("id,a,b\n1,0,0\n")
        with pytest.raises(SchemaError):
            load_points(bad)


class TestCli:
    def test_cli_renders(self, exports, tmp_path):
        out = tmp_path / "cli.png"
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "rst_figures.cli",
                "tree",
                "--points",
                str(exports / "tree2d" / "points.csv"),
                "--tree",
                str(exports / "tree2d" / "tree.csv"),
                "--out",
                str(out),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert png_ok(out)

    def test_cli_schema_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("nope\n")
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "rst_figures.cli",
                "deviation",
                "--deviation",
                str(bad),
                "--out",
                str(tmp_path / "x.png"),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
        assert "header" in proc.stderr


def test_acceptance_criterion_13(exports, tmp_path):
    """All five figure kinds render from pinned-seed exports; the deviation
    slope annotation matches the primary report to 3 decimals."""
    made = []
    specs = [
        ("tree", {"points": exports / "tree2d" / "points.csv", "tree": exports / "tree2d" / "tree.csv"}, {}),
        (
            "cones",
            {
                "points": exports / "tree2d" / "points.csv",
                "tree": exports / "tree2d" / "tree.csv",
                "straightness": exports / "tree2d" / "straightness.csv",
            },
            {},
        ),
        ("lenses", {"trace": exports / "trace" / "trace.csv"}, {}),
        ("deviation", {"deviation": exports / "deviation" / "deviation.csv"}, {}),
        ("tails", {"tail": exports / "psi_tail" / "psi_tail.csv"}, {"shape_exponent": 2.0}),
    ]
    for kind, inputs, style in specs:
        out = tmp_path / f"{kind}.png"
        render(FigureSpec(kind=kind, inputs=inputs, out=str(out), style=style))
        assert png_ok(out)
        made.append(kind)
    data = load_deviation(exports / "deviation" / "deviation.csv")
    slope = fit_slope(data[:, 0], data[:, 5])
    manifest = json.loads((exports / "deviation" / "manifest.json").read_text())
    assert round(slope, 3) == round(manifest["results"]["slope"], 3)
    print(f"[criterion 13] PASS: rendered {made}; slope {slope:.3f} matches the primary report")
