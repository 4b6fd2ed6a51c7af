import subprocess
import sys

import pytest

# Fixtures are produced exclusively through the simulator's CLI: the figure
# package consumes the primary component only via its file interfaces.


def run_lab(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "rst_lab.cli", *args], capture_output=True, text=True
    )
    if proc.returncode != 0:
        raise RuntimeError(f"rst-lab {' '.join(args)} failed:\n{proc.stderr}")
    return proc


@pytest.fixture(scope="session")
def exports(tmp_path_factory):
    root = tmp_path_factory.mktemp("exports")
    tree2d = root / "tree2d"
    run_lab("straightness", "--dim", "2", "--radius", "30", "--seed", "5", "--out", str(tree2d))
    tree3d = root / "tree3d"
    run_lab("build", "--dim", "3", "--radius", "8", "--seed", "6", "--out", str(tree3d))
    trace = root / "trace"
    run_lab(
        "explore", "--dim", "2", "--start-norm", "60", "--seed", "7",
        "--kappa", "1.05", "--lam", "0.25", "--out", str(trace),
    )
    deviation = root / "deviation"
    run_lab(
        "experiment", "deviation", "--norms", "20,40,80", "--trials", "100",
        "--seed", "8", "--out", str(deviation),
    )
    psi_tail = root / "psi_tail"
    run_lab("experiment", "psi-tail", "--trials", "300", "--seed", "9", "--out", str(psi_tail))
    spacing = root / "spacing"
    run_lab(
        "experiment", "spacing", "--start-norm", "80", "--trials", "400",
        "--seed", "10", "--out", str(spacing),
    )
    return root
