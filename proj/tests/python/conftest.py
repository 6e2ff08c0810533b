import os
import shutil
import subprocess

import pytest


@pytest.fixture(scope="session")
def hetsr_bin():
    path = os.environ.get("HETSR_BIN") or shutil.which("hetsr")
    if not path:
        pytest.skip("hetsr executable not found (set HETSR_BIN)")
    return path


@pytest.fixture(scope="session")
def run(hetsr_bin):
    def _run(*args, check=True):
        proc = subprocess.run([hetsr_bin, *map(str, args)], capture_output=True, text=True)
        if check and proc.returncode != 0:
            raise AssertionError(f"exit {proc.returncode}\n{proc.stdout}\n{proc.stderr}")
        return proc

    return _run


TINY = [
    "--set", "generator.width=8",
    "--set", "generator.blocks=1",
    "--set", "critic.layers=8:2,8:2",
    "--set", "batch_size=2",
    "--set", "n_critic=1",
    "--set", "data.patch=32",
    "--set", "data.patches_per_image=1",
    "--set", "data.split=0.6",
    "--f64",
]


@pytest.fixture(scope="session")
def trained(run, tmp_path_factory):
    """A three-step run on five synthetic images."""
    root = tmp_path_factory.mktemp("cli")
    run("synth", root / "images", "--count", 5, "--size", 48, "--seed", 1)
    run("train", *TINY, "--set", f"data.root={root / 'images'}",
        "--iterations", 3, "--output", root / "run")
    return root
