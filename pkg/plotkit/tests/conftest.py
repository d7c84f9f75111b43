from pathlib import Path

import pytest

from fmsync.fmcli import main as fmsync_main

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory) -> Path:
    """One shared output directory produced by the fmsync CLI: a rotational
    run, a compare-noise triple, and a Hindmarsh-Rose run."""
    out = tmp_path_factory.mktemp("fmsync-out")
    assert fmsync_main(["simulate", "--config",
                        str(CONFIG_DIR / "example1.json"),
                        "--out", str(out), "--horizon", "10.0"]) == 0
    assert fmsync_main(["compare-noise", "--config",
                        str(CONFIG_DIR / "example1_noise.json"),
                        "--out", str(out), "--horizon", "10.0"]) == 0
    assert fmsync_main(["simulate", "--config",
                        str(CONFIG_DIR / "hindmarsh_rose.json"),
                        "--out", str(out), "--horizon", "30.0"]) == 0
    return out
