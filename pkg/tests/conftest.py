import numpy as np
import pytest

from facedetail.cli import main
from facedetail.model_core import AffineCamera, generate_synthetic_model


@pytest.fixture(scope="session")
def small_model():
    return generate_synthetic_model(3, n_vertices=400, Ks=30, Ke=12, Ka=10)


@pytest.fixture(scope="session")
def model():
    return generate_synthetic_model(7)


def random_camera(rng):
    """Full-rank affine camera with roughly unit-scale rows, centred on a 512 px frame."""
    while True:
        m = np.hstack([rng.normal(0, 1, (2, 3)) + [[2, 0, 0], [0, 2, 0]], rng.uniform(200, 300, (2, 1))])
        if np.linalg.cond(m[:, :3]) < 10:
            return AffineCamera(m)


@pytest.fixture(scope="session")
def demo_dir(tmp_path_factory):
    """A small demo scene written by the CLI, shared by the command-line tests."""
    d = tmp_path_factory.mktemp("demo")
    code = main(["--seed", "5", "make-demo", str(d), "--resolution", "128", "--image-size", "160",
                 "--patch-size", "64", "--rank", "8", "--sfs-iterations", "15"])
    assert code == 0
    return d


@pytest.fixture(scope="session")
def demo_run(demo_dir, tmp_path_factory):
    """fit-proxy followed by synthesize on the demo scene; returns the output directory."""
    out = tmp_path_factory.mktemp("demo_run")
    cfg = str(demo_dir / "config.yaml")
    assert main(["--config", cfg, "fit-proxy", "--out", str(out)]) == 0
    assert main(["--config", cfg, "synthesize", "--proxy-dir", str(out), "--out", str(out)]) == 0
    return out
