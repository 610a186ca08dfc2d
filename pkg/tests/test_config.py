import math

import numpy as np
import pytest

from lrg.config import ConfigError, RunConfig, header_lines, matrix, node_grid
from lrg.simkit import LTIPlant
from lrg.vehicle import TruckPlant


def test_defaults_build_truck_objects():
    cfg = RunConfig.from_text("")
    assert isinstance(cfg.plant(), TruckPlant)
    g = cfg.governor_config()
    assert (g.holder_L, g.sample_period, g.horizon_T, g.epsilon) == (0.3, 0.2, 4.0, 0.02)
    assert cfg.governor_config(operating=True).sample_period == 0.1
    assert cfg.initial_nu() == -50.0
    lc = cfg.learning_config()
    assert (lc.n_max, lc.k_max, lc.profile) == (150, 100, (50.0, -50.0))


def test_truck_norm_uses_angle_unit():
    n = RunConfig.from_text("").norm()
    # one angle unit (2 degrees) in every slot has unit weight
    assert n.full([2.0], [0.0], [0.0] * 6) == pytest.approx(1.0)
    assert n.full([0.0], [0.0], [math.radians(2.0)] + [0.0] * 5) == pytest.approx(1.0)


def test_lti_config():
    cfg = RunConfig.from_text("plant = lti\nlti.A = 0 1; -1 -0.4\nlti.B = 0; 1\nlti.C = 1 0\nlti.F = 0\n")
    plant = cfg.plant()
    assert isinstance(plant, LTIPlant) and plant.n_state == 2
    assert cfg.initial_nu() == 0.0
    assert cfg.steady_state_map().distance(0.0) == pytest.approx(1.0)


@pytest.mark.parametrize("text", ["governor.Lx = 1\n", "plant = boat\n", "governor.L = abc\n",
                                  "learning.nu_range = 5, -5\n", "vehicle.wheels = 6\n",
                                  "governor.w_nu = 1\n", "lti.A = 1 2; 3\n"])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigError):
        cfg = RunConfig.from_text(text)
        cfg.norm()
        cfg.vehicle_params()
        matrix(cfg.get("lti.A"))


def test_digest_tracks_content():
    a = RunConfig.from_text("governor.L = 0.3\n")
    assert a.digest() == RunConfig.from_text("").digest()
    assert a.digest() != RunConfig.from_text("governor.L = 0.4\n").digest()


def test_node_grid():
    assert np.allclose(node_grid("-1:1:0.5"), [-1, -0.5, 0, 0.5, 1])
    assert np.allclose(node_grid("3, 1 2"), [3, 1, 2])


def test_header_lines():
    cfg = RunConfig.from_text("")
    head = header_lines(cfg, {"learning": 0}, {"points": 3})
    lines = head.splitlines()
    assert lines[0].startswith("# lrg_version=") and "numpy=" in lines[0]
    assert lines[1] == f"# config_hash={cfg.digest()}"
    assert lines[2] == "# seeds learning=0" and lines[3] == "# points=3"


def test_missing_file():
    with pytest.raises(ConfigError):
        RunConfig.load("/nonexistent/run.cfg")
