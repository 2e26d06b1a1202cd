import numpy as np
import pytest

from pitchcal.camera_models import PinholeRadial, SimplifiedPinhole, look_at_rotation
from pitchcal.field_model import build_pitch_template
from pitchcal.synth import SceneConfig, generate_scene


def make_camera(position=(0.0, -45.0, 15.0), target=(0.0, 0.0, 0.0), focal=1500.0, k1=0.0, size=(1920, 1080)):
    r = look_at_rotation(np.asarray(position, float), np.asarray(target, float))
    pp = (size[0] / 2.0, size[1] / 2.0)
    return PinholeRadial(focal, pp, r, -r @ np.asarray(position, float), k1)


@pytest.fixture(scope="session")
def template():
    return build_pitch_template()


@pytest.fixture
def wide_camera():
    return make_camera()


@pytest.fixture
def distorted_camera():
    return make_camera(position=(5.0, -42.0, 18.0), target=(10.0, 5.0, 0.0), focal=1400.0, k1=-0.08)


@pytest.fixture
def simple_pinhole():
    return SimplifiedPinhole(1000.0, (960.0, 540.0), np.eye(3), (0.0, 0.0, 10.0))


@pytest.fixture(scope="session")
def scenes(template):
    cfg = SceneConfig(seed=11, focal_range=(1500.0, 3000.0))
    return [generate_scene(cfg, i, template) for i in range(12)]


# acceptance verdicts, echoed in the terminal summary
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
