import numpy as np
import pytest
from hypothesis import settings

from tabal.geometry import BoundingBox
from tabal.scoring import Detection, PredictionRecord

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


def box(*c):
    return BoundingBox(*[float(v) for v in c])


def record(image_id, dets=(), width=100, height=100, mask=None):
    return PredictionRecord(image_id, width, height, [Detection(box(*b), c) for b, c in dets], mask)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
