import numpy as np
import pytest

from ctxtrack.context import SensorPose, UniformContext, UniformContextConfig
from ctxtrack.core import Detection, SensorScan, StateEstimate
from ctxtrack.gmphd import GaussianMixture


def make_detection(xy, var=1.0, sensor_id="radar", area=None):
    return Detection(np.asarray(xy, dtype=float), np.eye(2) * var, sensor_id, area)


def make_scan(points, t=0.0, context=None, var=1.0, sensor_id="radar", kind="radar", pose=None, area=None):
    pose = pose if pose is not None else SensorPose([0.0, 0.0], 0.0)
    dets = [make_detection(p, var, sensor_id, area) for p in points]
    return SensorScan(sensor_id, t, dets, context, pose, kind)


def uniform(pd=0.4, lam=1e-3, pose=None):
    """Uniform context whose clutter value is used directly as a Cartesian density."""
    return UniformContext(UniformContextConfig(pd, lam), pose, clutter_frame="cartesian")


def mixture(weights, means, covs=None, labels=None, t=0.0):
    weights = np.asarray(weights, dtype=float)
    means = np.asarray(means, dtype=float).reshape(-1, 4)
    n = len(weights)
    if covs is None:
        covs = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
    labels = np.arange(n) if labels is None else np.asarray(labels)
    return GaussianMixture(weights, means, np.asarray(covs, dtype=float), labels.astype(np.int64),
                           timestamp=t, next_label=int(labels.max()) + 1 if n else 0)


def state(x=0.0, vx=0.0, y=0.0, vy=0.0, cov=None):
    return StateEstimate([x, vx, y, vy], np.eye(4) if cov is None else cov)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE = {}


def record(number, title, ok, detail=""):
    ACCEPTANCE[number] = (title, bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)
