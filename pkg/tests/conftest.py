import numpy as np
import pytest
from scipy.spatial.transform import Rotation


def random_pose(rng, max_deg=30.0):
    axis = rng.normal(size=3)
    angle = np.deg2rad(rng.uniform(1.0, max_deg))
    R = Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()
    t = rng.normal(size=3)
    return R, t / np.linalg.norm(t)


def scene(rng, n, R, t, depth=(4.0, 10.0), spread=0.5):
    """Noiseless normalized correspondences of random points in front of both cameras."""
    x1s, x2s = [], []
    while sum(len(a) for a in x1s) < n:
        X = np.column_stack([rng.uniform(-spread, spread, (n, 2)), np.ones(n)])
        X = X * rng.uniform(*depth, (n, 1))
        X2 = X @ R.T + t
        ok = X2[:, 2] > 0.5
        x1s.append(X[ok] / X[ok, 2:])
        x2s.append(X2[ok] / X2[ok, 2:])
    return np.concatenate(x1s)[:n], np.concatenate(x2s)[:n]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, printed as one line each at the end of the run
VERDICTS = {}


@pytest.fixture
def verdict():
    def record(n, ok, detail):
        VERDICTS[n] = f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(VERDICTS[n])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
