import sys

import numpy as np
import pytest

from tsar.frame import SeriesFrame

HOUR = 3600
ORIGIN = 1_577_836_800  # 2020-01-01T00:00:00Z


def var1_series(T, M, rho=0.7, noise=1.0, coupling=0.5, seed=0):
    """Stationary VAR(1) with lower-triangular coupling."""
    rng = np.random.default_rng(seed)
    A = rho * np.eye(M) + coupling * np.tril(np.ones((M, M)), -1) / max(M, 1)
    A *= rho / max(np.abs(np.linalg.eigvals(A)).max(), 1e-12)
    x = np.zeros((T + 200, M))
    for i in range(1, T + 200):
        x[i] = A @ x[i - 1] + rng.normal(0, noise, M)
    return x[200:]


def punch_holes(values, fraction, seed=0):
    rng = np.random.default_rng(seed)
    out = np.array(values, dtype=float)
    out[rng.random(out.shape) < fraction] = np.nan
    return out


def hourly_frame(values, columns=None, origin=ORIGIN):
    return SeriesFrame.from_array(values, columns, origin=origin, step=HOUR)


def seasonal_panel(T, M, seed=0, missing=0.1):
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    amp = rng.uniform(0.5, 2.0, M)
    base = 1.0 + np.sin(2 * np.pi * t / 24)[:, None] * amp
    return punch_holes(base + var1_series(T, M, seed=seed) * 0.3, missing, seed + 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
