import sys

import numpy as np
import pytest

from twinreg.nn import Network, forward


def numeric_gradient(net: Network, X, targets, step=1e-5):
    """Central finite differences of the batch MSE w.r.t. every parameter."""
    base = net.flat.copy()
    grad = np.empty_like(base)

    def loss():
        out = forward(net, X)[0]
        return np.mean((out - targets) ** 2)

    for p in range(base.size):
        net.flat[p] = base[p] + step
        up = loss()
        net.flat[p] = base[p] - step
        down = loss()
        net.flat[p] = base[p]
        grad[p] = (up - down) / (2 * step)
    return grad


def gradient_mismatch(analytic, numeric, rel=1e-4, floor=1e-7):
    """Indices where neither the absolute floor nor the relative tolerance holds."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    bad = (diff > floor) & (diff > rel * scale)
    return np.flatnonzero(bad)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
