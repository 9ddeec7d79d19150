import numpy as np
import pytest


def kink_margin(net, x):
    """Smallest distance of any ReLU input from 0 or max-pool winner from runner-up.

    Finite differences are only meaningful when this exceeds the step size.
    """
    state = net.snapshot_state()
    train = net.mode == "train"
    h = np.ascontiguousarray(x.transpose(1, 0, 2, 3))
    margin = np.inf
    for layer in net.layers:
        kind = layer.spec.kind
        if kind == "relu":
            margin = min(margin, np.abs(h).min())
        elif kind == "maxpool2x2":
            quads = np.stack([h[..., i::2, j::2] for i in (0, 1) for j in (0, 1)])
            top2 = np.sort(quads, axis=0)[-2:]
            # windows zeroed by a preceding ReLU carry no gradient either way
            live = top2[1] > 0
            if live.any():
                margin = min(margin, (top2[1] - top2[0])[live].min())
        h = layer.fwd(h, train)
    net.restore_state(state)
    return margin


@pytest.fixture
def smooth_input():
    """Draw inputs from ``rng`` until they sit at least 1e-3 away from any kink."""

    def draw(net, rng, shape, margin=1e-3, tries=200):
        for _ in range(tries):
            x = rng.normal(size=shape)
            if kink_margin(net, x) > margin:
                return x
        raise RuntimeError("no kink-free input found")

    return draw


ACCEPTANCE = {}


def record_criterion(number, title, passed, detail):
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
