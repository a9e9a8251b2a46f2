import numpy as np
import pytest

from foodchain.numerics import ParamSet


def randomize(params: ParamSet, seed: int, scale: float = 0.6):
    """Replace every tensor with N(0, scale) draws so gradients are far from roundoff."""
    rng = np.random.default_rng(seed)
    for name in params.names():
        params[name][...] = rng.normal(0.0, scale, params[name].shape)
    return params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def resolved_grad_check(loss, params: ParamSet, epsilon: float = 1e-5, wide_epsilon: float = 1e-3,
                        noise_ulps: float = 1e5):
    """Central-difference check that separates coordinates float64 can resolve.

    A coordinate whose true gradient is below ``noise_ulps * ulp(L) / epsilon``
    moves the loss by only a few thousand ulps, so its difference quotient
    is dominated by roundoff. Those coordinates are checked with
    ``wide_epsilon`` instead. Returns ``(max_rel_resolved, max_rel_wide, n_wide)``.
    """
    def evaluate():
        params.zero_grad()
        return float(loss(params))

    base = evaluate()
    analytic = {n: g.copy() for n, g in params.grads.items()}
    floor = noise_ulps * np.spacing(abs(base)) / epsilon

    def central(flat, i, eps):
        orig = flat[i]
        flat[i] = orig + eps
        up = evaluate()
        flat[i] = orig - eps
        down = evaluate()
        flat[i] = orig
        return (up - down) / (2 * eps)

    worst, worst_wide, n_wide = 0.0, 0.0, 0
    for name, p in params.params.items():
        flat = p.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            a = a_flat[i]
            num = central(flat, i, epsilon)
            if max(abs(a), abs(num)) >= floor:
                worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-8))
            else:
                n_wide += 1
                num = central(flat, i, wide_epsilon)
                worst_wide = max(worst_wide, abs(a - num) / max(abs(a), abs(num), 1e-8))
    return worst, worst_wide, n_wide


ACCEPTANCE_LINES = []


def record_criterion(number: int, title: str, ok: bool, detail: str):
    """Remember one acceptance outcome; printed in the terminal summary."""
    ACCEPTANCE_LINES.append(f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
