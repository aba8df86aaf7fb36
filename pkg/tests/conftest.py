import sys
import mpmath as mp
import numpy as np
import pytest


def random_state(rng, m, rank=None):
    """Full-rank (or rank-limited) state from a Ginibre draw, independent of the package sampler."""
    k = m if rank is None else rank
    g = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
    w = g @ g.conj().T
    return w / np.trace(w).real


def random_unitary(rng, m):
    z = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def qubit_lambda_max_tail(n, c, dps=40):
    """Exact Pr{lambda_max >= c} for m = 2 induced states with environment n (c >= 1/2).

    The eigenvalue density is proportional to x^(n-2) (1-x)^(n-2) (2x-1)^2 on [0, 1].
    """
    with mp.workdps(dps):
        f = lambda x: x ** (n - 2) * (1 - x) ** (n - 2) * (2 * x - 1) ** 2
        total = mp.quad(f, [0, 0.5, 1])
        tail = mp.quad(f, [c, 1])
        return float(2 * tail / total)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
