import numpy as np
import pytest

from mrhsurv.mrhtree import HyperParams
from mrhsurv.sampler import Chain, ChainLayout


def make_chain(H, R, beta=None, loglik=None, M=None, names=None):
    """Chain from explicit draws: ``H`` (n, L), ``R`` (n, L, J-1), ``beta`` (n, z)."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n, L = H.shape
    R = np.asarray(R, dtype=float)
    R = R.reshape(n, L, R.shape[-1] if R.ndim == 3 else -1)
    M = M if M is not None else int(np.log2(R.shape[2] + 1))
    beta = np.zeros((n, 0)) if beta is None else np.asarray(beta, dtype=float).reshape(n, np.shape(beta)[-1])
    names = names or tuple(f"x{i}" for i in range(beta.shape[1]))
    priors = [HyperParams() for _ in range(L)]
    layout = ChainLayout(L, M, tuple(names), np.zeros((L, 2**M - 1), dtype=bool), priors)
    hyp = np.tile(np.concatenate([[p.a for p in priors], [p.lam for p in priors], [p.k for p in priors]]), (n, 1))
    draws = np.hstack([H, R.reshape(n, L * R.shape[2]), beta, hyp])
    ll = np.zeros(n) if loglik is None else np.asarray(loglik, dtype=float)
    return Chain(layout, draws, ll, np.arange(1, n + 1))


@pytest.fixture
def chain_factory():
    return make_chain


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
