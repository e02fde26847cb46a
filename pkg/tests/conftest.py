import numpy as np
import pytest

from bbcirl import kernels
from bbcirl.bundles import clone_policies
from bbcirl.forward import reinforce_train
from bbcirl.gridworld import GridConfig, new_env
from bbcirl.tinynn import NetSpec

BACKENDS = ["python"] + (["compiled"] if kernels.compiled_backend is not None else [])

# criterion number -> summary line, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(params=BACKENDS)
def backend(request):
    return kernels.get_backend(request.param)


@pytest.fixture(scope="session")
def env():
    return new_env(GridConfig())


@pytest.fixture(scope="session")
def default_run(env):
    """Forward learner and cloned sequence under the default settings, seed 0."""
    run = reinforce_train(env, NetSpec((49, 16, 3), "softmax", 0), 5000, 0.00075, 0.999, 0)
    seq = clone_policies(run.log, 15, "disjoint", NetSpec((49, 16, 3)), 0.00075, 2000, 0)
    return run, seq


@pytest.fixture(scope="session")
def short_run(env):
    return reinforce_train(env, NetSpec((49, 16, 3), "softmax", 3), 300, 0.00075, 0.999, 3)


def onehot(s, n=49):
    x = np.zeros(n)
    x[s] = 1.0
    return x


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
