import numpy as np
import pytest

from benign_lab.mixture_data import MixtureSpec, corrupt_labels, sample_clean
from benign_lab.shallow_net import ActivationSpec, init_params

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(cid, passed, detail=""):
    ACCEPTANCE[cid] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def act():
    return ActivationSpec(0.5, 2.0)


@pytest.fixture
def small_problem(act):
    spec = MixtureSpec.gaussian(16, 4.0, eta=0.25, noise_policy="fixed-count")
    ds = corrupt_labels(sample_clean(spec, 8, 3), spec, 3)
    params = init_params(4, 16, 0.5, act, 3)
    return spec, ds, params


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
