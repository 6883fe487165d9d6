import numpy as np
import pytest

from icdenoise.numerics import RngStream
from icdenoise.tasks import Case, TaskSpec, sample_dataset


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


@pytest.fixture
def linear_spec():
    return TaskSpec(Case.LINEAR_SUBSPACE, n=16, d=8, sigma0_sq=2.0, sigmaZ_sq=1.0)


@pytest.fixture
def sphere_spec():
    return TaskSpec(Case.SPHERE, n=16, d=8, R=1.0, sigmaZ_sq=0.1)


@pytest.fixture
def mixture_spec():
    return TaskSpec(Case.GAUSSIAN_MIXTURE, n=16, K=8, sigma0_sq=0.02, sigmaZ_sq=0.1)


def small_batch(case, N=6, L=12, n=5, seed=0, **kw):
    d = kw.pop("d", 2)
    spec = TaskSpec(case, n=n, d=d, **kw)
    return sample_dataset(spec, N, L, RngStream(seed, (99,)))


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
