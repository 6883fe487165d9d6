import math

import numpy as np
import pytest

from icdenoise.errors import InvalidArgument
from icdenoise.numerics import RngStream
from icdenoise.rates import (
    denominator_bound,
    kernel_trial,
    numerator_bound,
    projector_shape,
    simulate_kernel_bounds,
    simulate_projector,
)
from icdenoise.tasks import Case, TaskSpec

SPHERE = TaskSpec(Case.SPHERE, n=8, d=2, R=1.0, sigmaZ_sq=0.5)


def test_bound_formulas():
    assert denominator_bound(1.0, 0.0, 0.5, 200, 0.1) == 0.0
    assert denominator_bound(1.0, 0.5, 0.5, 200, 0.1) == pytest.approx(math.sinh(1) * math.sqrt(math.log(20) / 100))
    assert numerator_bound(1.0, 0.5, 0.5, 200, 0.1, 3) == pytest.approx(math.e * math.sqrt(math.log(60) / 100))
    assert projector_shape(2, 400, 0.1) == pytest.approx(math.sqrt((2 + math.log(20)) / 400))


def test_zero_query_gives_zero_denominator_deviation(gen):
    coords, ref = gen.normal(size=(3, 50)), gen.normal(size=(3, 500))
    tr = kernel_trial(coords, ref, np.zeros(3), 1.0, 0.5, 0.1)
    assert tr.den_dev == 0.0 and tr.den_bound == 0.0


def test_kernel_bounds_hold_mostly():
    trials = simulate_kernel_bounds(SPHERE, 100, 100, 0.1, RngStream(0), reference_factor=20)
    assert len(trials) == 100
    assert np.mean([t.den_dev >= t.den_bound for t in trials]) <= 0.13
    assert np.mean([t.num_dev >= t.num_bound for t in trials]) <= 0.13


def test_kernel_bounds_need_sphere():
    with pytest.raises(InvalidArgument):
        simulate_kernel_bounds(TaskSpec(Case.LINEAR_SUBSPACE, n=4, d=2), 10, 5, 0.1, RngStream(0))


def test_projector_deviation_shrinks_with_L():
    spec = TaskSpec(Case.LINEAR_SUBSPACE, n=8, d=2)
    a, _ = simulate_projector(spec, 200, 200, RngStream(1))
    b, _ = simulate_projector(spec, 400, 200, RngStream(2))
    assert np.median(a) / np.median(b) >= 1.25
