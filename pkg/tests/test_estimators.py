import numpy as np
import pytest
from sklearn.base import clone

from brushopt.estimators import FeasibleGenerator, check_reward
from brushopt.morphology import is_feasible, make_brush


def test_generator_transform_and_score():
    rng = np.random.default_rng(0)
    gen = FeasibleGenerator("circle:3").fit()
    stack = rng.uniform(-1, 1, (3, 16, 16))
    out = gen.transform(stack)
    assert out.shape == stack.shape
    assert all(is_feasible(d, make_brush("circle", 3)) for d in out)
    assert gen.score(stack) == 1.0
    np.testing.assert_array_equal(gen.transform(stack[0]), out[0])


def test_params_and_clone():
    gen = FeasibleGenerator("notched:4", symmetry=("diagonal",))
    assert clone(gen).get_params() == gen.get_params()


def test_transform_requires_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        FeasibleGenerator().transform(np.zeros((4, 4)))


def test_reward_validation():
    with pytest.raises(ValueError):
        check_reward(np.zeros(4))
    with pytest.raises(ValueError):
        check_reward(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        FeasibleGenerator("blob:3").fit()
