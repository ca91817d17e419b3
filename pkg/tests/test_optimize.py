import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brushopt.morphology import is_feasible, make_brush
from brushopt.optimize import (
    AdamState,
    NonFiniteGradientError,
    OptimizeConfig,
    TransformConfig,
    adam_step,
    design_hash,
    estimator,
    init_latent,
    latent_gradient,
    reward_array,
    run_optimization,
    ste_backward,
    success_curve,
    symmetrize,
    transform,
    Trajectory,
    StepRecord,
)
from brushopt.problems import Evaluation, standard_problem

CIRCLE3 = make_brush("circle", 3)


def test_transform_range_and_constant_input():
    cfg = TransformConfig(CIRCLE3, 2.0)
    rng = np.random.default_rng(0)
    y = transform(rng.normal(size=(12, 12)), cfg)
    assert np.all(np.abs(y) < 1)
    np.testing.assert_array_equal(transform(np.zeros((5, 5)), cfg), 0)
    # interior of a constant latent sums over the whole footprint
    y = transform(np.full((9, 9), 0.1), cfg)
    assert y[4, 4] == pytest.approx(np.tanh(2.0 * 0.1 * CIRCLE3.footprint.sum()))


def test_transform_rejects_bad_input():
    cfg = TransformConfig(CIRCLE3)
    with pytest.raises(ValueError):
        transform(np.array([[np.nan]]), cfg)
    with pytest.raises(ValueError):
        TransformConfig(CIRCLE3, 0.0)
    with pytest.raises(ValueError):
        TransformConfig(CIRCLE3, 1.0, ("radial",))


def test_estimator_equals_transform():
    cfg = TransformConfig(make_brush("notched", 4), 3.0)
    t = np.random.default_rng(1).normal(size=(10, 10))
    np.testing.assert_array_equal(estimator(t, cfg), transform(t, cfg))


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.sampled_from(["circle:3", "circle:5", "notched:4"]), st.floats(2, 8))
def test_ste_backward_matches_finite_differences(seed, brush, beta):
    from brushopt.morphology import parse_brush

    cfg = TransformConfig(parse_brush(brush), beta)
    rng = np.random.default_rng(seed)
    theta = 0.3 * rng.normal(size=(16, 16))
    up = rng.normal(size=(16, 16))
    g = ste_backward(up, theta, cfg)
    h = 1e-6
    for _ in range(8):
        i, j = rng.integers(0, 16, 2)
        tp, tm = theta.copy(), theta.copy()
        tp[i, j] += h
        tm[i, j] -= h
        fd = (np.sum(up * estimator(tp, cfg)) - np.sum(up * estimator(tm, cfg))) / (2 * h)
        assert abs(g[i, j] - fd) <= 1e-6 * max(abs(fd), np.abs(g).max())


def test_ste_shape_mismatch():
    with pytest.raises(ValueError):
        ste_backward(np.zeros((3, 3)), np.zeros((4, 4)), TransformConfig(CIRCLE3))


@given(st.integers(0, 10_000), st.sampled_from([("horizontal",), ("vertical",), ("diagonal",), ("horizontal", "vertical"),
                                                 ("horizontal", "vertical", "diagonal")]))
def test_symmetrize_is_symmetric_and_idempotent(seed, sym):
    t = np.random.default_rng(seed).normal(size=(7, 7))
    s = symmetrize(t, sym)
    if "horizontal" in sym:
        np.testing.assert_array_equal(s, s[:, ::-1])
    if "vertical" in sym:
        np.testing.assert_array_equal(s, s[::-1, :])
    if "diagonal" in sym:
        np.testing.assert_array_equal(s, s.T)
    np.testing.assert_array_equal(symmetrize(s, sym), s)
    assert s.sum() == pytest.approx(t.sum())


def test_symmetrize_is_self_adjoint():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(2, 6, 6))
    sym = ("horizontal", "diagonal")
    assert np.sum(symmetrize(a, sym) * b) == pytest.approx(np.sum(a * symmetrize(b, sym)))


def test_symmetrize_errors():
    with pytest.raises(ValueError):
        symmetrize(np.zeros((3, 4)), ("diagonal",))
    with pytest.raises(ValueError):
        symmetrize(np.zeros((3, 3)), ("spiral",))


def test_symmetrize_commutes_with_transform_for_symmetric_latent():
    cfg = TransformConfig(make_brush("circle", 5), 3.0)
    lat = np.random.default_rng(2).normal(size=(11, 11))
    lat = symmetrize(lat, ("horizontal", "vertical", "diagonal"))
    y = transform(lat, cfg)
    np.testing.assert_allclose(symmetrize(y, ("horizontal", "vertical", "diagonal")), y, atol=1e-14)


def test_latent_gradient_matches_finite_differences_of_smooth_path():
    cfg = TransformConfig(CIRCLE3, 2.0, ("diagonal",))
    rng = np.random.default_rng(4)
    lat = 0.2 * rng.normal(size=(10, 10))
    up = rng.normal(size=(10, 10))

    def f(l):
        th = reward_array(l, cfg)
        return np.sum(up * estimator(th, cfg))

    g = latent_gradient(up, lat, reward_array(lat, cfg), cfg)
    h = 1e-6
    for i, j in [(0, 0), (3, 7), (9, 2)]:
        lp, lm = lat.copy(), lat.copy()
        lp[i, j] += h
        lm[i, j] -= h
        assert g[i, j] == pytest.approx((f(lp) - f(lm)) / (2 * h), rel=1e-6, abs=1e-9)


def test_adam_first_step_moves_by_lr():
    st_ = AdamState.zeros((3,))
    g = np.array([2.0, -0.5, 1e-3])
    st2, lat = adam_step(st_, g, np.zeros(3))
    np.testing.assert_allclose(lat, -0.01 * np.sign(g), rtol=1e-4)
    assert st2.step == 1


def test_adam_zero_gradient_no_move():
    st_, lat = adam_step(AdamState.zeros((4,)), np.zeros(4), np.ones(4))
    np.testing.assert_array_equal(lat, 1)


def test_adam_rejects_nonfinite():
    with pytest.raises(NonFiniteGradientError):
        adam_step(AdamState.zeros((2,)), np.array([np.inf, 0]), np.zeros(2))
    with pytest.raises(ValueError):
        adam_step(AdamState.zeros((2,)), np.zeros(3), np.zeros(2))


def test_adam_matches_reference_recurrence():
    rng = np.random.default_rng(0)
    grads = rng.normal(size=(5, 4))
    st_ = AdamState.zeros((4,))
    lat = np.zeros(4)
    m = v = np.zeros(4)
    ref = np.zeros(4)
    for t, g in enumerate(grads, 1):
        st_, lat = adam_step(st_, g, lat)
        m = 0.667 * m + 0.333 * g
        v = 0.9 * v + 0.1 * g * g
        ref = ref - 0.01 * (m / (1 - 0.667**t)) / (np.sqrt(v / (1 - 0.9**t)) + 1e-8)
    np.testing.assert_allclose(lat, ref, rtol=1e-12)


def test_init_latent_gives_all_solid_and_differs_by_seed():
    from brushopt.generator import generate

    cfg = TransformConfig(make_brush("circle", 5), 4.0, ("diagonal",))
    l0, b0 = init_latent((24, 24), cfg, 0)
    l1, b1 = init_latent((24, 24), cfg, 1)
    assert np.all(generate(reward_array(l0, cfg), cfg.brush, symmetry=cfg.symmetry) == 1)
    assert np.all(generate(reward_array(l1, cfg), cfg.brush, symmetry=cfg.symmetry) == 1)
    assert not np.array_equal(l0, l1)
    np.testing.assert_array_equal(init_latent((24, 24), cfg, 0)[0], l0)


class QuadraticProblem:
    """Cheap stand-in: loss is the squared distance to a target design."""

    symmetry = ()

    def __init__(self, shape=(16, 16), seed=0):
        self.design_shape = shape
        rng = np.random.default_rng(seed)
        self.target = np.where(rng.random(shape) < 0.5, 1.0, -1.0)

    def evaluate(self, x):
        d = x - self.target
        loss = float(np.sum(d**2)) / d.size
        return Evaluation(loss, 2 * d / d.size, {}, loss < 0.5)


def test_run_budget_zero_evaluates_initial_design():
    cfg = OptimizeConfig(brush="circle:3", budget=0)
    traj = run_optimization(cfg, QuadraticProblem())
    assert len(traj.records) == 1
    assert np.all(traj.designs[0] == 1)


def test_run_is_deterministic_and_feasible():
    cfg = OptimizeConfig(brush="circle:3", budget=15, seed=3)
    a = run_optimization(cfg, QuadraticProblem())
    b = run_optimization(cfg, QuadraticProblem())
    assert [r.design_hash for r in a.records] == [r.design_hash for r in b.records]
    np.testing.assert_array_equal(a.losses, b.losses)
    assert a.all_feasible
    assert all(is_feasible(d, make_brush("circle", 3)) for d in a.designs)
    assert a.losses.min() < a.losses[0]


def test_run_stops_on_success():
    class Always(QuadraticProblem):
        def evaluate(self, x):
            ev = super().evaluate(x)
            return dataclasses.replace(ev, spec_ok=True)

    traj = run_optimization(OptimizeConfig(brush="circle:3", budget=10, stop_on_success=True), Always())
    assert len(traj.records) == 1 and traj.first_success == 0


def test_run_records_solver_failure():
    from brushopt.fdfd import SolverError

    class Flaky(QuadraticProblem):
        calls = 0

        def evaluate(self, x):
            self.calls += 1
            if self.calls == 3:
                raise SolverError("singular")
            return super().evaluate(x)

    traj = run_optimization(OptimizeConfig(brush="circle:3", budget=10), Flaky())
    assert traj.failed and "singular" in traj.error
    assert len(traj.records) == 2


def test_config_round_trip_and_validation(tmp_path):
    cfg = OptimizeConfig(problem="bend", pitch_nm=20, brush="notched:4", symmetry=["diagonal"], budget=5)
    path = tmp_path / "c.json"
    import json

    path.write_text(json.dumps(cfg.to_dict()))
    assert OptimizeConfig.load(path) == cfg
    with pytest.raises(ValueError):
        OptimizeConfig.from_dict({"budget": 3, "learning_rate": 1})
    with pytest.raises(ValueError):
        OptimizeConfig(budget=-1)
    with pytest.raises(ValueError):
        OptimizeConfig(schema_version=2)
    with pytest.raises(ValueError):
        OptimizeConfig(brush="hexagon:3")


def test_success_curve():
    def traj(first):
        t = Trajectory()
        for k in range(5):
            t.records.append(StepRecord(k, 1.0, first is not None and k >= first, "", True, {}))
        return t

    curve = success_curve([traj(1), traj(3), traj(None), traj(None)], 4)
    np.testing.assert_allclose(curve, [0, 0.25, 0.25, 0.5, 0.5])


def test_design_hash_distinguishes():
    a = np.ones((4, 4), np.int8)
    b = a.copy()
    b[0, 0] = -1
    assert design_hash(a) != design_hash(b) and design_hash(a) == design_hash(a.copy())


@pytest.mark.slow
def test_short_bend_run_is_deterministic():
    cfg = OptimizeConfig(problem="bend", pitch_nm=40, brush="circle:3", budget=3, seed=1)
    a = run_optimization(cfg)
    b = run_optimization(cfg)
    assert [r.design_hash for r in a.records] == [r.design_hash for r in b.records]
    np.testing.assert_array_equal(a.losses, b.losses)
    assert a.all_feasible
