import math

import numpy as np
import pytest

from cbxopt import (
    CbxConfig,
    ConfigError,
    EvaluationError,
    InitSpec,
    ObjectiveHandle,
    TerminationSpec,
    evaluate_batch,
    init_ensemble,
    make_objective,
)
from cbxopt.rng import uniform


def test_degenerate_box_puts_everyone_at_the_corner():
    cfg = CbxConfig(dimension=2, n_particles=3, init=InitSpec.uniform_box([0, 0], [0, 0]))
    ens = init_ensemble(cfg, 5)
    np.testing.assert_array_equal(ens.positions, np.zeros((3, 2)))


def test_zero_spread_gaussian():
    cfg = CbxConfig(dimension=2, n_particles=5, init=InitSpec.gaussian([1, 1], 0.0))
    ens = init_ensemble(cfg, 5)
    np.testing.assert_array_equal(ens.positions, np.ones((5, 2)))


def test_uniform_box_mean_against_monte_carlo_oracle():
    cfg = CbxConfig(dimension=2, n_particles=1000, init=InitSpec.uniform_box([-1, -1], [1, 1]), seed=42)
    ens = init_ensemble(cfg, 42)
    # oracle: affine map of the raw init stream, computed independently
    u = uniform(42, "init", 0, 1000, 2)
    np.testing.assert_array_equal(ens.positions, -1.0 + 2.0 * u)
    assert np.all(np.abs(ens.positions.mean(axis=0)) < 0.1)
    assert ens.positions.min() >= -1 and ens.positions.max() <= 1


def test_default_init_box():
    cfg = CbxConfig(dimension=3)
    assert cfg.init.lower == (-3.0,) * 3 and cfg.init.upper == (3.0,) * 3
    ens = init_ensemble(cfg)
    assert ens.positions.shape == (50, 3)
    assert np.all(np.abs(ens.positions) <= 3)


def test_init_is_reproducible_and_seed_sensitive():
    cfg = CbxConfig(dimension=4, n_particles=20)
    a = init_ensemble(cfg, 1).positions
    np.testing.assert_array_equal(a, init_ensemble(cfg, 1).positions)
    assert not np.array_equal(a, init_ensemble(cfg, 2).positions)


def test_inverted_box_is_a_config_error():
    with pytest.raises(ConfigError) as err:
        CbxConfig(dimension=2, init=InitSpec.uniform_box([0, 1], [1, 0]))
    assert err.value.key == "init.lower"


def test_memory_init_records_personal_bests(sphere_obj):
    cfg = CbxConfig(dimension=2, n_particles=6, variant="memory_cbo")
    h = sphere_obj.handle()
    ens = init_ensemble(cfg, 0, h)
    np.testing.assert_array_equal(ens.personal_bests, ens.positions)
    np.testing.assert_array_equal(ens.personal_best_values, (ens.positions**2).sum(1))
    assert h.eval_count == 6


def test_evaluate_batch_sphere():
    h = ObjectiveHandle(lambda x: float(x @ x))
    out = evaluate_batch(h, np.array([[0.0, 0.0], [3.0, 4.0]]))
    np.testing.assert_array_equal(out, [0.0, 25.0])
    assert h.eval_count == 2


def test_evaluate_batch_empty():
    h = ObjectiveHandle(lambda x: 1.0)
    out = evaluate_batch(h, np.empty((0, 3)))
    assert out.shape == (0,) and h.eval_count == 0


def test_ackley_at_origin_is_zero():
    h = make_objective("ackley", 2).handle()
    assert abs(evaluate_batch(h, np.zeros((1, 2)))[0]) < 1e-12


def test_single_point_call_counts_one():
    h = ObjectiveHandle(lambda x: float(np.sum(x)))
    h(np.ones(3))
    h(np.ones(3))
    assert h.eval_count == 2


def test_nan_objective_reports_index():
    def f(x):
        return math.nan if x[0] > 1 else 0.0

    h = ObjectiveHandle(f)
    with pytest.raises(EvaluationError) as err:
        evaluate_batch(h, np.array([[0.0], [0.5], [2.0], [3.0]]))
    assert err.value.index == 2


def test_parallel_evaluation_preserves_order(rs):
    pts = rs.normal(size=(37, 3))
    serial = ObjectiveHandle(lambda x: float(x[0] - 2 * x[1] + x[2] ** 3))
    parallel = ObjectiveHandle(serial.fn)
    np.testing.assert_array_equal(evaluate_batch(serial, pts), evaluate_batch(parallel, pts, workers=4))
    assert parallel.eval_count == 37

    vec = make_objective("rastrigin", 3)
    a, b = vec.handle(), vec.handle()
    np.testing.assert_array_equal(evaluate_batch(a, pts), evaluate_batch(b, pts, workers=5))
    assert b.eval_count == 37


@pytest.mark.parametrize(
    "kwargs, key",
    [
        (dict(alpha=-1.0), "alpha"),
        (dict(lam=0.0), "lam"),
        (dict(sigma=-0.1), "sigma"),
        (dict(dt=0.0), "dt"),
        (dict(n_particles=0), "n_particles"),
        (dict(batch_size=51), "batch_size"),
        (dict(batch_size=0), "batch_size"),
        (dict(variant="pso"), "variant"),
        (dict(noise="pink"), "noise"),
        (dict(seed=-3), "seed"),
        (dict(kernel_width=0.0), "kernel_width"),
        (dict(termination=TerminationSpec(max_iterations=-1)), "max_iterations"),
    ],
)
def test_config_invariants(kwargs, key):
    with pytest.raises(ConfigError) as err:
        CbxConfig(dimension=2, **kwargs)
    assert err.value.key == key


def test_memory_defaults_follow_lambda_and_sigma():
    cfg = CbxConfig(dimension=2, lam=2.0, sigma=0.3)
    assert cfg.memory_drift == pytest.approx(0.8)
    assert cfg.memory_sigma == 0.3
