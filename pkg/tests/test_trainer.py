import numpy as np
import pytest

from fedbatch.errors import DomainError
from fedbatch.scaling import fit_scaling_law, goodness_of_fit
from fedbatch.trainer import (SyntheticTask, aggregate, convergence_bound, gradient_norm_trajectory,
                              local_sgd, max_learning_rate, quadratic_task, run_until_threshold,
                              sample_round_batch_pairs, stochastic_gradient, train_round,
                              uniform_split, write_train_trace)


def scalar_task(noise=0.0):
    return SyntheticTask(np.array([1.0]), noise, np.array([1.0]))


def test_noiseless_gradient_exact():
    t = quadratic_task(dim=5, noise_var=0.0)
    w = np.arange(5.0)
    assert np.array_equal(stochastic_gradient(t, w, 3, np.random.default_rng(0)), t.grad(w))


def test_gradient_unbiased_and_variance_law():
    t = SyntheticTask(np.ones(4), 4.0, np.zeros(4))
    rng = np.random.default_rng(0)
    g1 = np.array([stochastic_gradient(t, np.zeros(4), 1, rng) for _ in range(100_000)])
    g4 = np.array([stochastic_gradient(t, np.zeros(4), 4, rng) for _ in range(100_000)])
    assert np.all(np.abs(g1.mean(axis=0)) <= 3 * 1.0 / np.sqrt(100_000))
    assert g1.var(axis=0).sum() == pytest.approx(4.0, rel=0.05)
    assert g4.var(axis=0).sum() / g1.var(axis=0).sum() == pytest.approx(0.25, rel=0.05)
    with pytest.raises(DomainError):
        stochastic_gradient(t, np.zeros(4), 0, rng)


def test_local_sgd_examples():
    rng = np.random.default_rng(0)
    assert local_sgd(scalar_task(), [1.0], 1, 1, 0.1, rng)[0] == pytest.approx(0.9)
    assert local_sgd(scalar_task(), [1.0], 2, 1, 0.1, rng)[0] == pytest.approx(0.81)
    assert local_sgd(scalar_task(4.0), [1.0], 3, 1, 0.0, rng)[0] == 1.0


def test_aggregate():
    w = np.array([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]])
    assert np.array_equal(aggregate(w, [1, 5, 9]), w[0])
    assert aggregate([[1.0], [0.0]], [3, 1])[0] == pytest.approx(0.75)
    assert np.array_equal(aggregate([[0.3, 0.7]], [4]), [0.3, 0.7])
    rng = np.random.default_rng(1)
    W, b = rng.normal(size=(5, 3)), rng.integers(1, 9, 5)
    p = rng.permutation(5)
    np.testing.assert_allclose(aggregate(W, b), aggregate(W[p], b[p]), rtol=1e-12)
    with pytest.raises(DomainError):
        aggregate([[1.0], [2.0]], [1])


def test_train_round_matches_scalar_loop():
    t = quadratic_task(dim=3, noise_var=2.0)
    b = np.array([2, 5])
    w = train_round(t, t.w0, b, 3, 0.2, np.random.default_rng(7))
    z = np.random.default_rng(7).standard_normal((2, 3, 3))
    local = []
    for k in range(2):
        x = t.w0.copy()
        for h in range(3):
            x = x - 0.2 * (t.grad(x) + t.noise_scale(b[k]) * z[k, h])
        local.append(x)
    np.testing.assert_allclose(w, aggregate(local, b), rtol=1e-12)


def test_noiseless_equals_centralised_gd():
    t = quadratic_task(dim=4, noise_var=0.0)
    lr = 0.5
    traj = gradient_norm_trajectory(t, [3, 3, 3], 10, local_steps=1, lr=lr,
                                    rng=np.random.default_rng(0))
    w = t.w0.copy()
    for n in range(10):
        g = t.grad(w)
        assert traj[n] == pytest.approx(float(g @ g), rel=1e-12)
        w = w - lr * g


def test_run_until_threshold_trivial_and_batch_free():
    t = quadratic_task(noise_var=0.0)
    g0 = float(t.grad(t.w0) @ t.grad(t.w0))
    r = run_until_threshold(t, 2, lambda n: [1, 1], g0 * 2, 100, rng=np.random.default_rng(0))
    assert r.converged and r.rounds_used == 1
    a = run_until_threshold(t, 2, lambda n: [5, 5], 1e-3, 5000, rng=np.random.default_rng(0))
    b = run_until_threshold(t, 2, lambda n: [50, 50], 1e-3, 5000, rng=np.random.default_rng(1))
    assert a.rounds_used == b.rounds_used
    np.testing.assert_array_equal(a.gradient_norm_history, b.gradient_norm_history)
    assert len(a.gradient_norm_history) == a.rounds_used


def test_unconverged_flag():
    t = quadratic_task(noise_var=4.0)
    r = run_until_threshold(t, 2, lambda n: [1, 1], 1e-9, 5, rng=np.random.default_rng(0))
    assert not r.converged and r.rounds_used == 5
    with pytest.raises(DomainError):
        run_until_threshold(t, 2, lambda n: [1, 1], 0.0, 5, rng=np.random.default_rng(0))
    with pytest.raises(DomainError):
        run_until_threshold(t, 2, lambda n: [1], 1.0, 5, rng=np.random.default_rng(0))


def test_learning_rate_cap():
    assert max_learning_rate(1.0, 1) == 1.0
    assert max_learning_rate(1.0, 2) == pytest.approx(0.41421, abs=1e-5)
    assert max_learning_rate(2.0, 2) == pytest.approx(0.20711, abs=1e-5)


def test_bound_examples():
    t = SyntheticTask(np.array([1.0]), 4.0, np.array([np.sqrt(2.0)]))  # F(w0) - F* = 1
    assert convergence_bound(t, 10, 2, 40, 50, 0.1) == pytest.approx(0.225)
    assert convergence_bound(t, 10, 1, 40, 50, 0.1) == pytest.approx(2 / 5 + 0.1 * 4 / 40)
    far = convergence_bound(t, 10, 2, 1e12, 50, 0.1)
    assert far == pytest.approx(2 / (0.1 * 50 * 2), rel=1e-9)
    with pytest.raises(DomainError):
        convergence_bound(t, 10, 2, 40, 50, 0.5)


def test_uniform_split():
    assert list(uniform_split(25, 4)) == [7, 6, 6, 6]
    with pytest.raises(DomainError):
        uniform_split(3, 4)


def test_sample_pairs_deterministic_and_zero_noise():
    t = quadratic_task(noise_var=4.0)
    kw = dict(devices=4, local_steps=2, lr=0.35, max_rounds=2000)
    a = sample_round_batch_pairs(t, [8, 32], 3, 0.05, np.random.default_rng(5), **kw)
    b = sample_round_batch_pairs(t, [8, 32], 3, 0.05, np.random.default_rng(5), **kw)
    assert a == b
    flat = sample_round_batch_pairs(quadratic_task(noise_var=0.0), [8, 32, 64], 2, 0.05,
                                    np.random.default_rng(0), **kw)
    assert len({s.rounds for s in flat}) == 1
    assert fit_scaling_law(flat, 0.05).beta == 0.0


def test_pipeline_fit_quality():
    t = quadratic_task(noise_var=4.0)
    lr = 0.9 * max_learning_rate(1.0, 2)
    s = sample_round_batch_pairs(t, [20, 40, 80, 160, 320], 20, 0.05, np.random.default_rng(0),
                                 devices=10, local_steps=2, lr=lr)
    law = fit_scaling_law(s, 0.05)
    assert goodness_of_fit(law, s) >= 0.9


def test_trace_csv(tmp_path):
    t = quadratic_task(noise_var=1.0)
    r = run_until_threshold(t, 2, lambda n: [2, 2], 0.5, 50, rng=np.random.default_rng(0))
    write_train_trace(tmp_path / "t.csv", r, [1.0] * r.rounds_used)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "round,grad_norm_sq,cumulative_latency"
    assert len(lines) == r.rounds_used + 1
