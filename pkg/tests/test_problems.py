import numpy as np
import pytest

from heavysign import problems as pb
from heavysign.noise import RngStream


def _finite_diff(f, x, h=1e-6):
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def test_quadratic_gradient_and_minimum():
    prob = pb.make_separable_quadratic([1.0, 4.0], [1.0, -1.0])
    x = np.array([0.3, 0.2])
    np.testing.assert_allclose(prob.eval_grad(x), _finite_diff(prob.eval_f, x), rtol=1e-6)
    assert prob.eval_f(prob.x_star) == prob.f_star == 0.0
    np.testing.assert_array_equal(prob.l1, [0.0, 0.0])
    with pytest.raises(ValueError):
        pb.make_separable_quadratic([-1.0], [0.0])
    with pytest.raises(ValueError):
        pb.make_separable_quadratic([1.0, 1.0], [0.0])


def test_cosh_gradient_and_hessian():
    prob = pb.make_generalized_smooth(0.5, 2.0, 3)
    x = np.array([-0.4, 0.0, 0.7])
    np.testing.assert_allclose(prob.eval_grad(x), _finite_diff(prob.eval_f, x), rtol=1e-6)
    # separable, so the Hessian diagonal is the derivative of each gradient coordinate
    fd = [_finite_diff(lambda y, i=i: prob.eval_grad(y)[i], x)[i] for i in range(3)]
    np.testing.assert_allclose(prob.hess_diag(x), fd, rtol=1e-6)
    assert prob.eval_f(np.zeros(3)) == 0.0


def _smoothness_worst(l0, l1, L0, L1):
    """max over a grid of |f'(x+h) - f'(x)| / ((L0 + L1 |f'(x)|) |h|) with |h| <= 1/L1."""
    prob = pb.make_generalized_smooth(l0, l1, 1)
    worst = 0.0
    for x in np.linspace(-8.0 / l1, 8.0 / l1, 161):
        for h in np.linspace(-1.0 / L1, 1.0 / L1, 41):
            if h == 0:
                continue
            gx = prob.eval_grad(np.array([x]))[0]
            gy = prob.eval_grad(np.array([x + h]))[0]
            worst = max(worst, abs(gy - gx) / ((L0 + L1 * abs(gx)) * abs(h)))
    return worst


def test_cosh_recorded_constants_satisfy_smoothness():
    l0, l1 = 1.0, 1.5
    prob = pb.make_generalized_smooth(l0, l1, 1)
    assert _smoothness_worst(l0, l1, prob.l0[0], prob.l1[0]) <= 1.0


def test_cosh_naive_constants_violate_smoothness():
    # (2 l0, l1) is too small: far from the origin the ratio tends to e - 1
    assert _smoothness_worst(1.0, 1.5, 2.0, 1.5) > 1.0


def test_bernoulli_gradient_is_mean_of_sampler():
    prob, sampler = pb.make_bernoulli_regression([1.0, -2.0], 1.0, 2.0)
    x = np.array([3.0, 0.0])
    G = sampler(x, 400_000, RngStream(0, 21))
    np.testing.assert_allclose(G.mean(axis=0), prob.eval_grad(x), atol=0.01)
    np.testing.assert_allclose(prob.eval_grad(x), 0.5 * (x - [1.0, -2.0]))
    assert prob.eval_f(prob.x_star) == pytest.approx(prob.f_star)


def test_bernoulli_noise_second_moment_closed_form():
    # E n^2 = u^2/4 + sigma^2/2 = |grad|^2 + sigma^2/2 at p = 2
    sigma = 1.3
    _, sampler = pb.make_bernoulli_regression([0.0], sigma, 2.0)
    x = np.array([2.0])
    G = sampler(x, 1_000_000, RngStream(0, 22))
    n = G[:, 0] - 1.0
    assert np.mean(n * n) == pytest.approx(1.0 + sigma ** 2 / 2, rel=0.01)


def test_bernoulli_quoted_constants():
    s0, s1 = pb.bernoulli_sigma_constants(1.0, 2.0)
    assert s0 == pytest.approx(1.0)
    assert s1 == pytest.approx(2 ** -0.5 + 1.0)


def test_matrix_quadratic():
    L = np.diag([2.0, 1.0])
    Xs = np.arange(6.0).reshape(2, 3)
    prob = pb.make_matrix_quadratic(L, Xs)
    X = Xs + 1.0
    np.testing.assert_allclose(prob.eval_grad(X), L @ np.ones((2, 3)))
    assert prob.eval_f(X) == pytest.approx(0.5 * 3 * 3.0)
    assert prob.L0_nuclear == pytest.approx(3.0)
    with pytest.raises(ValueError):
        pb.make_matrix_quadratic(np.array([[1.0, 1.0], [0.0, 1.0]]), Xs)
    with pytest.raises(ValueError):
        pb.make_matrix_quadratic(np.diag([1.0, -1.0]), Xs)


def test_make_problem_catalog():
    assert pb.make_problem("quadratic", {"dim": 4}).dim == 4
    assert pb.make_problem("cosh", {"dim": 2, "l0": 1.0, "l1": 1.0}).name == "cosh"
    assert pb.make_problem("bernoulli", {"dim": 3, "sigma": 0.5}).sampler is not None
    mq = pb.make_problem("matquad", {"m": 2, "n": 3, "L": [1.0, 2.0]})
    np.testing.assert_array_equal(mq.L0, np.diag([1.0, 2.0]))
    assert mq.shape == (2, 3)
    with pytest.raises(ValueError):
        pb.make_problem("rosenbrock", {})
    with pytest.raises(ValueError):
        pb.make_problem("matquad", {"m": 2, "n": 2, "L": "ones"})
