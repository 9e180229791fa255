import math

import numpy as np
import pytest

from heavysign import theory as th


def _inp(**kw):
    base = dict(delta_f=1.0, l0_norm=1.0, l1_norm=0.0, sigma0_norm=2.0, sigma1_norm=0.0,
                p=2.0, T=100)
    base.update(kw)
    return th.TheoryInputs(**base)


def test_signsgd_worked_example():
    r = th.signsgd_params(_inp())
    assert r.B == 1
    assert r.beta == pytest.approx(0.95, abs=1e-12)
    assert r.eta == pytest.approx(math.sqrt(2 * 0.05 / 900), abs=1e-12)
    assert r.eta == pytest.approx(1.0541e-2, abs=1e-6)


def test_lion_beta1_range_and_lambda_max_examples():
    lo, hi = th.lion_beta1_range(0.96, 2.0)
    assert (lo, hi) == (pytest.approx(0.8, abs=1e-12), 1.0)
    lam = th.lambda_max(1e-4, 1000)
    assert lam == pytest.approx((1 - 2 ** -0.001) / 1e-4, rel=1e-12)
    assert lam == pytest.approx(6.93, abs=5e-3)


def test_muonlight_beta1_range_example_and_clipping():
    assert th.muonlight_beta1_range(0.9) == (pytest.approx(0.75), 1.0)
    assert th.muonlight_beta1_range(0.1) == (0.0, pytest.approx(0.25))


def test_lambda_max_keeps_decay_factor_above_half():
    eta, T = 0.01, 500
    assert (1 - eta * th.lambda_max(eta, T)) ** T == pytest.approx(0.5, rel=1e-12)


def test_batch_grows_with_sigma1():
    assert th.signsgd_params(_inp(sigma1_norm=0.0)).B == 1
    p = 1.5
    B = th.signsgd_params(_inp(sigma1_norm=0.1, p=p)).B
    assert B == math.ceil((32 * math.sqrt(2) * 0.1) ** (p / (p - 1)))
    assert th.lion_params(_inp(sigma1_norm=0.1, p=p)).B > B
    assert th.muonlight_params(_inp(sigma1_norm=0.1, p=p)).B > th.muon_params(
        _inp(sigma1_norm=0.1, p=p)).B


def test_l1_branch_limits_step():
    r = th.signsgd_params(_inp(l1_norm=100.0))
    assert r.eta == pytest.approx((1 - r.beta) / 32 / 100.0)


def test_noiseless_momentum_is_zero():
    r = th.muon_params(_inp(sigma0_norm=0.0))
    assert r.beta == 0.0
    assert r.eta == pytest.approx(math.sqrt(0.4 / 100))


def test_beta_clamped_at_zero_for_short_horizons():
    assert th.signsgd_params(_inp(T=1, sigma0_norm=0.01)).beta == 0.0


def test_step_unbounded_raises():
    with pytest.raises(ValueError):
        th.signsgd_params(_inp(l0_norm=0.0, l1_norm=0.0))


def test_decay_params_consistency():
    inp = _inp(T=1000)
    r = th.lion_params(inp)
    assert r.lambda_max == pytest.approx(th.lambda_max(r.eta, 1000))
    assert r.beta1_range == th.lion_beta1_range(r.beta2, 2.0)
    d = r.to_dict()
    assert isinstance(d["beta1_range"], list)


def test_inputs_validation():
    with pytest.raises(ValueError):
        _inp(p=1.0)
    with pytest.raises(ValueError):
        _inp(p=2.5)
    with pytest.raises(ValueError):
        _inp(T=0)
    with pytest.raises(ValueError):
        _inp(delta_f=-1.0)
    with pytest.raises(ValueError):
        _inp(sigma0_norm=math.inf)


def test_predicted_exponent():
    assert th.predicted_rate_exponent(2.0) == 0.25
    assert th.predicted_rate_exponent(1.5) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        th.predicted_rate_exponent(1.0)


def test_complexity_ratios_dense_vs_sparse():
    d = 16
    dense = [np.ones(d)]
    sparse = [np.eye(d)[0]]
    R_dense, r1, r2 = th.complexity_ratios(np.ones(d), np.ones(d), dense, 2.0)
    # phi_inf(l0) = d, phi_2(sigma0)^2 = d, phi_2(grad)^2 = d
    assert (r1, r2) == (pytest.approx(1.0), pytest.approx(1.0))
    R_sparse, _, _ = th.complexity_ratios(np.ones(d), np.ones(d), sparse, 2.0)
    assert R_sparse > R_dense


def test_complexity_ratios_matrix_uses_spectral_density():
    R, r1, r2 = th.complexity_ratios(np.eye(4), np.eye(4), [np.eye(4)], 1.5)
    assert r1 == pytest.approx(1.0)
    assert r2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        th.complexity_ratios(np.eye(2), np.eye(2), [], 2.0)


def test_complexity_table_shape():
    assert len(th.COMPLEXITY_TABLE) == 4
    assert all(len(row) == 5 for row in th.COMPLEXITY_TABLE)
