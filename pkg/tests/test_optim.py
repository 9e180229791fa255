import numpy as np
import pytest

from heavysign import optim as op
from heavysign.linalg import msign
from heavysign.noise import MatrixNoiseMode, NoiseSpec, RngStream
from heavysign.problems import VectorProblem, make_matrix_quadratic, make_separable_quadratic


def _grads(shape, n, seed):
    return np.random.default_rng(seed).standard_normal((n,) + shape)


def _drive(opt, x1, grads, hp):
    st = op.init_state(opt, x1)
    xs = []
    for g in grads:
        st = op.STEPS[opt](st, g, hp)
        xs.append((st.X if hasattr(st, "X") else st.x).copy())
    return np.array(xs), st


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        op.HyperParams(eta=0.0)
    with pytest.raises(ValueError):
        op.HyperParams(eta=0.1, beta=1.5)
    with pytest.raises(ValueError):
        op.HyperParams(eta=0.1, lam=-1.0)
    with pytest.raises(ValueError):
        op.HyperParams(eta=0.1, batch=0)
    with pytest.raises(ValueError):
        op.HyperParams(eta=0.1, msign_mode="svd")


def test_signsgd_first_step_uses_gradient_as_momentum():
    hp = op.HyperParams(eta=0.1, beta=0.9)
    st = op.signsgd_step(op.init_state("signsgd", [1.0, 1.0, 1.0]), np.array([2.0, -3.0, 0.0]), hp)
    np.testing.assert_allclose(st.m, [2.0, -3.0, 0.0])
    np.testing.assert_allclose(st.x, [0.9, 1.1, 1.0])
    st = op.signsgd_step(st, np.array([-30.0, 0.0, 1.0]), hp)
    np.testing.assert_allclose(st.m, [0.9 * 2 - 3.0, -2.7, 0.1])
    np.testing.assert_allclose(st.x, [1.0, 1.2, 0.9])


def test_lion_hand_step_with_decay():
    hp = op.HyperParams(eta=0.1, beta1=0.5, beta2=0.9, lam=2.0)
    st = op.init_state("lion", [1.0, -1.0])
    st = op.lion_step(st, np.array([1.0, 1.0]), hp)
    # m_0 = g_1, so v = g_1; x <- x - eta sign(v) - eta lam x
    np.testing.assert_allclose(st.x, [1.0 - 0.1 - 0.2, -1.0 - 0.1 + 0.2])
    st2 = op.lion_step(st, np.array([-3.0, 0.5]), hp)
    v = 0.5 * np.array([1.0, 1.0]) + 0.5 * np.array([-3.0, 0.5])
    np.testing.assert_allclose(st2.x, st.x - 0.1 * np.sign(v) - 0.2 * st.x)
    np.testing.assert_allclose(st2.m, 0.9 * np.array([1.0, 1.0]) + 0.1 * np.array([-3.0, 0.5]))


def test_nsgd_zero_momentum_skips():
    hp = op.HyperParams(eta=0.1, beta=0.5)
    st = op.nsgd_step(op.init_state("nsgd", [1.0]), np.array([0.0]), hp)
    assert st.skipped
    np.testing.assert_array_equal(st.x, [1.0])


def test_muon_accumulates_without_damping():
    hp = op.HyperParams(eta=0.1, beta=0.5)
    G1, G2 = np.eye(2), np.diag([1.0, -4.0])
    st = op.muon_step(op.init_state("muon", np.zeros((2, 2))), G1, hp)
    np.testing.assert_array_equal(st.B, G1)
    st = op.muon_step(st, G2, hp)
    np.testing.assert_allclose(st.B, 0.5 * G1 + G2)
    np.testing.assert_allclose(st.X, -0.1 * np.eye(2) - 0.1 * msign(0.5 * G1 + G2))


def test_muonlight_hand_step():
    hp = op.HyperParams(eta=0.1, beta1=0.3, beta2=0.6, lam=1.0)
    X1 = np.array([[1.0, 0.0], [0.0, 2.0]])
    G = np.array([[0.0, 1.0], [2.0, 0.0]])
    st = op.muonlight_step(op.init_state("muonlight", X1), G, hp)
    np.testing.assert_allclose(st.B, G)
    np.testing.assert_allclose(st.X, X1 - 0.1 * msign(1.3 * G) - 0.1 * X1)


def test_newton_schulz_mode_close_to_exact():
    g = _grads((4, 4), 20, 5)
    exact, _ = _drive("muon", np.zeros((4, 4)), g, op.HyperParams(eta=0.01, beta=0.9))
    ns, _ = _drive("muon", np.zeros((4, 4)), g,
                   op.HyperParams(eta=0.01, beta=0.9, msign_mode="newton_schulz"))
    assert np.max(np.abs(exact - ns)) < 0.01


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        op.signsgd_step(op.init_state("signsgd", [0.0, 0.0]), np.zeros(3), op.HyperParams(eta=1))
    with pytest.raises(ValueError):
        op.init_state("muon", [0.0])
    with pytest.raises(ValueError):
        op.init_state("adam", [0.0])


# --- reduction equivalences ---------------------------------------------------

def test_lion_equal_betas_no_decay_is_signsgd_bitwise():
    g = _grads((6,), 100, 0)
    x1 = np.linspace(-1, 1, 6)
    a, _ = _drive("lion", x1, g, op.HyperParams(eta=0.01, beta1=0.9, beta2=0.9))
    b, _ = _drive("signsgd", x1, g, op.HyperParams(eta=0.01, beta=0.9))
    assert np.array_equal(a, b)


def test_mnsgd_on_matrices_is_nsgd_on_vectors_bitwise():
    g = _grads((3, 4), 100, 1)
    X1 = np.arange(12.0).reshape(3, 4) / 10
    hp = op.HyperParams(eta=0.01, beta=0.8)
    a, _ = _drive("mnsgd", X1, g, hp)
    b, _ = _drive("nsgd", X1.ravel(), g.reshape(100, -1), hp)
    assert np.array_equal(a.reshape(100, -1), b)


def test_muon_single_column_matches_nsgd_direction():
    g = _grads((5, 1), 100, 2)
    for G in g:
        np.testing.assert_allclose(msign(G)[:, 0], G[:, 0] / np.linalg.norm(G), atol=1e-10)
    a, _ = _drive("muon", np.zeros((5, 1)), g, op.HyperParams(eta=0.01, beta=0.0))
    b, _ = _drive("nsgd", np.zeros(5), g[:, :, 0], op.HyperParams(eta=0.01, beta=0.0))
    np.testing.assert_allclose(a[:, :, 0], b, atol=1e-10)


# --- run ---------------------------------------------------------------------

def _quad(d=4):
    return make_separable_quadratic(np.ones(d), np.zeros(d))


def test_run_records_columns_and_is_reproducible():
    prob = _quad()
    spec = NoiseSpec(p=1.5, sigma0=0.5)
    hp = op.HyperParams(eta=0.01, beta=0.9)
    a = op.run("signsgd", prob, spec, hp, 50, RngStream(3, 1), x1=np.ones(4))
    b = op.run("signsgd", prob, spec, hp, 50, RngStream(3, 1), x1=np.ones(4))
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == ",".join(op.CSV_COLUMNS)
    np.testing.assert_array_equal(a.columns["t"], np.arange(1, 51))
    assert a.native_norm == "l1"
    s = a.summary()
    assert s["defined"] and s["steps"] == 50 and s["min"] <= s["avg"]
    np.testing.assert_allclose(a.columns["grad_l1"][0], 4.0)
    assert np.all(a.columns["step_norm"] == pytest.approx(0.01))


def test_run_without_diagnostics_keeps_native_column():
    prob = make_matrix_quadratic(np.eye(2), np.zeros((2, 3)))
    spec = NoiseSpec(p=2.0, matrix_mode=MatrixNoiseMode(1.0, 0.0))
    hp = op.HyperParams(eta=0.01, beta=0.5)
    full = op.run("muon", prob, spec, hp, 20, RngStream(0, 2), x1=np.ones((2, 3)))
    lite = op.run("muon", prob, spec, hp, 20, RngStream(0, 2), x1=np.ones((2, 3)),
                  record_diagnostics=False)
    assert set(lite.columns) == {"t", "grad_nuclear"}
    np.testing.assert_allclose(lite.native, full.native, rtol=1e-12)


def test_run_zero_steps_and_validation():
    prob = _quad()
    hp = op.HyperParams(eta=0.1)
    rec = op.run("nsgd", prob, NoiseSpec(p=2.0), hp, 0, 0)
    assert rec.summary()["defined"] is False
    with pytest.raises(ValueError):
        op.run("muon", prob, NoiseSpec(p=2.0), hp, 1, 0)
    with pytest.raises(ValueError):
        op.run("nsgd", prob, None, hp, 1, 0)
    with pytest.raises(ValueError):
        op.run("nsgd", prob, NoiseSpec(p=2.0), hp, 1, 0, x1=np.zeros(3))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_run_aborts_on_nonfinite_iterate():
    # constant gradient -1 pushes x upward until it overflows
    prob = VectorProblem(dim=2, eval_f=lambda x: 0.0, eval_grad=lambda x: -np.ones_like(x),
                         l0=np.zeros(2), l1=np.zeros(2), f_star=0.0)
    hp = op.HyperParams(eta=1e308)
    rec = op.run("signsgd", prob, NoiseSpec(p=2.0), hp, 10, 0, x1=np.array([1e308, 1.0]))
    assert rec.aborted_at == 1
    assert rec.columns["t"].size == rec.aborted_at


def test_run_counts_skipped_steps_at_optimum():
    prob = _quad(2)
    rec = op.run("nsgd", prob, NoiseSpec(p=2.0), op.HyperParams(eta=0.1), 5, 0, x1=np.zeros(2))
    assert rec.skipped_steps == 5


def test_batching_reduces_noise():
    prob = _quad(1)
    spec = NoiseSpec(p=2.0, sigma0=1.0)
    one = op.run("nsgd", prob, spec, op.HyperParams(eta=1e-9, batch=1), 200, 0, x1=np.ones(1))
    many = op.run("nsgd", prob, spec, op.HyperParams(eta=1e-9, batch=64), 200, 0, x1=np.ones(1))
    assert np.mean(many.columns["eps_norm"]) < np.mean(one.columns["eps_norm"]) / 3
