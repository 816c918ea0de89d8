import numpy as np
import pytest

from grantfree.amp import amp_jadce
from grantfree.bigamp import (
    EstimatorState,
    JointPriors,
    damp,
    estimate_h,
    estimate_x,
    estimate_z,
    initial_state,
    joint_estimate,
    onsager_gain,
    relative_change,
    sweep,
    update_activity,
)
from grantfree.errors import NumericalFailure
from grantfree.model import complex_normal
from grantfree.phy import get_constellation


QPSK = get_constellation("qpsk").points


def _problem(rng, M, N, K, L, Ld, noise_var=0.0):
    active = np.sort(rng.choice(N, K, replace=False))
    H = np.zeros((M, N), complex)
    H[:, active] = complex_normal(rng, (M, K))
    X_p = complex_normal(rng, (N, L))
    sym = rng.integers(0, 4, (N, Ld))
    X_d = QPSK[sym] * np.isin(np.arange(N), active)[:, None]
    Y = H @ np.concatenate([X_p, X_d], axis=1)
    if noise_var:
        Y = Y + np.sqrt(noise_var) * complex_normal(rng, Y.shape)
    return H, X_p, X_d, sym, active, Y


def test_damp_identity_and_blend():
    a, b = np.array([1.0, 2.0]), np.array([3.0, 5.0])
    assert damp(a, b, 1.0) is a
    assert damp(a, None, 0.6) is a
    assert np.allclose(damp(a, b, 0.6), 0.6 * a + 0.4 * b)


def test_onsager_gain_clipped():
    g = onsager_gain(np.array([1.0, 1.0, 0.0, 2.0]), np.array([0.0, 3.0, 1.0, 1.0]))
    assert np.array_equal(g, [1.0, 0.0, 0.0, 0.5])


def test_update_activity_example():
    assert update_activity(1.0, 0.5, 0.5) == pytest.approx(0.75)


def test_relative_change():
    assert relative_change(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_change(np.ones(3), np.zeros(3)) == np.inf
    assert relative_change(np.array([2.0]), np.array([1.0])) == pytest.approx(1.0)


def test_joint_priors_validation():
    eta = np.full((2, 3, 4), 0.25)
    ok = dict(eta=eta, lam=np.full(2, 0.5), h_init=np.zeros((1, 2)),
              v_h_init=np.ones((1, 2)), rho_bar_init=np.full(2, 0.5))
    JointPriors(**ok)
    with pytest.raises(ValueError):
        JointPriors(**{**ok, "eta": eta * 2})
    with pytest.raises(ValueError):
        JointPriors(**{**ok, "lam": np.array([0.5, 1.5])})


def _x_state(s0, prec, eta_len=1):
    """Single user, single antenna state whose x-likelihood is CN(s0, 1/prec)."""
    return EstimatorState(
        h_hat=np.ones((1, 1), complex), v_h=np.zeros((1, 1)),
        x_hat=np.zeros((1, eta_len), complex), v_x=np.ones((1, eta_len)),
        s_hat=np.full((1, eta_len), s0 * prec, complex), v_s=np.full((1, eta_len), prec),
        rho_bar=np.ones(1), lam=np.ones(1))


def test_estimate_x_uninformative_likelihood():
    st = _x_state(0.0, 0.0)
    eta = np.full((1, 1, 4), 0.25)
    estimate_x(st, eta, np.ones(1), QPSK)
    assert np.allclose(st.eta_post, 0.25)
    assert abs(st.x_hat[0, 0]) < 1e-15


def test_estimate_x_point_mass_prior():
    st = _x_state(0.3 + 0.1j, 1.0)
    eta = np.zeros((1, 1, 4))
    eta[..., 2] = 1.0
    estimate_x(st, eta, np.array([0.7]), QPSK)
    assert st.x_hat[0, 0] == pytest.approx(0.7 * QPSK[2])
    assert st.v_x[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_estimate_x_qpsk_brute_force():
    s0 = QPSK[1]
    st = _x_state(s0, 1.0)
    eta = np.full((1, 1, 4), 0.25)
    estimate_x(st, eta, np.ones(1), QPSK)
    assert st.p_x[0, 0] == pytest.approx(s0) and st.q_x[0, 0] == pytest.approx(1.0)
    w = np.exp(-np.abs(s0 - QPSK) ** 2)
    w /= w.sum()
    assert np.allclose(st.eta_post[0, 0], w, atol=1e-12)
    assert st.x_hat[0, 0] == pytest.approx(np.sum(w * QPSK))
    assert np.allclose(st.eta_post.sum(axis=-1), 1.0)


def test_estimate_z_variance_contraction():
    rng = np.random.default_rng(0)
    H, X_p, X_d, _, _, Y = _problem(rng, 6, 10, 3, 5, 7, noise_var=0.1)
    st = initial_state(6, 12, np.zeros((6, 10)), np.full((6, 10), 0.3), np.full(10, 0.3),
                       np.full(10, 0.3), 7)
    estimate_z(st, Y, X_p, 0.1)
    assert np.all(st.v_z <= st.v_p + 1e-15) and np.all(st.v_z <= 0.1 + 1e-15)
    # data columns start with zero symbols and unit variance
    assert np.allclose(st.m_p, 0)
    assert np.allclose(st.v_p[:, 5:], 0.3 * 10)


def test_normalized_symbol_posteriors_each_sweep():
    rng = np.random.default_rng(1)
    M, N, K, L, Ld = 8, 12, 3, 6, 10
    H, X_p, X_d, _, active, Y = _problem(rng, M, N, K, L, Ld, noise_var=0.01)
    lam = np.full(N, K / N)
    eta = np.full((N, Ld, 4), 0.25)
    st = initial_state(M, L + Ld, np.zeros((M, N)), np.tile(lam, (M, 1)), lam, lam, Ld)
    for _ in range(15):
        sweep(st, Y, X_p, np.ones(N), 0.01, eta, QPSK, damping=0.6)
        assert np.allclose(st.eta_post.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(st.v_x >= 0) and np.all(st.v_h >= 0)


def _state_at_truth(H, X_d, active, M, T):
    N = H.shape[1]
    act = np.isin(np.arange(N), active).astype(float)
    return EstimatorState(
        h_hat=H.copy(), v_h=np.zeros_like(H, dtype=float), x_hat=X_d.copy(),
        v_x=np.zeros(X_d.shape), s_hat=np.zeros((M, T), complex),
        rho_bar=act, lam=act)


@pytest.mark.parametrize("seed", range(20))
def test_ground_truth_is_a_fixed_point(seed):
    rng = np.random.default_rng(seed)
    M, N, K, L, Ld = 8, 16, 3, 6, 12
    H, X_p, X_d, sym, active, Y = _problem(rng, M, N, K, L, Ld)
    st = _state_at_truth(H, X_d, active, M, L + Ld)
    eta = np.full((N, Ld, 4), 0.25)
    eta[active] = 0.0
    eta[active[:, None], np.arange(Ld), sym[active]] = 1.0
    eta[~np.isin(np.arange(N), active)] = 0.25
    sweep(st, Y, X_p, np.ones(N), 1e-12, eta, QPSK, damping=1.0)
    assert relative_change(st.h_hat, H) < 1e-6
    assert relative_change(st.x_hat, X_d) < 1e-6


def test_noiseless_all_pilot_recovers_least_squares():
    rng = np.random.default_rng(3)
    M, N, K, L = 4, 2, 1, 8
    H, X_p, _, _, active, Y = _problem(rng, M, N, K, L, 0)
    lam = np.full(N, 0.5)
    priors = JointPriors(np.zeros((N, 0, 4)), lam, np.zeros((M, N)), np.tile(lam, (M, 1)), lam)
    est = joint_estimate(Y, X_p, priors, np.ones(N), 1e-10, QPSK, tol=1e-12, max_iters=200)
    ls = Y @ np.linalg.pinv(X_p)
    assert np.allclose(est.h_hat, ls, atol=1e-4)
    assert est.rho_bar[active[0]] > 0.99
    assert est.rho_bar[1 - active[0]] < 0.01


def test_all_known_symbols_match_pilot_amp():
    """With every symbol known the joint estimator is the pilot-only AMP."""
    rng = np.random.default_rng(4)
    M, N, K, L = 6, 10, 2, 12
    H, X_p, _, _, _, Y = _problem(rng, M, N, K, L, 0, noise_var=0.01)
    lam = np.full(N, K / N)
    beta = np.ones(N)
    priors = JointPriors(np.zeros((N, 0, 4)), lam, np.zeros((M, N)), np.tile(lam * beta, (M, 1)), lam)
    est = joint_estimate(Y, X_p, priors, beta, 0.01, QPSK, tol=0.0, max_iters=25, damping=0.6)
    amp = amp_jadce(Y, X_p, lam, beta, 0.01, max_iters=25, tol=0.0, damping=0.6)
    assert est.iterations == amp.iterations == 25
    assert np.allclose(est.h_hat, amp.h_hat, rtol=1e-12, atol=1e-14)
    assert np.allclose(est.rho_bar, amp.rho_bar, rtol=1e-12)


def test_pinned_data_columns_match_concatenated_pilots():
    """Known data symbols (zero variance) act exactly like extra pilot columns."""
    rng = np.random.default_rng(5)
    M, N, K, L, Ld = 6, 10, 2, 5, 7
    H, X_p, X_d, _, _, Y = _problem(rng, M, N, K, L, Ld, noise_var=0.01)
    lam = np.full(N, K / N)
    beta = np.ones(N)
    st = EstimatorState(
        h_hat=np.zeros((M, N), complex), v_h=np.tile(lam, (M, 1)), x_hat=X_d.copy(),
        v_x=np.zeros((N, Ld)), s_hat=np.zeros((M, L + Ld), complex), rho_bar=lam.copy(), lam=lam)
    X_full = np.concatenate([X_p, X_d], axis=1)
    for it in range(20):
        estimate_z(st, Y, X_p, 0.01, 1.0 if it == 0 else 0.6)
        estimate_h(st, X_p, beta, lam, 0.6)
    amp = amp_jadce(Y, X_full, lam, beta, 0.01, max_iters=20, tol=0.0, damping=0.6)
    assert np.allclose(st.h_hat, amp.h_hat, rtol=1e-10, atol=1e-12)
    assert np.allclose(st.rho_tilde, amp.rho_tilde, rtol=1e-10, atol=1e-12)


def test_joint_estimate_noise_models():
    rng = np.random.default_rng(6)
    M, N, K, L, Ld = 8, 12, 3, 6, 10
    H, X_p, X_d, _, active, Y = _problem(rng, M, N, K, L, Ld, noise_var=0.01)
    lam = np.full(N, K / N)
    priors = JointPriors(np.full((N, Ld, 4), 0.25), lam, np.zeros((M, N)), np.tile(lam, (M, 1)), lam)
    for model in ("nominal", "residual", "em"):
        est = joint_estimate(Y, X_p, priors, np.ones(N), 0.01, QPSK, noise=model, diagnostics=True)
        assert all(d["noise_var"] >= 0.01 for d in est.diagnostics)
        assert np.all((est.lam_next >= 0) & (est.lam_next <= 1))
    with pytest.raises(ValueError):
        joint_estimate(Y, X_p, priors, np.ones(N), 0.01, QPSK, noise="bogus")


def test_non_finite_input_raises():
    rng = np.random.default_rng(7)
    M, N, L, Ld = 4, 6, 4, 4
    Y = np.full((M, L + Ld), np.nan, complex)
    X_p = complex_normal(rng, (N, L))
    lam = np.full(N, 0.3)
    priors = JointPriors(np.full((N, Ld, 4), 0.25), lam, np.zeros((M, N)), np.tile(lam, (M, 1)), lam)
    with pytest.raises(NumericalFailure):
        joint_estimate(Y, X_p, priors, np.ones(N), 0.01, QPSK)
