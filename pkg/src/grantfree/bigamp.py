"""Joint estimation of effective channels and data symbols by bilinear AMP.

One sweep updates, in order, the mixing variables z = H X (z-block), the
channels H under a spike-and-slab prior (h-block) and the data symbols under a
discrete prior (x-block). Pilot columns of X are known and carry no variance.

The h- and x-likelihoods are kept in information form (precision and
precision-weighted mean). This sidesteps the infinite variance that the data
part of the channel likelihood has while the symbol estimates are still zero,
and reduces to the usual Gaussian product whenever both parts are finite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit, logsumexp

from . import denoise
from .denoise import VAR_FLOOR, abs2
from .errors import NumericalFailure


@dataclass
class EstimatorState:
    """Every per-iteration quantity of the joint estimator.

    Shapes: z-block M x T, h-block M x N, x-block N x L_d, ``eta_post``
    N x L_d x |X|. ``h_bar`` and ``x_bar`` are the damped iterates that feed
    the likelihood computations; ``h_hat`` and ``x_hat`` are the raw ones.
    """

    h_hat: np.ndarray
    v_h: np.ndarray
    x_hat: np.ndarray
    v_x: np.ndarray
    s_hat: np.ndarray
    rho_bar: np.ndarray
    lam: np.ndarray
    h_bar: np.ndarray = None
    x_bar: np.ndarray = None

    z_hat: Optional[np.ndarray] = None
    v_z: Optional[np.ndarray] = None
    v_s: Optional[np.ndarray] = None
    m_p: Optional[np.ndarray] = None
    v_p: Optional[np.ndarray] = None

    p_h: Optional[np.ndarray] = None
    q_h: Optional[np.ndarray] = None
    p_h_pilot: Optional[np.ndarray] = None
    q_h_pilot: Optional[np.ndarray] = None
    p_h_data: Optional[np.ndarray] = None
    q_h_data: Optional[np.ndarray] = None
    k: Optional[np.ndarray] = None
    l: Optional[np.ndarray] = None
    rho_tilde: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None
    tau: Optional[np.ndarray] = None

    p_x: Optional[np.ndarray] = None
    q_x: Optional[np.ndarray] = None
    eta_post: Optional[np.ndarray] = None

    iteration: int = 0
    floored: int = 0

    @property
    def rho(self) -> Optional[np.ndarray]:
        """Prior activity probability of each coefficient, expit(L)."""
        return None if self.l is None else expit(self.l)

    def __post_init__(self):
        if self.h_bar is None:
            self.h_bar = self.h_hat.copy()
        if self.x_bar is None:
            self.x_bar = self.x_hat.copy()


def initial_state(M, T, h_init, v_h_init, lam, rho_bar, data_len) -> EstimatorState:
    """Iteration-0 state: residual zero, data symbols zero with unit variance."""
    N = h_init.shape[1]
    return EstimatorState(
        h_hat=np.array(h_init, dtype=complex),
        v_h=np.array(v_h_init, dtype=float),
        x_hat=np.zeros((N, data_len), dtype=complex),
        v_x=np.ones((N, data_len)),
        s_hat=np.zeros((M, T), dtype=complex),
        rho_bar=np.array(rho_bar, dtype=float),
        lam=np.array(lam, dtype=float),
    )


@dataclass(frozen=True)
class JointPriors:
    """Inputs of one joint-estimation call.

    ``eta`` holds symbol priors (N x L_d x |X|); ``h_init`` and ``v_h_init``
    usually come from the pilot-only estimator.
    """

    eta: np.ndarray
    lam: np.ndarray
    h_init: np.ndarray
    v_h_init: np.ndarray
    rho_bar_init: np.ndarray

    def __post_init__(self):
        if not np.allclose(self.eta.sum(axis=-1), 1.0, atol=1e-9):
            raise ValueError("symbol priors must sum to one")
        if np.any((self.lam < 0) | (self.lam > 1)):
            raise ValueError("activity priors must lie in [0, 1]")


@dataclass(frozen=True)
class JointEstimate:
    active: np.ndarray
    eta_post: np.ndarray
    x_hat: np.ndarray
    v_x: np.ndarray
    h_hat: np.ndarray
    v_h: np.ndarray
    rho_bar: np.ndarray
    lam_next: np.ndarray
    iterations: int
    state: EstimatorState
    diagnostics: list = field(default_factory=list)


def damp(new, old, omega):
    if old is None or omega == 1.0:
        return new
    return omega * new + (1.0 - omega) * old


def estimate_z(state: EstimatorState, Y, X_p, noise_var, damping=1.0):
    """Mixing-variable posteriors and scaled residuals.

    Uses the raw iterates ĥ, x̂ and the residual ŝ of the previous sweep.
    Pilot columns carry no symbol variance, so they are handled on their own.
    """
    v_bar = state.v_h @ abs2(X_p)
    m_p = state.h_hat @ X_p
    v_p = v_bar
    if state.x_hat.shape[1]:
        v_bar_d = state.v_h @ abs2(state.x_hat) + abs2(state.h_hat) @ state.v_x
        v_bar = np.concatenate([v_bar, v_bar_d], axis=1)
        m_p = np.concatenate([m_p, state.h_hat @ state.x_hat], axis=1)
        v_p = np.concatenate([v_p, v_bar_d + state.v_h @ state.v_x], axis=1)
    m_p = m_p - state.s_hat * v_bar
    m_p = damp(m_p, state.m_p, damping)
    v_p = damp(v_p, state.v_p, damping)
    state.floored = int(np.count_nonzero(v_p < VAR_FLOOR))
    v_p = np.maximum(v_p, VAR_FLOOR)
    state.m_p, state.v_p = m_p, v_p
    state.z_hat, state.v_z, state.s_hat, state.v_s = denoise.z_posterior(Y, m_p, v_p, noise_var)
    return state


def _channel_information(state: EstimatorState, X_p):
    """Precision and precision-weighted mean of the pilot and data channel likelihoods."""
    L = X_p.shape[1]
    s_p, s_d = state.s_hat[:, :L], state.s_hat[:, L:]
    vs_p, vs_d = state.v_s[:, :L], state.v_s[:, L:]
    prec_p = vs_p @ abs2(X_p).T
    info_p = state.h_bar * prec_p + s_p @ X_p.conj().T
    if state.x_bar.shape[1] == 0:
        return prec_p, info_p, None, None
    prec_d = vs_d @ abs2(state.x_bar).T
    info_d = state.h_bar * onsager_gain(prec_d, vs_d @ state.v_x.T) * prec_d + s_d @ state.x_bar.conj().T
    return prec_p, info_p, prec_d, info_d


def onsager_gain(prec, cross):
    """Weight 1 - cross / prec of the previous iterate, clipped to [0, 1].

    Unclipped, the weight turns strongly negative for coefficients whose
    partner variables are still uncertain (for example a near-zero channel
    paired with unresolved symbols), which flips and amplifies the iterate on
    every sweep. With known partners (zero variance) the weight is exactly 1.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(prec > 0, 1.0 - cross / prec, 0.0)
    return np.clip(g, 0.0, 1.0)


def _moments(prec, info):
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(prec > 0, 1.0 / prec, np.inf)
        p = np.where(prec > 0, info / prec, 0.0)
    return p, q


def estimate_h(state: EstimatorState, X_p, beta, lam, damping=1.0):
    """Channel likelihoods, activity evidence and spike-and-slab channel posteriors."""
    prec_p, info_p, prec_d, info_d = _channel_information(state, X_p)
    if prec_d is None:
        # pilot-only problem: the pilot part is the whole likelihood
        prec, info = prec_p, info_p
    else:
        state.p_h_pilot, state.q_h_pilot = _moments(prec_p, info_p)
        state.p_h_data, state.q_h_data = _moments(prec_d, info_d)
        prec, info = prec_p + prec_d, info_p + info_d
    prec = np.maximum(prec, VAR_FLOOR)
    p = info / prec
    q = np.maximum(1.0 / prec, VAR_FLOOR)
    state.p_h, state.q_h = p, q
    if prec_d is None:
        state.p_h_pilot, state.q_h_pilot = p, q

    state.k = denoise.activity_log_ratio(p, q, beta)
    state.l = denoise.extrinsic_log_odds(lam, state.k)
    state.rho_tilde, state.mu, state.tau, h_hat, v_h = denoise.spike_slab_posterior(
        p, q, beta, state.l, k=state.k)
    state.h_hat, state.v_h = h_hat, v_h
    state.h_bar = damp(h_hat, state.h_bar, damping)
    return state


def estimate_x(state: EstimatorState, eta, rho_bar_prev, points, damping=1.0,
               h_bar=None, v_h=None, scale_by_activity=True):
    """Symbol posteriors over the constellation and their moments.

    ``h_bar`` and ``v_h`` default to the state's values; a full sweep passes
    those from before the h-block update so both blocks see the same iterate.
    """
    h_bar = state.h_bar if h_bar is None else h_bar
    v_h = state.v_h if v_h is None else v_h
    L = state.s_hat.shape[1] - state.x_hat.shape[1]
    s_d, vs_d = state.s_hat[:, L:], state.v_s[:, L:]
    prec = abs2(h_bar).T @ vs_d
    info = state.x_bar * onsager_gain(prec, v_h.T @ vs_d) * prec + h_bar.conj().T @ s_d
    state.p_x, state.q_x = _moments(prec, info)

    with np.errstate(divide="ignore"):
        log_eta = np.log(eta)
    logits = (log_eta - prec[..., None] * abs2(points)
              + 2.0 * np.real(np.conj(points) * info[..., None]))
    eta_post = np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))
    state.eta_post = eta_post

    if scale_by_activity:
        sym = np.asarray(rho_bar_prev, dtype=float)[:, None, None] * points
    else:
        sym = points
    x_hat = np.sum(eta_post * sym, axis=-1)
    state.v_x = np.sum(eta_post * abs2(sym - x_hat[..., None]), axis=-1)
    state.x_hat = x_hat
    state.x_bar = damp(x_hat, state.x_bar, damping)
    return state


def sweep(state: EstimatorState, Y, X_p, beta, noise_var, eta, points, *,
          damping=1.0, scale_by_activity=True):
    """One z -> h -> x pass. The x-block uses the channel iterate from before the h-block."""
    first = state.iteration == 0
    estimate_z(state, Y, X_p, noise_var, 1.0 if first else damping)
    h_bar_prev, v_h_prev = state.h_bar, state.v_h
    estimate_h(state, X_p, beta, state.lam, damping)
    if state.x_hat.shape[1]:
        estimate_x(state, eta, state.rho_bar, points, damping,
                   h_bar=h_bar_prev, v_h=v_h_prev, scale_by_activity=scale_by_activity)
    state.iteration += 1
    if not (np.all(np.isfinite(state.h_hat)) and np.all(np.isfinite(state.x_hat))
            and np.all(np.isfinite(state.z_hat))):
        raise NumericalFailure("non-finite estimate", iteration=state.iteration)
    return state


def relative_change(new, old) -> float:
    """sum |new - old|^2 / sum |old|^2, zero when both vanish."""
    den = np.sum(abs2(old))
    num = np.sum(abs2(new - old))
    if den == 0:
        return 0.0 if num == 0 else np.inf
    return float(num / den)


def mixing_estimate(state: EstimatorState, X_p) -> np.ndarray:
    """Plug-in estimate Ĥ [X_p, X̂_d] of the noiseless received block."""
    return state.h_hat @ np.concatenate([X_p, state.x_hat], axis=1)


def update_activity(rho_bar, lam, kappa):
    """Convex blend of the new average sparsity level with the current prior."""
    return kappa * np.asarray(rho_bar) + (1.0 - kappa) * np.asarray(lam)


def effective_noise(model, noise_var, Y, z_plug, state: EstimatorState) -> float:
    """Noise variance for the next sweep (see ``joint_estimate``)."""
    if model == "residual":
        return max(noise_var, float(np.mean(abs2(Y - z_plug))))
    if model == "em":
        return max(noise_var, float(np.mean(abs2(Y - state.z_hat) + state.v_z)))
    return noise_var


def detect(rho_bar, theta) -> np.ndarray:
    return np.flatnonzero(np.asarray(rho_bar) >= theta)


def joint_estimate(Y, X_p, priors: JointPriors, beta, noise_var, points, *,
                   damping=0.6, max_iters=100, tol=1e-5, kappa=0.5, theta=0.4,
                   scale_by_activity=True, noise="nominal", diagnostics=False) -> JointEstimate:
    """Iterate sweeps until the relative change of Ĥ X̂ drops below ``tol``.

    The posterior mean ẑ is not used for the stopping test: while V^p is far
    above the noise variance ẑ stays pinned to Y, so its change is tiny long
    before the symbols settle.

    Returns the detected set {n : rho_bar_n >= theta}, symbol posteriors, the
    channel posterior moments and the blended activity prior for the next call.

    ``noise`` selects the noise variance seen by the z-block: ``"nominal"``
    uses ``noise_var``; ``"residual"`` raises it to the mean squared residual
    of the plug-in fit; ``"em"`` to the expectation-maximization estimate
    mean(|y - ẑ|^2 + V^z). The adaptive choices never go below ``noise_var``.
    """
    if noise not in ("nominal", "residual", "em"):
        raise ValueError(f"unknown noise model {noise!r}")
    M, T = Y.shape
    data_len = T - X_p.shape[1]
    state = initial_state(M, T, priors.h_init, priors.v_h_init, priors.lam,
                          priors.rho_bar_init, data_len)
    points = np.asarray(points)
    trace = []
    z_prev = None
    nv = noise_var
    for _ in range(max_iters):
        sweep(state, Y, X_p, beta, nv, priors.eta, points,
              damping=damping, scale_by_activity=scale_by_activity)
        z_plug = mixing_estimate(state, X_p)
        nv = effective_noise(noise, noise_var, Y, z_plug, state)
        residual = np.inf if z_prev is None else relative_change(z_plug, z_prev)
        if diagnostics:
            trace.append({"iteration": state.iteration, "residual": residual, "noise_var": nv,
                          "mean_rho_bar": float(state.rho_tilde.mean()),
                          "floored": state.floored})
        if residual < tol:
            break
        z_prev = z_plug
    rho_bar = state.rho_tilde.mean(axis=0)
    lam_next = update_activity(rho_bar, priors.lam, kappa)
    eta_post = state.eta_post if state.eta_post is not None else priors.eta
    return JointEstimate(
        active=detect(rho_bar, theta), eta_post=eta_post, x_hat=state.x_hat,
        v_x=state.v_x, h_hat=state.h_hat, v_h=state.v_h, rho_bar=rho_bar,
        lam_next=lam_next, iterations=state.iteration, state=state, diagnostics=trace)
