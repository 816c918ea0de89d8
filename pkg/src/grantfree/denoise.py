"""Closed-form scalar posteriors shared by AMP and BiG-AMP.

Every function is elementwise and broadcasts over numpy arrays.
"""

import numpy as np
from scipy.special import expit

VAR_FLOOR = 1e-12
LOGODDS_CLIP = 60.0
PROB_CLIP = 1e-6


def abs2(x):
    """|x|^2 without the square root of np.abs."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return x.real ** 2 + x.imag ** 2
    return x * x


def cn_pdf(x, mean, var):
    """Circularly-symmetric complex Gaussian density CN(x; mean, var)."""
    return np.exp(-abs2(x - mean) / var) / (np.pi * var)


def z_posterior(y, m_p, v_p, noise_var):
    """Posterior of z under prior CN(m_p, v_p) and likelihood CN(y; z, noise_var).

    Returns (z_hat, v_z, s_hat, v_s): posterior mean and variance, the scaled
    residual (z_hat - m_p) / v_p and its inverse-residual variance.
    """
    denom = noise_var + v_p
    z_hat = (y * v_p + noise_var * m_p) / denom
    v_z = noise_var * v_p / denom
    s_hat = (z_hat - m_p) / v_p
    v_s = (1.0 - v_z / v_p) / v_p
    return z_hat, v_z, s_hat, v_s


def gaussian_product(p1, q1, p2, q2):
    """Mean and variance of the normalized product CN(h; p1, q1) CN(h; p2, q2)."""
    q = q1 * q2 / (q1 + q2)
    p = (p1 * q2 + p2 * q1) / (q1 + q2)
    return p, q


def activity_log_ratio(p, q, beta):
    """ln CN(0; p, q + beta) / CN(0; p, q): evidence for a nonzero coefficient."""
    return np.log(q / (q + beta)) + abs2(p) * beta / ((q + beta) * q)


def prior_log_odds(lam):
    lam = np.clip(lam, PROB_CLIP, 1.0 - PROB_CLIP)
    return np.log(lam) - np.log1p(-lam)


def extrinsic_log_odds(lam, k):
    """Per-antenna activity log-odds from the prior and the other antennas' evidence.

    ``k`` is (M, N); the result for antenna m sums k over every antenna but m.
    """
    total = k.sum(axis=0, keepdims=True)
    return np.clip(prior_log_odds(lam) + total - k, -LOGODDS_CLIP, LOGODDS_CLIP)


def spike_slab_posterior(p, q, beta, log_odds, k=None):
    """Posterior of h under prior (1 - rho) delta(h) + rho CN(0, beta), rho = expit(log_odds).

    With Gaussian likelihood CN(h; p, q) the posterior is
    (1 - rho_t) delta(h) + rho_t CN(h; mu, tau). Returns
    (rho_t, mu, tau, h_hat, v_h) where h_hat, v_h are its mean and variance.
    ``k`` may pass in a precomputed ``activity_log_ratio(p, q, beta)``.
    """
    if k is None:
        k = activity_log_ratio(p, q, beta)
    rho_t = expit(log_odds + k)
    shrink = beta / (beta + q)
    mu = shrink * p
    tau = shrink * q
    h_hat = rho_t * mu
    # rho_t (|mu|^2 + tau) - |h_hat|^2, arranged to stay nonnegative
    v_h = rho_t * (tau + (1.0 - rho_t) * abs2(mu))
    return rho_t, mu, tau, h_hat, v_h
