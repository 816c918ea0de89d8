"""Pilot-only AMP for joint activity detection and channel estimation.

This is the joint estimator with every transmitted symbol known (the pilots),
so only the z- and h-blocks run. It initializes the turbo receiver and is the
estimator inside the SI-aided receiver.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .bigamp import EstimatorState, estimate_h, estimate_z, relative_change
from .errors import NumericalFailure


@dataclass(frozen=True)
class JadceResult:
    h_hat: np.ndarray  # M x N
    v_h: np.ndarray
    rho_tilde: np.ndarray
    rho_bar: np.ndarray  # N
    iterations: int
    p_h: np.ndarray
    q_h: np.ndarray
    state: EstimatorState


def amp_jadce(Y_p, X_p, lam, beta, noise_var, max_iters=100, tol=1e-10, damping=0.6,
              warm: JadceResult | None = None) -> JadceResult:
    """Estimate H from Y_p = H X_p + noise under the prior (1 - lam) delta + lam CN(0, beta).

    Starts from the prior moments (Ĥ = 0, V^h = lam beta) and stops once the
    relative change of Ĥ falls below ``tol``. ``warm`` resumes from the final
    state of an earlier run on the same observation instead.
    """
    Y_p = np.asarray(Y_p)
    X_p = np.asarray(X_p)
    lam = np.asarray(lam, dtype=float)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), lam.shape)
    if np.any((lam < 0) | (lam > 1)):
        raise ValueError("activity priors must lie in [0, 1]")
    M, L = Y_p.shape
    N = X_p.shape[0]
    if X_p.shape[1] != L or lam.shape != (N,):
        raise ValueError("inconsistent shapes")

    if warm is None:
        state = EstimatorState(
            h_hat=np.zeros((M, N), dtype=complex),
            v_h=np.tile(lam * beta, (M, 1)),
            x_hat=np.zeros((N, 0), dtype=complex),
            v_x=np.zeros((N, 0)),
            s_hat=np.zeros((M, L), dtype=complex),
            rho_bar=lam.copy(),
            lam=lam,
        )
    else:
        state = dataclasses.replace(warm.state, lam=lam, rho_bar=lam.copy(), iteration=0)
    for it in range(1, max_iters + 1):
        h_prev = state.h_hat
        estimate_z(state, Y_p, X_p, noise_var, 1.0 if it == 1 and warm is None else damping)
        estimate_h(state, X_p, beta, lam, damping)
        state.iteration = it
        if not np.all(np.isfinite(state.h_hat)):
            raise NumericalFailure("non-finite channel estimate", iteration=it)
        if it > 1 and relative_change(state.h_hat, h_prev) < tol:
            break
    return JadceResult(state.h_hat, state.v_h, state.rho_tilde, state.rho_tilde.mean(axis=0),
                       state.iteration, state.p_h, state.q_h, state)


def detect_active(rho_bar, theta) -> np.ndarray:
    """Indices n with rho_bar_n >= theta."""
    return np.flatnonzero(np.asarray(rho_bar) >= theta)
