"""Turbo and SI-aided receivers, their special-case baselines and shared pieces.

Both receivers take the power-normalized received block Y = H X + N / sqrt(gamma)
together with the large-scale fading ``beta``, which the BS is assumed to know.
Path loss leaves entries of H around 1e-6 in magnitude, so the receivers first
rescale the problem by the root-mean fading. The recursions are exactly
scale-equivariant; the rescaling only keeps every variance far above the
numerical floors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .amp import amp_jadce, detect_active
from .bigamp import JointPriors, joint_estimate, relative_change
from .config import SystemConfig
from .errors import NumericalFailure
from .phy import (
    bit_posteriors_from_symbol_posteriors,
    crc_check,
    extrinsic,
    get_code,
    get_constellation,
    hard_decision,
    soft_demod,
    symbol_priors_from_llrs,
)

SCHEMES = ("turbo", "si", "separate", "data-assisted", "known-activity")

CRC_PASSED = "crc-passed"
UNRELIABLE = "decoded-unreliable"
UNDETECTED = "undetected"


@dataclass(frozen=True)
class ReceiverOutput:
    detected: np.ndarray  # sorted user indices
    crc_passed: np.ndarray
    payloads: dict  # user -> payload bits, only for crc_passed users
    h_hat: np.ndarray  # M x N in the caller's units
    lam: np.ndarray  # activity prior after the last iteration
    iterations: int
    trace: list = field(default_factory=list)


@dataclass(frozen=True)
class SideInformation:
    lam: np.ndarray
    provenance: np.ndarray  # per-user tag: crc-passed | decoded-unreliable | undetected


@dataclass(frozen=True)
class Equalized:
    x_hat: np.ndarray  # K2 x L_d
    error_var: np.ndarray  # per-user MMSE error variance, K2
    regularized: bool


def _scaled(Y, beta, noise_var):
    s = float(np.sqrt(np.mean(beta)))
    return Y / s, np.asarray(beta) / s ** 2, noise_var / s ** 2, s


def _decode_blocks(code, llr, cfg: SystemConfig):
    """Decode rows of prior LLRs; returns decoder posteriors, CRC flags and payloads."""
    post = code.decode(llr, max_iters=cfg.bp_max_iters, clip=cfg.llr_clip)
    blocks = code.extract_data(hard_decision(post))
    ok = crc_check(blocks)
    return post, np.atleast_1d(ok), blocks[:, :cfg.payload_bits]


def mmse_equalize(Y_d, H_a, noise_var) -> Equalized:
    """Linear MMSE estimate (H^H H + nv I)^-1 H^H Y_d of the active users' data.

    Solved by Cholesky; a tiny ridge is added (and flagged) when the normal
    matrix is numerically singular.
    """
    Y_d = np.asarray(Y_d)
    H_a = np.asarray(H_a)
    k2 = H_a.shape[1]
    if k2 == 0:
        return Equalized(np.zeros((0, Y_d.shape[1]), complex), np.zeros(0), False)
    gram = H_a.conj().T @ H_a
    A = gram + noise_var * np.eye(k2)
    regularized = False
    scale = max(np.real(np.trace(gram)) / k2, 1e-300)
    if np.linalg.cond(A) > 1e12:
        A = A + 1e-12 * scale * np.eye(k2)
        regularized = True
    try:
        cho = scipy.linalg.cho_factor(A)
        x_hat = scipy.linalg.cho_solve(cho, H_a.conj().T @ Y_d)
        inv_diag = np.real(np.diag(scipy.linalg.cho_solve(cho, np.eye(k2))))
    except np.linalg.LinAlgError:
        A = A + 1e-9 * scale * np.eye(k2)
        x_hat = np.linalg.solve(A, H_a.conj().T @ Y_d)
        inv_diag = np.real(np.diag(np.linalg.inv(A)))
        regularized = True
    return Equalized(x_hat, noise_var * inv_diag, regularized)


def si_update(lam, rho_bar, llr_post, detected, passed, kappa1=0.5, kappa2=0.5) -> SideInformation:
    """Activity side information for the next SI iteration.

    CRC-passed users get lam = 1. Detected users that failed blend rho_bar with
    the mean decoder reliability |L|/(1+|L|) of their posterior LLRs
    (``llr_post`` maps user -> LLR vector). All others blend rho_bar with the
    previous lam.
    """
    lam = np.asarray(lam, dtype=float)
    rho_bar = np.asarray(rho_bar, dtype=float)
    new = kappa2 * rho_bar + (1.0 - kappa2) * lam
    tags = np.full(lam.shape, UNDETECTED, dtype=object)
    passed = set(int(n) for n in passed)
    for n in detected:
        n = int(n)
        if n in passed or n not in llr_post:
            continue
        a = np.abs(np.asarray(llr_post[n], dtype=float))
        new[n] = kappa1 * rho_bar[n] + (1.0 - kappa1) * np.mean(a / (1.0 + a))
        tags[n] = UNRELIABLE
    for n in passed:
        new[n] = 1.0
        tags[n] = CRC_PASSED
    return SideInformation(np.clip(new, 0.0, 1.0), tags)


def turbo_receive(Y, X_p, beta, cfg: SystemConfig, known_activity=None, trace=False) -> ReceiverOutput:
    """Iterate joint estimation and LDPC decoding, exchanging extrinsic bit LLRs.

    If an iteration fits the received block worse than its predecessor (or
    overflows), the loop stops and the previous iteration's decisions stand.

    ``known_activity`` (bool mask) pins the activity prior to the truth and
    reports the true active set; this is the known-activity bound.
    """
    Y = np.asarray(Y)
    X_p = np.asarray(X_p)
    Y, beta, nv, s = _scaled(Y, beta, cfg.noise_var)
    const = get_constellation(cfg.modulation)
    code = get_code(cfg.coded_bits, cfg.block_bits, cfg.ldpc_col_weight, cfg.ldpc_row_weight)
    N, L = X_p.shape
    Ld = Y.shape[1] - L
    Nc = code.n

    if known_activity is not None:
        truth = np.asarray(known_activity, dtype=bool)
        lam = truth.astype(float)
    else:
        lam = np.full(N, cfg.n_active / N)
    init = amp_jadce(Y[:, :L], X_p, lam, beta, nv, cfg.amp_max_iters, cfg.amp_tol, cfg.damping)
    h_init, v_h_init, rho_bar = init.h_hat, init.v_h, init.rho_bar

    eta = np.full((N, Ld, const.order), 1.0 / const.order)
    prior_llr = np.zeros((N, Nc))
    dec_post = np.zeros((N, Nc))
    x_prev = None
    records = []
    detected = np.zeros(0, dtype=int)
    iterations = 0
    fit_prev = np.inf
    for j in range(1, cfg.q1 + 1):
        try:
            est = joint_estimate(
                Y, X_p, JointPriors(eta, lam, h_init, v_h_init, rho_bar), beta, nv, const.points,
                damping=cfg.damping, max_iters=cfg.q2, tol=cfg.eps2, kappa=cfg.kappa,
                theta=cfg.theta, scale_by_activity=cfg.scale_symbols_by_activity,
                noise=cfg.estimator_noise)
            fit = relative_change(est.h_hat @ np.concatenate([X_p, est.x_hat], axis=1), Y)
        except NumericalFailure:
            if j == 1:
                raise
            fit = np.inf
        if j > 1 and not fit <= fit_prev:
            # the estimator drifted away from the data: keep the previous decisions
            if trace:
                records.append({"iteration": j, "reverted": True, "fit": fit})
            break
        fit_prev = fit
        iterations = j
        if known_activity is not None:
            detected = np.flatnonzero(truth)
        else:
            detected = est.active
            lam = est.lam_next
        h_init, v_h_init, rho_bar = est.h_hat, est.v_h, est.rho_bar

        if detected.size:
            _, post_llr = bit_posteriors_from_symbol_posteriors(est.eta_post[detected], const, cfg.llr_clip)
            ext_in = extrinsic(post_llr, prior_llr[detected], cfg.llr_clip)
            dec = code.decode(ext_in, max_iters=cfg.bp_max_iters, clip=cfg.llr_clip)
            dec_post[detected] = dec
            prior_llr[detected] = extrinsic(dec, ext_in, cfg.llr_clip)
            eta[detected] = symbol_priors_from_llrs(prior_llr[detected], const, cfg.llr_clip)

        residual = np.inf if x_prev is None else relative_change(est.x_hat, x_prev)
        if trace:
            records.append({"iteration": j, "n_detected": int(detected.size),
                            "lam": lam.copy(), "residual": residual, "fit": fit,
                            "estimator_iterations": est.iterations})
        if residual <= cfg.eps1:
            break
        x_prev = est.x_hat

    payloads = {}
    if detected.size:
        blocks = code.extract_data(hard_decision(dec_post[detected]))
        ok = np.atleast_1d(crc_check(blocks))
        for n, good, b in zip(detected, ok, blocks):
            if good:
                payloads[int(n)] = b[:cfg.payload_bits].copy()
    passed = np.array(sorted(payloads), dtype=int)
    return ReceiverOutput(detected, passed, payloads, h_init * s, lam, iterations, records)


def si_receive(Y, X_p, beta, cfg: SystemConfig, trace=False) -> ReceiverOutput:
    """Alternate pilot-only AMP with MMSE equalization and decoding of new users.

    CRC-passed users are frozen: their activity prior is pinned to one, they
    are never decoded again and their last equalized symbols are kept. The
    reported active set is the last detected set joined with the CRC-passed set.
    """
    Y = np.asarray(Y)
    X_p = np.asarray(X_p)
    Y, beta, nv, s = _scaled(Y, beta, cfg.noise_var)
    const = get_constellation(cfg.modulation)
    code = get_code(cfg.coded_bits, cfg.block_bits, cfg.ldpc_col_weight, cfg.ldpc_row_weight)
    N, L = X_p.shape
    Ld = Y.shape[1] - L
    Y_p, Y_d = Y[:, :L], Y[:, L:]

    lam = np.full(N, cfg.n_active / N)
    payloads = {}
    x_all = np.zeros((N, Ld), dtype=complex)
    x_prev = None
    records = []
    detected = np.zeros(0, dtype=int)
    h_hat = np.zeros((Y.shape[0], N), dtype=complex)
    iterations = 0
    est = None
    for j in range(1, cfg.q3 + 1):
        est = amp_jadce(Y_p, X_p, lam, beta, nv, cfg.amp_max_iters, cfg.amp_tol, cfg.damping,
                        warm=est if cfg.si_warm_start else None)
        h_hat = est.h_hat
        detected = detect_active(est.rho_bar, cfg.theta)
        iterations = j

        if cfg.si_noise == "effective":
            # channel-estimate error acts as extra noise of power sum_n V^h per antenna
            eq = mmse_equalize(Y_d, h_hat[:, detected], nv + est.v_h.sum(axis=1).mean())
        else:
            eq = mmse_equalize(Y_d, h_hat[:, detected], nv)
        x_all = np.where(np.isin(np.arange(N), list(payloads))[:, None], x_all, 0.0)
        fresh = np.array([n for n in detected if int(n) not in payloads], dtype=int)
        rows = np.searchsorted(detected, fresh)
        x_all[fresh] = eq.x_hat[rows]

        llr_post = {}
        if fresh.size:
            if cfg.si_noise == "effective":
                # unbiased equalizer output and its per-user error variance
                gain = np.clip(1.0 - eq.error_var[rows], 1e-12, None)
                x_in = eq.x_hat[rows] / gain[:, None]
                noise = (eq.error_var[rows] / gain)[:, None]
            else:
                x_in, noise = eq.x_hat[rows], np.full((fresh.size, 1), nv)
            prior = soft_demod(x_in, noise, const, cfg.llr_clip)
            post, ok, bits = _decode_blocks(code, prior, cfg)
            for n, good, b, lp in zip(fresh, ok, bits, post):
                if good:
                    payloads[int(n)] = b.copy()
                else:
                    llr_post[int(n)] = lp
        passed = np.array(sorted(payloads), dtype=int)
        si = si_update(lam, est.rho_bar, llr_post, detected, passed, cfg.kappa1, cfg.kappa2)
        lam = si.lam

        residual = np.inf if x_prev is None else relative_change(x_all, x_prev)
        if trace:
            records.append({"iteration": j, "n_detected": int(detected.size),
                            "n_passed": int(passed.size), "lam": lam.copy(),
                            "residual": residual, "amp_iterations": est.iterations})
        if residual <= cfg.eps3:
            break
        x_prev = x_all.copy()

    passed = np.array(sorted(payloads), dtype=int)
    reported = np.union1d(detected, passed).astype(int)
    return ReceiverOutput(reported, passed, payloads, h_hat * s, lam, iterations, records)


def run_scheme(scheme: str, Y, X_p, beta, cfg: SystemConfig, activity=None, trace=False) -> ReceiverOutput:
    """Dispatch by scheme name. The baselines are special cases of the two receivers."""
    if scheme == "turbo":
        return turbo_receive(Y, X_p, beta, cfg, trace=trace)
    if scheme == "data-assisted":
        return turbo_receive(Y, X_p, beta, cfg.replace(q1=1), trace=trace)
    if scheme == "known-activity":
        if activity is None:
            raise ValueError("known-activity needs the true activity mask")
        return turbo_receive(Y, X_p, beta, cfg, known_activity=activity, trace=trace)
    if scheme == "si":
        return si_receive(Y, X_p, beta, cfg, trace=trace)
    if scheme == "separate":
        return si_receive(Y, X_p, beta, cfg.replace(q3=1), trace=trace)
    raise ValueError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")
