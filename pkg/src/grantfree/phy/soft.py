"""LLR and probability conversions between coded bits and symbols.

All LLRs are natural-log ratios ln p(0)/p(1) and are clamped to +-clip.
Coded bit ``j`` (0-based) of a user sits in data symbol ``j // B`` at label
position ``j % B``, with ``B`` bits per symbol.
"""

from __future__ import annotations

import numpy as np
from scipy.special import log_expit, logsumexp

from .constellation import Constellation

LLR_CLIP = 30.0


def bit_location(j_c: int, bits_per_symbol: int, pilot_len: int = 0) -> tuple[int, int]:
    """(bit position, 1-based frame symbol index) of 0-based coded bit ``j_c``."""
    return j_c % bits_per_symbol, pilot_len + 1 + j_c // bits_per_symbol


def bit_probabilities(eta_post, const: Constellation):
    """p(c = 0) per coded bit from per-symbol posteriors of shape (..., L_d, order).

    Returns an array (..., L_d * bits_per_symbol).
    """
    eta_post = np.asarray(eta_post, dtype=float)
    sums = eta_post.sum(axis=-1)
    if not np.allclose(sums, 1.0, atol=1e-6):
        raise ValueError("symbol posteriors must sum to one")
    p0 = np.stack([eta_post[..., const.bit_set(l, 0)].sum(axis=-1)
                   for l in range(const.bits_per_symbol)], axis=-1)
    return p0.reshape(*p0.shape[:-2], -1)


def bit_posteriors_from_symbol_posteriors(eta_post, const: Constellation, clip=LLR_CLIP):
    """Returns (p(c=0), posterior LLRs)."""
    p0 = bit_probabilities(eta_post, const)
    p1 = np.clip(1.0 - p0, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        llr = np.log(p0) - np.log(p1)
    return p0, np.clip(llr, -clip, clip)


def extrinsic(posterior, prior, clip=LLR_CLIP):
    return np.clip(np.asarray(posterior) - np.asarray(prior), -clip, clip)


def symbol_priors_from_llrs(llr, const: Constellation, clip=LLR_CLIP):
    """Symbol priors (..., L_d, order) from per-bit LLRs (..., L_d * B).

    Each bit contributes expit(L) for label 0 and expit(-L) for label 1; the
    symbol prior is their product over the symbol's bits.
    """
    llr = np.clip(np.asarray(llr, dtype=float), -clip, clip)
    B = const.bits_per_symbol
    per_sym = llr.reshape(*llr.shape[:-1], -1, B)
    logp0 = log_expit(per_sym)
    logp1 = log_expit(-per_sym)
    labels = const.labels.astype(bool)  # (order, B)
    logs = np.where(labels, logp1[..., None, :], logp0[..., None, :]).sum(axis=-1)
    return np.exp(logs)


def soft_demod(x_hat, noise_var, const: Constellation, clip=LLR_CLIP):
    """Exact (log-sum-exp) soft demapping of equalized symbols under an AWGN model.

    ``noise_var`` broadcasts against ``x_hat`` (scalar or per-user column).
    Returns LLRs with the symbol axis flattened into bits: (..., L_d * B).
    """
    x_hat = np.asarray(x_hat)
    nv = np.maximum(np.asarray(noise_var, dtype=float), 1e-300)
    metric = -np.abs(x_hat[..., None] - const.points) ** 2 / nv[..., None]
    out = []
    for l in range(const.bits_per_symbol):
        num = logsumexp(metric[..., const.bit_set(l, 0)], axis=-1)
        den = logsumexp(metric[..., const.bit_set(l, 1)], axis=-1)
        out.append(num - den)
    llr = np.stack(out, axis=-1)
    return np.clip(llr.reshape(*llr.shape[:-2], -1), -clip, clip)


def hard_decision(llr) -> np.ndarray:
    """Bit 0 where LLR >= 0, else 1."""
    return (np.asarray(llr) < 0).astype(np.uint8)
