"""Pairwise-query selection policies.

Five modes over the pool of previously observed outcomes: uniform random,
clusterless predictive entropy under the mixture-mean weight, inter-mode
mutual information (response vs. latent mode identity), intra-mode BALD
(response vs. the dominant mode's weight vector), and their convex hybrid.

All entropies are in nats. Mutual-information scores are clamped at zero;
the pre-clamp negative mass is Monte-Carlo noise that shrinks with the
sample count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from .prefmix import (
    MixturePosterior,
    posterior_summary,
    sample_component_weights,
    sample_theta_arrays,
)
from .scalarize import utility_matrix

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class CandidatePair:
    """Indices into the observed-outcome pool, winner-agnostic (i < j)."""

    i: int
    j: int
    score: float | None = None

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("candidate pair needs two distinct outcomes")


def bernoulli_entropy(p) -> np.ndarray | float:
    """H(p) in nats with the 0*log(0) = 0 convention."""
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log(p)) - (q * np.log(q))
    h = np.where((p <= 0) | (p >= 1), 0.0, h)
    return float(h) if h.ndim == 0 else h


def inter_information(p_components, eta) -> np.ndarray | float:
    """H[sum_k eta_k p_k] - sum_k eta_k H[p_k], clamped at zero.

    p_components: (..., K) per-mode choice probabilities; eta: (K,).
    """
    p = np.asarray(p_components, dtype=float)
    eta = np.asarray(eta, dtype=float)
    p_mix = p @ eta
    score = bernoulli_entropy(p_mix) - bernoulli_entropy(p) @ eta
    return np.maximum(score, 0.0) if np.ndim(score) else max(float(score), 0.0)


def bald_information(p_samples) -> np.ndarray | float:
    """H[mean_s p_s] - mean_s H[p_s] over axis 0, clamped at zero."""
    p = np.atleast_1d(np.asarray(p_samples, dtype=float))
    score = bernoulli_entropy(p.mean(axis=0)) - np.mean(bernoulli_entropy(p), axis=0)
    return np.maximum(score, 0.0) if np.ndim(score) else max(float(score), 0.0)


def _choice_probs(U_i, U_j, sigma_u: float) -> np.ndarray:
    return np.exp(log_ndtr((np.asarray(U_i) - np.asarray(U_j)) / (SQRT2 * sigma_u)))


def mixture_mean_weight(post: MixturePosterior) -> np.ndarray:
    """w_hat = sum_k eta_bar_k w_bar_k from the posterior summary."""
    eta_mean, arch_means = posterior_summary(post)
    W = np.stack([w.array for w in arch_means])
    return eta_mean.array @ W


def dominant_mode(post: MixturePosterior) -> int:
    """argmax_k of the posterior-mean mixture weights (lowest index at ties)."""
    return int(np.argmax(posterior_summary(post)[0].array))


def score_clusterless(y_i, y_j, post: MixturePosterior, sigma_u: float,
                      kind: str = "chebyshev") -> float:
    """Bernoulli entropy of the unimodal choice probability under w_hat."""
    w_hat = mixture_mean_weight(post)
    U = utility_matrix(np.stack([y_i, y_j]), w_hat[None, :], kind)[:, 0]
    return float(bernoulli_entropy(_choice_probs(U[0], U[1], sigma_u)))


def score_inter(y_i, y_j, post: MixturePosterior, sigma_u: float, S: int,
                stream: np.random.Generator, kind: str = "chebyshev") -> float:
    """Mutual information between the response and the latent mode identity."""
    if S < 1:
        raise ValueError("need S >= 1 samples")
    etas, Ws = sample_theta_arrays(post, S, stream)
    U = utility_matrix(np.stack([y_i, y_j])[None, :, :], Ws[:, None, :, :], kind)
    p_k = _choice_probs(U[:, 0, :], U[:, 1, :], sigma_u).mean(axis=0)
    return float(inter_information(p_k, etas.mean(axis=0)))


def score_intra(y_i, y_j, post: MixturePosterior, c: int, sigma_u: float, S: int,
                stream: np.random.Generator, kind: str = "chebyshev") -> float:
    """BALD score against the variational factor of mode c's weight vector."""
    if S < 1:
        raise ValueError("need S >= 1 samples")
    Wc = sample_component_weights(post, c, S, stream)
    U = utility_matrix(np.stack([y_i, y_j])[None, :, :], Wc[:, None, None, :], kind)[..., 0]
    p_w = _choice_probs(U[:, 0], U[:, 1], sigma_u)
    return float(bald_information(p_w))


def candidate_pairs(n: int, n_pairs: int, stream: np.random.Generator) -> np.ndarray:
    """Up to n_pairs unordered index pairs, lexicographically sorted.

    Subsampled uniformly without replacement from all C(n,2) pairs when the
    pool is large; sorting keeps the argmax tie-break deterministic.
    """
    if n < 2:
        raise ValueError("pool must contain at least two outcomes")
    rows, cols = np.triu_indices(n, k=1)
    total = rows.size
    if total > n_pairs:
        keep = np.sort(stream.choice(total, size=n_pairs, replace=False))
        rows, cols = rows[keep], cols[keep]
    return np.stack([rows, cols], axis=1)


def score_pairs(outcomes, pairs: np.ndarray, mode: str, post: MixturePosterior,
                *, sigma_u: float, stream: np.random.Generator, n_samples: int = 64,
                hybrid_lambda: float = 0.5, kind: str = "chebyshev") -> np.ndarray:
    """Scores for every candidate pair under one policy.

    The theta and component samples are drawn once and shared across pairs and
    across the inter/intra terms, which makes the hybrid score exactly affine
    in lambda and its endpoints coincide with the pure policies.
    """
    Y = np.atleast_2d(np.asarray(outcomes, dtype=float))
    I, J = pairs[:, 0], pairs[:, 1]
    if mode == "random":
        return np.zeros(pairs.shape[0])
    if mode == "clusterless":
        w_hat = mixture_mean_weight(post)
        U = utility_matrix(Y, w_hat[None, :], kind)[:, 0]
        return bernoulli_entropy(_choice_probs(U[I], U[J], sigma_u))
    if mode not in ("inter", "intra", "hybrid"):
        raise ValueError(f"unknown query mode {mode!r}")

    etas, Ws = sample_theta_arrays(post, n_samples, stream)
    c = dominant_mode(post)
    Wc = sample_component_weights(post, c, n_samples, stream)

    inter = intra = None
    if mode in ("inter", "hybrid"):
        U = utility_matrix(Y[None, :, :], Ws[:, None, :, :], kind)  # (S, n, K)
        p_k = _choice_probs(U[:, I, :], U[:, J, :], sigma_u).mean(axis=0)  # (m, K)
        inter = inter_information(p_k, etas.mean(axis=0))
    if mode in ("intra", "hybrid"):
        Uc = utility_matrix(Y[None, :, :], Wc[:, None, None, :], kind)[..., 0]  # (S, n)
        p_w = _choice_probs(Uc[:, I], Uc[:, J], sigma_u)  # (S, m)
        intra = bald_information(p_w)
    if mode == "inter":
        return inter
    if mode == "intra":
        return intra
    return hybrid_lambda * inter + (1.0 - hybrid_lambda) * intra


def select_pair(outcomes, mode: str, post: MixturePosterior, *, sigma_u: float,
                stream: np.random.Generator, n_pairs: int = 200, n_samples: int = 64,
                hybrid_lambda: float = 0.5, kind: str = "chebyshev") -> CandidatePair:
    """Choose the comparison to pose: argmax score over subsampled pairs.

    Deterministic given (pool, posterior, config, stream); ties broken toward
    the lexicographically smallest (i, j).
    """
    Y = np.atleast_2d(np.asarray(outcomes, dtype=float))
    pairs = candidate_pairs(Y.shape[0], n_pairs, stream)
    if mode == "random":
        idx = int(stream.integers(0, pairs.shape[0]))
        return CandidatePair(int(pairs[idx, 0]), int(pairs[idx, 1]), None)
    scores = score_pairs(
        Y, pairs, mode, post, sigma_u=sigma_u, stream=stream,
        n_samples=n_samples, hybrid_lambda=hybrid_lambda, kind=kind,
    )
    best = int(np.argmax(scores))
    return CandidatePair(int(pairs[best, 0]), int(pairs[best, 1]), float(scores[best]))
