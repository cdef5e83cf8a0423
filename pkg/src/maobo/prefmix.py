"""Truncated Dirichlet-process mixture preference model.

Generative model: stick proportions v_k ~ Beta(1, alpha) build mixture weights
eta via stick-breaking (last stick pinned to 1 by truncation); archetypes
w_k ~ Dirichlet(beta); a comparison's winner is drawn through a probit link on
the Chebyshev utility gap, with the latent mode marginalized analytically.

Inference is stochastic variational: a mean-field Gaussian family over the
unconstrained parameters (logit sticks psi, additive-logistic weights phi),
optimized by reparameterized gradient ascent on the ELBO with analytic
gradients (no autodiff). Priors are transported to the unconstrained space
with exact log-Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, log_ndtr, logsumexp

from .core import PreferenceDatum, SimplexVector, floor_simplex, rng_stream
from .scalarize import MixtureParams, utility_matrix

LOG_2PI = np.log(2.0 * np.pi)
SUMMARY_SAMPLES = 1000


@dataclass(frozen=True)
class MixturePrior:
    """Prior for the truncated stick-breaking mixture of preference archetypes."""

    k_trunc: int
    alpha: float
    beta_dir: tuple[float, ...]
    sigma_u: float
    scalarization: str = "chebyshev"

    def __post_init__(self):
        object.__setattr__(self, "beta_dir", tuple(float(b) for b in self.beta_dir))
        if self.k_trunc < 1:
            raise ValueError("truncation level must be >= 1")
        if self.alpha <= 0:
            raise ValueError("concentration alpha must be > 0")
        if any(b <= 0 for b in self.beta_dir):
            raise ValueError("Dirichlet concentrations must be > 0")
        if self.sigma_u <= 0:
            raise ValueError("preference noise sigma_u must be > 0")

    @property
    def n_objectives(self) -> int:
        return len(self.beta_dir)


@dataclass
class MixturePosterior:
    """Mean-field Gaussian factors over unconstrained mixture parameters.

    Sticks: v_k = sigmoid(psi_k) with psi_k ~ N(m_v[k], s_v[k]^2), k < K-1
    (the last stick is pinned at 1). Archetypes: w_k = additive-logistic(phi_k)
    with phi_k ~ N(m_w[k], diag(s_w[k]^2)) over R^(L-1).
    """

    m_v: np.ndarray
    s_v: np.ndarray
    m_w: np.ndarray
    s_w: np.ndarray
    weight_floor: float = 0.01
    elbo_trace: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.m_v = np.asarray(self.m_v, dtype=float)
        self.s_v = np.asarray(self.s_v, dtype=float)
        self.m_w = np.atleast_2d(np.asarray(self.m_w, dtype=float))
        self.s_w = np.atleast_2d(np.asarray(self.s_w, dtype=float))
        self.elbo_trace = np.asarray(self.elbo_trace, dtype=float)
        if np.any(self.s_v <= 0) or np.any(self.s_w <= 0):
            raise ValueError("variational scales must be strictly positive")
        if self.m_v.shape != self.s_v.shape or self.m_w.shape != self.s_w.shape:
            raise ValueError("mean/scale shape mismatch")
        if self.m_w.shape[0] != self.m_v.size + 1:
            raise ValueError(
                f"{self.m_w.shape[0]} archetype factors but {self.m_v.size} stick factors"
            )

    @property
    def k_trunc(self) -> int:
        return self.m_w.shape[0]

    @property
    def n_objectives(self) -> int:
        return self.m_w.shape[1] + 1

    def to_dict(self) -> dict:
        return {
            "m_v": self.m_v.tolist(),
            "s_v": self.s_v.tolist(),
            "m_w": self.m_w.tolist(),
            "s_w": self.s_w.tolist(),
            "weight_floor": self.weight_floor,
            "elbo_trace": self.elbo_trace.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixturePosterior":
        return cls(
            m_v=np.asarray(d["m_v"]),
            s_v=np.asarray(d["s_v"]),
            m_w=np.asarray(d["m_w"]),
            s_w=np.asarray(d["s_w"]),
            weight_floor=float(d["weight_floor"]),
            elbo_trace=np.asarray(d.get("elbo_trace", [])),
        )


def prior_matched_posterior(prior: MixturePrior, weight_floor: float = 0.01) -> MixturePosterior:
    """Variational parameters whose implied means match the prior's."""
    K, L = prior.k_trunc, prior.n_objectives
    mean_v = 1.0 / (1.0 + prior.alpha)
    m_v = np.full(max(K - 1, 0), np.log(mean_v / (1.0 - mean_v)))
    return MixturePosterior(
        m_v=m_v,
        s_v=np.full(max(K - 1, 0), 1.0),
        m_w=np.zeros((K, L - 1)),
        s_w=np.ones((K, L - 1)),
        weight_floor=weight_floor,
    )


def initial_posterior(prior: MixturePrior, weight_floor: float,
                      stream: np.random.Generator, jitter: float = 1.0,
                      init_scale: float = 0.3) -> MixturePosterior:
    """Seeded variational initialization: jittered locations, moderate scales.

    Identically initialized components cannot break label symmetry under
    mean-field SVI (they receive identical gradients), so the archetype
    location parameters get a seeded offset; scales start below 1 to cut
    reparameterization gradient noise while the components specialize.
    """
    post = prior_matched_posterior(prior, weight_floor)
    return MixturePosterior(
        m_v=post.m_v,
        s_v=np.full_like(post.s_v, init_scale),
        m_w=post.m_w + jitter * stream.standard_normal(post.m_w.shape),
        s_w=np.full_like(post.s_w, init_scale),
        weight_floor=weight_floor,
    )


def stick_break(v) -> SimplexVector:
    """eta_k = v_k * prod_{j<k} (1 - v_j), with the last stick forced to 1."""
    v = np.asarray(v, dtype=float).copy()
    if v.ndim != 1 or v.size < 1:
        raise ValueError("stick proportions must be a nonempty vector")
    if np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
        raise ValueError(f"stick proportions outside [0,1]: {v}")
    v[-1] = 1.0
    return SimplexVector(tuple(_stick_break_batch(v[None, :-1])[0]))


def _stick_break_batch(V: np.ndarray) -> np.ndarray:
    """V: (S, K-1) free sticks -> (S, K) mixture weights."""
    S, km1 = V.shape
    eta = np.empty((S, km1 + 1))
    remaining = np.ones(S)
    for k in range(km1):
        eta[:, k] = V[:, k] * remaining
        remaining = remaining * (1.0 - V[:, k])
    eta[:, km1] = remaining
    return eta


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _additive_logistic(phi: np.ndarray) -> np.ndarray:
    """phi: (..., L-1) -> simplex points (..., L), last coordinate pinned."""
    logits = np.concatenate([phi, np.zeros(phi.shape[:-1] + (1,))], axis=-1)
    logits = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=-1, keepdims=True)


def probit_choice_prob(y_i, y_j, w, sigma_u: float, kind: str = "chebyshev") -> float:
    """P(y_i preferred over y_j | w) = Phi(utility gap / (sqrt(2) sigma_u))."""
    if sigma_u <= 0:
        raise ValueError("sigma_u must be > 0")
    from .scalarize import utility

    gap = utility(y_i, w, kind) - utility(y_j, w, kind)
    return float(np.exp(log_ndtr(gap / (np.sqrt(2.0) * sigma_u))))


def marginal_log_likelihood(data: list[PreferenceDatum], eta, W, sigma_u: float,
                            kind: str = "chebyshev") -> float:
    """log prod_i sum_k eta_k Phi(gap_ik / (sqrt2 sigma_u)), stabilized in log space."""
    if not data:
        raise ValueError("marginal likelihood needs at least one comparison")
    eta = np.asarray(eta, dtype=float)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if np.any(eta < 0) or eta.sum() <= 0:
        raise ValueError("degenerate mixture weights")
    A = np.array([d.winner for d in data])
    B = np.array([d.loser for d in data])
    z = (utility_matrix(A, W, kind) - utility_matrix(B, W, kind)) / (
        np.sqrt(2.0) * sigma_u
    )
    with np.errstate(divide="ignore"):
        log_eta = np.log(eta)
    return float(np.sum(logsumexp(log_eta[None, :] + log_ndtr(z), axis=1)))


# --- ELBO machinery -------------------------------------------------------


def pack_params(m_v, log_s_v, m_w, log_s_w) -> np.ndarray:
    return np.concatenate([
        np.ravel(m_v), np.ravel(log_s_v), np.ravel(m_w), np.ravel(log_s_w)
    ])


def unpack_params(vec: np.ndarray, K: int, L: int):
    km1 = K - 1
    wsz = K * (L - 1)
    m_v = vec[:km1]
    log_s_v = vec[km1 : 2 * km1]
    m_w = vec[2 * km1 : 2 * km1 + wsz].reshape(K, L - 1)
    log_s_w = vec[2 * km1 + wsz :].reshape(K, L - 1)
    return m_v, log_s_v, m_w, log_s_w


def _log_joint_and_grads(psi, phi, A, B, prior: MixturePrior):
    """Transported log joint density and its gradients w.r.t. (psi, phi).

    psi: (S, K-1), phi: (S, K, L-1); A/B: (N, L) winner/loser outcomes
    (N may be 0). Returns (logp (S,), dpsi (S,K-1), dphi (S,K,L-1)).
    """
    S = psi.shape[0]
    K, L = phi.shape[1], phi.shape[2] + 1
    beta = np.asarray(prior.beta_dir)
    alpha = prior.alpha

    v = _sigmoid(psi)  # (S, K-1)
    eta = _stick_break_batch(v)  # (S, K)
    w = _additive_logistic(phi)  # (S, K, L)

    # stick prior transported through v = sigmoid(psi)
    logp = np.sum(
        np.log(alpha) + (alpha - 1.0) * np.log1p(-v) + np.log(v) + np.log1p(-v),
        axis=1,
    )
    dpsi = 1.0 - 2.0 * v - (alpha - 1.0) * v

    # Dirichlet prior transported through the additive-logistic map
    log_w = np.log(w)
    logp += np.sum(
        gammaln(beta.sum()) - np.sum(gammaln(beta)) + np.sum(beta * log_w, axis=-1),
        axis=1,
    )
    dphi = beta[None, None, :] - w * beta.sum()  # gradient in logit space, (S,K,L)

    if A.shape[0] > 0:
        scale = np.sqrt(2.0) * prior.sigma_u
        if prior.scalarization == "chebyshev":
            ratios_a = A[None, :, None, :] / w[:, None, :, :]  # (S,N,K,L)
            ratios_b = B[None, :, None, :] / w[:, None, :, :]
            amin = np.argmin(ratios_a, axis=-1)
            bmin = np.argmin(ratios_b, axis=-1)
            U_a = -np.take_along_axis(ratios_a, amin[..., None], axis=-1)[..., 0]
            U_b = -np.take_along_axis(ratios_b, bmin[..., None], axis=-1)[..., 0]
        else:
            U_a = -np.einsum("nl,skl->snk", A, w)
            U_b = -np.einsum("nl,skl->snk", B, w)
        z = (U_a - U_b) / scale  # (S,N,K)
        log_phi_cdf = log_ndtr(z)
        with np.errstate(divide="ignore"):
            log_eta = np.log(eta)
        per_pair = logsumexp(log_eta[:, None, :] + log_phi_cdf, axis=-1)  # (S,N)
        logp += per_pair.sum(axis=1)

        # d loglik / d eta and / d z
        g_eta = np.exp(log_phi_cdf - per_pair[..., None]).sum(axis=1)  # (S,K)
        log_pdf = -0.5 * z**2 - 0.5 * LOG_2PI
        mills = np.exp(log_pdf - log_phi_cdf)
        c = np.exp(log_eta[:, None, :] + log_phi_cdf - per_pair[..., None]) * mills / scale

        if prior.scalarization == "chebyshev":
            onehot_a = amin[..., None] == np.arange(L)
            onehot_b = bmin[..., None] == np.arange(L)
            w_bc = np.broadcast_to(w[:, None, :, :], ratios_a.shape)
            val_a = -np.take_along_axis(ratios_a / w_bc, amin[..., None], axis=-1)[..., 0]
            val_b = -np.take_along_axis(ratios_b / w_bc, bmin[..., None], axis=-1)[..., 0]
            # dU/dw_l* = y_l*/w_l*^2 = -(val); dz/dw = (dU_a - dU_b)/scale
            g_w = np.sum(
                c[..., None] * (-val_a[..., None] * onehot_a + val_b[..., None] * onehot_b),
                axis=1,
            )  # (S,K,L)
        else:
            # dU/dw = -y for the weighted-sum scalarizer
            g_w = np.einsum("snk,nl->skl", c, -A) - np.einsum("snk,nl->skl", c, -B)

        # chain eta -> sticks, folded with dv/dpsi = v(1-v) into the stable form
        # dpsi_j = g_eta_j * eta_j * (1 - v_j) - v_j * sum_{k>j} g_eta_k * eta_k
        ge = g_eta * eta  # (S,K)
        tail = np.cumsum(ge[:, ::-1], axis=1)[:, ::-1]  # tail[:, j] = sum_{k>=j} ge_k
        km1 = K - 1
        dpsi += ge[:, :km1] * (1.0 - v) - v * tail[:, 1:]

        # chain w -> phi through the softmax-with-pinned-last-coordinate map
        inner = np.sum(g_w * w, axis=-1, keepdims=True)
        dphi += w * (g_w - inner)

    return logp, dpsi, dphi[..., : L - 1]


def elbo_and_grad(params: np.ndarray, A: np.ndarray, B: np.ndarray,
                  prior: MixturePrior, eps_v: np.ndarray, eps_w: np.ndarray):
    """Fixed-noise reparameterized ELBO and its exact gradient.

    eps_v: (S, K-1), eps_w: (S, K, L-1) standard-normal draws shared between
    value and gradient, so the returned gradient is the true derivative of the
    returned value (verified against finite differences in the test suite).
    """
    K, L = prior.k_trunc, prior.n_objectives
    m_v, log_s_v, m_w, log_s_w = unpack_params(params, K, L)
    s_v, s_w = np.exp(log_s_v), np.exp(log_s_w)
    psi = m_v[None, :] + s_v[None, :] * eps_v
    phi = m_w[None, :, :] + s_w[None, :, :] * eps_w

    logp, dpsi, dphi = _log_joint_and_grads(psi, phi, A, B, prior)
    n_factors = m_v.size + m_w.size
    entropy = 0.5 * n_factors * (1.0 + LOG_2PI) + log_s_v.sum() + log_s_w.sum()
    elbo = float(logp.mean() + entropy)

    g_m_v = dpsi.mean(axis=0)
    g_log_s_v = (dpsi * (psi - m_v[None, :])).mean(axis=0) + 1.0
    g_m_w = dphi.mean(axis=0)
    g_log_s_w = (dphi * (phi - m_w[None, :, :])).mean(axis=0) + 1.0
    return elbo, pack_params(g_m_v, g_log_s_v, g_m_w, g_log_s_w)


def fit_svi(data: list[PreferenceDatum], prior: MixturePrior,
            init: MixturePosterior | None = None, steps: int = 500, lr: float = 1e-3,
            mc_samples: int = 8, stream: np.random.Generator | None = None,
            weight_floor: float = 0.01) -> MixturePosterior:
    """Reparameterized stochastic gradient ascent (adaptive-moment rule) on the ELBO.

    Warm-starts from `init` when given. With no comparisons the prior-matched
    posterior (or the warm start) is returned unchanged. Raises on NaN
    gradients, reporting the step index.
    """
    if steps < 1 or mc_samples < 1:
        raise ValueError("steps and mc_samples must be >= 1")
    if stream is None:
        stream = rng_stream(0, "svi")
    if init is None:
        init = prior_matched_posterior(prior, weight_floor)
    if init.k_trunc != prior.k_trunc or init.n_objectives != prior.n_objectives:
        raise ValueError("warm-start posterior shape does not match prior")
    if not data:
        return init

    A = np.array([d.winner for d in data], dtype=float)
    B = np.array([d.loser for d in data], dtype=float)
    K, L = prior.k_trunc, prior.n_objectives
    params = pack_params(init.m_v, np.log(init.s_v), init.m_w, np.log(init.s_w))

    # Adam state
    m = np.zeros_like(params)
    vsq = np.zeros_like(params)
    b1, b2, adam_eps = 0.9, 0.999, 1e-8
    trace = np.empty(steps)
    for step in range(steps):
        eps_v = stream.standard_normal((mc_samples, K - 1))
        eps_w = stream.standard_normal((mc_samples, K, L - 1))
        elbo, grad = elbo_and_grad(params, A, B, prior, eps_v, eps_w)
        if not np.all(np.isfinite(grad)):
            raise RuntimeError(f"non-finite ELBO gradient at SVI step {step}")
        trace[step] = elbo
        m = b1 * m + (1 - b1) * grad
        vsq = b2 * vsq + (1 - b2) * grad**2
        mhat = m / (1 - b1 ** (step + 1))
        vhat = vsq / (1 - b2 ** (step + 1))
        params = params + lr * mhat / (np.sqrt(vhat) + adam_eps)

    m_v, log_s_v, m_w, log_s_w = unpack_params(params, K, L)
    return MixturePosterior(
        m_v=m_v,
        s_v=np.exp(log_s_v),
        m_w=m_w,
        s_w=np.exp(log_s_w),
        weight_floor=weight_floor,
        elbo_trace=np.concatenate([init.elbo_trace, trace]),
    )


def smoothed(trace: np.ndarray, window: int = 50) -> np.ndarray:
    """Moving average used for the monotone-ELBO sanity checks."""
    trace = np.asarray(trace, dtype=float)
    if trace.size == 0:
        return trace
    w = min(window, trace.size)
    kernel = np.ones(w) / w
    return np.convolve(trace, kernel, mode="valid")


def sample_unconstrained(post: MixturePosterior, n: int,
                         stream: np.random.Generator):
    psi = post.m_v[None, :] + post.s_v[None, :] * stream.standard_normal((n, post.m_v.size))
    phi = post.m_w[None] + post.s_w[None] * stream.standard_normal((n,) + post.m_w.shape)
    return psi, phi


def sample_theta_arrays(post: MixturePosterior, n: int, stream: np.random.Generator):
    """n posterior draws as arrays: etas (n, K) and floored archetypes (n, K, L)."""
    if n < 1:
        raise ValueError("need n >= 1 samples")
    psi, phi = sample_unconstrained(post, n, stream)
    etas = _stick_break_batch(_sigmoid(psi))
    Ws = _additive_logistic(phi)
    floored = np.empty_like(Ws)
    for i in range(n):
        for k in range(Ws.shape[1]):
            floored[i, k] = floor_simplex(Ws[i, k], post.weight_floor)
    return etas, floored


def sample_component_weights(post: MixturePosterior, c: int, n: int,
                             stream: np.random.Generator) -> np.ndarray:
    """n floored draws of archetype c from its variational factor alone."""
    if not 0 <= c < post.k_trunc:
        raise ValueError(f"component index {c} out of range")
    phi = post.m_w[c][None, :] + post.s_w[c][None, :] * stream.standard_normal(
        (n, post.m_w.shape[1])
    )
    W = _additive_logistic(phi)
    return np.stack([floor_simplex(w, post.weight_floor) for w in W])


def sample_theta(post: MixturePosterior, n: int,
                 stream: np.random.Generator) -> list[MixtureParams]:
    etas, Ws = sample_theta_arrays(post, n, stream)
    out = []
    for i in range(n):
        out.append(
            MixtureParams(
                eta=SimplexVector(tuple(etas[i])),
                archetypes=tuple(
                    SimplexVector(tuple(Ws[i, k]), floor=post.weight_floor)
                    for k in range(post.k_trunc)
                ),
            )
        )
    return out


def posterior_summary(post: MixturePosterior):
    """Monte-Carlo posterior means of eta and each archetype (fixed labelled stream)."""
    stream = rng_stream(0, "posterior-summary")
    etas, Ws = sample_theta_arrays(post, SUMMARY_SAMPLES, stream)
    eta_mean = etas.mean(axis=0)
    eta_mean = eta_mean / eta_mean.sum()
    W_mean = Ws.mean(axis=0)
    W_mean = W_mean / W_mean.sum(axis=1, keepdims=True)
    return (
        SimplexVector(tuple(eta_mean)),
        [SimplexVector(tuple(W_mean[k]), floor=post.weight_floor) for k in range(post.k_trunc)],
    )
