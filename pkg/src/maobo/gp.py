"""Per-objective Gaussian-process regression surrogates.

Isotropic squared-exponential kernel with signal variance, lengthscale and
noise variance fitted by multi-start L-BFGS-B on the log marginal likelihood
(analytic gradients). Each fitted model caches a Cholesky factorization of
K + sigma_n^2 I and is immutable thereafter.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
FACTORIZATION_RTOL = 1e-8


@dataclass(frozen=True)
class GpHyperparams:
    signal_variance: float
    lengthscale: float
    noise_variance: float

    def __post_init__(self):
        for name in ("signal_variance", "lengthscale", "noise_variance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")

    @property
    def log_vector(self) -> np.ndarray:
        return np.log([self.signal_variance, self.lengthscale, self.noise_variance])

    @classmethod
    def from_log_vector(cls, v) -> "GpHyperparams":
        sv, ls, nv = np.exp(np.asarray(v, dtype=float))
        return cls(sv, ls, nv)


@dataclass(frozen=True)
class GpBounds:
    """Box bounds on each hyperparameter (natural scale)."""

    signal_variance: tuple[float, float]
    lengthscale: tuple[float, float]
    noise_variance: tuple[float, float]

    @property
    def log_bounds(self) -> list[tuple[float, float]]:
        return [
            (np.log(self.signal_variance[0]), np.log(self.signal_variance[1])),
            (np.log(self.lengthscale[0]), np.log(self.lengthscale[1])),
            (np.log(self.noise_variance[0]), np.log(self.noise_variance[1])),
        ]


def data_adaptive_bounds(X: np.ndarray, y: np.ndarray) -> GpBounds:
    """Bounds scaled to the data: well-posed fitting on [0,1]^d."""
    d = X.shape[1]
    var_y = max(float(np.var(y)), 1e-8)
    sqrt_d = np.sqrt(d)
    return GpBounds(
        signal_variance=(0.01 * var_y, 100.0 * var_y),
        lengthscale=(0.05 * sqrt_d, 2.0 * sqrt_d),
        noise_variance=(1e-6 * var_y, 0.1 * var_y),
    )


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    a2 = np.sum(A**2, axis=1)[:, None]
    b2 = np.sum(B**2, axis=1)[None, :]
    return np.maximum(a2 + b2 - 2.0 * A @ B.T, 0.0)


def rbf_kernel(A: np.ndarray, B: np.ndarray, hyper: GpHyperparams) -> np.ndarray:
    d2 = _sq_dists(A, B)
    return hyper.signal_variance * np.exp(-0.5 * d2 / hyper.lengthscale**2)


class GpModel:
    """Immutable fitted GP for one objective."""

    def __init__(self, X, y, hyper: GpHyperparams):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError(f"{X.shape[0]} inputs but {y.size} targets")
        if not np.all(np.isfinite(y)):
            raise ValueError("targets must be finite")
        self.X = X
        self.y = y
        self.hyper = hyper
        K = rbf_kernel(X, X, hyper)
        self._Ky, self._cho, self.jitter = _factorize(K, hyper.noise_variance)
        self._validate_factorization()
        self.alpha = cho_solve(self._cho, y)

    def _validate_factorization(self):
        L = np.tril(self._cho[0]) if self._cho[1] else np.triu(self._cho[0]).T
        recon = L @ L.T
        target = self._Ky
        rel = np.linalg.norm(recon - target) / max(np.linalg.norm(target), 1e-300)
        if rel > FACTORIZATION_RTOL:
            raise RuntimeError(f"cholesky reconstruction error {rel:.2e} exceeds tolerance")

    def predict(self, x) -> tuple[float, float]:
        """Posterior mean and standard deviation of the latent objective at x."""
        mean, std = self.predict_batch(np.atleast_2d(np.asarray(x, dtype=float)))
        return float(mean[0]), float(std[0])

    def predict_batch(self, Xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        if Xs.shape[1] != self.X.shape[1]:
            raise ValueError(
                f"query dimension {Xs.shape[1]} != training dimension {self.X.shape[1]}"
            )
        ks = rbf_kernel(self.X, Xs, self.hyper)
        mean = ks.T @ self.alpha
        v = cho_solve(self._cho, ks)
        var = self.hyper.signal_variance - np.sum(ks * v, axis=0)
        if np.any(var < -1e-10):
            warnings.warn(
                f"posterior variance clipped from {var.min():.3e}", RuntimeWarning
            )
        return mean, np.sqrt(np.maximum(var, 0.0))

    def log_marginal_likelihood(self) -> float:
        return _log_marginal(self.X, self.y, self.hyper)[0]

    def with_data(self, X, y) -> "GpModel":
        """Condition the same hyperparameters on a (typically enlarged) dataset."""
        return GpModel(X, y, self.hyper)


def confidence_radius(model: GpModel, x, beta_t: float) -> float:
    """Half-width sqrt(beta_t) * sigma(x) of the per-objective confidence band."""
    if beta_t < 0:
        raise ValueError("beta_t must be >= 0")
    _, std = model.predict(x)
    return float(np.sqrt(beta_t) * std)


def _factorize(K: np.ndarray, noise_variance: float):
    n = K.shape[0]
    last_err = None
    for jitter in JITTERS:
        Ky = K + (noise_variance + jitter) * np.eye(n)
        try:
            cho = cho_factor(Ky, lower=True, check_finite=False)
            return Ky, cho, jitter
        except np.linalg.LinAlgError as exc:
            last_err = exc
    cond = np.linalg.cond(K + noise_variance * np.eye(n))
    raise np.linalg.LinAlgError(
        f"cholesky failed after jitter escalation (condition ~{cond:.3e}): {last_err}"
    )


def _log_marginal(X: np.ndarray, y: np.ndarray, hyper: GpHyperparams):
    """Log marginal likelihood and its gradient w.r.t. log hyperparameters."""
    n = X.shape[0]
    d2 = _sq_dists(X, X)
    R = np.exp(-0.5 * d2 / hyper.lengthscale**2)
    K = hyper.signal_variance * R
    Ky, cho, _ = _factorize(K, hyper.noise_variance)
    alpha = cho_solve(cho, y)
    lower = np.tril(cho[0])
    lml = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(lower))))
        - 0.5 * n * np.log(2 * np.pi)
    )
    Kinv = cho_solve(cho, np.eye(n))
    A = np.outer(alpha, alpha) - Kinv
    dK_dlog_sv = K
    dK_dlog_ls = K * (d2 / hyper.lengthscale**2)
    grad = np.array(
        [
            0.5 * np.sum(A * dK_dlog_sv),
            0.5 * np.sum(A * dK_dlog_ls),
            0.5 * np.trace(A) * hyper.noise_variance,
        ]
    )
    return lml, grad


def fit(X, y, bounds: GpBounds | None = None, restarts: int = 5,
        stream: np.random.Generator | None = None) -> GpModel:
    """Fit hyperparameters by multi-start bounded quasi-Newton on the log marginal.

    The first start is the midpoint of the log bounds; the remaining ones are
    drawn log-uniformly from the box. The returned model's log marginal is at
    least that of every start point.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 2:
        raise ValueError("need at least 2 observations to fit a GP")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if bounds is None:
        bounds = data_adaptive_bounds(X, y)
    if stream is None:
        stream = np.random.default_rng(0)
    log_bounds = np.asarray(bounds.log_bounds)
    mid = log_bounds.mean(axis=1)
    starts = [mid]
    for _ in range(restarts - 1):
        starts.append(stream.uniform(log_bounds[:, 0], log_bounds[:, 1]))

    def objective(theta):
        lml, grad = _log_marginal(X, y, GpHyperparams.from_log_vector(theta))
        return -lml, -grad

    best_theta, best_val = None, np.inf
    for start in starts:
        res = minimize(
            objective,
            start,
            jac=True,
            method="L-BFGS-B",
            bounds=[tuple(b) for b in log_bounds],
        )
        val = res.fun if np.isfinite(res.fun) else objective(start)[0]
        theta = res.x if np.isfinite(res.fun) else start
        if val < best_val:
            best_theta, best_val = theta, val
    return GpModel(X, y, GpHyperparams.from_log_vector(best_theta))


def fit_independent(X, Y, bounds=None, restarts: int = 5,
                    stream: np.random.Generator | None = None) -> list[GpModel]:
    """One GP per objective column of Y, all sharing the input matrix X."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return [fit(X, Y[:, j], bounds, restarts, stream) for j in range(Y.shape[1])]


def predict_objectives(models: list[GpModel], x) -> tuple[np.ndarray, np.ndarray]:
    """Stacked per-objective posterior means and stds at a single design."""
    means = np.empty(len(models))
    stds = np.empty(len(models))
    for j, m in enumerate(models):
        means[j], stds[j] = m.predict(x)
    return means, stds
