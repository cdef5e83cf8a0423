"""Chebyshev and weighted-sum scalarizations, mixture utilities, Lipschitz bounds.

All utilities follow the minimization convention: larger utility is preferred.
The Chebyshev utility requires weights bounded away from zero (floor ``c_w``),
which is what makes it Lipschitz in both arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SimplexVector

DEFAULT_WEIGHT_FLOOR = 0.01


@dataclass(frozen=True)
class ChebyshevUtilityParams:
    """Weight vector for the Chebyshev utility; floor must be strictly positive."""

    w: SimplexVector

    def __post_init__(self):
        if self.w.floor is None or self.w.floor <= 0:
            raise ValueError("Chebyshev weights require a strictly positive floor")


@dataclass(frozen=True)
class MixtureParams:
    """Mixture weights over archetypes plus the archetype weight vectors."""

    eta: SimplexVector
    archetypes: tuple[SimplexVector, ...]

    def __post_init__(self):
        if len(self.eta) != len(self.archetypes):
            raise ValueError(
                f"eta has {len(self.eta)} entries but {len(self.archetypes)} archetypes given"
            )
        lengths = {len(w) for w in self.archetypes}
        if len(lengths) > 1:
            raise ValueError(f"archetypes have inconsistent lengths {sorted(lengths)}")

    @property
    def eta_array(self) -> np.ndarray:
        return self.eta.array

    @property
    def weight_matrix(self) -> np.ndarray:
        return np.stack([w.array for w in self.archetypes])


def _weights_array(w) -> np.ndarray:
    if isinstance(w, ChebyshevUtilityParams):
        return w.w.array
    if isinstance(w, SimplexVector):
        return w.array
    return np.asarray(w, dtype=float)


def chebyshev_utility(y, w) -> float:
    """U(y, w) = -min_l y_l / w_l. Larger is preferred (minimization)."""
    y = np.asarray(y, dtype=float)
    warr = _weights_array(w)
    if y.shape != warr.shape:
        raise ValueError(f"dimension mismatch: y has shape {y.shape}, w {warr.shape}")
    if np.any(warr <= 0):
        raise ValueError("Chebyshev weights must be strictly positive")
    return float(-np.min(y / warr))


def weighted_sum_utility(y, w) -> float:
    """U_ws(y, w) = -sum_l w_l y_l; the weighted-sum ablation scalarizer."""
    y = np.asarray(y, dtype=float)
    warr = _weights_array(w)
    if y.shape != warr.shape:
        raise ValueError(f"dimension mismatch: y has shape {y.shape}, w {warr.shape}")
    return float(-np.dot(warr, y))


def utility(y, w, kind: str = "chebyshev") -> float:
    if kind == "chebyshev":
        return chebyshev_utility(y, w)
    if kind == "weighted_sum":
        return weighted_sum_utility(y, w)
    raise ValueError(f"unknown scalarization {kind!r}")


def utility_matrix(Y, W, kind: str = "chebyshev") -> np.ndarray:
    """Utilities for every outcome/weight combination.

    Y: (..., L) outcomes, W: (..., K, L) weights, broadcast on leading axes.
    Returns array of shape (..., K) when Y is (..., L) -> per-archetype utility
    of each outcome. Hot path used by the preference model and the policies.
    """
    Y = np.asarray(Y, dtype=float)
    W = np.asarray(W, dtype=float)
    if kind == "chebyshev":
        return -np.min(Y[..., None, :] / W, axis=-1)
    if kind == "weighted_sum":
        return -np.einsum("...l,...kl->...k", Y, W)
    raise ValueError(f"unknown scalarization {kind!r}")


def mixture_utility(y, theta: MixtureParams, kind: str = "chebyshev") -> float:
    """U_mix(y; theta) = sum_k eta_k U(y; w_k)."""
    y = np.asarray(y, dtype=float)
    utils = np.array([utility(y, w, kind) for w in theta.archetypes])
    return float(np.dot(theta.eta_array, utils))


def mixture_utility_arrays(Y, eta, W, kind: str = "chebyshev") -> np.ndarray:
    """Vectorized mixture utility: Y (n, L), eta (K,), W (K, L) -> (n,)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    utils = utility_matrix(Y, np.asarray(W, dtype=float), kind)
    return utils @ np.asarray(eta, dtype=float)


def lipschitz_bounds(y, y2, w, w2, c_w: float) -> tuple[float, float, float, float]:
    """The four quantities of the two Chebyshev Lipschitz inequalities.

    Returns (lhs_y, rhs_y, lhs_w, rhs_w) with
      lhs_y = |U(y,w) - U(y2,w)|,   rhs_y = (1/c_w) * ||y - y2||_inf,
      lhs_w = |U(y,w) - U(y,w2)|,   rhs_w = (||y||_inf / c_w^2) * ||w - w2||_1.
    Callers assert lhs <= rhs + 1e-12.
    """
    y = np.asarray(y, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    warr = _weights_array(w)
    warr2 = _weights_array(w2)
    if c_w <= 0:
        raise ValueError("c_w must be strictly positive")
    for label, arr in (("w", warr), ("w2", warr2)):
        if np.any(arr < c_w - 1e-12):
            raise ValueError(f"{label} violates floor {c_w}: min entry {arr.min()}")
    lhs_y = abs(chebyshev_utility(y, warr) - chebyshev_utility(y2, warr))
    rhs_y = float(np.max(np.abs(y - y2)) / c_w)
    lhs_w = abs(chebyshev_utility(y, warr) - chebyshev_utility(y, warr2))
    rhs_w = float(np.max(np.abs(y)) / c_w**2 * np.sum(np.abs(warr - warr2)))
    return lhs_y, rhs_y, lhs_w, rhs_w
