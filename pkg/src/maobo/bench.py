"""Benchmark objective functions and the tabular candidate-pool problem.

DTLZ2 is configured with L=6 objectives over [0,1]^7; WFG9 with L=8 objectives
over [0,1]^34 (position parameter k=14, distance parameter l=20). Both are
minimized and deterministic. Tabular problems wrap a CSV candidate pool with
exact-lookup evaluation and per-column min-max normalization of objectives.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

DTLZ2_L = 6
DTLZ2_D = 7
WFG9_L = 8
WFG9_D = 34
WFG9_K_POS = 14  # position parameter, 2*(L-1)
WFG9_L_DIST = 20  # distance parameter


@dataclass(frozen=True)
class Problem:
    """A black-box many-objective problem over [0,1]^d (or a finite pool)."""

    problem_id: str
    n_objectives: int
    n_variables: int
    evaluate_fn: Callable[[np.ndarray], np.ndarray]
    mode: str = "continuous"  # continuous | tabular
    objective_names: tuple[str, ...] = ()
    pool_designs: np.ndarray | None = None
    pool_outcomes: np.ndarray | None = None
    outcome_scaler: "MinMaxScaler | None" = None

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_variables,):
            raise ValueError(
                f"{self.problem_id} expects {self.n_variables} variables, got shape {x.shape}"
            )
        if self.mode == "continuous" and (np.any(x < -1e-12) or np.any(x > 1 + 1e-12)):
            raise ValueError(f"design outside [0,1]^d: {x}")
        return self.evaluate_fn(x)

    @property
    def labels(self) -> tuple[str, ...]:
        if self.objective_names:
            return self.objective_names
        return tuple(f"f{i + 1}" for i in range(self.n_objectives))


def dtlz2(x) -> np.ndarray:
    """Standard DTLZ2 with L=6 objectives and d=7 variables, minimization."""
    x = np.asarray(x, dtype=float)
    if x.shape != (DTLZ2_D,):
        raise ValueError(f"dtlz2 expects dimension {DTLZ2_D}, got {x.shape}")
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise ValueError("dtlz2 input outside [0,1]^7")
    return _dtlz2_batch(x[None, :])[0]


def _dtlz2_batch(X: np.ndarray, n_obj: int = DTLZ2_L) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pos = X[:, : n_obj - 1]
    g = np.sum((X[:, n_obj - 1 :] - 0.5) ** 2, axis=1)
    theta = pos * (np.pi / 2)
    cos = np.cos(theta)
    sin = np.sin(theta)
    F = np.empty((X.shape[0], n_obj))
    for m in range(n_obj):
        if m == 0:
            prod = np.prod(cos, axis=1)
        else:
            prod = np.prod(cos[:, : n_obj - 1 - m], axis=1) * sin[:, n_obj - 1 - m]
        F[:, m] = (1.0 + g) * prod
    return F


# --- WFG9 transformation pipeline (Huband et al. toolkit, concave shape) ---


def _clip01(a: np.ndarray) -> np.ndarray:
    # guards 1e-10-scale roundoff excursions outside [0,1]
    return np.clip(a, 0.0, 1.0)


def _b_param(y, u, a, b, c):
    v = a - (1.0 - 2.0 * u) * np.abs(np.floor(0.5 - u) + a)
    return _clip01(np.power(y, b + (c - b) * v))


def _s_decept(y, a, b, c):
    t1 = np.floor(y - a + b) * (1.0 - c + (a - b) / b) / (a - b)
    t2 = np.floor(a + b - y) * (1.0 - c + (1.0 - a - b) / b) / (1.0 - a - b)
    return _clip01(1.0 + (np.abs(y - a) - b) * (t1 + t2 + 1.0 / b))


def _s_multi(y, a, b, c):
    t1 = np.abs(y - c) / (2.0 * (np.floor(c - y) + c))
    t2 = (4.0 * a + 2.0) * np.pi * (0.5 - t1)
    return _clip01((1.0 + np.cos(t2) + 4.0 * b * t1**2) / (b + 2.0))


def _r_nonsep(Y: np.ndarray, a: int) -> np.ndarray:
    # Y: (n, m) block; returns (n,) reduction.
    n, m = Y.shape
    num = np.zeros(n)
    for j in range(m):
        num += Y[:, j]
        for k in range(a - 1):
            num += np.abs(Y[:, j] - Y[:, (1 + j + k) % m])
    half = np.ceil(a / 2.0)
    denom = m * half * (1.0 + 2.0 * a - 2.0 * half) / a
    return _clip01(num / denom)


def _shape_concave(Xm: np.ndarray, m: int, n_obj: int) -> np.ndarray:
    # Xm: (n, M-1) position values; m is the 1-based objective index.
    theta = Xm * (np.pi / 2)
    if m == 1:
        return _clip01(np.prod(np.sin(theta), axis=1))
    if m == n_obj:
        return _clip01(np.cos(theta[:, 0]))
    return _clip01(
        np.prod(np.sin(theta[:, : n_obj - m]), axis=1) * np.cos(theta[:, n_obj - m])
    )


def wfg9(x) -> np.ndarray:
    """Standard WFG9 with L=8, d=34 (k=14, l=20); input in [0,1]^34, minimization."""
    x = np.asarray(x, dtype=float)
    if x.shape != (WFG9_D,):
        raise ValueError(f"wfg9 expects dimension {WFG9_D}, got {x.shape}")
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise ValueError("wfg9 input outside [0,1]^34")
    return _wfg9_batch(x[None, :])[0]


def _wfg9_batch(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    M, k = WFG9_L, WFG9_K_POS
    # inputs are the unit-scaled variables: native z_i in [0, 2i] divided by 2i
    y = X.copy()

    # t1: parameter-dependent bias on all but the last variable
    t1 = y.copy()
    for i in range(d - 1):
        u = np.mean(y[:, i + 1 :], axis=1)
        t1[:, i] = _b_param(y[:, i], u, 0.98 / 49.98, 0.02, 50.0)

    # t2: deceptive shift on position vars, multimodal shift on distance vars
    t2 = np.empty_like(t1)
    t2[:, :k] = _s_decept(t1[:, :k], 0.35, 0.001, 0.05)
    t2[:, k:] = _s_multi(t1[:, k:], 30.0, 95.0, 0.35)

    # t3: non-separable reduction to M values
    gap = k // (M - 1)
    t3 = np.empty((n, M))
    for m in range(M - 1):
        t3[:, m] = _r_nonsep(t2[:, m * gap : (m + 1) * gap], gap)
    t3[:, M - 1] = _r_nonsep(t2[:, k:], d - k)

    # degeneracy step with A_i = 1 (identity here since t_M <= 1), then shapes
    xm = np.maximum(t3[:, -1:], 1.0) * (t3[:, :-1] - 0.5) + 0.5
    x_last = t3[:, -1]
    S = 2.0 * np.arange(1, M + 1)
    F = np.empty((n, M))
    for m in range(1, M + 1):
        F[:, m - 1] = x_last + S[m - 1] * _shape_concave(xm, m, M)
    return F


@dataclass(frozen=True)
class MinMaxScaler:
    """Per-column affine map used to normalize tabular objectives to [0,1]."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def normalize(self, Y: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        span = np.asarray(self.hi) - lo
        span = np.where(span > 0, span, 1.0)
        return (np.asarray(Y, dtype=float) - lo) / span

    def denormalize(self, Y: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        span = np.asarray(self.hi) - lo
        span = np.where(span > 0, span, 1.0)
        return np.asarray(Y, dtype=float) * span + lo


def tabular_problem(designs, outcomes, problem_id: str = "tabular",
                    objective_names: tuple[str, ...] = ()) -> Problem:
    """Finite-pool problem: evaluation is exact lookup of a pool row.

    Objectives are min-max normalized to [0,1] per column; the scaler is kept
    on the problem for reporting in original units.
    """
    X = np.atleast_2d(np.asarray(designs, dtype=float))
    Y = np.atleast_2d(np.asarray(outcomes, dtype=float))
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"{X.shape[0]} designs but {Y.shape[0]} outcome rows")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
        raise ValueError("tabular data contains non-finite values")
    seen: dict[bytes, int] = {}
    for i, row in enumerate(X):
        key = row.tobytes()
        if key in seen:
            j = seen[key]
            if not np.array_equal(Y[i], Y[j]):
                raise ValueError(
                    f"duplicate design rows {j} and {i} with conflicting outcomes"
                )
        seen[key] = i
    scaler = MinMaxScaler(tuple(Y.min(axis=0)), tuple(Y.max(axis=0)))
    Yn = scaler.normalize(Y)
    index = {X[i].tobytes(): i for i in range(X.shape[0])}

    def lookup(x: np.ndarray) -> np.ndarray:
        key = np.asarray(x, dtype=float).tobytes()
        if key not in index:
            raise ValueError("design is not a pool row; tabular problems are lookup-only")
        return Yn[index[key]].copy()

    return Problem(
        problem_id=problem_id,
        n_objectives=Y.shape[1],
        n_variables=X.shape[1],
        evaluate_fn=lookup,
        mode="tabular",
        objective_names=tuple(objective_names) if objective_names else (),
        pool_designs=X,
        pool_outcomes=Yn,
        outcome_scaler=scaler,
    )


def load_tabular_csv(path) -> Problem:
    """Read a `x1..xd,y1..yL` CSV (decimal-point floats) into a tabular Problem."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"tabular csv not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValueError(f"{path}: need a header and at least one data row")
    header = [h.strip() for h in lines[0].split(",")]
    d = sum(1 for h in header if h.startswith("x"))
    L = sum(1 for h in header if h.startswith("y"))
    if d == 0 or L == 0 or d + L != len(header):
        raise ValueError(f"{path}: header must be x1..xd,y1..yL, got {header}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValueError(
                f"{path}: line {lineno}: expected {len(header)} cells, got {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno}: bad float: {exc}") from exc
    table = np.asarray(rows)
    if np.any(~np.isfinite(table)):
        raise ValueError(f"{path}: table contains non-finite values")
    return tabular_problem(table[:, :d], table[:, d:], problem_id=f"tabular:{path.name}")


def make_problem(spec: str) -> Problem:
    """Problem factory: 'dtlz2', 'wfg9', or 'tabular:<csv path>'."""
    if spec == "dtlz2":
        return Problem("dtlz2", DTLZ2_L, DTLZ2_D, lambda x: _dtlz2_batch(x[None, :])[0])
    if spec == "wfg9":
        return Problem("wfg9", WFG9_L, WFG9_D, lambda x: _wfg9_batch(x[None, :])[0])
    if spec.startswith("tabular:"):
        return load_tabular_csv(spec.split(":", 1)[1])
    raise ValueError(f"unknown problem {spec!r}; expected dtlz2, wfg9 or tabular:<csv>")


def problem_defaults(problem_id: str) -> dict:
    """Per-problem defaults for the simulated decision maker and noise scales."""
    if problem_id == "dtlz2":
        return {
            "eta_star": (0.5, 0.3, 0.2),
            "groups": ((0, 1), (2, 3), (4, 5)),
            "sigma_u": 0.02,
            "rho": 0.5,
        }
    if problem_id == "wfg9":
        return {
            "eta_star": (0.50, 0.25, 0.15, 0.10),
            "groups": ((0, 1), (2, 3), (4, 5), (6, 7)),
            "sigma_u": 0.02,
            "rho": 0.5,
        }
    if problem_id.startswith("tabular"):
        return {"sigma_u": 0.1, "rho": 0.8}
    return {}
