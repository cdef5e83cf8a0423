"""Diagnostics: simple regret, aligned archetype errors, mixture calibration,
gating frequencies, and the numerical theory-check harness.

The theory checks evaluate, per iteration, the surrogate-mismatch inequality
  |U*(x) - U_hat_t(x)| <= (1/c_w)||f(x)-mu(x)||_inf + (B_y/c_w^2) Dw + (B_y/c_w) De
at the selected design and the reference-best design, and the per-round regret
bound with the restart spread standing in for the surrogate optimization error
(a proxy: per-round violations are logged, never raised).
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bench import Problem
from .core import RunRecord, rng_stream, write_csv
from .scalarize import MixtureParams, mixture_utility_arrays

EXHAUSTIVE_MAX = 8
KL_SMOOTHING = 1e-6
MISMATCH_TOL = 1e-9


@dataclass(frozen=True)
class Alignment:
    """Injection of true archetypes into estimated components (label matching)."""

    perm: tuple[int, ...]  # perm[k] = index of the estimated component matched to true k
    costs: tuple[float, ...]  # L1 distance per true archetype under the matching
    padded: bool  # True when there are more estimated components than true ones

    @property
    def total_cost(self) -> float:
        return float(sum(self.costs))


def align(archetypes_hat, archetypes_star) -> Alignment:
    """Minimum-total-L1-cost matching of estimated components to true archetypes.

    Solved exhaustively for up to 8 estimated components, by the O(n^3)
    assignment algorithm beyond that; the two paths agree where both run.
    """
    W_hat = np.atleast_2d(np.asarray(archetypes_hat, dtype=float))
    W_star = np.atleast_2d(np.asarray(archetypes_star, dtype=float))
    if W_hat.shape[0] == 0 or W_star.shape[0] == 0:
        raise ValueError("alignment needs nonempty archetype lists")
    K, K_star = W_hat.shape[0], W_star.shape[0]
    if K < K_star:
        raise ValueError(f"need at least as many estimated ({K}) as true ({K_star}) components")
    cost = np.abs(W_hat[None, :, :] - W_star[:, None, :]).sum(axis=2)  # (K*, K)
    if K <= EXHAUSTIVE_MAX:
        perm = _align_exhaustive(cost)
    else:
        rows, cols = linear_sum_assignment(cost)
        perm = tuple(int(cols[np.where(rows == k)[0][0]]) for k in range(K_star))
    costs = tuple(float(cost[k, perm[k]]) for k in range(K_star))
    return Alignment(perm=perm, costs=costs, padded=K > K_star)


def _align_exhaustive(cost: np.ndarray) -> tuple[int, ...]:
    K_star, K = cost.shape
    best_perm, best_total = None, np.inf
    for perm in itertools.permutations(range(K), K_star):
        total = sum(cost[k, perm[k]] for k in range(K_star))
        if total < best_total - 1e-15:
            best_perm, best_total = perm, total
    return tuple(best_perm)


@dataclass(frozen=True)
class ReferenceUtility:
    """Best mixture utility found by seeded random search (saved and reused)."""

    value: float
    design: tuple[float, ...]
    n_samples: int


def reference_utility(problem: Problem, theta_star: MixtureParams, n_samples: int = 500,
                      seed: int = 0, cache_dir=None) -> ReferenceUtility:
    """Random-search reference for simple regret, cached by (problem, theta*, seed).

    Continuous problems draw `n_samples` uniform designs from the labelled
    stream (nested-prefix property: larger budgets extend smaller ones);
    tabular problems take the exact pool optimum.
    """
    key = None
    if cache_dir is not None:
        digest = hashlib.blake2b(
            repr((problem.problem_id, theta_star.eta.p,
                  tuple(w.p for w in theta_star.archetypes), n_samples, seed)).encode(),
            digest_size=16,
        ).hexdigest()
        key = Path(cache_dir) / f"ref-{digest}.json"
        if key.exists():
            with open(key, "r", encoding="utf-8") as fh:
                d = json.load(fh)
            return ReferenceUtility(d["value"], tuple(d["design"]), d["n_samples"])

    eta, W = theta_star.eta_array, theta_star.weight_matrix
    if problem.mode == "tabular":
        vals = mixture_utility_arrays(problem.pool_outcomes, eta, W)
        best = int(np.argmax(vals))
        ref = ReferenceUtility(float(vals[best]), tuple(problem.pool_designs[best]),
                               len(vals))
    else:
        stream = rng_stream(seed, "reference-search")
        X = stream.uniform(size=(n_samples, problem.n_variables))
        Y = np.stack([problem.evaluate(x) for x in X])
        vals = mixture_utility_arrays(Y, eta, W)
        best = int(np.argmax(vals))
        ref = ReferenceUtility(float(vals[best]), tuple(X[best]), n_samples)

    if key is not None:
        key.parent.mkdir(parents=True, exist_ok=True)
        with open(key, "w", encoding="utf-8", newline="\n") as fh:
            json.dump({"value": ref.value, "design": list(ref.design),
                       "n_samples": ref.n_samples}, fh)
    return ref


def true_mixture_utility(y, theta_star: MixtureParams) -> float:
    return float(mixture_utility_arrays(y, theta_star.eta_array,
                                        theta_star.weight_matrix)[0])


def simple_regret(outcomes, theta_star: MixtureParams, u_ref: float) -> float:
    """u_ref minus the best observed true mixture utility (may go negative)."""
    Y = np.atleast_2d(np.asarray(outcomes, dtype=float))
    if Y.shape[0] == 0:
        raise ValueError("simple regret needs at least one observed outcome")
    vals = mixture_utility_arrays(Y, theta_star.eta_array, theta_star.weight_matrix)
    return float(u_ref - vals.max())


def aligned_archetype_errors(archetype_means, theta_star: MixtureParams) -> tuple[Alignment, np.ndarray]:
    W_hat = np.stack([np.asarray(w.array if hasattr(w, "array") else w) for w in archetype_means])
    alignment = align(W_hat, theta_star.weight_matrix)
    return alignment, np.asarray(alignment.costs)


def mixture_calibration(eta_hat, eta_star, perm) -> tuple[float, list[tuple[int, float, float]]]:
    """KL(eta* || aligned eta_hat) in nats plus the paired calibration bars.

    The true weights are projected onto the estimated component slots through
    the alignment (zero-padding unmatched slots); both sides are smoothed by
    1e-6 and renormalized before the KL. Bars are (slot, inferred, projected
    true): inferred-only mass is spurious, true-only mass is missed.
    """
    eta_hat = np.asarray(eta_hat, dtype=float)
    eta_star = np.asarray(eta_star, dtype=float)
    proj = np.zeros_like(eta_hat)
    for k, i in enumerate(perm):
        proj[i] = eta_star[k]
    p = proj + KL_SMOOTHING
    q = eta_hat + KL_SMOOTHING
    p = p / p.sum()
    q = q / q.sum()
    kl = float(np.sum(p * np.log(p / q)))
    bars = [(i, float(eta_hat[i]), float(proj[i])) for i in range(eta_hat.size)]
    return kl, bars


def preference_error_triplet(eta_hat, archetype_means, w_ref) -> tuple[float, float, float]:
    """(mixture-mean, MAP-cluster, expected) L1 errors against one reference weight."""
    eta = np.asarray(eta_hat, dtype=float)
    W = np.stack([np.asarray(w.array if hasattr(w, "array") else w) for w in archetype_means])
    w_ref = np.asarray(w_ref, dtype=float)
    mixture_mean_err = float(np.abs(w_ref - eta @ W).sum())
    k_map = int(np.argmax(eta))  # lowest index wins ties
    map_err = float(np.abs(w_ref - W[k_map]).sum())
    expected_err = float(eta @ np.abs(w_ref - W).sum(axis=1))
    return mixture_mean_err, map_err, expected_err


def archetype_error_curves(records: list[RunRecord], theta_star: MixtureParams) -> dict:
    """Per-iteration aligned archetype errors and per-component trajectories.

    Alignment is recomputed each iteration, so label switching between
    iterations does not spike the aligned curves. Components left unmatched by
    the alignment report their distance to the nearest true archetype.
    """
    W_star = theta_star.weight_matrix
    iterations, means, mins, maxs, per_component = [], [], [], [], []
    for rec in records:
        if not rec.archetype_means:
            continue
        W_hat = np.stack([np.asarray(w) for w in rec.archetype_means])
        alignment = align(W_hat, W_star)
        errs = np.asarray(alignment.costs)
        matched = {i: k for k, i in enumerate(alignment.perm)}
        comp = np.empty(W_hat.shape[0])
        for i in range(W_hat.shape[0]):
            if i in matched:
                comp[i] = np.abs(W_hat[i] - W_star[matched[i]]).sum()
            else:
                comp[i] = np.abs(W_hat[i][None, :] - W_star).sum(axis=1).min()
        iterations.append(rec.iteration)
        means.append(float(errs.mean()))
        mins.append(float(errs.min()))
        maxs.append(float(errs.max()))
        per_component.append(comp)
    return {
        "iteration": np.asarray(iterations),
        "mean": np.asarray(means),
        "min": np.asarray(mins),
        "max": np.asarray(maxs),
        "per_component": np.stack(per_component) if per_component else np.empty((0, 0)),
    }


def gating_frequency(modes, k_star: int) -> np.ndarray:
    """Normalized counts of the oracle's active mode per query."""
    modes = [m for m in modes if m is not None]
    if not modes:
        raise ValueError("gating frequencies unavailable: no mode diagnostics recorded")
    counts = np.bincount(np.asarray(modes, dtype=int), minlength=k_star).astype(float)
    return counts / counts.sum()


def measure_outcome_bound(problem: Problem, n_probe: int = 10_000, seed: int = 0,
                          margin: float = 1.1) -> float:
    """B_y estimate: max ||f(x)||_inf over a seeded uniform probe, times a margin."""
    if problem.mode == "tabular":
        return margin * float(np.max(np.abs(problem.pool_outcomes)))
    stream = rng_stream(seed, "by-probe")
    X = stream.uniform(size=(n_probe, problem.n_variables))
    worst = 0.0
    for x in X:
        worst = max(worst, float(np.max(np.abs(problem.evaluate(x)))))
    return margin * worst


def surrogate_mixture_utility(mu, eta_hat, W_hat, kind: str = "chebyshev") -> float:
    """U_hat_t(x): mixture utility of the GP posterior mean under point estimates."""
    return float(mixture_utility_arrays(mu, np.asarray(eta_hat), np.asarray(W_hat), kind)[0])


def mismatch_terms(f_x, mu_x, eta_hat, W_hat, theta_star: MixtureParams,
                   c_w: float, b_y: float) -> dict:
    """Both sides of the surrogate-mismatch inequality at one design."""
    f_x = np.asarray(f_x, dtype=float)
    mu_x = np.asarray(mu_x, dtype=float)
    eta_hat = np.asarray(eta_hat, dtype=float)
    W_hat = np.atleast_2d(np.asarray(W_hat, dtype=float))
    alignment = align(W_hat, theta_star.weight_matrix)
    eta_star = theta_star.eta_array
    delta_w = float(eta_star @ [np.abs(W_hat[alignment.perm[k]] - theta_star.weight_matrix[k]).sum()
                                for k in range(eta_star.size)])
    proj = np.zeros_like(eta_hat)
    for k, i in enumerate(alignment.perm):
        proj[i] = eta_star[k]
    delta_eta = float(np.abs(eta_hat - proj).sum())
    gp_dev = float(np.max(np.abs(f_x - mu_x)))
    lhs = abs(true_mixture_utility(f_x, theta_star)
              - surrogate_mixture_utility(mu_x, eta_hat, W_hat))
    rhs = gp_dev / c_w + b_y * delta_w / c_w**2 + b_y * delta_eta / c_w
    return {
        "lhs": lhs,
        "rhs": rhs,
        "gp_dev": gp_dev,
        "delta_w": delta_w,
        "delta_eta": delta_eta,
        "mu_inf": float(np.max(np.abs(mu_x))),
    }


@dataclass(frozen=True)
class TheoryReport:
    """Aggregated per-run theory-check outcome."""

    n_iterations: int
    mismatch_violations: int
    max_mismatch_ratio: float
    perround_violations: int
    rows: tuple[dict, ...]

    def summary_lines(self) -> list[str]:
        lines = [
            f"iterations checked: {self.n_iterations}",
            f"mismatch-bound violations (tolerance {MISMATCH_TOL}): {self.mismatch_violations}",
            f"max lhs/rhs ratio: {self.max_mismatch_ratio:.6f}",
            f"per-round bound violations (restart-spread proxy for the optimization error;"
            f" logged only): {self.perround_violations}",
        ]
        return lines


def theory_report(records: list[RunRecord]) -> TheoryReport:
    rows = []
    mismatch_violations = 0
    perround_violations = 0
    max_ratio = 0.0
    for rec in records:
        if rec.theory is None:
            continue
        t = dict(rec.theory)
        t["iteration"] = rec.iteration
        rows.append(t)
        for side in ("xt", "xref"):
            lhs, rhs = t[f"mismatch_lhs_{side}"], t[f"mismatch_rhs_{side}"]
            if lhs > rhs + MISMATCH_TOL:
                mismatch_violations += 1
            if rhs > 0:
                max_ratio = max(max_ratio, lhs / rhs)
        if t["perround_lhs"] > t["perround_rhs"] + MISMATCH_TOL:
            perround_violations += 1
    return TheoryReport(
        n_iterations=len(rows),
        mismatch_violations=mismatch_violations,
        max_mismatch_ratio=max_ratio,
        perround_violations=perround_violations,
        rows=tuple(rows),
    )


# --- CSV emission ----------------------------------------------------------

THEORY_COLUMNS = [
    "iteration", "gp_dev_xt", "gp_dev_xref", "delta_w", "delta_eta",
    "mismatch_lhs_xt", "mismatch_rhs_xt", "mismatch_lhs_xref", "mismatch_rhs_xref",
    "perround_lhs", "perround_rhs", "eps_proxy", "mu_inf_xt", "mu_inf_xref",
    "b_y", "sigma_sum_sq",
]


def write_metric_csvs(records: list[RunRecord], out_dir,
                      theta_star: MixtureParams | None = None) -> list[Path]:
    """Per-run metric tables; columns documented by their header names."""
    out_dir = Path(out_dir)
    eta_star = None if theta_star is None else theta_star.eta_array
    written = []

    path = out_dir / "regret.csv"
    write_csv(path, ["iteration", "simple_regret"],
              [(r.iteration, r.simple_regret) for r in records])
    written.append(path)

    path = out_dir / "archetype_error.csv"
    rows = []
    n_comp = max((len(r.archetype_means) for r in records), default=0)
    comp_cols = [f"component{i}_l1" for i in range(n_comp)]
    curves = None
    if records and records[0].archetype_errors is not None and theta_star is not None:
        curves = archetype_error_curves(records, theta_star)
    for idx, r in enumerate(records):
        if r.archetype_errors is None or curves is None:
            rows.append((r.iteration, None, None, None) + (None,) * n_comp)
        else:
            errs = np.asarray(r.archetype_errors)
            rows.append(
                (r.iteration, float(errs.mean()), float(errs.min()), float(errs.max()))
                + tuple(float(v) for v in curves["per_component"][idx])
            )
    write_csv(
        path,
        ["iteration", "mean_aligned_l1", "min_aligned_l1", "max_aligned_l1"] + comp_cols,
        rows,
    )
    written.append(path)

    path = out_dir / "eta_kl.csv"
    write_csv(path, ["iteration", "kl_eta_star_vs_aligned"],
              [(r.iteration, r.eta_kl) for r in records])
    written.append(path)

    path = out_dir / "pref_errors.csv"
    rows = []
    for r in records:
        if r.pref_errors is None:
            rows.append((r.iteration, None, None, None))
        else:
            rows.append((r.iteration, *r.pref_errors))
    write_csv(path, ["iteration", "mixture_mean_l1", "map_cluster_l1", "expected_l1"], rows)
    written.append(path)

    path = out_dir / "gating.csv"
    modes = [r.mode_used for r in records]
    if eta_star is not None and modes and all(m is not None for m in modes):
        freq = gating_frequency(modes, len(eta_star))
        rows = [(k, float(freq[k]), float(eta_star[k])) for k in range(len(eta_star))]
    else:
        rows = []
    write_csv(path, ["mode", "empirical_frequency", "eta_star"], rows)
    written.append(path)

    theory_rows = [r for r in records if r.theory is not None]
    if theory_rows:
        path = out_dir / "theory.csv"
        write_csv(
            path, THEORY_COLUMNS,
            [tuple(dict(r.theory, iteration=r.iteration).get(c) for c in THEORY_COLUMNS)
             for r in theory_rows],
        )
        written.append(path)
    return written
