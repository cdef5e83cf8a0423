"""Mixture expected improvement and the outer optimization loop.

The loop per iteration: (re)fit the per-objective GPs, update the preference
posterior by warm-started SVI, propose a design by maximizing mixture-EI under
common random numbers, evaluate it, pose one pairwise query, and fold the
answer into the preference dataset. `LoopDriver` exposes the iteration as an
explicit advance/apply state machine so the batch runner and the live
elicitation service share one implementation; every stochastic step draws
from a per-iteration labelled stream, which makes resumed sessions replay
batch runs exactly.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from . import metrics
from .bench import Problem
from .core import (
    PreferenceDatum,
    RunConfig,
    RunRecord,
    SimplexVector,
    rng_stream,
)
from .gp import GpHyperparams, GpModel, fit_independent, predict_objectives
from .oracle import ArchetypeSpec, DmOracle, build_archetypes
from .policy import select_pair
from .prefmix import (
    MixturePosterior,
    MixturePrior,
    fit_svi,
    initial_posterior,
    posterior_summary,
    sample_theta_arrays,
)
from .scalarize import MixtureParams, mixture_utility_arrays, utility_matrix


logger = logging.getLogger(__name__)


def config_truth(cfg: RunConfig, n_objectives: int) -> MixtureParams | None:
    """Ground-truth mixture parameters declared in the config, if any."""
    if not cfg.eta_star or not cfg.groups:
        return None
    archetypes = build_archetypes(
        ArchetypeSpec(n_objectives, cfg.groups, cfg.dominant_mass),
        floor=cfg.weight_floor,
    )
    if len(archetypes) != len(cfg.eta_star):
        raise ValueError(
            f"{len(cfg.groups)} groups but eta_star has {len(cfg.eta_star)} entries"
        )
    return MixtureParams(eta=SimplexVector(cfg.eta_star), archetypes=tuple(archetypes))


@dataclass(frozen=True)
class AcquisitionConfig:
    """Monte-Carlo and inner-search budgets for the design proposal."""

    mc_samples: int = 12
    restarts: int = 10
    max_evals: int = 200
    tabular: bool = False

    def __post_init__(self):
        if self.mc_samples < 1 or self.restarts < 1 or self.max_evals < 1:
            raise ValueError("acquisition budgets must be >= 1")


def u_best(outcomes, post: MixturePosterior, S: int, stream: np.random.Generator,
           kind: str = "chebyshev") -> float:
    """max_i E_theta[U_mix(y_i; theta)] with theta samples shared across i."""
    Y = np.atleast_2d(np.asarray(outcomes, dtype=float))
    if Y.shape[0] == 0:
        raise ValueError("u_best needs a nonempty history")
    etas, Ws = sample_theta_arrays(post, S, stream)
    U = utility_matrix(Y[None, :, :], Ws[:, None, :, :], kind)  # (S, n, K)
    vals = np.einsum("snk,sk->sn", U, etas).mean(axis=0)
    return float(vals.max())


def _ei_fixed(x, gps, etas: np.ndarray, Ws: np.ndarray, Z: np.ndarray,
              u_best_value: float, kind: str) -> float:
    """EI estimate at x under frozen theta samples and GP noise (CRN)."""
    mu, sd = predict_objectives(gps, np.asarray(x, dtype=float))
    F = mu[None, :] + sd[None, :] * Z  # (S, L)
    U = utility_matrix(F, Ws, kind)  # (S, K)
    vals = np.sum(U * etas, axis=1)
    return float(np.mean(np.maximum(vals - u_best_value, 0.0)))


def _draw_acquisition_noise(post: MixturePosterior | MixtureParams, mc_samples: int,
                            n_objectives: int, stream: np.random.Generator):
    """theta samples then GP noise, in a fixed order shared by all EI paths."""
    if isinstance(post, MixtureParams):
        etas = np.tile(post.eta_array, (mc_samples, 1))
        Ws = np.tile(post.weight_matrix, (mc_samples, 1, 1))
    else:
        etas, Ws = sample_theta_arrays(post, mc_samples, stream)
    Z = stream.standard_normal((mc_samples, n_objectives))
    return etas, Ws, Z


def ei_mix(x, gps, post, u_best_value: float, cfg: AcquisitionConfig,
           stream: np.random.Generator, kind: str = "chebyshev") -> float:
    """Joint Monte-Carlo mixture-EI at a single design (nonnegative)."""
    etas, Ws, Z = _draw_acquisition_noise(post, cfg.mc_samples, len(gps), stream)
    return _ei_fixed(x, gps, etas, Ws, Z, u_best_value, kind)


def propose_design(gps, post, u_best_value: float, n_variables: int,
                   cfg: AcquisitionConfig, stream: np.random.Generator,
                   kind: str = "chebyshev", pool: np.ndarray | None = None,
                   evaluated: set[int] | None = None):
    """Maximize the fixed-noise mixture-EI.

    Continuous mode: multi-start bounded direction-set search from uniform
    starts; returns the best restart, its EI, and the max-min spread across
    restarts (recorded as the proxy for the surrogate optimization error).
    Tabular mode: exact argmax over the unevaluated candidate pool (spread 0).
    """
    etas, Ws, Z = _draw_acquisition_noise(post, cfg.mc_samples, len(gps), stream)

    def ei(x):
        return _ei_fixed(x, gps, etas, Ws, Z, u_best_value, kind)

    if cfg.tabular:
        if pool is None:
            raise ValueError("tabular proposals need the candidate pool")
        evaluated = evaluated or set()
        candidates = [i for i in range(pool.shape[0]) if i not in evaluated]
        if not candidates:
            raise RuntimeError("candidate pool exhausted")
        vals = np.array([ei(pool[i]) for i in candidates])
        best = int(np.argmax(vals))
        return pool[candidates[best]].copy(), float(vals[best]), 0.0

    starts = stream.uniform(size=(cfg.restarts, n_variables))
    best_x, best_val = None, -np.inf
    restart_vals = []
    for start in starts:
        res = minimize(
            lambda x: -ei(np.clip(x, 0.0, 1.0)),
            start,
            method="Powell",
            bounds=[(0.0, 1.0)] * n_variables,
            options={"maxfev": cfg.max_evals, "xtol": 1e-3, "ftol": 1e-8},
        )
        x_cand = np.clip(res.x, 0.0, 1.0)
        v_cand = ei(x_cand)
        v_start = ei(start)
        if v_start > v_cand:  # local search must never lose to its start point
            x_cand, v_cand = start, v_start
        restart_vals.append(v_cand)
        if v_cand > best_val:
            best_x, best_val = x_cand, v_cand
    spread = float(max(restart_vals) - min(restart_vals))
    return best_x, float(best_val), spread


class LoopDriver:
    """Resumable state machine for the outer loop.

    `advance()` runs one iteration up to and including the query selection and
    returns the pending pair; `apply_answer()` folds in the DM's response and
    finalizes the iteration's record. All per-iteration randomness comes from
    streams labelled with the iteration index, so a driver resumed from a
    serialized state continues bit-identically.
    """

    def __init__(self, cfg: RunConfig, problem: Problem, cache_dir=None):
        cfg.validate()
        if problem.mode == "continuous" and cfg.obs_noise < 0:
            raise ValueError("obs_noise must be >= 0")
        self.cfg = cfg
        self.problem = problem
        self.kind = cfg.scalarization
        L = problem.n_objectives
        self.prior = MixturePrior(
            k_trunc=cfg.k_trunc,
            alpha=cfg.alpha,
            beta_dir=(cfg.beta_dir,) * L,
            sigma_u=cfg.sigma_u,
            scalarization=cfg.scalarization,
        )
        self.posterior = initial_posterior(
            self.prior, cfg.weight_floor, rng_stream(cfg.seed, "svi-init")
        )

        self.theta_star = config_truth(cfg, L)
        if cfg.fixed_pref and self.theta_star is None:
            raise ValueError("fixed-preference runs need the true archetypes in the config")
        self.fixed_theta: MixtureParams | None = None
        if cfg.fixed_pref:
            k_dom = int(np.argmax(self.theta_star.eta_array))
            self.fixed_theta = MixtureParams(
                eta=SimplexVector((1.0,)),
                archetypes=(self.theta_star.archetypes[k_dom],),
            )

        self.u_ref = None
        self.x_ref = None
        self._y_ref = None
        if self.theta_star is not None:
            ref = metrics.reference_utility(
                problem, self.theta_star, cfg.ref_samples, seed=cfg.seed,
                cache_dir=cache_dir,
            )
            self.u_ref = ref.value
            self.x_ref = np.asarray(ref.design)
            self._y_ref = problem.evaluate(self.x_ref)
        self.b_y = None
        if cfg.theory_check:
            if self.theta_star is None:
                raise ValueError("theory checks need ground-truth mixture parameters")
            self.b_y = metrics.measure_outcome_bound(problem, seed=cfg.seed)

        # initial dataset
        init_stream = rng_stream(cfg.seed, "init-design")
        self.evaluated_idx: set[int] = set()
        if problem.mode == "tabular":
            n_pool = problem.pool_designs.shape[0]
            idx = init_stream.choice(n_pool, size=min(cfg.n_init, n_pool), replace=False)
            X0 = [problem.pool_designs[i].copy() for i in sorted(int(i) for i in idx)]
            self.evaluated_idx.update(int(i) for i in idx)
        else:
            sampler = qmc.LatinHypercube(d=problem.n_variables, seed=init_stream)
            X0 = list(sampler.random(cfg.n_init))
        self.X: list[np.ndarray] = []
        self.Y: list[np.ndarray] = []
        noise_stream = rng_stream(cfg.seed, "obs-noise-init") if cfg.obs_noise > 0 else None
        for x in X0:
            y = problem.evaluate(x)
            if noise_stream is not None:
                y = y + cfg.obs_noise * noise_stream.standard_normal(y.size)
            self.X.append(np.asarray(x, dtype=float))
            self.Y.append(np.asarray(y, dtype=float))

        self.prefs: list[PreferenceDatum] = []
        self.gps: list[GpModel] | None = None
        self.t = 1
        self.pending: tuple[int, int] | None = None
        self._pending_record: dict | None = None
        self.records: list[RunRecord] = []

    # -- state ------------------------------------------------------------

    @property
    def finished(self) -> bool:
        return self.t > self.cfg.n_iterations and self.pending is None

    @property
    def awaiting_answer(self) -> bool:
        return self.pending is not None

    def outcome_matrix(self) -> np.ndarray:
        return np.stack(self.Y)

    def current_best(self) -> tuple[np.ndarray, float]:
        """Best observed outcome under the posterior-mean mixture utility."""
        eta_mean, arch_means = self._summary()
        W = np.stack([w.array for w in arch_means])
        vals = mixture_utility_arrays(self.outcome_matrix(), eta_mean.array, W, self.kind)
        best = int(np.argmax(vals))
        return self.Y[best], float(vals[best])

    def _summary(self):
        if self.fixed_theta is not None:
            return self.fixed_theta.eta, list(self.fixed_theta.archetypes)
        eta_mean, arch_means = posterior_summary(self.posterior)
        return eta_mean, arch_means

    # -- the iteration ----------------------------------------------------

    def advance(self) -> tuple[int, int]:
        """Run iteration t up to the pending query; returns the pair indices."""
        if self.pending is not None:
            raise RuntimeError("previous query is still awaiting an answer")
        if self.finished:
            raise RuntimeError("run is finished")
        cfg, problem, t = self.cfg, self.problem, self.t
        started = time.perf_counter()

        if self.gps is None or (t - 1) % cfg.gp_refit_period == 0:
            self.gps = fit_independent(
                np.stack(self.X), np.stack(self.Y),
                restarts=cfg.gp_restarts, stream=rng_stream(cfg.seed, f"gp-t{t}"),
            )
        else:
            X = np.stack(self.X)
            Y = np.stack(self.Y)
            self.gps = [m.with_data(X, Y[:, j]) for j, m in enumerate(self.gps)]

        if not cfg.fixed_pref:
            self.posterior = fit_svi(
                self.prefs, self.prior, init=self.posterior,
                steps=cfg.svi_steps, lr=cfg.svi_lr, mc_samples=cfg.svi_mc_samples,
                stream=rng_stream(cfg.seed, f"svi-t{t}"),
                weight_floor=cfg.weight_floor,
            )
        eta_mean, arch_means = self._summary()

        acq_post = self.fixed_theta if self.fixed_theta is not None else self.posterior
        if self.fixed_theta is not None:
            u_b = float(
                mixture_utility_arrays(
                    self.outcome_matrix(), self.fixed_theta.eta_array,
                    self.fixed_theta.weight_matrix, self.kind,
                ).max()
            )
        else:
            u_b = u_best(
                self.outcome_matrix(), self.posterior, cfg.ubest_samples,
                rng_stream(cfg.seed, f"ubest-t{t}"), self.kind,
            )

        acq_cfg = AcquisitionConfig(
            mc_samples=cfg.ei_mc_samples, restarts=cfg.ei_restarts,
            max_evals=cfg.ei_max_evals, tabular=problem.mode == "tabular",
        )
        x_t, ei_value, spread = propose_design(
            self.gps, acq_post, u_b, problem.n_variables, acq_cfg,
            rng_stream(cfg.seed, f"ei-t{t}"), self.kind,
            pool=problem.pool_designs, evaluated=self.evaluated_idx,
        )
        mu_xt, sd_xt = predict_objectives(self.gps, x_t)

        y_t = problem.evaluate(x_t)
        if cfg.obs_noise > 0:
            y_t = y_t + cfg.obs_noise * rng_stream(cfg.seed, f"obs-t{t}").standard_normal(y_t.size)
        if problem.mode == "tabular":
            match = np.where((problem.pool_designs == x_t).all(axis=1))[0]
            self.evaluated_idx.add(int(match[0]))
        self.X.append(np.asarray(x_t, dtype=float))
        self.Y.append(np.asarray(y_t, dtype=float))

        query_mode = "random" if cfg.fixed_pref else cfg.query_mode
        pair = select_pair(
            self.outcome_matrix(), query_mode, self.posterior,
            sigma_u=cfg.sigma_u, stream=rng_stream(cfg.seed, f"pair-t{t}"),
            n_pairs=cfg.pair_subsample, n_samples=cfg.policy_samples,
            hybrid_lambda=cfg.hybrid_lambda, kind=self.kind,
        )

        record = {
            "iteration": t,
            "design": tuple(float(v) for v in x_t),
            "outcome": tuple(float(v) for v in y_t),
            "query_i": pair.i,
            "query_j": pair.j,
            "eta_mean": tuple(eta_mean.array),
            "archetype_means": tuple(tuple(w.array) for w in arch_means),
            "ei_value": ei_value,
            "restart_spread": spread,
            "archetype_errors": None,
            "simple_regret": None,
            "eta_kl": None,
            "pref_errors": None,
            "theory": None,
        }
        if self.theta_star is not None and self.fixed_theta is None:
            alignment, errs = metrics.aligned_archetype_errors(arch_means, self.theta_star)
            record["archetype_errors"] = tuple(float(e) for e in errs)
            kl, _ = metrics.mixture_calibration(
                eta_mean.array, self.theta_star.eta_array, alignment.perm
            )
            record["eta_kl"] = kl
            w_ref = self.theta_star.archetypes[int(np.argmax(self.theta_star.eta_array))]
            record["pref_errors"] = metrics.preference_error_triplet(
                eta_mean.array, [w.array for w in arch_means], w_ref.array
            )
        if self.theta_star is not None:
            record["simple_regret"] = metrics.simple_regret(
                self.outcome_matrix(), self.theta_star, self.u_ref
            )
        if cfg.theory_check and self.theta_star is not None:
            record["theory"] = self._theory_terms(
                record, x_t, y_t, mu_xt, sd_xt, eta_mean, arch_means, spread
            )
        record["wall_clock"] = time.perf_counter() - started
        self._pending_record = record
        self.pending = (pair.i, pair.j)
        return pair.i, pair.j

    def _theory_terms(self, record, x_t, y_t, mu_xt, sd_xt, eta_mean, arch_means, spread):
        cfg = self.cfg
        W_hat = np.stack([w.array for w in arch_means])
        terms_xt = metrics.mismatch_terms(
            y_t, mu_xt, eta_mean.array, W_hat, self.theta_star, cfg.weight_floor, self.b_y
        )
        mu_ref, _ = predict_objectives(self.gps, self.x_ref)
        terms_ref = metrics.mismatch_terms(
            self._y_ref, mu_ref, eta_mean.array, W_hat, self.theta_star,
            cfg.weight_floor, self.b_y,
        )
        perround_lhs = self.u_ref - metrics.true_mixture_utility(y_t, self.theta_star)
        perround_rhs = (
            (terms_ref["gp_dev"] + terms_xt["gp_dev"]) / cfg.weight_floor
            + 2.0 * self.b_y * terms_xt["delta_w"] / cfg.weight_floor**2
            + 2.0 * self.b_y * terms_xt["delta_eta"] / cfg.weight_floor
            + spread
        )
        return {
            "gp_dev_xt": terms_xt["gp_dev"],
            "gp_dev_xref": terms_ref["gp_dev"],
            "delta_w": terms_xt["delta_w"],
            "delta_eta": terms_xt["delta_eta"],
            "mismatch_lhs_xt": terms_xt["lhs"],
            "mismatch_rhs_xt": terms_xt["rhs"],
            "mismatch_lhs_xref": terms_ref["lhs"],
            "mismatch_rhs_xref": terms_ref["rhs"],
            "perround_lhs": perround_lhs,
            "perround_rhs": perround_rhs,
            "eps_proxy": spread,
            "mu_inf_xt": terms_xt["mu_inf"],
            "mu_inf_xref": terms_ref["mu_inf"],
            "b_y": self.b_y,
            "sigma_sum_sq": float(np.max(sd_xt) ** 2),
        }

    def apply_answer(self, response_first: bool, mode_used: int | None = None) -> RunRecord:
        """Record the DM's response and finalize the iteration."""
        if self.pending is None:
            raise RuntimeError("no pending query to answer")
        i, j = self.pending
        if response_first:
            winner, loser = self.Y[i], self.Y[j]
        else:
            winner, loser = self.Y[j], self.Y[i]
        self.prefs.append(
            PreferenceDatum(
                winner=tuple(winner), loser=tuple(loser), round=self.t,
                latent_mode_truth=mode_used,
            )
        )
        record = RunRecord(
            response_first=bool(response_first), mode_used=mode_used,
            **self._pending_record,
        )
        self.records.append(record)
        self.pending = None
        self._pending_record = None
        self.t += 1
        regret = "n/a" if record.simple_regret is None else f"{record.simple_regret:.4g}"
        logger.info(
            "t=%d ei=%.4g regret=%s eta=%s", record.iteration, record.ei_value,
            regret, np.round(np.asarray(record.eta_mean), 3).tolist(),
        )
        return record

    # -- persistence for the elicitation service ---------------------------

    def state_dict(self) -> dict:
        return {
            "config": self.cfg.to_dict(),
            "X": [list(x) for x in self.X],
            "Y": [list(y) for y in self.Y],
            "prefs": [asdict(p) for p in self.prefs],
            "posterior": self.posterior.to_dict(),
            "gp_hypers": None if self.gps is None else [
                [m.hyper.signal_variance, m.hyper.lengthscale, m.hyper.noise_variance]
                for m in self.gps
            ],
            "t": self.t,
            "pending": None if self.pending is None else list(self.pending),
            "pending_record": self._pending_record,
            "records": [asdict(r) for r in self.records],
            "evaluated_idx": sorted(self.evaluated_idx),
        }

    @classmethod
    def from_state_dict(cls, state: dict, problem: Problem, cache_dir=None) -> "LoopDriver":
        cfg = RunConfig.from_dict(state["config"])
        driver = cls(cfg, problem, cache_dir=cache_dir)
        driver.X = [np.asarray(x, dtype=float) for x in state["X"]]
        driver.Y = [np.asarray(y, dtype=float) for y in state["Y"]]
        driver.prefs = [
            PreferenceDatum(
                winner=tuple(p["winner"]), loser=tuple(p["loser"]),
                round=p["round"], latent_mode_truth=p["latent_mode_truth"],
            )
            for p in state["prefs"]
        ]
        driver.posterior = MixturePosterior.from_dict(state["posterior"])
        if state["gp_hypers"] is not None:
            X = np.stack(driver.X)
            Y = np.stack(driver.Y)
            driver.gps = [
                GpModel(X, Y[:, k], GpHyperparams(*h))
                for k, h in enumerate(state["gp_hypers"])
            ]
        driver.t = int(state["t"])
        driver.pending = None if state["pending"] is None else tuple(state["pending"])
        pr = state["pending_record"]
        if pr is not None:
            pr = dict(pr)
            for key in ("design", "outcome", "eta_mean"):
                pr[key] = tuple(pr[key])
            pr["archetype_means"] = tuple(tuple(w) for w in pr["archetype_means"])
            for key in ("archetype_errors", "pref_errors"):
                if pr[key] is not None:
                    pr[key] = tuple(pr[key])
        driver._pending_record = pr
        driver.records = [
            RunRecord(**{**r, "archetype_means": tuple(tuple(w) for w in r["archetype_means"])})
            for r in state["records"]
        ]
        driver.evaluated_idx = set(int(i) for i in state["evaluated_idx"])
        return driver


def run_loop(cfg: RunConfig, problem: Problem, dm_oracle: DmOracle,
             cache_dir=None) -> list[RunRecord]:
    """Batch loop: the simulated DM answers every query. Deterministic given cfg."""
    driver = LoopDriver(cfg, problem, cache_dir=cache_dir)
    while not driver.finished:
        i, j = driver.advance()
        winner_is_i, mode_used = dm_oracle.respond(driver.t, driver.Y[i], driver.Y[j])
        driver.apply_answer(winner_is_i, mode_used)
    return driver.records


def make_dm_oracle(cfg: RunConfig, problem: Problem) -> DmOracle:
    """Simulated decision maker matching the config's ground-truth mixture."""
    from .oracle import DmState

    if not cfg.eta_star or not cfg.groups:
        raise ValueError("simulated DM needs eta_star and archetype groups")
    archetypes = build_archetypes(
        ArchetypeSpec(problem.n_objectives, cfg.groups, cfg.dominant_mass),
        floor=cfg.weight_floor,
    )
    state = DmState(
        eta_star=SimplexVector(cfg.eta_star),
        archetypes=tuple(archetypes),
        regime=cfg.context_regime,
        rho=cfg.rho if cfg.context_regime == "persistent" else 0.0,
        sigma_u=cfg.oracle_noise,
    )
    return DmOracle(state, cfg.seed)
