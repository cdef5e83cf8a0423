"""Alignment, regret, calibration, preference-error and theory-term arithmetic."""

import itertools

import numpy as np
import pytest

from maobo.bench import make_problem
from maobo.core import SimplexVector, rng_stream
from maobo.core import RunRecord
from maobo.metrics import (
    Alignment,
    align,
    aligned_archetype_errors,
    archetype_error_curves,
    gating_frequency,
    measure_outcome_bound,
    mismatch_terms,
    mixture_calibration,
    preference_error_triplet,
    reference_utility,
    simple_regret,
    surrogate_mixture_utility,
    true_mixture_utility,
)
from maobo.oracle import ArchetypeSpec, build_archetypes
from maobo.scalarize import MixtureParams


def _theta(eta, ws, floor=0.01):
    return MixtureParams(
        eta=SimplexVector(tuple(eta)),
        archetypes=tuple(SimplexVector(tuple(w), floor=floor) for w in ws),
    )


def _brute_force_align(W_hat, W_star):
    K, K_star = W_hat.shape[0], W_star.shape[0]
    best, best_total = None, np.inf
    for perm in itertools.permutations(range(K), K_star):
        total = sum(np.abs(W_hat[perm[k]] - W_star[k]).sum() for k in range(K_star))
        if total < best_total - 1e-15:
            best, best_total = perm, total
    return best, best_total


class TestAlign:
    def test_identity(self):
        W = np.array([[0.7, 0.3], [0.2, 0.8]])
        a = align(W, W)
        assert a.perm == (0, 1)
        assert a.total_cost == pytest.approx(0.0)
        assert not a.padded

    def test_swap_recovered(self):
        W_star = np.array([[0.7, 0.3], [0.2, 0.8]])
        a = align(W_star[::-1], W_star)
        assert a.perm == (1, 0)
        assert a.total_cost == pytest.approx(0.0)

    def test_matches_brute_force_random(self):
        stream = rng_stream(0, "align-bf")
        for _ in range(100):
            K = int(stream.integers(2, 7))
            K_star = int(stream.integers(2, K + 1))
            W_hat = stream.dirichlet(np.ones(4), size=K)
            W_star = stream.dirichlet(np.ones(4), size=K_star)
            a = align(W_hat, W_star)
            perm_bf, cost_bf = _brute_force_align(W_hat, W_star)
            assert a.total_cost == pytest.approx(cost_bf, abs=1e-12)

    def test_scipy_path_agrees_with_exhaustive(self):
        # exercise the assignment-solver path (K > 8) against brute force on
        # a K* small enough to enumerate
        stream = rng_stream(1, "align-big")
        W_hat = stream.dirichlet(np.ones(3), size=9)
        W_star = stream.dirichlet(np.ones(3), size=3)
        a = align(W_hat, W_star)
        _, cost_bf = _brute_force_align(W_hat, W_star)
        assert a.total_cost == pytest.approx(cost_bf, abs=1e-12)

    def test_total_cost_invariant_to_estimated_permutation(self):
        stream = rng_stream(2, "align-perm")
        W_hat = stream.dirichlet(np.ones(4), size=5)
        W_star = stream.dirichlet(np.ones(4), size=3)
        base = align(W_hat, W_star).total_cost
        for _ in range(10):
            p = stream.permutation(5)
            assert align(W_hat[p], W_star).total_cost == pytest.approx(base, abs=1e-12)

    def test_needs_enough_components(self):
        with pytest.raises(ValueError):
            align(np.array([[0.5, 0.5]]), np.array([[0.5, 0.5], [0.2, 0.8]]))


class TestReferenceAndRegret:
    def test_one_sample_reference(self):
        problem = make_problem("dtlz2")
        theta = _theta([1.0], [[0.4, 0.4, 0.05, 0.05, 0.05, 0.05]], floor=0.01)
        ref = reference_utility(problem, theta, n_samples=1, seed=3)
        x = rng_stream(3, "reference-search").uniform(size=(1, 7))[0]
        assert ref.value == pytest.approx(true_mixture_utility(problem.evaluate(x), theta))

    def test_monotone_in_samples(self):
        problem = make_problem("dtlz2")
        theta = _theta([0.5, 0.5], [[0.4, 0.4, 0.05, 0.05, 0.05, 0.05],
                                    [0.05, 0.05, 0.05, 0.05, 0.4, 0.4]])
        vals = [reference_utility(problem, theta, n, seed=4).value for n in (10, 50, 200)]
        assert vals[0] <= vals[1] <= vals[2]

    def test_cache_byte_identical(self, tmp_path):
        problem = make_problem("dtlz2")
        theta = _theta([1.0], [[0.4, 0.4, 0.05, 0.05, 0.05, 0.05]])
        a = reference_utility(problem, theta, 50, seed=5, cache_dir=tmp_path)
        b = reference_utility(problem, theta, 50, seed=5, cache_dir=tmp_path)
        assert a == b
        assert len(list(tmp_path.glob("ref-*.json"))) == 1

    def test_regret_nonincreasing_and_sign(self):
        problem = make_problem("dtlz2")
        theta = _theta([0.6, 0.4], [[0.4, 0.4, 0.05, 0.05, 0.05, 0.05],
                                    [0.05, 0.05, 0.4, 0.4, 0.05, 0.05]])
        ref = reference_utility(problem, theta, 100, seed=6)
        stream = rng_stream(7, "regret")
        Y = np.stack([problem.evaluate(stream.uniform(size=7)) for _ in range(20)])
        prev = np.inf
        for t in range(1, 21):
            r = simple_regret(Y[:t], theta, ref.value)
            assert r <= prev + 1e-12
            prev = r
        # the argmax design itself gives regret <= 0
        y_best = problem.evaluate(np.asarray(ref.design))
        assert simple_regret(np.vstack([Y, y_best[None]]), theta, ref.value) <= 1e-12


class TestCalibration:
    def test_perfect_recovery_near_zero(self):
        eta = np.array([0.5, 0.3, 0.2])
        kl, _ = mixture_calibration(eta, eta, (0, 1, 2))
        assert kl <= 1e-5

    def test_hand_kl(self):
        kl, _ = mixture_calibration(np.array([0.5, 0.5]), np.array([1.0, 0.0]), (0, 1))
        assert kl == pytest.approx(np.log(2), abs=1e-4)  # smoothing shifts it slightly

    def test_nonnegative(self):
        stream = rng_stream(8, "kl-prop")
        for _ in range(100):
            K = int(stream.integers(2, 6))
            eta_hat = stream.dirichlet(np.ones(K))
            eta_star = stream.dirichlet(np.ones(K))
            kl, _ = mixture_calibration(eta_hat, eta_star, tuple(range(K)))
            assert kl >= 0.0

    def test_bars_expose_spurious_and_missed(self):
        kl, bars = mixture_calibration(
            np.array([0.6, 0.3, 0.1]), np.array([0.7, 0.3]), (0, 1)
        )
        assert bars[2] == (2, pytest.approx(0.1), 0.0)  # spurious mass, no true weight


class TestPreferenceErrors:
    def test_collapsed_exact_zero(self):
        w_ref = np.array([0.5, 0.3, 0.2])
        mm, mp, ex = preference_error_triplet([1.0], [w_ref], w_ref)
        assert (mm, mp, ex) == (0.0, 0.0, 0.0)

    def test_hand_case_with_tiebreak(self):
        w_ref = np.array([0.5, 0.5])
        w2 = np.array([0.7, 0.3])  # L1 distance 0.4
        mm, mp, ex = preference_error_triplet([0.5, 0.5], [w_ref, w2], w_ref)
        assert ex == pytest.approx(0.2)
        assert mp == pytest.approx(0.0)  # tie in eta -> lowest index
        assert mm == pytest.approx(np.abs(w_ref - 0.5 * (w_ref + w2)).sum())

    def test_mixture_mean_bounded_by_expected(self):
        stream = rng_stream(9, "triplet-prop")
        for _ in range(100):
            K, L = 3, 4
            eta = stream.dirichlet(np.ones(K))
            W = stream.dirichlet(np.ones(L), size=K)
            w_ref = stream.dirichlet(np.ones(L))
            mm, _, ex = preference_error_triplet(eta, W, w_ref)
            assert mm <= ex + 1e-12


class TestGating:
    def test_single_mode(self):
        freq = gating_frequency([0, 0, 0], 3)
        np.testing.assert_allclose(freq, [1, 0, 0])

    def test_sums_to_one(self):
        freq = gating_frequency([0, 1, 2, 1, 0], 4)
        assert freq.sum() == pytest.approx(1.0)

    def test_iid_lln(self):
        stream = rng_stream(10, "gating-lln")
        eta = np.array([0.5, 0.3, 0.2])
        modes = stream.choice(3, size=100_000, p=eta)
        freq = gating_frequency(list(modes), 3)
        assert 0.5 * np.abs(freq - eta).sum() < 0.01

    def test_unavailable(self):
        with pytest.raises(ValueError, match="unavailable"):
            gating_frequency([None, None], 2)


class TestTheoryTerms:
    def _setup(self):
        spec = ArchetypeSpec(6, ((0, 1), (2, 3), (4, 5)))
        archetypes = build_archetypes(spec, floor=0.01)
        theta = MixtureParams(
            eta=SimplexVector((0.5, 0.3, 0.2)), archetypes=tuple(archetypes)
        )
        return theta

    def test_exact_estimates_give_zero_lhs(self):
        theta = self._setup()
        f_x = np.full(6, 0.5)
        terms = mismatch_terms(
            f_x, f_x, theta.eta_array, theta.weight_matrix, theta, 0.01, 2.0
        )
        assert terms["lhs"] == pytest.approx(0.0, abs=1e-12)
        assert terms["delta_w"] == pytest.approx(0.0, abs=1e-12)
        assert terms["delta_eta"] == pytest.approx(0.0, abs=1e-12)
        assert terms["rhs"] >= terms["lhs"]

    def test_random_estimates_inequality_holds(self):
        # the theorem itself is the oracle: any violation is a bug
        theta = self._setup()
        problem = make_problem("dtlz2")
        b_y = measure_outcome_bound(problem, n_probe=2000, seed=11)
        stream = rng_stream(12, "mismatch-prop")
        for _ in range(300):
            x = stream.uniform(size=7)
            f_x = problem.evaluate(x)
            mu_x = np.clip(f_x + stream.normal(0, 0.1, size=6), -b_y, b_y)
            K = 5
            eta_hat = stream.dirichlet(np.ones(K))
            W_hat = np.stack([
                np.maximum(stream.dirichlet(np.ones(6)), 0.01) for _ in range(K)
            ])
            W_hat = W_hat / W_hat.sum(axis=1, keepdims=True)
            # re-floor exactly
            from maobo.core import floor_simplex
            W_hat = np.stack([floor_simplex(w, 0.01) for w in W_hat])
            terms = mismatch_terms(f_x, mu_x, eta_hat, W_hat, theta, 0.01, b_y)
            assert terms["lhs"] <= terms["rhs"] + 1e-9

    def test_surrogate_utility_matches_direct(self):
        theta = self._setup()
        mu = np.full(6, 0.4)
        val = surrogate_mixture_utility(mu, theta.eta_array, theta.weight_matrix)
        assert val == pytest.approx(true_mixture_utility(mu, theta), abs=1e-12)


class TestArchetypeErrorCurves:
    def test_aligned_errors_hand_case(self):
        theta = _theta([0.6, 0.4], [[0.7, 0.3], [0.2, 0.8]], floor=0.01)
        hat = [SimplexVector((0.75, 0.25)), SimplexVector((0.2, 0.8))]
        _, errs = aligned_archetype_errors(hat, theta)
        np.testing.assert_allclose(sorted(errs), [0.0, 0.1])
        assert errs.mean() == pytest.approx(0.05)

    def _record(self, iteration, archetype_means):
        return RunRecord(
            iteration=iteration, design=(0.5,), outcome=(0.5, 0.5),
            query_i=0, query_j=1, response_first=True,
            eta_mean=tuple(1 / len(archetype_means) for _ in archetype_means),
            archetype_means=tuple(tuple(w) for w in archetype_means),
            archetype_errors=(0.0,) * 2,
        )

    def test_perfect_recovery_all_zero(self):
        theta = _theta([0.6, 0.4], [[0.7, 0.3], [0.2, 0.8]], floor=0.01)
        recs = [self._record(t, [[0.7, 0.3], [0.2, 0.8]]) for t in (1, 2, 3)]
        curves = archetype_error_curves(recs, theta)
        np.testing.assert_allclose(curves["mean"], 0.0, atol=1e-12)
        np.testing.assert_allclose(curves["per_component"], 0.0, atol=1e-12)

    def test_hand_band(self):
        # distances 0.1 and 0.3 -> mean 0.2, band [0.1, 0.3]
        theta = _theta([0.6, 0.4], [[0.7, 0.3], [0.2, 0.8]], floor=0.01)
        recs = [self._record(1, [[0.75, 0.25], [0.35, 0.65]])]
        curves = archetype_error_curves(recs, theta)
        assert curves["mean"][0] == pytest.approx(0.2)
        assert curves["min"][0] == pytest.approx(0.1)
        assert curves["max"][0] == pytest.approx(0.3)

    def test_label_switch_does_not_spike(self):
        theta = _theta([0.6, 0.4], [[0.7, 0.3], [0.2, 0.8]], floor=0.01)
        recs = [
            self._record(1, [[0.7, 0.3], [0.2, 0.8]]),
            self._record(2, [[0.2, 0.8], [0.7, 0.3]]),  # swapped labels
        ]
        curves = archetype_error_curves(recs, theta)
        np.testing.assert_allclose(curves["mean"], [0.0, 0.0], atol=1e-12)

    def test_unmatched_components_use_nearest(self):
        theta = _theta([1.0], [[0.7, 0.3]], floor=0.01)
        recs = [self._record(1, [[0.7, 0.3], [0.2, 0.8]])]
        curves = archetype_error_curves(recs, theta)
        assert curves["per_component"].shape == (1, 2)
        assert curves["per_component"][0, 1] == pytest.approx(1.0)  # nearest true
