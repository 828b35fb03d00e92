import numpy as np
import pytest

from refimsim import power
from refimsim.oracle import evaluate_objective
from refimsim.power import (
    BISECTION_ITER_BOUND, PowerMatrix, allocate_bisection,
    allocate_bisection_batch, equal_power, general_algorithm, initial_power,
    kkt_power, measured_interference, refim_step, scheduled_arrays,
    taxation_from_feedback, taxation_term, wf_step,
)
from refimsim.reference import ReferenceSelection
from refimsim.scheduling import NO_USER


def random_alloc_inputs(seed, n_sub=8):
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.1, 5.0, size=n_sub)
    taxes = rng.uniform(0.0, 2.0, size=n_sub) * rng.integers(0, 2, size=n_sub)
    intf = rng.uniform(0.05, 2.0, size=n_sub)
    gains = rng.lognormal(-0.5, 1.0, size=n_sub)
    budget = float(rng.uniform(0.5, 4.0))
    masks = np.full(n_sub, rng.uniform(0.3, 2.0))
    return weights, taxes, intf, gains, budget, masks


class TestEqualPower:
    def test_even_split(self):
        assert np.allclose(equal_power(2.0, np.full(4, np.inf)), 0.5)

    def test_mask_binds_without_redistribution(self):
        assert np.allclose(equal_power(2.0, np.full(4, 0.3)), 0.3)

    def test_single_subchannel_full_budget(self):
        assert np.allclose(equal_power(2.0, np.array([np.inf])), 2.0)

    def test_disallowed_subchannels_excluded(self):
        p = equal_power(2.0, np.array([1.0, 0.0, 1.0, 0.0]))
        assert np.allclose(p, [1.0, 0.0, 1.0, 0.0])


class TestTaxation:
    def test_arithmetic_example(self):
        # victim: serving signal 1, other interference 0.2, noise 0.8
        t = taxation_from_feedback(weight=1.0, cross_gain=0.2, signal_w=1.0,
                                   intf_noise_w=1.0)
        assert t == pytest.approx(0.1)

    def test_linear_in_cross_gain(self):
        t1 = taxation_from_feedback(1.0, 0.2, 1.0, 1.0)
        t2 = taxation_from_feedback(1.0, 0.4, 1.0, 1.0)
        assert t2 == pytest.approx(2 * t1)

    def test_ground_truth_matches_feedback_fields(self):
        rng = np.random.default_rng(0)
        gains = rng.lognormal(-1, 1, size=(3, 2, 2))
        powers = rng.uniform(0.1, 1.0, size=(2, 2))
        noise = np.full((3, 2), 0.2)
        ref_user, serving, taxed, s = 2, 1, 0, 1
        t = taxation_term(1.7, ref_user, taxed, serving, gains, powers, noise, s)
        signal = gains[ref_user, serving, s] * powers[serving, s]
        intf = gains[ref_user, 0, s] * powers[0, s] + noise[ref_user, s]
        assert t == pytest.approx(taxation_from_feedback(1.7, gains[ref_user, taxed, s],
                                                         signal, intf))


class TestKktPower:
    def test_interior_value(self):
        # lam*ln2 + t = 2 via tax alone
        assert kkt_power(1.0, 0.0, 2.0, 0.1, 1.0, 10.0) == pytest.approx(0.4)

    def test_upper_clamp(self):
        assert kkt_power(1.0, 0.0, 0.05, 0.1, 1.0, 10.0) == pytest.approx(10.0)

    def test_lower_clamp(self):
        assert kkt_power(1.0, 0.0, 2.0, 5.0, 1.0, 10.0) == 0.0

    def test_zero_denominator_hits_mask(self):
        assert kkt_power(1.0, 0.0, 0.0, 0.1, 1.0, 7.0) == pytest.approx(7.0)

    def test_monotone_nonincreasing_in_tax(self):
        taxes = np.linspace(0.0, 5.0, 40)
        p = kkt_power(1.0, 0.3, taxes, 0.1, 1.0, 10.0)
        assert np.all(np.diff(p) <= 1e-15)


class TestBisection:
    def test_closed_form_waterfilling(self):
        # water level mu solves sum(mu - a_s) = budget: mu = 2, p = [1.5, 1.0]
        p, lam, iters = allocate_bisection(
            weights=np.array([1.0, 1.0]), taxes=np.zeros(2),
            intf_noise=np.array([0.5, 1.0]), own_gains=np.ones(2),
            budget=2.5, masks=np.full(2, np.inf))
        assert np.allclose(p, [1.5, 1.0], atol=1e-5)
        assert abs(p.sum() - 2.5) < power.BUDGET_RTOL * 2.5
        assert lam == pytest.approx(1.0 / (2.0 * np.log(2)), rel=1e-4)

    def test_symmetric_split(self):
        p, _, _ = allocate_bisection(np.ones(2), np.zeros(2), np.full(2, 0.4),
                                     np.ones(2), 2.0, np.full(2, np.inf))
        assert np.allclose(p, [1.0, 1.0], atol=1e-5)

    def test_budget_exceeds_masks(self):
        p, lam, iters = allocate_bisection(np.ones(3), np.zeros(3), np.full(3, 0.1),
                                           np.ones(3), 100.0, np.full(3, 0.5))
        assert np.allclose(p, 0.5)
        assert lam == 0.0 and iters == 0

    @pytest.mark.parametrize("seed", range(30))
    def test_feasible_and_bounded(self, seed):
        weights, taxes, intf, gains, budget, masks = random_alloc_inputs(seed)
        p, lam, iters = allocate_bisection(weights, taxes, intf, gains, budget, masks)
        pm = PowerMatrix(p[None, :], np.array([budget]), masks[None, :])
        pm.validate()
        assert iters <= BISECTION_ITER_BOUND
        # complementary slackness: positive multiplier only when budget is tight
        if lam > 0:
            assert p.sum() == pytest.approx(budget, rel=1e-3)

    @pytest.mark.parametrize("seed", range(10))
    def test_power_sum_nonincreasing_in_lambda(self, seed):
        weights, taxes, intf, gains, budget, masks = random_alloc_inputs(seed)
        lams = np.linspace(0.0, 5.0, 60)
        sums = [kkt_power(weights, l, taxes, intf, gains, masks).sum() for l in lams]
        assert np.all(np.diff(sums) <= 1e-12)

    def test_taxation_never_raises_power_at_fixed_lambda(self):
        weights, _, intf, gains, budget, masks = random_alloc_inputs(4)
        base = kkt_power(weights, 0.7, np.zeros_like(weights), intf, gains, masks)
        taxed = kkt_power(weights, 0.7, np.full_like(weights, 0.5), intf, gains, masks)
        assert np.all(taxed <= base + 1e-15)

    def test_batch_matches_single(self):
        rows = [random_alloc_inputs(s) for s in range(5)]
        W = np.stack([r[0] for r in rows]); T = np.stack([r[1] for r in rows])
        I = np.stack([r[2] for r in rows]); G = np.stack([r[3] for r in rows])
        B = np.array([r[4] for r in rows]); M = np.stack([r[5] for r in rows])
        P, lams, iters = allocate_bisection_batch(W, T, I, G, B, M)
        for i, (w, t, f, g, b, m) in enumerate(rows):
            p1, l1, it1 = allocate_bisection(w, t, f, g, b, m)
            assert np.allclose(P[i], p1, atol=1e-12)


class TestInitialPower:
    def test_uniform(self):
        p = initial_power("uniform", np.array([2.0]), np.full((1, 4), np.inf))
        assert np.allclose(p, 0.5)

    def test_random_sums_to_budget(self):
        rng = np.random.default_rng(0)
        budgets = np.array([2.0, 5.0])
        p = initial_power("random", budgets, np.full((2, 4), np.inf), rng=rng)
        assert np.allclose(p.sum(axis=1), budgets, rtol=1e-12)
        assert np.all(p >= 0)

    def test_previous_identity(self):
        prev = np.array([[0.3, 0.7]])
        p = initial_power("previous", np.array([1.0]), np.ones((1, 2)), prev=prev, slot=5)
        assert np.array_equal(p, prev)

    def test_previous_slot0_falls_back_to_uniform(self):
        p = initial_power("previous", np.array([1.0]), np.ones((1, 2)), prev=None, slot=0)
        assert np.allclose(p, 0.5)

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            initial_power("warm", np.array([1.0]), np.ones((1, 2)))


def make_step_instance(seed, n_bs=2, n_sub=4, upc=2):
    rng = np.random.default_rng(seed)
    K = n_bs * upc
    cells = [list(range(n * upc, (n + 1) * upc)) for n in range(n_bs)]
    gains = rng.lognormal(-1.0, 1.0, size=(K, n_bs, n_sub))
    noise = np.full((K, n_sub), 0.1)
    weights = rng.uniform(0.3, 3.0, size=K)
    prev = rng.uniform(0.05, 0.5, size=(n_bs, n_sub))
    sched = np.stack([rng.choice(ids, size=n_sub) for ids in cells])
    budget = 1.5
    masks = np.full(n_sub, 1.5)
    return cells, gains, noise, weights, prev, sched, budget, masks


class TestRefimStep:
    @pytest.mark.parametrize("seed", range(10))
    def test_no_references_reduces_to_waterfilling(self, seed):
        cells, gains, noise, weights, prev, sched, budget, masks = make_step_instance(seed)
        empty = ReferenceSelection(
            ref_bs=np.full((2, 4, 1), -1), ref_user=np.full((2, 4, 1), NO_USER),
            f0=np.zeros((2, 4, 1)), f1=np.zeros((2, 4, 1)),
            f2=np.ones((2, 4, 1)), f3=np.ones((2, 4, 1)))
        p_ref, _, _ = refim_step(0, sched, empty, prev, gains, weights, noise,
                                 budget, masks)
        p_wf, _, _ = wf_step(0, sched, prev, gains, weights, noise, budget, masks)
        assert np.array_equal(p_ref, p_wf)

    def test_disabled_bs_ignores_references(self, ):
        cells, gains, noise, weights, prev, sched, budget, masks = make_step_instance(3)
        refs = ReferenceSelection(
            ref_bs=np.ones((2, 4, 1), dtype=int), ref_user=np.full((2, 4, 1), 3),
            f0=np.full((2, 4, 1), 0.8), f1=np.ones((2, 4, 1)),
            f2=np.ones((2, 4, 1)), f3=np.ones((2, 4, 1)))
        p_off, _, _ = refim_step(0, sched, refs, prev, gains, weights, noise,
                                 budget, masks, enabled=False)
        p_wf, _, _ = wf_step(0, sched, prev, gains, weights, noise, budget, masks)
        assert np.array_equal(p_off, p_wf)
        p_on, _, _ = refim_step(0, sched, refs, prev, gains, weights, noise,
                                budget, masks, enabled=True)
        assert not np.array_equal(p_on, p_wf)

    def test_isolated_flat_channel_equal_split(self):
        n_sub = 4
        gains = np.full((1, 1, n_sub), 0.8)
        noise = np.full((1, n_sub), 0.1)
        sched = np.zeros((1, n_sub), dtype=int)
        prev = np.full((1, n_sub), 0.25)
        p, _, _ = wf_step(0, sched, prev, gains, np.array([1.0]), noise, 2.0,
                          np.full(n_sub, 2.0))
        assert np.allclose(p, 0.5, atol=1e-5)


class TestMeasuredArrays:
    def test_interference_excludes_own_signal(self):
        cells, gains, noise, weights, prev, sched, budget, masks = make_step_instance(1)
        intf = measured_interference(gains, prev, sched, noise)
        k = sched[0, 0]
        expected = (gains[k, :, 0] @ prev[:, 0] - gains[k, 0, 0] * prev[0, 0]
                    + noise[k, 0])
        assert intf[0, 0] == pytest.approx(expected)

    def test_scheduled_arrays_gather(self):
        cells, gains, noise, weights, prev, sched, budget, masks = make_step_instance(2)
        w, g, sig = scheduled_arrays(gains, sched, weights, noise)
        k = sched[1, 2]
        assert w[1, 2] == weights[k]
        assert g[1, 2] == gains[k, 1, 2]
        assert sig[1, 2] == noise[k, 2]

    def test_unscheduled_slots_inert(self):
        gains = np.ones((1, 1, 2))
        sched = np.array([[0, NO_USER]])
        w, g, sig = scheduled_arrays(gains, sched, np.array([2.0]), np.ones((1, 2)))
        assert w[0, 1] == 0.0 and g[0, 1] == 1.0


def general_instance(seed, n_bs=2, n_sub=2, upc=2):
    rng = np.random.default_rng(seed)
    K = n_bs * upc
    cells = [list(range(n * upc, (n + 1) * upc)) for n in range(n_bs)]
    gains = np.zeros((K, n_bs, n_sub))
    for n, ids in enumerate(cells):
        for k in ids:
            for m in range(n_bs):
                base = 1.0 if m == n else 0.25
                gains[k, m, :] = base * rng.lognormal(-0.5, 0.7, size=n_sub)
    noise = np.full((K, n_sub), 0.1)
    weights = rng.uniform(0.5, 2.0, size=K)
    budgets = np.full(n_bs, 1.0)
    masks = np.ones((n_bs, n_sub))
    nbrs = [[m for m in range(n_bs) if m != n] for n in range(n_bs)]
    return cells, gains, noise, weights, budgets, masks, nbrs


class TestGeneralAlgorithm:
    def test_caps_validated(self):
        cells, gains, noise, weights, budgets, masks, nbrs = general_instance(0)
        with pytest.raises(ValueError):
            general_algorithm(cells, gains, weights, noise, nbrs, budgets, masks,
                              np.full((2, 2), 0.5), sched_iters=0)

    @pytest.mark.parametrize("seed", range(5))
    def test_objective_nondecreasing_across_outer_iterations(self, seed):
        cells, gains, noise, weights, budgets, masks, nbrs = general_instance(seed)
        p0 = initial_power("uniform", budgets, masks)
        hs = []
        for i in (1, 2, 3, 4):
            sched, p = general_algorithm(cells, gains, weights, noise, nbrs, budgets,
                                         masks, p0, sched_iters=i, power_iters=2)
            hs.append(evaluate_objective(gains, noise, weights, p, sched))
        assert all(hs[j + 1] >= hs[j] - 1e-9 for j in range(len(hs) - 1))

    @pytest.mark.parametrize("seed", range(8))
    def test_more_loops_never_hurt_from_uniform_start(self, seed):
        cells, gains, noise, weights, budgets, masks, nbrs = general_instance(seed)
        p0 = initial_power("uniform", budgets, masks)
        s1, p1 = general_algorithm(cells, gains, weights, noise, nbrs, budgets,
                                   masks, p0, 1, 1)
        s3, p3 = general_algorithm(cells, gains, weights, noise, nbrs, budgets,
                                   masks, p0, 3, 3)
        h1 = evaluate_objective(gains, noise, weights, p1, s1)
        h3 = evaluate_objective(gains, noise, weights, p3, s3)
        assert h3 >= h1 - 1e-9

    def test_degenerate_caps_equal_one_pass_pipeline(self):
        from refimsim.scheduling import rate, schedule_users, sinr_matrix
        cells, gains, noise, weights, budgets, masks, nbrs = general_instance(2)
        p0 = initial_power("uniform", budgets, masks)
        sched_g, p_g = general_algorithm(cells, gains, weights, noise, nbrs, budgets,
                                         masks, p0, 1, 1)
        serving = np.array([0, 0, 1, 1])
        rates = rate(sinr_matrix(gains, p0, serving, noise))
        sched = schedule_users(cells, weights, rates)
        assert np.array_equal(sched_g, sched)
        taxes = power._ground_truth_references(cells, sched, gains, weights, noise,
                                               nbrs, p0, 1)
        w, g, sig = scheduled_arrays(gains, sched, weights, noise)
        intf = measured_interference(gains, p0, sched, noise)
        p_manual, _, _ = allocate_bisection_batch(w, taxes, intf, g, budgets, masks,
                                                  noise_w=sig)
        assert np.allclose(p_g, p_manual, atol=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_emitted_powers_feasible(self, seed):
        cells, gains, noise, weights, budgets, masks, nbrs = general_instance(seed, n_bs=2)
        p0 = initial_power("uniform", budgets, masks)
        _, p = general_algorithm(cells, gains, weights, noise, nbrs, budgets, masks,
                                 p0, 3, 3)
        PowerMatrix(p, budgets, masks).validate()
