"""Per-BS power allocation: equal split, selfish water-filling, and the
taxation-augmented KKT fixed point solved by bisection on the budget
multiplier.

The KKT water level on subchannel s is w_s / (lambda*ln2 + t_s); the
taxation t_s penalizes power that harms the neighbor cell's most exposed
scheduled user, and t_s = 0 recovers plain water-filling.
"""

import math
from dataclasses import dataclass

import numpy as np

from .scheduling import NO_USER

LN2 = math.log(2.0)

# bisection tolerances: budget slack delta = BUDGET_RTOL * P_max,
# lambda interval resolved to LAMBDA_RTOL relative -> ceil(log2(1/LAMBDA_RTOL))
# iterations suffice
BUDGET_RTOL = 1e-6
LAMBDA_RTOL = 1e-9
BISECTION_ITER_BOUND = math.ceil(math.log2(1.0 / LAMBDA_RTOL))
_MAX_BRACKET_DOUBLINGS = 60


@dataclass
class PowerMatrix:
    """(N, S) transmit powers with budget and per-subchannel mask metadata."""
    p: np.ndarray
    budgets: np.ndarray
    masks: np.ndarray

    def validate(self, rtol=BUDGET_RTOL):
        if np.any(self.p < 0):
            raise ValueError("negative transmit power")
        if np.any(self.p > self.masks * (1.0 + rtol) + 1e-300):
            raise ValueError("spectral mask violated")
        if np.any(self.p.sum(axis=1) > self.budgets * (1.0 + rtol)):
            raise ValueError("power budget violated")

    def violations(self, rtol=BUDGET_RTOL):
        v = int(np.count_nonzero(self.p < 0))
        v += int(np.count_nonzero(self.p > self.masks * (1.0 + rtol) + 1e-300))
        v += int(np.count_nonzero(self.p.sum(axis=1) > self.budgets * (1.0 + rtol)))
        return v


def equal_power(budget, masks):
    """Budget split equally over usable subchannels, clipped to the mask."""
    masks = np.asarray(masks, dtype=float)
    usable = masks > 0
    count = int(usable.sum())
    if count == 0:
        return np.zeros_like(masks)
    return np.where(usable, np.minimum(budget / count, masks), 0.0)


def taxation_from_feedback(weight, cross_gain, signal_w, intf_noise_w):
    """Taxation from the four fed-back reference-user quantities.

    weight (F1), cross_gain toward the taxed BS (F0), received signal (F2),
    interference-plus-noise (F3). The reference SINR is F2/F3 and the
    denominator is the total received power F2+F3.
    """
    sinr_ref = signal_w / intf_noise_w
    return weight * cross_gain * sinr_ref / (signal_w + intf_noise_w)


def taxation_term(weight_ref, ref_user, taxed_bs, serving_bs, gains, powers, noise_w,
                  subchannel):
    """Taxation computed from ground-truth gains and powers (one reference)."""
    g = gains[ref_user, :, subchannel]
    p = powers[:, subchannel]
    signal = g[serving_bs] * p[serving_bs]
    total = float(g @ p)
    intf_noise = total - signal + noise_w[ref_user, subchannel]
    return taxation_from_feedback(weight_ref, g[taxed_bs], signal, intf_noise)


def kkt_power(weight, lam, tax, intf_noise_w, own_gain, mask):
    """Clipped KKT fixed point: [w/(lam*ln2 + t) - (I+sigma)/g] in [0, mask].

    lam = 0 with t = 0 means an unbounded water level; the mask clip is the
    only thing bounding the result then.
    """
    weight = np.asarray(weight, dtype=float)
    denom = lam * LN2 + np.asarray(tax, dtype=float)
    with np.errstate(divide="ignore"):
        level = np.where(denom > 0, weight / np.where(denom > 0, denom, 1.0), np.inf)
    p = level - np.asarray(intf_noise_w, dtype=float) / np.asarray(own_gain, dtype=float)
    return np.clip(p, 0.0, mask)


def default_lambda_max(weights, own_gains, noise_w):
    """Smallest multiplier scale forcing every subchannel to zero power."""
    return float(np.max(np.asarray(weights) * np.asarray(own_gains)
                        / (np.asarray(noise_w) * LN2)))


def allocate_bisection_batch(weights, taxes, intf_noise, own_gains, budgets, masks,
                             noise_w=None, lambda_max=None):
    """Lockstep bisection over N base stations at once.

    weights/taxes/intf_noise/own_gains/masks: (N, S); budgets: (N,).
    Returns (p (N, S), lam (N,), iters (N,)). Iterations per BS never exceed
    BISECTION_ITER_BOUND.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    taxes = np.atleast_2d(np.asarray(taxes, dtype=float))
    intf_noise = np.atleast_2d(np.asarray(intf_noise, dtype=float))
    own_gains = np.atleast_2d(np.asarray(own_gains, dtype=float))
    masks = np.atleast_2d(np.asarray(masks, dtype=float))
    budgets = np.atleast_1d(np.asarray(budgets, dtype=float))
    if np.any(budgets <= 0):
        raise ValueError("budgets must be > 0")
    N = weights.shape[0]
    noise_floor = intf_noise if noise_w is None else np.atleast_2d(np.asarray(noise_w, dtype=float))

    def eval_p(lam):
        return kkt_power(weights, lam[:, None], taxes, intf_noise, own_gains, masks)

    delta = BUDGET_RTOL * budgets
    p = eval_p(np.zeros(N))
    sums = p.sum(axis=1)
    lam = np.zeros(N)
    iters = np.zeros(N, dtype=int)
    active = sums > budgets + delta
    if not active.any():
        return p, lam, iters

    if lambda_max is None:
        with np.errstate(divide="ignore"):
            hi = np.max(weights * own_gains / (noise_floor * LN2), axis=1)
    else:
        hi = np.full(N, float(lambda_max))
    # ensure the upper bracket undershoots the budget everywhere
    for _ in range(_MAX_BRACKET_DOUBLINGS):
        over = active & (eval_p(hi).sum(axis=1) > budgets)
        if not over.any():
            break
        hi = np.where(over, hi * 2.0, hi)
    else:
        raise RuntimeError("bisection bracket failure: sum p(lambda_max) > budget")

    lo = np.zeros(N)
    for it in range(1, BISECTION_ITER_BOUND + 1):
        mid = 0.5 * (lo + hi)
        pm = eval_p(mid)
        sm = pm.sum(axis=1)
        hit = active & (np.abs(sm - budgets) < delta)
        p[hit] = pm[hit]
        lam[hit] = mid[hit]
        iters[hit] = it
        active &= ~hit
        if not active.any():
            return p, lam, iters
        go_up = active & (sm > budgets)
        lo = np.where(go_up, mid, lo)
        hi = np.where(active & ~go_up, mid, hi)

    # interval exhausted: take the feasible (undershooting) endpoint
    pend = eval_p(hi)
    p[active] = pend[active]
    lam[active] = hi[active]
    iters[active] = BISECTION_ITER_BOUND
    return p, lam, iters


def allocate_bisection(weights, taxes, intf_noise, own_gains, budget, masks,
                       noise_w=None, lambda_max=None):
    """Single-BS allocation; see allocate_bisection_batch. Returns (p, lam, iters)."""
    p, lam, iters = allocate_bisection_batch(
        weights[None, :], taxes[None, :], intf_noise[None, :], own_gains[None, :],
        np.array([budget]), masks[None, :],
        noise_w=None if noise_w is None else noise_w[None, :],
        lambda_max=lambda_max)
    return p[0], float(lam[0]), int(iters[0])


def initial_power(strategy, budgets, masks, prev=None, rng=None, slot=0):
    """Per-slot starting powers: 'uniform', 'random' (rescaled to the budget),
    or 'previous' (falls back to uniform at slot 0)."""
    budgets = np.asarray(budgets, dtype=float)
    masks = np.asarray(masks, dtype=float)
    N, S = masks.shape
    if strategy == "previous" and (slot == 0 or prev is None):
        strategy = "uniform"
    if strategy == "uniform":
        usable = masks > 0
        counts = np.maximum(usable.sum(axis=1), 1)
        p = np.where(usable, (budgets / counts)[:, None], 0.0)
        return np.minimum(p, masks)
    if strategy == "random":
        if rng is None:
            raise ValueError("random rule needs an rng")
        draw = rng.uniform(0.0, 1.0, size=(N, S)) * (budgets[:, None] / S)
        draw = np.where(masks > 0, draw, 0.0)
        total = draw.sum(axis=1)
        total = np.where(total > 0, total, 1.0)
        p = draw * (budgets / total)[:, None]  # scale up to spend the budget
        return np.minimum(p, masks)
    if strategy == "previous":
        return np.array(prev, dtype=float)
    raise ValueError(f"unknown initial power strategy {strategy!r}")


def measured_interference(gains, powers, sched, noise_w, total=None):
    """(N, S) interference-plus-noise at each scheduled user, at `powers`.

    The simulator plays the role of the once-per-slot user measurement
    report; entries without a scheduled user are set to 1 (never consumed:
    the mask is zero there). `total` short-circuits the received-power
    einsum when the caller already has it.
    """
    N, S = sched.shape
    if total is None:
        total = np.einsum("kms,ms->ks", gains, powers)
    scheduled = sched != NO_USER
    ksafe = np.where(scheduled, sched, 0)
    rows = np.arange(N)[:, None]
    cols = np.arange(S)[None, :]
    own = gains[ksafe, rows, cols] * powers
    out = total[ksafe, cols] - own + noise_w[ksafe, cols]
    return np.where(scheduled, out, 1.0)


def scheduled_arrays(gains, sched, weights, noise_w):
    """Per-(bs, subchannel) weight, own gain and noise of the scheduled user."""
    N, S = sched.shape
    scheduled = sched != NO_USER
    ksafe = np.where(scheduled, sched, 0)
    rows = np.arange(N)[:, None]
    cols = np.arange(S)[None, :]
    w = np.where(scheduled, np.asarray(weights)[ksafe], 0.0)
    g = np.where(scheduled, gains[ksafe, rows, cols], 1.0)
    sig = np.where(scheduled, noise_w[ksafe, cols], 1.0)
    return w, g, sig


def refim_step(bs, sched, references, prev_powers, gains, weights, noise_w,
               budget, masks, enabled=True):
    """One slot of the reference-based allocation for a single BS.

    Interference at the scheduled users and the taxation are both evaluated
    at the frozen previous-slot powers; one scheduling pass and one bisection,
    no intra-slot loops. With no references (or enabled=False) this is
    selfish water-filling.
    """
    S = prev_powers.shape[1]
    row = np.asarray(sched[bs], dtype=int)
    intf = measured_interference(gains, prev_powers, row[None, :], noise_w)[0]
    w, g, sig = scheduled_arrays(gains, row[None, :], weights, noise_w)
    taxes = np.zeros(S)
    if enabled and references is not None:
        taxes = references.taxes(bs)
    masks_row = np.where(row == NO_USER, 0.0, np.asarray(masks, dtype=float))
    p, lam, iters = allocate_bisection(w[0], taxes, intf, g[0], budget, masks_row,
                                       noise_w=sig[0])
    return p, lam, iters


def wf_step(bs, sched, prev_powers, gains, weights, noise_w, budget, masks):
    """Selfish water-filling: the taxation-free reduction of refim_step."""
    return refim_step(bs, sched, None, prev_powers, gains, weights, noise_w,
                      budget, masks, enabled=False)


def _ground_truth_references(cells, sched, gains, weights, noise_w, neighbor_sets,
                             powers, ref_count):
    """(N, S) taxation recomputed from current ground truth (general algorithm)."""
    N, S = sched.shape
    taxes = np.zeros((N, S))
    if ref_count == 0:
        return taxes
    for n in range(N):
        for s in range(S):
            cands = []
            for m in neighbor_sets[n]:
                k = sched[m, s]
                if k == NO_USER:
                    continue
                cands.append((gains[k, n, s], m, k))
            cands.sort(key=lambda c: -c[0])
            for cross, m, k in cands[:ref_count]:
                taxes[n, s] += taxation_term(weights[k], k, n, m, gains, powers,
                                             noise_w, s)
    return taxes


def general_algorithm(cells, gains, weights, noise_w, neighbor_sets, budgets, masks,
                      init_powers, sched_iters=1, power_iters=1, ref_count=1,
                      subchannel_bw_hz=1.0, sinr_gap=1.0, p_tol=1e-6, allowed=None):
    """Looped joint scheduling + power allocation for one slot.

    Outer loop: reschedule and re-abstract the neighborhood at the current
    powers; inner loop: refresh taxation/interference and re-allocate until
    the powers stop moving or the cap is hit. Caps (1,1) reproduce the
    loop-free step-by-step pipeline.
    """
    from .scheduling import schedule_users, sinr_matrix, rate  # local to avoid cycle

    if sched_iters < 1 or power_iters < 1:
        raise ValueError("iteration caps must be >= 1")
    serving = np.zeros(gains.shape[0], dtype=int)
    for n, ids in enumerate(cells):
        for k in ids:
            serving[k] = n

    p = np.array(init_powers, dtype=float)
    sched = None
    for _ in range(sched_iters):
        gamma = sinr_matrix(gains, p, serving, noise_w)
        rates = rate(gamma, sinr_gap, subchannel_bw_hz)
        new_sched = schedule_users(cells, weights, rates, allowed=allowed)
        if sched is not None and np.array_equal(new_sched, sched):
            break
        sched = new_sched
        w, g, sig = scheduled_arrays(gains, sched, weights, noise_w)
        masks_eff = np.where(sched == NO_USER, 0.0, masks)
        for _ in range(power_iters):
            taxes = _ground_truth_references(cells, sched, gains, weights, noise_w,
                                             neighbor_sets, p, ref_count)
            intf = measured_interference(gains, p, sched, noise_w)
            p_new, _, _ = allocate_bisection_batch(w, taxes, intf, g, budgets,
                                                   masks_eff, noise_w=sig)
            delta = float(np.max(np.abs(p_new - p))) if p.size else 0.0
            p = p_new
            if delta < p_tol:
                break
    return sched, p
