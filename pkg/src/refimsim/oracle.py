"""Exhaustive joint optimizer for tiny instances.

Searches a per-subchannel power grid for every BS jointly with every
feasible user-to-subchannel schedule, maximizing the weighted sum rate.
Serves as the near-optimality yardstick for the distributed algorithms.
"""

import itertools
from dataclasses import dataclass

import numpy as np

MAX_BS = 3
MAX_SUBCHANNELS = 2
MAX_USERS_PER_CELL = 2


@dataclass
class GridSpec:
    """Power discretization: `levels` points per subchannel spanning [0, mask]."""
    levels: int = 9
    max_combinations: int = 10_000_000

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("levels must be >= 2")


class InstanceTooLarge(ValueError):
    pass


def combination_count(n_bs, n_sub, cells, levels):
    count = levels ** (n_bs * n_sub)
    for ids in cells:
        count *= max(1, len(ids)) ** n_sub
    return count


def evaluate_objective(gains, noise_w, weights, powers, sched, subchannel_bw_hz=1.0,
                       sinr_gap=1.0):
    """Weighted sum rate of a (powers, schedule) pair; the shared scorer for
    oracle and algorithm outputs."""
    total = np.einsum("kms,ms->ks", gains, powers)
    h = 0.0
    for n in range(sched.shape[0]):
        for s in range(sched.shape[1]):
            k = sched[n, s]
            if k < 0:
                continue
            signal = gains[k, n, s] * powers[n, s]
            gamma = signal / (total[k, s] - signal + noise_w[k, s])
            h += weights[k] * subchannel_bw_hz * np.log2(1.0 + gamma / sinr_gap)
    return float(h)


def enumerate_schedules(cells, n_sub):
    """All feasible schedule maps, lexicographic; empty slots are excluded
    because positive weights make scheduling someone weakly optimal."""
    per_slot = []
    for ids in cells:
        for _ in range(n_sub):
            per_slot.append(sorted(ids))
    n_bs = len(cells)
    for combo in itertools.product(*per_slot):
        yield np.array(combo, dtype=int).reshape(n_bs, n_sub)


def _bs_power_candidates(levels, masks_row, budget):
    """Per-BS grid vectors: levels^S per-subchannel combos within the budget."""
    axes = [np.linspace(0.0, m, levels) if m > 0 else np.zeros(1) for m in masks_row]
    combos = np.array(list(itertools.product(*axes)))
    return combos[combos.sum(axis=1) <= budget * (1.0 + 1e-12)]


@dataclass
class OracleResult:
    objective: float
    powers: np.ndarray
    schedule: np.ndarray


def brute_force(gains, noise_w, cells, weights, budgets, masks, grid=None,
                subchannel_bw_hz=1.0, sinr_gap=1.0):
    """Exact maximum of the weighted sum rate over the discrete feasible set.

    Ties break lexicographically (first hit in enumeration order). Raises
    InstanceTooLarge with a size report when the search space exceeds the cap.
    """
    grid = grid or GridSpec()
    gains = np.asarray(gains, dtype=float)
    noise_w = np.asarray(noise_w, dtype=float)
    weights = np.asarray(weights, dtype=float)
    budgets = np.asarray(budgets, dtype=float)
    masks = np.asarray(masks, dtype=float)
    K, N, S = gains.shape
    if np.any(weights <= 0):
        raise ValueError("weights must be > 0")
    if N > MAX_BS or S > MAX_SUBCHANNELS or any(len(c) > MAX_USERS_PER_CELL for c in cells):
        raise InstanceTooLarge(
            f"instance N={N}, S={S}, cell sizes {[len(c) for c in cells]} exceeds "
            f"oracle limits (N<={MAX_BS}, S<={MAX_SUBCHANNELS}, |K_n|<={MAX_USERS_PER_CELL})")
    total = combination_count(N, S, cells, grid.levels)
    if total > grid.max_combinations:
        raise InstanceTooLarge(
            f"{total} power x schedule combinations exceed the cap "
            f"{grid.max_combinations} (levels={grid.levels}, N={N}, S={S})")

    per_bs = [_bs_power_candidates(grid.levels, masks[n], budgets[n]) for n in range(N)]
    counts = [c.shape[0] for c in per_bs]
    # joint power tensor (C, N, S) in lexicographic order over BS grids
    joint = np.zeros((int(np.prod(counts)), N, S))
    for n, cand in enumerate(per_bs):
        reps_inner = int(np.prod(counts[n + 1:])) if n + 1 < N else 1
        reps_outer = int(np.prod(counts[:n])) if n > 0 else 1
        joint[:, n, :] = np.repeat(np.tile(cand, (reps_outer, 1)), reps_inner, axis=0)

    # rates of every user from its serving BS for every joint power combo
    totals = np.einsum("kms,cms->cks", gains, joint)
    wr = np.zeros((joint.shape[0], K, S))
    for n, ids in enumerate(cells):
        for k in ids:
            signal = gains[k, n, :][None, :] * joint[:, n, :]
            gamma = signal / (totals[:, k, :] - signal + noise_w[k, :][None, :])
            wr[:, k, :] = weights[k] * subchannel_bw_hz * np.log2(1.0 + gamma / sinr_gap)

    best_h = -np.inf
    best_c = 0
    best_sched = None
    cols = np.arange(S)
    for sched in enumerate_schedules(cells, S):
        h = wr[:, sched, cols].sum(axis=(1, 2))  # (C,)
        c = int(np.argmax(h))                    # first max: lexicographic ties
        if h[c] > best_h + 1e-15:
            best_h = float(h[c])
            best_c = c
            best_sched = sched
    return OracleResult(objective=best_h, powers=joint[best_c].copy(), schedule=best_sched)
