"""SINR/rate evaluation, proportional-fair weights, per-subchannel scheduling.

Each BS independently picks, per subchannel, the associated user maximizing
weight * achievable rate at the evaluation powers; this per-(bs, subchannel)
argmax attains the joint scheduling optimum for any fixed power matrix.
"""

import numpy as np

NO_USER = -1


def sinr(gains, powers, user, bs, subchannel, noise_w):
    """Received SINR of `user` from `bs`: signal over other-BS power + noise."""
    g = gains[user, :, subchannel]
    p = powers[:, subchannel]
    signal = g[bs] * p[bs]
    interference = float(g @ p) - signal
    return signal / (interference + noise_w[user, subchannel])


def sinr_matrix(gains, powers, serving, noise_w):
    """(K, S) SINR of every user toward its serving BS at the given powers."""
    total = np.einsum("kms,ms->ks", gains, powers)
    own = gains[np.arange(gains.shape[0]), serving, :] * powers[serving, :]
    return own / (total - own + noise_w)


def rate(gamma, gap=1.0, subchannel_bw_hz=1.0):
    """Achievable rate in bps: bw * log2(1 + gamma/gap)."""
    return subchannel_bw_hz * np.log2(1.0 + np.asarray(gamma, dtype=float) / gap)


def pf_weights(avg_throughput_bps, alpha=1.0):
    """Marginal-utility weights: R^-alpha (alpha=1 is the log-utility 1/R)."""
    r = np.asarray(avg_throughput_bps, dtype=float)
    if np.any(r <= 0):
        raise ValueError("average throughputs must be > 0")
    if alpha == 1.0:
        return 1.0 / r
    return r ** (-alpha)


def schedule_cell(user_ids, weights, rate_ks):
    """Per-subchannel argmax of weight*rate within one cell; ties -> lowest id.

    user_ids must be sorted ascending so np.argmax's first-hit tie rule
    lands on the lowest user index.
    """
    ids = np.asarray(user_ids, dtype=int)
    metric = weights[ids, None] * rate_ks[ids, :]
    return ids[np.argmax(metric, axis=0)]


def schedule_users(cells, weights, rate_ks, allowed=None):
    """(N, S) scheduled user per (bs, subchannel); NO_USER where disallowed.

    allowed: optional (N, S) bool mask restricting usable subchannels
    (spectrum splitting); cells lists must be sorted ascending.
    """
    n_bs = len(cells)
    S = rate_ks.shape[1]
    sched = np.full((n_bs, S), NO_USER, dtype=int)
    for n, ids in enumerate(cells):
        if not ids:
            continue
        row = schedule_cell(ids, weights, rate_ks)
        if allowed is not None:
            row = np.where(allowed[n], row, NO_USER)
        sched[n] = row
    return sched


def validate_schedule(sched, cells):
    """Each scheduled user belongs to its cell; one user per (bs, subchannel)
    holds by construction of the (N, S) layout."""
    for n, row in enumerate(np.asarray(sched)):
        members = set(cells[n])
        for k in row:
            if k != NO_USER and k not in members:
                raise ValueError(f"user {k} scheduled by BS {n} but not associated")


def served_rates(gains, powers, sched, noise_w, gap=1.0, subchannel_bw_hz=1.0, total=None):
    """(K,) per-user sum rate actually served under the committed powers."""
    K = gains.shape[0]
    N, S = sched.shape
    if total is None:
        total = np.einsum("kms,ms->ks", gains, powers)
    scheduled = sched != NO_USER
    ksafe = np.where(scheduled, sched, 0)
    rows = np.arange(N)[:, None]
    cols = np.arange(S)[None, :]
    signal = gains[ksafe, rows, cols] * powers
    gamma = signal / (total[ksafe, cols] - signal + noise_w[ksafe, cols])
    r = subchannel_bw_hz * np.log2(1.0 + gamma / gap)
    out = np.zeros(K)
    np.add.at(out, ksafe[scheduled], r[scheduled])
    return out


def update_throughput(avg_bps, served_bps, beta):
    """EWMA surrogate of long-term throughput: (1-b)*R + b*served."""
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must be in (0, 1]")
    return (1.0 - beta) * np.asarray(avg_bps, dtype=float) + beta * np.asarray(served_bps, dtype=float)


class UserStates:
    """Array-backed per-user scheduler state: EWMA throughput and weights."""

    def __init__(self, n_users, initial_throughput_bps=1e-3, beta=1e-3, alpha=1.0):
        self.avg_throughput_bps = np.full(n_users, float(initial_throughput_bps))
        self.beta = beta
        self.alpha = alpha

    def weights(self):
        return pf_weights(self.avg_throughput_bps, self.alpha)

    def update(self, served_bps):
        self.avg_throughput_bps = update_throughput(self.avg_throughput_bps, served_bps, self.beta)
