"""Reference-user selection and the backhaul feedback protocol.

Candidate tables carry four per-user quantities, time-averaged over the
feedback period: cross gains toward each neighbor BS (F0), the scheduling
weight (F1), the received signal strength (F2) and the interference-plus-
noise level (F3). Between refreshes neighbors read stale entries. The only
per-slot exchange is the scheduled-user indices; femto cells are
represented to outsiders by one fixed user.
"""

from dataclasses import dataclass, field

import numpy as np

from .power import taxation_from_feedback
from .scheduling import NO_USER
from .topology import TIER_FEMTO, classify_edge_users


@dataclass
class FeedbackConfig:
    period_slots: int = 1
    edge_only: bool = False
    edge_threshold_db: float = 6.0
    femto_overhear: bool = True
    ref_count: int = 1                      # M reference users per subchannel
    tier_period_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.period_slots < 1:
            raise ValueError("period_slots must be >= 1")
        if self.ref_count < 0:
            raise ValueError("ref_count must be >= 0")

    def period_for(self, tier):
        return self.tier_period_overrides.get(tier, self.period_slots)


def representative_users(network):
    """(N,) fixed stand-in user per femto cell (lowest index), else NO_USER."""
    rep = np.full(network.n_bs, NO_USER, dtype=int)
    for n, bs in enumerate(network.base_stations):
        if bs.tier == TIER_FEMTO:
            ids = network.users_of(n)
            if ids:
                rep[n] = min(ids)
    return rep


@dataclass
class NeighborViews:
    """Per-viewer-class effective scheduled indices of every target BS."""
    macro_view: np.ndarray  # (N, S) what a macro/pico viewer sees
    femto_view: np.ndarray  # (N, S) what a femto viewer sees

    def for_viewer(self, network, viewer):
        if network.base_stations[viewer].tier == TIER_FEMTO:
            return self.femto_view
        return self.macro_view


def exchange_scheduled_indices(network, sched, slot, config):
    """Per-slot index exchange with the femto simplifications.

    Macro targets broadcast exact indices; femto targets are replaced by
    their fixed representative (no per-slot femto feedback); femto viewers
    learn macro indices only by overhearing.
    """
    sched = np.asarray(sched, dtype=int)
    rep = representative_users(network)
    is_femto = np.array([b.tier == TIER_FEMTO for b in network.base_stations])
    macro_view = np.where(is_femto[:, None], rep[:, None], sched)
    if config.femto_overhear:
        femto_view = macro_view
    else:
        hidden = np.full_like(sched, NO_USER)
        femto_view = np.where(is_femto[:, None], rep[:, None], hidden)
    return NeighborViews(macro_view=macro_view, femto_view=femto_view)


class CandidateTables:
    """Published (possibly stale) candidate records plus running accumulators."""

    def __init__(self, network):
        K, N, S = network.n_users, network.n_bs, network.subchannel_count
        self.acc_f0 = np.zeros((K, N, S))
        self.acc_f1 = np.zeros(K)
        self.acc_f2 = np.zeros((K, S))
        self.acc_f3 = np.zeros((K, S))
        self.acc_count = np.zeros(K, dtype=int)
        self.pub_f0 = np.zeros((K, N, S))
        self.pub_f1 = np.zeros(K)
        self.pub_f2 = np.ones((K, S))
        self.pub_f3 = np.ones((K, S))
        self.pub_valid = np.zeros(K, dtype=bool)
        self.last_update = np.full(K, -1, dtype=int)

    def accumulate(self, gains, powers, noise_w, weights, serving, total=None):
        """Per-slot user measurements at the evaluation powers."""
        if total is None:
            total = np.einsum("kms,ms->ks", gains, powers)
        K = gains.shape[0]
        idx = np.arange(K)
        f2 = gains[idx, serving, :] * powers[serving, :]
        self.acc_f0 += gains
        self.acc_f1 += weights
        self.acc_f2 += f2
        self.acc_f3 += total - f2 + noise_w
        self.acc_count += 1

    def publish(self, bs_users, slot):
        """Average the window and expose it; restart the window for the cell."""
        ids = np.asarray(bs_users, dtype=int)
        if ids.size == 0:
            return
        cnt = np.maximum(self.acc_count[ids], 1).astype(float)
        self.pub_f0[ids] = self.acc_f0[ids] / cnt[:, None, None]
        self.pub_f1[ids] = self.acc_f1[ids] / cnt
        self.pub_f2[ids] = self.acc_f2[ids] / cnt[:, None]
        self.pub_f3[ids] = self.acc_f3[ids] / cnt[:, None]
        self.pub_valid[ids] = True
        self.last_update[ids] = slot

    def withdraw(self, bs_users):
        self.pub_valid[np.asarray(bs_users, dtype=int)] = False

    def reset_window(self, bs_users):
        ids = np.asarray(bs_users, dtype=int)
        self.acc_f0[ids] = 0.0
        self.acc_f1[ids] = 0.0
        self.acc_f2[ids] = 0.0
        self.acc_f3[ids] = 0.0
        self.acc_count[ids] = 0

    def record(self, user):
        """One user's published candidate record (introspection/tests)."""
        return {
            "f0": self.pub_f0[user].copy(),
            "f1": float(self.pub_f1[user]),
            "f2": self.pub_f2[user].copy(),
            "f3": self.pub_f3[user].copy(),
            "valid": bool(self.pub_valid[user]),
            "last_update_slot": int(self.last_update[user]),
        }

    def staleness(self, slot):
        """(K,) slots since last publish (only meaningful where pub_valid)."""
        return slot - self.last_update


def refresh_candidate_tables(network, tables, slot, config, mean_gains=None,
                             enabled=None, trace=None):
    """Publish each due cell's averaged records; macro cells may publish
    only their edge users, femto cells always publish everyone.

    Cells whose BS is not running the reference-based algorithm publish
    nothing (partial deployment). Returns the number of publish events.
    """
    cells = network.cells()
    events = 0
    edge_flags = None
    for n, bs in enumerate(network.base_stations):
        period = config.period_for(bs.tier)
        if slot % period != 0:
            continue
        ids = cells[n]
        if not ids:
            continue
        if enabled is not None and not enabled[n]:
            tables.withdraw(ids)
            tables.reset_window(ids)
            continue
        publish_ids = ids
        if config.edge_only and bs.tier != TIER_FEMTO:
            if edge_flags is None:
                if mean_gains is None:
                    raise ValueError("edge_only refresh needs mean_gains")
                edge_flags = classify_edge_users(network, mean_gains,
                                                 config.edge_threshold_db)
            publish_ids = [k for k in ids if edge_flags[k]]
            tables.withdraw([k for k in ids if not edge_flags[k]])
        tables.publish(publish_ids, slot)
        tables.reset_window(ids)
        events += 1
        if trace is not None and publish_ids:
            nbytes = len(publish_ids) * network.subchannel_count * 4 * 4
            for m in network.neighbor_sets[n]:
                trace.append((slot, n, m, "table_refresh", nbytes))
    return events


@dataclass
class ReferenceSelection:
    """Selected references per (bs, subchannel, rank) with their table fields."""
    ref_bs: np.ndarray     # (N, S, M) int, -1 where absent
    ref_user: np.ndarray   # (N, S, M) int
    f0: np.ndarray         # (N, S, M) cross gain toward the selecting BS
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray

    def valid(self):
        return self.ref_bs >= 0

    def taxes(self, bs=None):
        """Summed taxation per subchannel; (S,) for one BS or (N, S) for all."""
        v = self.valid()
        t = np.zeros_like(self.f0)
        if v.any():
            t[v] = taxation_from_feedback(self.f1[v], self.f0[v], self.f2[v], self.f3[v])
        total = t.sum(axis=2)
        return total if bs is None else total[bs]


def select_reference(network, bs, views, tables, count):
    """Rank the neighbors' scheduled users by published cross gain toward
    `bs` and keep the strongest `count` of them, per subchannel.

    Returns a single-row ReferenceSelection; its taxes(0) is the (S,)
    taxation vector for this BS.
    """
    S = network.subchannel_count
    out = _empty_selection(1, S, max(count, 1))
    if count > 0:
        _select_into(network, bs, views, tables, count, out, 0)
    return out


def select_references(network, views, tables, count, enabled=None):
    """ReferenceSelection for every BS at once (engine path)."""
    N, S = network.n_bs, network.subchannel_count
    out = _empty_selection(N, S, max(count, 1))
    if count > 0:
        for n in range(N):
            if enabled is not None and not enabled[n]:
                continue
            _select_into(network, n, views, tables, count, out, n)
    return out


def _empty_selection(N, S, M):
    return ReferenceSelection(
        ref_bs=np.full((N, S, M), -1, dtype=int),
        ref_user=np.full((N, S, M), NO_USER, dtype=int),
        f0=np.zeros((N, S, M)), f1=np.zeros((N, S, M)),
        f2=np.ones((N, S, M)), f3=np.ones((N, S, M)),
    )


def _select_into(network, n, views, tables, count, out, row):
    if count == 0:
        return
    nbrs = network.neighbor_sets[n]
    if not nbrs:
        return
    view = views.for_viewer(network, n)
    cand = view[nbrs, :]                       # (B, S) candidate user per neighbor
    present = cand != NO_USER
    ksafe = np.where(present, cand, 0)
    valid = present & tables.pub_valid[ksafe]
    cross = tables.pub_f0[ksafe, n, np.arange(cand.shape[1])[None, :]]
    cross = np.where(valid, cross, -np.inf)
    order = np.argsort(-cross, axis=0, kind="stable")  # strongest victim first
    top = order[:count]                        # (M, S) neighbor positions
    scols = np.arange(cand.shape[1])[None, :]
    chosen_valid = np.take_along_axis(valid, top, axis=0)
    nbr_ids = np.asarray(nbrs)[top]
    users = ksafe[top, scols]
    for m in range(top.shape[0]):
        ok = chosen_valid[m]
        out.ref_bs[row, ok, m] = nbr_ids[m, ok]
        out.ref_user[row, ok, m] = users[m, ok]
        out.f0[row, ok, m] = tables.pub_f0[users[m, ok], n, scols[0, ok]]
        out.f1[row, ok, m] = tables.pub_f1[users[m, ok]]
        out.f2[row, ok, m] = tables.pub_f2[users[m, ok], scols[0, ok]]
        out.f3[row, ok, m] = tables.pub_f3[users[m, ok], scols[0, ok]]
