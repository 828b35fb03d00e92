"""Per-slot simulation loop, metrics (GAT/AET/AAT), scenario sweeps.

Slot order: advance fading/mobility -> snapshot -> initial powers ->
schedule -> exchange indices -> select references -> taxation -> bisection
-> commit -> served rates -> EWMA update -> metric accumulation.
"""

import hashlib
import json
import warnings
from dataclasses import dataclass, asdict, field, replace

import numpy as np

from . import channel, power, reference, scheduling, topology
from .scheduling import NO_USER

ALGORITHMS = ("eq", "wf", "refim", "general")
KINDS = ("hex", "two_cell", "hetnet", "mixed_density")
POLICIES = ("sharing", "splitting")
INITIAL_RULES = ("uniform", "random", "previous")

DEFAULT_ZONES = (
    {"cols": 5, "rows": 3, "spacing_m": 900.0},    # urban
    {"cols": 5, "rows": 3, "spacing_m": 1350.0},   # suburban, 1.5x spacing
    {"cols": 4, "rows": 2, "spacing_m": 1800.0},   # rural, 2x spacing
)


@dataclass
class Scenario:
    """Complete description of one reproducible run."""
    kind: str = "hex"
    seed: int = 1
    slots: int = 2000
    warmup_slots: int = 500
    subchannels: int = 16
    bandwidth_hz: float = 10e6
    slot_duration_s: float = 1e-3
    algorithm: str = "refim"
    sched_loops: int = 1
    power_loops: int = 1
    initial_power_rule: str = "previous"
    spectrum_policy: str = "sharing"
    macro_subchannels: int = 8
    deployment_fraction: float = 1.0
    ref_count: int = 1
    feedback_period_slots: int = 1
    femto_feedback_period_slots: int = 0    # 0 = same as feedback_period_slots
    edge_only_feedback: bool = False
    edge_threshold_db: float = 6.0
    femto_overhear: bool = True
    rings: int = 2
    inter_site_distance_m: float = 1000.0
    wrap: bool = False
    macro_users_per_cell: int = 20
    femto_users_per_cell: int = 4
    femtos_per_macro: int = 0
    home_size_m: float = 20.0
    bs_distance_m: float = 2000.0
    center_band_m: tuple = (200.0, 400.0)
    edge_band_m: tuple = (700.0, 900.0)
    users_per_group: int = 10
    macro_power_dbm: float = 43.0
    femto_power_dbm: float = 15.0
    zones: tuple = ()
    user_speed_kmh: float = 3.0
    mobile_users: bool = False
    carrier_freq_hz: float = 2e9
    shadowing_sigma_macro_db: float = 8.0
    shadowing_sigma_femto_db: float = 4.0
    noise_figure_db: float = 9.0
    sinr_gap_db: float = 0.0
    ewma_beta: float = 1e-3
    initial_throughput_bps: float = 1e-3
    utility_alpha: float = 1.0

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.spectrum_policy not in POLICIES:
            raise ValueError(f"unknown spectrum policy {self.spectrum_policy!r}")
        if self.initial_power_rule not in INITIAL_RULES:
            raise ValueError(f"unknown initial power rule {self.initial_power_rule!r}")
        if not 0 <= self.warmup_slots < self.slots:
            raise ValueError("need 0 <= warmup_slots < slots")
        if self.spectrum_policy == "splitting" and \
                not 0 <= self.macro_subchannels <= self.subchannels:
            raise ValueError("macro_subchannels must be in [0, subchannels]")
        if not 0.0 <= self.deployment_fraction <= 1.0:
            raise ValueError("deployment_fraction must be in [0, 1]")
        if self.ref_count < 0:
            raise ValueError("ref_count must be >= 0")
        return self

    def to_dict(self):
        d = asdict(self)
        d["center_band_m"] = list(self.center_band_m)
        d["edge_band_m"] = list(self.edge_band_m)
        d["zones"] = [dict(z) for z in self.zones]
        return d

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def propagation(self):
        return channel.PropagationConfig(
            shadowing_sigma_db={"macro": self.shadowing_sigma_macro_db,
                                "pico": self.shadowing_sigma_macro_db,
                                "femto": self.shadowing_sigma_femto_db},
            carrier_freq_hz=self.carrier_freq_hz,
            noise_figure_db=self.noise_figure_db,
            sinr_gap=10.0 ** (self.sinr_gap_db / 10.0),
        )

    def feedback(self):
        overrides = {}
        if self.femto_feedback_period_slots > 0:
            overrides["femto"] = self.femto_feedback_period_slots
        return reference.FeedbackConfig(
            period_slots=self.feedback_period_slots,
            edge_only=self.edge_only_feedback,
            edge_threshold_db=self.edge_threshold_db,
            femto_overhear=self.femto_overhear,
            ref_count=self.ref_count,
            tier_period_overrides=overrides,
        )


def build_network(scenario):
    """Construct the scenario's Network (deterministic in the seed)."""
    sc = scenario.validate()
    ss = np.random.SeedSequence(sc.seed)
    topo_seed, place_seed = ss.spawn(6)[0].spawn(2)
    if sc.kind == "hex":
        net = topology.build_hex_grid(sc.rings, sc.inter_site_distance_m, wrap=sc.wrap,
                                      subchannels=sc.subchannels, bandwidth_hz=sc.bandwidth_hz,
                                      power_dbm=sc.macro_power_dbm)
        net = topology.place_users(net, {"macro": sc.macro_users_per_cell}, rng_seed=place_seed)
    elif sc.kind == "two_cell":
        net = topology.build_linear_two_cell(sc.bs_distance_m, sc.center_band_m, sc.edge_band_m,
                                             sc.users_per_group, subchannels=sc.subchannels,
                                             bandwidth_hz=sc.bandwidth_hz,
                                             power_dbm=sc.macro_power_dbm, rng_seed=place_seed)
    elif sc.kind == "hetnet":
        net = topology.build_hex_grid(sc.rings, sc.inter_site_distance_m, wrap=sc.wrap,
                                      subchannels=sc.subchannels, bandwidth_hz=sc.bandwidth_hz,
                                      power_dbm=sc.macro_power_dbm)
        net = topology.build_heterogeneous(net, sc.femtos_per_macro, home_size_m=sc.home_size_m,
                                           rng_seed=topo_seed, power_dbm=sc.femto_power_dbm)
        net = topology.place_users(net, {"macro": sc.macro_users_per_cell,
                                         "femto": sc.femto_users_per_cell}, rng_seed=place_seed)
    else:  # mixed_density
        zones = [dict(z) for z in (sc.zones or DEFAULT_ZONES)]
        net = topology.build_mixed_density(zones, subchannels=sc.subchannels,
                                           bandwidth_hz=sc.bandwidth_hz,
                                           power_dbm=sc.macro_power_dbm, rng_seed=topo_seed)
        net = topology.place_users(net, {"macro": sc.macro_users_per_cell}, rng_seed=place_seed)

    if sc.deployment_fraction < 1.0:
        keep = max(0, round(sc.deployment_fraction * net.n_bs))
        dense_order = topology.local_density_rank(net)
        enabled = set(dense_order[:keep])
        stations = [replace(b, refim_enabled=(b.id in enabled)) for b in net.base_stations]
        net = replace(net, base_stations=stations)
    return net


def allowed_subchannels(network, scenario):
    """(N, S) usable-subchannel mask under the spectrum policy."""
    S = network.subchannel_count
    allowed = np.ones((network.n_bs, S), dtype=bool)
    if scenario.spectrum_policy == "splitting":
        c = scenario.macro_subchannels
        for n, bs in enumerate(network.base_stations):
            if bs.tier == topology.TIER_FEMTO:
                allowed[n, :c] = False
            else:
                allowed[n, c:] = False
    return allowed


def gat(throughputs_bps):
    """Geometric average of user throughputs; 0 (with a warning) if any is 0."""
    r = np.asarray(throughputs_bps, dtype=float)
    if r.size == 0:
        return 0.0
    if np.any(r <= 0):
        warnings.warn("zero throughput: geometric average collapses to 0")
        return 0.0
    return float(np.exp(np.mean(np.log(r))))


def aet(throughputs_bps, percentile=0.05):
    """Mean of the bottom-percentile users (at least one user)."""
    r = np.sort(np.asarray(throughputs_bps, dtype=float))
    count = max(1, int(np.ceil(percentile * r.size)))
    return float(r[:count].mean())


def aat(throughputs_bps):
    return float(np.mean(np.asarray(throughputs_bps, dtype=float)))


@dataclass
class RunResult:
    scenario: Scenario
    config_hash: str
    throughput_bps: np.ndarray        # per-user mean served rate, post-warmup
    ewma_throughput_bps: np.ndarray
    gat_bps: float
    aet_bps: float
    aat_bps: float
    is_edge: np.ndarray
    serving_bs: np.ndarray
    tiers: list
    accumulated_rate_bps: np.ndarray  # sum over measured slots of served rate
    measured_slots: int
    serve_counts: np.ndarray          # (K, S) powered scheduled pairs
    avg_power_w: np.ndarray           # (N, S) mean committed power
    bisection_iter_max: int
    bisection_iter_bound: int
    constraint_violations: int
    power_trace: list = field(default_factory=list)
    schedule_trace: list = field(default_factory=list)
    protocol_trace: list = field(default_factory=list)

    def summary(self):
        return {
            "config_hash": self.config_hash,
            "seed": self.scenario.seed,
            "algorithm": self.scenario.algorithm,
            "kind": self.scenario.kind,
            "slots": self.scenario.slots,
            "warmup_slots": self.scenario.warmup_slots,
            "users": int(self.throughput_bps.size),
            "base_stations": int(self.avg_power_w.shape[0]),
            "gat_bps": self.gat_bps,
            "aet_bps": self.aet_bps,
            "aat_bps": self.aat_bps,
            "bisection_iter_max": self.bisection_iter_max,
            "bisection_iter_bound": self.bisection_iter_bound,
            "constraint_violations": self.constraint_violations,
        }


def run(scenario, collect_power_trace=False, collect_schedule_trace=False,
        collect_protocol_trace=False):
    """Simulate one scenario end to end; deterministic in scenario.seed."""
    sc = scenario.validate()
    net = build_network(sc)
    cfg = sc.propagation()
    fb_cfg = sc.feedback()
    K, N, S = net.n_users, net.n_bs, net.subchannel_count
    cells = net.cells()
    for ids in cells:
        if not ids:
            raise ValueError("every cell must have at least one user")
    serving = np.array([u.serving_bs for u in net.users], dtype=int)
    tiers = [net.base_stations[n].tier for n in range(N)]

    ss = np.random.SeedSequence(sc.seed)
    _, rng_sh_ss, rng_fad_ss, rng_pow_ss, rng_mob_ss, _ = ss.spawn(6)
    rng_sh = np.random.default_rng(rng_sh_ss)
    rng_fad = np.random.default_rng(rng_fad_ss)
    rng_pow = np.random.default_rng(rng_pow_ss)
    rng_mob = np.random.default_rng(rng_mob_ss)

    speed_mps = sc.user_speed_kmh / 3.6
    shadow = channel.shadowing_matrix_db(net, cfg, rng_sh)
    fading = channel.FadingState(rng_fad, K, N, S, np.full(K, speed_mps),
                                 cfg.carrier_freq_hz, cfg.oscillators)
    mobility = None
    if sc.mobile_users:
        mobility = topology.WaypointMobility(net, np.full(K, speed_mps), rng_mob)
    positions = None if mobility is None else mobility.positions
    pl_db = channel.path_loss_matrix_db(net, cfg, positions)

    allowed = allowed_subchannels(net, sc)
    budgets = np.array([b.max_power_w for b in net.base_stations])
    masks = np.array([[b.mask_w] * S for b in net.base_stations]) * allowed
    enabled = np.array([b.refim_enabled for b in net.base_stations])
    bw_sub = sc.bandwidth_hz / S
    gap = cfg.sinr_gap
    noise = np.full((K, S), channel.noise_power_w(cfg, bw_sub))
    dt = sc.slot_duration_s

    eq_powers = np.stack([power.equal_power(budgets[n], masks[n]) for n in range(N)])
    states = scheduling.UserStates(K, sc.initial_throughput_bps, sc.ewma_beta, sc.utility_alpha)
    tables = reference.CandidateTables(net)
    prev_powers = None

    accum = np.zeros(K)
    serve_counts = np.zeros((K, S), dtype=np.int64)
    power_sum = np.zeros((N, S))
    measured = 0
    iter_max = 0
    violations = 0
    power_trace = []
    schedule_trace = []
    protocol_trace = [] if collect_protocol_trace else None
    rows = np.arange(N)[:, None]
    cols = np.arange(S)[None, :]
    kidx = np.arange(K)
    is_macro_nbr = [[m for m in net.neighbor_sets[n] if tiers[m] != topology.TIER_FEMTO]
                    for n in range(N)]

    for t in range(sc.slots):
        if mobility is not None and mobility.advance(dt):
            pl_db = channel.path_loss_matrix_db(net, cfg, mobility.positions)
        fading.advance(dt)
        large_scale = channel.large_scale_linear(pl_db, shadow)
        gains = large_scale[:, :, None] * fading.power_gains()

        weights = states.weights()
        if sc.algorithm == "eq":
            p_eval = eq_powers
        else:
            p_eval = power.initial_power(sc.initial_power_rule, budgets, masks,
                                         prev=prev_powers, rng=rng_pow, slot=t)

        total_eval = np.einsum("kms,ms->ks", gains, p_eval)
        own = gains[kidx, serving, :] * p_eval[serving, :]
        gamma = own / (total_eval - own + noise)
        rates_eval = bw_sub * np.log2(1.0 + gamma / gap)
        sched = scheduling.schedule_users(cells, weights, rates_eval, allowed=allowed)

        taxes = None
        if sc.algorithm == "refim":
            tables.accumulate(gains, p_eval, noise, weights, serving, total=total_eval)
            reference.refresh_candidate_tables(net, tables, t, fb_cfg,
                                               mean_gains=large_scale, enabled=enabled,
                                               trace=protocol_trace)
            views = reference.exchange_scheduled_indices(net, sched, t, fb_cfg)
            refs = reference.select_references(net, views, tables, fb_cfg.ref_count,
                                               enabled=enabled)
            taxes = refs.taxes()
            taxes[~enabled] = 0.0
            if protocol_trace is not None:
                for n in range(N):
                    if tiers[n] == topology.TIER_FEMTO:
                        continue
                    for m in is_macro_nbr[n]:
                        protocol_trace.append((t, n, m, "index_exchange", 2 * S))

        if sc.algorithm == "eq":
            committed = eq_powers
        elif sc.algorithm == "general":
            sched, committed = power.general_algorithm(
                cells, gains, weights, noise, net.neighbor_sets, budgets, masks,
                p_eval, sched_iters=sc.sched_loops, power_iters=sc.power_loops,
                ref_count=sc.ref_count, subchannel_bw_hz=bw_sub, sinr_gap=gap,
                allowed=allowed)
        else:
            w_ns, g_ns, sig_ns = power.scheduled_arrays(gains, sched, weights, noise)
            intf_ns = power.measured_interference(gains, p_eval, sched, noise,
                                                  total=total_eval)
            masks_eff = np.where(sched == NO_USER, 0.0, masks)
            if taxes is None:
                taxes = np.zeros((N, S))
            committed, _, iters = power.allocate_bisection_batch(
                w_ns, taxes, intf_ns, g_ns, budgets, masks_eff, noise_w=sig_ns)
            iter_max = max(iter_max, int(iters.max()))

        violations += power.PowerMatrix(committed, budgets, masks).violations()
        scheduled = sched != NO_USER
        ksafe = np.where(scheduled, sched, 0)
        member_ok = serving[ksafe] == rows
        violations += int(np.count_nonzero(scheduled & ~member_ok))

        total_comm = np.einsum("kms,ms->ks", gains, committed)
        served = scheduling.served_rates(gains, committed, sched, noise, gap, bw_sub,
                                         total=total_comm)
        states.update(served)

        if t >= sc.warmup_slots:
            accum += served
            powered = scheduled & (committed > 1e-15)
            np.add.at(serve_counts, (ksafe[powered], np.broadcast_to(cols, sched.shape)[powered]), 1)
            power_sum += committed
            measured += 1
        if collect_power_trace:
            power_trace.append((t, committed.copy()))
        if collect_schedule_trace:
            schedule_trace.append((t, sched.copy()))
        prev_powers = committed

    throughput = accum / measured
    final_ls = channel.large_scale_linear(pl_db, shadow)
    is_edge = topology.classify_edge_users(net, final_ls, sc.edge_threshold_db)
    return RunResult(
        scenario=sc, config_hash=sc.config_hash(),
        throughput_bps=throughput,
        ewma_throughput_bps=states.avg_throughput_bps.copy(),
        gat_bps=gat(throughput), aet_bps=aet(throughput), aat_bps=aat(throughput),
        is_edge=is_edge, serving_bs=serving, tiers=tiers,
        accumulated_rate_bps=accum, measured_slots=measured,
        serve_counts=serve_counts, avg_power_w=power_sum / measured,
        bisection_iter_max=iter_max, bisection_iter_bound=power.BISECTION_ITER_BOUND,
        constraint_violations=violations,
        power_trace=power_trace, schedule_trace=schedule_trace,
        protocol_trace=protocol_trace or [],
    )


SWEEP_AXES = ("feedback_period", "split_ratio", "femto_density", "ref_count",
              "loop_caps", "deployment_fraction")


def scenario_for_axis(base, axis, value):
    """Derive the swept scenario for one axis value (shared seed)."""
    if axis == "feedback_period":
        return replace(base, feedback_period_slots=int(value))
    if axis == "split_ratio":
        return replace(base, spectrum_policy="splitting", macro_subchannels=int(value))
    if axis == "femto_density":
        return replace(base, femtos_per_macro=int(value))
    if axis == "ref_count":
        return replace(base, ref_count=int(value))
    if axis == "loop_caps":
        if isinstance(value, str):
            a, b = value.lower().split("x")
        else:
            a, b = value
        return replace(base, algorithm="general", sched_loops=int(a), power_loops=int(b))
    if axis == "deployment_fraction":
        return replace(base, deployment_fraction=float(value))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def sweep(base, axis, values):
    """One full run per value, same seed; results keyed by value."""
    return [(v, run(scenario_for_axis(base, axis, v))) for v in values]
