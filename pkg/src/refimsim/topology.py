"""Network layouts: hex macro grids, linear two-cell, macro+femto overlays.

Positions are in meters on a flat 2-D plane. A Network is built once and
treated as immutable afterwards; mobility keeps its own position state.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

TIER_MACRO = "macro"
TIER_PICO = "pico"
TIER_FEMTO = "femto"

# tier-consistent transmit power defaults (43 dBm macro, 15 dBm femto)
DEFAULT_POWER_DBM = {TIER_MACRO: 43.0, TIER_PICO: 30.0, TIER_FEMTO: 15.0}

# axial lattice steps to the six adjacent hex cells
_HEX_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))


def dbm_to_watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(watts) + 30.0


@dataclass(frozen=True)
class BaseStation:
    """One transmitter. mask_w is the per-subchannel cap (uniform here)."""
    id: int
    tier: str
    position: tuple
    max_power_w: float
    mask_w: float
    refim_enabled: bool = True
    home_id: int | None = None        # femto only: which home it belongs to
    home_center: tuple | None = None  # femto only: center of that home

    def __post_init__(self):
        if self.max_power_w <= 0:
            raise ValueError(f"BS {self.id}: max_power_w must be > 0")
        if self.mask_w <= 0:
            raise ValueError(f"BS {self.id}: mask_w must be > 0")


@dataclass(frozen=True)
class User:
    id: int
    position: tuple
    serving_bs: int
    speed_mps: float = 0.0  # 0 = nomadic (no movement)
    indoor: bool = False
    home_id: int | None = None


@dataclass(frozen=True)
class HexRegion:
    """Voronoi hexagon of a lattice with spacing isd, centered on the BS."""
    center: tuple
    isd_m: float

    def contains(self, x, y):
        dx, dy = x - self.center[0], y - self.center[1]
        h = self.isd_m / 2.0
        for ang in (0.0, math.pi / 3.0, 2.0 * math.pi / 3.0):
            if abs(dx * math.cos(ang) + dy * math.sin(ang)) > h:
                return False
        return True

    def sample(self, rng):
        r = self.isd_m / math.sqrt(3.0)  # circumradius
        while True:
            x = self.center[0] + rng.uniform(-r, r)
            y = self.center[1] + rng.uniform(-r, r)
            if self.contains(x, y):
                return (x, y)


@dataclass(frozen=True)
class DiscRegion:
    center: tuple
    radius_m: float

    def contains(self, x, y):
        return (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2 <= self.radius_m ** 2

    def sample(self, rng):
        # uniform over the disc via sqrt radial transform
        rho = self.radius_m * math.sqrt(rng.uniform(0.0, 1.0))
        theta = rng.uniform(0.0, 2.0 * math.pi)
        return (self.center[0] + rho * math.cos(theta), self.center[1] + rho * math.sin(theta))


@dataclass
class Network:
    """Immutable layout: stations, users, neighbor sets, spectrum grid."""
    base_stations: list
    users: list
    neighbor_sets: list
    subchannel_count: int
    bandwidth_hz: float
    regions: list = field(default_factory=list)   # per-BS coverage region
    wrap_vectors: tuple = ()                      # cartesian shifts; empty = no wrap

    def __post_init__(self):
        if self.subchannel_count < 1:
            raise ValueError("subchannel_count must be >= 1")
        for n, nbrs in enumerate(self.neighbor_sets):
            if n in nbrs:
                raise ValueError(f"BS {n} lists itself as neighbor")
        for u in self.users:
            if not 0 <= u.serving_bs < len(self.base_stations):
                raise ValueError(f"user {u.id} serves nonexistent BS {u.serving_bs}")

    @property
    def n_bs(self):
        return len(self.base_stations)

    @property
    def n_users(self):
        return len(self.users)

    def users_of(self, n):
        """Sorted user ids associated with BS n (the cell's user set)."""
        return [u.id for u in self.users if u.serving_bs == n]

    def cells(self):
        out = [[] for _ in range(self.n_bs)]
        for u in self.users:
            out[u.serving_bs].append(u.id)
        return out

    def bs_positions(self):
        return np.array([b.position for b in self.base_stations], dtype=float)

    def user_positions(self):
        return np.array([u.position for u in self.users], dtype=float).reshape(self.n_users, 2)

    def distances(self, user_positions=None):
        """(K, N) user-to-BS distances in meters, min over wrap images."""
        up = self.user_positions() if user_positions is None else np.asarray(user_positions, dtype=float)
        bp = self.bs_positions()
        d = np.linalg.norm(up[:, None, :] - bp[None, :, :], axis=2)
        for vx, vy in self.wrap_vectors:
            shifted = bp + np.array([vx, vy])
            d = np.minimum(d, np.linalg.norm(up[:, None, :] - shifted[None, :, :], axis=2))
        return d

    def to_document(self):
        """Plain-dict form of the layout for replay (documented in README)."""
        return {
            "subchannel_count": self.subchannel_count,
            "bandwidth_hz": self.bandwidth_hz,
            "wrap_vectors": [list(v) for v in self.wrap_vectors],
            "base_stations": [
                {
                    "id": b.id, "tier": b.tier, "position": list(b.position),
                    "max_power_w": b.max_power_w, "mask_w": b.mask_w,
                    "refim_enabled": b.refim_enabled,
                    "home_id": b.home_id,
                    "home_center": list(b.home_center) if b.home_center else None,
                }
                for b in self.base_stations
            ],
            "users": [
                {
                    "id": u.id, "position": list(u.position), "serving_bs": u.serving_bs,
                    "speed_mps": u.speed_mps, "indoor": u.indoor, "home_id": u.home_id,
                }
                for u in self.users
            ],
            "neighbor_sets": [list(nbrs) for nbrs in self.neighbor_sets],
            "regions": [_region_to_doc(r) for r in self.regions],
        }

    def to_json(self):
        return json.dumps(self.to_document(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        bs = [
            BaseStation(
                id=d["id"], tier=d["tier"], position=tuple(d["position"]),
                max_power_w=d["max_power_w"], mask_w=d["mask_w"],
                refim_enabled=d["refim_enabled"], home_id=d["home_id"],
                home_center=tuple(d["home_center"]) if d["home_center"] else None,
            )
            for d in doc["base_stations"]
        ]
        users = [
            User(
                id=d["id"], position=tuple(d["position"]), serving_bs=d["serving_bs"],
                speed_mps=d["speed_mps"], indoor=d["indoor"], home_id=d["home_id"],
            )
            for d in doc["users"]
        ]
        return cls(
            base_stations=bs, users=users,
            neighbor_sets=[list(x) for x in doc["neighbor_sets"]],
            subchannel_count=doc["subchannel_count"], bandwidth_hz=doc["bandwidth_hz"],
            regions=[_region_from_doc(r) for r in doc["regions"]],
            wrap_vectors=tuple(tuple(v) for v in doc["wrap_vectors"]),
        )


def _region_to_doc(r):
    if isinstance(r, HexRegion):
        return {"kind": "hex", "center": list(r.center), "isd_m": r.isd_m}
    if isinstance(r, DiscRegion):
        return {"kind": "disc", "center": list(r.center), "radius_m": r.radius_m}
    raise TypeError(f"unknown region {r!r}")


def _region_from_doc(d):
    if d["kind"] == "hex":
        return HexRegion(center=tuple(d["center"]), isd_m=d["isd_m"])
    if d["kind"] == "disc":
        return DiscRegion(center=tuple(d["center"]), radius_m=d["radius_m"])
    raise ValueError(f"unknown region kind {d['kind']}")


def _axial_to_xy(q, r, isd):
    return (isd * (q + r / 2.0), isd * (math.sqrt(3.0) / 2.0) * r)


def _rotate60(q, r):
    return (-r, q + r)


def hex_cell_count(rings):
    return 1 + 3 * rings * (rings + 1)


def build_hex_grid(rings, inter_site_distance_m, wrap=False, subchannels=16,
                   bandwidth_hz=10e6, power_dbm=None):
    """Hex lattice of macro BSs: 1+3r(r+1) cells, neighbors = one lattice hop."""
    if rings < 0:
        raise ValueError("rings must be >= 0")
    if inter_site_distance_m <= 0:
        raise ValueError("inter_site_distance_m must be > 0")
    isd = float(inter_site_distance_m)
    power_w = dbm_to_watts(DEFAULT_POWER_DBM[TIER_MACRO] if power_dbm is None else power_dbm)

    coords = []
    for q in range(-rings, rings + 1):
        for r in range(-rings, rings + 1):
            if max(abs(q), abs(r), abs(q + r)) <= rings:
                coords.append((q, r))
    # deterministic ordering, center cell first
    coords.sort(key=lambda c: (max(abs(c[0]), abs(c[1]), abs(c[0] + c[1])), c[0], c[1]))
    index = {c: i for i, c in enumerate(coords)}

    wrap_shifts = []
    if wrap and rings > 0:
        base = (rings + 1, rings)  # cluster translation vector in axial coords
        s = base
        for _ in range(6):
            wrap_shifts.append(s)
            s = _rotate60(*s)

    stations, regions, neighbor_sets = [], [], []
    for i, (q, r) in enumerate(coords):
        pos = _axial_to_xy(q, r, isd)
        stations.append(BaseStation(id=i, tier=TIER_MACRO, position=pos,
                                    max_power_w=power_w, mask_w=power_w))
        regions.append(HexRegion(center=pos, isd_m=isd))
        nbrs = set()
        for dq, dr in _HEX_STEPS:
            tgt = (q + dq, r + dr)
            if tgt in index:
                nbrs.add(index[tgt])
            elif wrap_shifts:
                for sq, sr in wrap_shifts:
                    if (tgt[0] - sq, tgt[1] - sr) in index:
                        nbrs.add(index[(tgt[0] - sq, tgt[1] - sr)])
        nbrs.discard(i)
        neighbor_sets.append(sorted(nbrs))

    wrap_vectors = tuple(_axial_to_xy(q, r, isd) for q, r in wrap_shifts)
    return Network(base_stations=stations, users=[], neighbor_sets=neighbor_sets,
                   subchannel_count=subchannels, bandwidth_hz=bandwidth_hz,
                   regions=regions, wrap_vectors=wrap_vectors)


def build_linear_two_cell(bs_distance_m, center_band_m, edge_band_m, users_per_group,
                          subchannels=16, bandwidth_hz=10e6, power_dbm=None, rng_seed=0):
    """Two BSs on a line; per cell, one center and one edge user group.

    Users sit on the segment between the BSs so the edge group faces the
    interferer; distances to the serving BS fall inside the declared bands.
    """
    d = float(bs_distance_m)
    for lo, hi in (center_band_m, edge_band_m):
        if not (0.0 < lo < hi < d):
            raise ValueError(f"band ({lo}, {hi}) must satisfy 0 < lo < hi < {d}")
    if center_band_m[1] > edge_band_m[0]:
        raise ValueError("center and edge bands overlap or are inverted")
    if users_per_group < 1:
        raise ValueError("users_per_group must be >= 1")

    power_w = dbm_to_watts(DEFAULT_POWER_DBM[TIER_MACRO] if power_dbm is None else power_dbm)
    stations = [
        BaseStation(id=0, tier=TIER_MACRO, position=(0.0, 0.0), max_power_w=power_w, mask_w=power_w),
        BaseStation(id=1, tier=TIER_MACRO, position=(d, 0.0), max_power_w=power_w, mask_w=power_w),
    ]
    regions = [DiscRegion(center=(0.0, 0.0), radius_m=d / 2.0),
               DiscRegion(center=(d, 0.0), radius_m=d / 2.0)]

    rng = np.random.default_rng(rng_seed)
    users = []
    for n, bs in enumerate(stations):
        direction = 1.0 if n == 0 else -1.0  # toward the other BS
        for band in (center_band_m, edge_band_m):
            for _ in range(users_per_group):
                dist = rng.uniform(band[0], band[1])
                users.append(User(id=len(users), position=(bs.position[0] + direction * dist, 0.0),
                                  serving_bs=n))
    return Network(base_stations=stations, users=users, neighbor_sets=[[1], [0]],
                   subchannel_count=subchannels, bandwidth_hz=bandwidth_hz, regions=regions)


def two_cell_edge_user_ids(network):
    """Ids of the edge-band groups (second group of each cell by construction)."""
    per_cell = network.n_users // 2
    g = per_cell // 2
    return sorted(list(range(g, per_cell)) + list(range(per_cell + g, 2 * per_cell)))


DEPLOYMENT_CASES = ("single", "symmetric-pair", "asymmetric-pair")


def build_heterogeneous(macro, femtos_per_macro, deployment_mix=None, home_size_m=20.0,
                        rng_seed=0, power_dbm=None, max_attempts=1000):
    """Drop femto BSs into each macro cell.

    Cases: single home, two adjacent homes with BSs at home centers
    (symmetric), or with one BS at the shared border (asymmetric).
    """
    if femtos_per_macro < 0:
        raise ValueError("femtos_per_macro must be >= 0")
    if femtos_per_macro == 0:
        return macro
    mix = deployment_mix or {c: 1.0 for c in DEPLOYMENT_CASES}
    for c in mix:
        if c not in DEPLOYMENT_CASES:
            raise ValueError(f"unknown deployment case {c!r}")
    cases = sorted(mix)
    probs = np.array([mix[c] for c in cases], dtype=float)
    probs = probs / probs.sum()

    rng = np.random.default_rng(rng_seed)
    power_w = dbm_to_watts(DEFAULT_POWER_DBM[TIER_FEMTO] if power_dbm is None else power_dbm)
    half = home_size_m / 2.0

    stations = list(macro.base_stations)
    regions = list(macro.regions)
    neighbor_sets = [list(nbrs) for nbrs in macro.neighbor_sets]
    taken = [b.position for b in stations]
    home_counter = 0

    macro_ids = [b.id for b in stations if b.tier != TIER_FEMTO]
    for m in macro_ids:
        region = macro.regions[m]
        placed = 0
        while placed < femtos_per_macro:
            remaining = femtos_per_macro - placed
            case = "single" if remaining == 1 else cases[int(rng.choice(len(cases), p=probs))]

            ok = False
            for _ in range(max_attempts):
                anchor = region.sample(rng)
                theta = rng.uniform(0.0, 2.0 * math.pi)
                u = (math.cos(theta), math.sin(theta))
                if case == "single":
                    homes = [anchor]
                    bs_pos = [anchor]
                else:
                    homes = [(anchor[0] - half * u[0], anchor[1] - half * u[1]),
                             (anchor[0] + half * u[0], anchor[1] + half * u[1])]
                    if case == "symmetric-pair":
                        bs_pos = list(homes)
                    else:  # asymmetric: femto 1 at the border between homes
                        bs_pos = [anchor, homes[1]]
                if not all(region.contains(*h) for h in homes):
                    continue
                if any(math.dist(p, q) < 0.5 for p in bs_pos for q in taken):
                    continue  # collision with an existing BS; retry
                ok = True
                break
            if not ok:
                raise RuntimeError(f"could not place femtos in macro cell {m} "
                                   f"after {max_attempts} attempts")

            new_ids = []
            for h, p in zip(homes, bs_pos):
                fid = len(stations)
                stations.append(BaseStation(id=fid, tier=TIER_FEMTO, position=p,
                                            max_power_w=power_w, mask_w=power_w,
                                            home_id=home_counter, home_center=h))
                regions.append(DiscRegion(center=h, radius_m=half))
                neighbor_sets.append([m])
                neighbor_sets[m].append(fid)
                taken.append(p)
                new_ids.append(fid)
                home_counter += 1
            if len(new_ids) == 2:  # paired femtos neighbor each other
                neighbor_sets[new_ids[0]].append(new_ids[1])
                neighbor_sets[new_ids[1]].append(new_ids[0])
            placed += len(new_ids)

    return Network(base_stations=stations, users=list(macro.users),
                   neighbor_sets=[sorted(nbrs) for nbrs in neighbor_sets],
                   subchannel_count=macro.subchannel_count, bandwidth_hz=macro.bandwidth_hz,
                   regions=regions, wrap_vectors=macro.wrap_vectors)


def place_users(network, per_tier_count, rng_seed=0):
    """Uniform user drop per cell; femto users are indoor home users."""
    for tier, count in per_tier_count.items():
        if count < 1:
            raise ValueError(f"{tier} user count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    users = []
    for bs in network.base_stations:
        count = per_tier_count.get(bs.tier, 0)
        region = network.regions[bs.id]
        for _ in range(count):
            pos = region.sample(rng)
            users.append(User(id=len(users), position=pos, serving_bs=bs.id,
                              indoor=(bs.tier == TIER_FEMTO), home_id=bs.home_id))
    return replace(network, users=users)


def build_mixed_density(zones, subchannels=16, bandwidth_hz=10e6, power_dbm=None,
                        jitter_frac=0.15, rng_seed=0):
    """Side-by-side rectangular zones of jittered-grid macro BSs.

    zones: list of dicts {"cols", "rows", "spacing_m"}; spacing scales the
    local density (urban/suburban/rural mix).
    """
    rng = np.random.default_rng(rng_seed)
    power_w = dbm_to_watts(DEFAULT_POWER_DBM[TIER_MACRO] if power_dbm is None else power_dbm)
    stations, regions = [], []
    x_offset = 0.0
    for z in zones:
        cols, rows, sp = z["cols"], z["rows"], float(z["spacing_m"])
        for c in range(cols):
            for r in range(rows):
                jx = rng.uniform(-jitter_frac, jitter_frac) * sp
                jy = rng.uniform(-jitter_frac, jitter_frac) * sp
                pos = (x_offset + (c + 0.5) * sp + jx, (r + 0.5) * sp + jy)
                stations.append(BaseStation(id=len(stations), tier=TIER_MACRO, position=pos,
                                            max_power_w=power_w, mask_w=power_w))
                regions.append(DiscRegion(center=pos, radius_m=sp / 2.0))
        x_offset += cols * sp

    # neighbors: mutual proximity within 1.5x the larger of the two local grids
    pos = np.array([b.position for b in stations])
    spacing = np.array([regions[i].radius_m * 2.0 for i in range(len(stations))])
    neighbor_sets = [[] for _ in stations]
    for i in range(len(stations)):
        for j in range(i + 1, len(stations)):
            lim = 1.5 * max(spacing[i], spacing[j])
            if np.linalg.norm(pos[i] - pos[j]) <= lim:
                neighbor_sets[i].append(j)
                neighbor_sets[j].append(i)
    return Network(base_stations=stations, users=[], neighbor_sets=neighbor_sets,
                   subchannel_count=subchannels, bandwidth_hz=bandwidth_hz, regions=regions)


def local_density_rank(network):
    """BS indices sorted densest-first (by distance to the nearest other BS)."""
    pos = network.bs_positions()
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    nearest = d.min(axis=1)
    return list(np.argsort(nearest, kind="stable"))


def classify_edge_users(network, mean_gains, threshold_db=6.0):
    """Edge flag per user: strongest neighbor gain within threshold_db of serving.

    mean_gains: (K, N) linear power gains averaged over subchannels/fading,
    or any object with a mean_gains() method (e.g. a GainSnapshot).
    """
    if hasattr(mean_gains, "mean_gains"):
        mean_gains = mean_gains.mean_gains()
    g = np.asarray(mean_gains, dtype=float)
    flags = np.zeros(network.n_users, dtype=bool)
    for u in network.users:
        nbrs = network.neighbor_sets[u.serving_bs]
        if not nbrs:
            continue
        gap_db = 10.0 * np.log10(g[u.id, nbrs].max() / g[u.id, u.serving_bs])
        flags[u.id] = gap_db >= -threshold_db
    return flags


class WaypointMobility:
    """Simplified random waypoint inside each user's serving-cell region.

    Users with speed 0 never move; association never changes.
    """

    def __init__(self, network, speeds_mps, rng):
        self.network = network
        self.positions = network.user_positions().copy()
        self.speeds = np.asarray(speeds_mps, dtype=float)
        self.rng = rng
        self.waypoints = self.positions.copy()
        for u in network.users:
            if self.speeds[u.id] > 0:
                self.waypoints[u.id] = network.regions[u.serving_bs].sample(rng)

    def advance(self, dt_s):
        moved = False
        for u in self.network.users:
            v = self.speeds[u.id]
            if v <= 0:
                continue
            moved = True
            step = v * dt_s
            while step > 0:
                delta = self.waypoints[u.id] - self.positions[u.id]
                dist = float(np.hypot(delta[0], delta[1]))
                if dist <= step:
                    self.positions[u.id] = self.waypoints[u.id]
                    step -= dist
                    self.waypoints[u.id] = self.network.regions[u.serving_bs].sample(self.rng)
                else:
                    self.positions[u.id] += delta * (step / dist)
                    step = 0.0
        return moved
