"""Named scenario presets mirroring the standard evaluation setups."""

from dataclasses import replace

from .engine import Scenario

PRESETS = {
    # 19-cell hex macro grid, 20 users/cell, 16 subchannels
    "hex19": Scenario(kind="hex", rings=2, inter_site_distance_m=1000.0,
                      macro_users_per_cell=20, subchannels=16,
                      slots=2000, warmup_slots=500),
    # linear two-cell layout, center (200-400 m) and edge (700-900 m) groups.
    # Illustrative geometry experiment: no shadowing (the groups ARE the
    # victim structure) and pedestrian-slow fading so the channel stays
    # coherent across a measurement window.
    "two-cell": Scenario(kind="two_cell", bs_distance_m=2000.0,
                         center_band_m=(200.0, 400.0), edge_band_m=(700.0, 900.0),
                         users_per_group=10, subchannels=16,
                         shadowing_sigma_macro_db=0.0, user_speed_kmh=0.5,
                         slots=1000, warmup_slots=500),
    # macro grid with femto overlay (5 or 10 per macro cell)
    "hetnet5": Scenario(kind="hetnet", rings=1, femtos_per_macro=5,
                        macro_users_per_cell=20, femto_users_per_cell=4,
                        subchannels=16, slots=1000, warmup_slots=300),
    "hetnet10": Scenario(kind="hetnet", rings=1, femtos_per_macro=10,
                         macro_users_per_cell=20, femto_users_per_cell=4,
                         subchannels=16, slots=1000, warmup_slots=300),
    # synthetic urban/suburban/rural mix (spacing scaled x1 / x1.5 / x2)
    "mixed-density": Scenario(kind="mixed_density", macro_users_per_cell=20,
                              subchannels=16, slots=1500, warmup_slots=400),
    # tiny instance for oracle comparisons: 2 BSs, 2 users/cell, 2 subchannels
    "toy2": Scenario(kind="two_cell", bs_distance_m=2000.0,
                     center_band_m=(200.0, 400.0), edge_band_m=(700.0, 900.0),
                     users_per_group=1, subchannels=2,
                     slots=200, warmup_slots=100),
}


def get_preset(name, **overrides):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    sc = PRESETS[name]
    return replace(sc, **overrides) if overrides else sc
