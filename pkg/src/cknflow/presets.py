"""Resolution presets shared by the CLI, the scripts and the acceptance tests."""
from __future__ import annotations

from dataclasses import dataclass, asdict

from .grid import GridConfig


@dataclass(frozen=True)
class Preset:
    name: str
    # flow: radial grid on [flow_s_min, flow_s_max] with flow_n_s nodes
    flow_s_min: float
    flow_s_max: float
    flow_n_s: int
    flow_n_ang: int
    flow_dt: float
    # minimize: cylinder spacing and angular resolution
    min_h: float
    min_n_ang: int
    min_gtol: float
    # stability: base spacing of the 1-D Schrodinger solver
    stab_h: float

    def flow_grid(self, angular: str = "point") -> GridConfig:
        n_ang = 1 if angular == "point" else self.flow_n_ang
        return GridConfig(self.flow_s_min, self.flow_s_max, self.flow_n_s, angular, n_ang)

    def to_dict(self):
        return asdict(self)


PRESETS = {
    "fast": Preset("fast", -8.0, 16.0, 1201, 16, 4e-3, 0.1, 8, 1e-8, 0.02),
    "reference": Preset("reference", -8.0, 16.0, 9601, 16, 2e-3, 0.05, 16, 1e-9, 0.01),
    "fine": Preset("fine", -8.0, 16.0, 19201, 32, 1e-3, 0.025, 32, 1e-10, 0.005),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
