"""Experiment configuration: line-oriented text format and validation.

Format: `[section]` headers with `key = value` lines; `#` starts a comment.
Sections are `env`, `algorithm`, and `run`. Unknown sections or keys are
rejected. Lists are comma-separated. Example:

    [env]
    kind = wireless
    grid_size = 3
    omega_grid = 0.2, 0.5, 0.8
    omega_target = 0.65

    [algorithm]
    method = GSAC
    iterations = 600

    [run]
    seed = 0
    out = runs/default
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

METHODS = ("GSAC", "SAC-MTL", "SAC-FT", "SAC-LFS")
ENV_KINDS = ("synthetic", "wireless", "traffic")


@dataclass(frozen=True)
class ExperimentConfig:
    # [env]
    kind: str = "wireless"
    grid_size: int = 3  # wireless: (g+1)^2 users; traffic: g^2 intersections
    n_agents: int = 2  # synthetic only (chain topology)
    d_s: int = 2  # synthetic: components per agent
    state_card: int = 3  # synthetic
    action_card: int = 2  # synthetic
    mask_density: float = 0.4  # synthetic
    deadline: int = 2  # wireless queue bins
    capacity: int = 2  # traffic queue cap
    env_seed: int = 0  # structure seed (masks, reward tables, success probs)
    omega_grid: tuple[float, ...] = (0.2, 0.5, 0.8)  # one source domain per value
    omega_target: float = 0.65
    # [algorithm]
    method: str = "GSAC"
    kappa: int = 1
    iterations: int = 600  # outer iterations K
    horizon: int = 10  # episode length T
    t_e: int = 20  # domain-estimation trajectories per domain
    t_a: int = 20  # adaptation trajectories in the target domain
    eval_episodes: int = 30
    recovery_episodes: int = 200  # random-policy episodes per domain for recovery
    alpha_mode: str = "constant"
    alpha: float = 0.1
    h: float = 1.0
    t0: float = 1.0
    eta_mode: str = "constant"
    eta: float = 0.01
    tau_soft: float = 0.5
    gamma: float = 0.95
    theta_max: float = 50.0
    lambda_threshold: float = 0.02
    acr_free: bool = False
    warm_start: bool = False
    # [run]
    seed: int = 0
    out: str = "runs/default"

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ValueError(f"env kind must be one of {ENV_KINDS}, got {self.kind!r}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        for name in ("grid_size", "n_agents", "d_s", "state_card", "action_card",
                     "deadline", "capacity", "kappa", "horizon", "t_e", "t_a",
                     "recovery_episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("iterations", "eval_episodes"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if not (0.0 <= self.mask_density <= 1.0):
            raise ValueError(f"mask_density must be in [0, 1], got {self.mask_density}")
        if len(self.omega_grid) < 1 or any(not (0 < v < 1) for v in self.omega_grid):
            raise ValueError(f"omega_grid values must lie in (0, 1), got {self.omega_grid}")
        if tuple(sorted(self.omega_grid)) != tuple(self.omega_grid):
            raise ValueError("omega_grid must be sorted ascending")
        if not (0.0 < self.omega_target < 1.0):
            raise ValueError(f"omega_target must be in (0, 1), got {self.omega_target}")
        if self.alpha_mode not in ("constant", "decaying"):
            raise ValueError(f"alpha_mode must be constant|decaying, got {self.alpha_mode!r}")
        if self.eta_mode not in ("constant", "decaying"):
            raise ValueError(f"eta_mode must be constant|decaying, got {self.eta_mode!r}")
        for name in ("alpha", "h", "t0", "eta", "tau_soft", "theta_max",
                     "lambda_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")


_SECTION_OF = {
    "env": ("kind", "grid_size", "n_agents", "d_s", "state_card", "action_card",
            "mask_density", "deadline", "capacity", "env_seed", "omega_grid",
            "omega_target"),
    "algorithm": ("method", "kappa", "iterations", "horizon", "t_e", "t_a",
                  "eval_episodes", "recovery_episodes", "alpha_mode", "alpha",
                  "h", "t0", "eta_mode", "eta", "tau_soft", "gamma", "theta_max",
                  "lambda_threshold", "acr_free", "warm_start"),
    "run": ("seed", "out"),
}
_KEY_SECTION = {k: s for s, ks in _SECTION_OF.items() for k in ks}


def _parse_value(name: str, raw: str):
    kind = ExperimentConfig.__dataclass_fields__[name].type
    raw = raw.strip()
    if name == "omega_grid":
        return tuple(float(v) for v in raw.split(","))
    if kind == "bool":
        if raw.lower() in ("true", "yes", "1"):
            return True
        if raw.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config(text: str) -> ExperimentConfig:
    values: dict = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTION_OF:
                raise ValueError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        if section is None:
            raise ValueError(f"line {lineno}: key outside any [section]")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in _SECTION_OF[section]:
            raise ValueError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    return ExperimentConfig(**values)


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def config_text(config: ExperimentConfig) -> str:
    """Canonical text form (round-trips through parse_config)."""
    lines = []
    for section, keys in _SECTION_OF.items():
        lines.append(f"[{section}]")
        for k in keys:
            v = getattr(config, k)
            if k == "omega_grid":
                v = ", ".join(format(x, ".17g") for x in v)
            elif isinstance(v, float):
                v = format(v, ".17g")
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)


def config_hash(config: ExperimentConfig) -> str:
    """Hash over every semantic field (the output path is excluded)."""
    lines = [ln for ln in config_text(config).splitlines()
             if not ln.startswith("out = ")]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]


def field_names() -> tuple[str, ...]:
    return tuple(f.name for f in fields(ExperimentConfig))
