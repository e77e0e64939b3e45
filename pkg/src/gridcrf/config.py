"""Run configuration: a flat key = value text file.

Lines are `key = value`; blank lines and `#` comments are ignored.  Unknown
keys are rejected.  The optional `preset` key (desk or paper) rewrites the
scale defaults before the remaining keys are applied, so a paper-scale run
only needs `preset = paper` plus any overrides.
"""

from dataclasses import dataclass
from typing import Optional

from .errors import FormatError

# key -> (default, documentation)
KEY_DOCS = {
    "preset": ("desk", "scale preset applied first: desk | paper"),
    "seed": (0, "master seed for every random stream"),
    "height": (48, "grid rows per sample"),
    "width": (32, "grid columns per sample"),
    "label_count": (6, "labels per site including background 0"),
    "train_count": (200, "training samples to generate"),
    "test_count": (50, "test samples to generate"),
    "offsets": ("desk", "offset classes: desk | paper64 | 'dx,dy;dx,dy;...'"),
    "net": ("desk", "network architecture: desk | paper"),
    "variant": ("pcd", "negative sampling: cd1 | cd2 | cd5 | cdK | pcd"),
    "mode": ("joint", "joint (update net + tables) | separate (tables only)"),
    "base_rate": (0.003, "initial step size for table/net updates"),
    "decay": (10000.0, "step-size decay constant: rate_i = base/(1 + i/decay)"),
    "momentum": (0.99, "momentum for pretraining the network"),
    "joint_momentum": (0.9, "momentum for network parameters in joint training"),
    "table_momentum": (0.0, "momentum for pairwise tables"),
    "net_rate_scale": (0.0, "scale on the net upstream error; 0 = 1/num_sites"),
    "iterations": (12000, "training iterations"),
    "pretrain_iterations": (1200, "cross-entropy pretraining iterations; kept "
                                  "deliberately partial so joint training has "
                                  "room to adapt the unaries"),
    "pretrain_rate": (0.002, "pretraining step size"),
    "burn_in": (20, "inference burn-in sweeps"),
    "samples": (100, "inference samples recorded per image"),
    "thinning": (1, "sweeps between recorded samples"),
    "schedule": ("chromatic", "sweep schedule: chromatic | raster"),
    "eval_interval": (0, "training-accuracy hook period, 0 = off"),
    "eval_count": (8, "samples evaluated by the hook"),
    "data_dir": ("data", "dataset directory"),
    "out_dir": ("out", "output directory"),
}

_PRESETS = {
    "desk": {},
    "paper": {
        "height": 330, "width": 130, "label_count": 20,
        "train_count": 2000, "test_count": 500,
        "offsets": "paper64", "net": "paper",
    },
}


@dataclass
class RunConfig:
    preset: str = "desk"
    seed: int = 0
    height: int = 48
    width: int = 32
    label_count: int = 6
    train_count: int = 200
    test_count: int = 50
    offsets: str = "desk"
    net: str = "desk"
    variant: str = "pcd"
    mode: str = "joint"
    base_rate: float = 0.003
    decay: float = 10000.0
    momentum: float = 0.99
    joint_momentum: float = 0.9
    table_momentum: float = 0.0
    net_rate_scale: float = 0.0
    iterations: int = 12000
    pretrain_iterations: int = 1200
    pretrain_rate: float = 0.002
    burn_in: int = 20
    samples: int = 100
    thinning: int = 1
    schedule: str = "chromatic"
    eval_interval: int = 0
    eval_count: int = 8
    data_dir: str = "data"
    out_dir: str = "out"

    def __post_init__(self):
        if self.mode not in ("joint", "separate"):
            raise FormatError(f"mode: {self.mode!r} not joint|separate")
        if self.schedule not in ("chromatic", "raster"):
            raise FormatError(f"schedule: {self.schedule!r} not chromatic|raster")
        self.parse_variant()

    def parse_variant(self):
        """('cd', K) or ('pcd', 0)."""
        v = self.variant.lower()
        if v == "pcd":
            return "pcd", 0
        if v.startswith("cd") and v[2:].isdigit() and int(v[2:]) >= 1:
            return "cd", int(v[2:])
        raise FormatError(f"variant: {self.variant!r} not cdK|pcd")


def _coerce(key: str, raw: str):
    default = KEY_DOCS[key][0]
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise FormatError(f"{key}: cannot parse value {raw!r}")


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in KEY_DOCS:
            raise FormatError(f"{key}: unknown configuration key")
        values[key] = _coerce(key, raw)
    return values


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then preset, then file values, then explicit overrides."""
    file_values = {}
    if path is not None:
        with open(path, "r", encoding="ascii") as f:
            file_values = parse_config_text(f.read())
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    preset = overrides.get("preset", file_values.get("preset", "desk"))
    if preset not in _PRESETS:
        raise FormatError(f"preset: {preset!r} not desk|paper")
    merged = {k: default for k, (default, _) in KEY_DOCS.items()}
    merged.update(_PRESETS[preset])
    merged.update(file_values)
    merged.update(overrides)
    for key in merged:
        if key not in KEY_DOCS:
            raise FormatError(f"{key}: unknown configuration key")
    return RunConfig(**merged)


def describe_keys() -> str:
    lines = []
    for key, (default, doc) in KEY_DOCS.items():
        lines.append(f"{key:20} default {default!r:10} {doc}")
    return "\n".join(lines)
