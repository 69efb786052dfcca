"""Flat ``key = value`` run configuration.

Precedence is command-line flag > config file > default.  Lines starting
with ``#`` are comments.  Tuples are written ``4,1,6;8,4,3`` (rows
separated by ``;``).
"""

from dataclasses import asdict, dataclass, field, fields

from .model import ModelConfig


def _to_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_rows(text):
    if isinstance(text, (tuple, list)):
        return tuple(tuple(int(v) for v in row) for row in text)
    return tuple(tuple(int(v) for v in row.split(",")) for row in str(text).split(";") if row.strip())


def _int_tuple(text):
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


_MODEL_TYPES = {
    "joints": int,
    "conv_layers": _int_rows,
    "conv_activation": str,
    "hidden_dim": int,
    "fc_units": int,
    "classes": int,
    "subclips": int,
    "epsilon": float,
    "bias_mode": str,
    "log_features": _to_bool,
    "input_norm": str,
    "ablation": str,
    "euclid_channels": _int_tuple,
    "euclid_kernel": int,
    "euclid_hidden": int,
    "seed": int,
}


@dataclass
class RunConfig:
    """Everything one CLI invocation needs, model settings included."""

    model: ModelConfig = field(default_factory=ModelConfig)
    data: str = ""
    test_data: str = ""
    checkpoint: str = "dmtnet.ckpt"
    report: str = "report"
    seed: int = 0
    epochs: int = 60
    lr: float = 1e-3
    momentum: float = 0.9
    clip_norm: float = 5.0
    decay: float = 0.5
    decay_every: int = 50
    batch_size: int = 8
    augment: bool = True
    per_class: int = 40
    test_per_class: int = 20
    frames: int = 60
    trials: int = 1000
    split: str = "test"
    inject_fault: bool = False

    def to_dict(self):
        out = {k: v for k, v in asdict(self).items() if k != "model"}
        out["model"] = self.model.to_dict()
        return out


_RUN_TYPES = {
    "data": str,
    "test_data": str,
    "checkpoint": str,
    "report": str,
    "seed": int,
    "epochs": int,
    "lr": float,
    "momentum": float,
    "clip_norm": float,
    "decay": float,
    "decay_every": int,
    "batch_size": int,
    "augment": _to_bool,
    "per_class": int,
    "test_per_class": int,
    "frames": int,
    "trials": int,
    "split": str,
    "inject_fault": _to_bool,
}


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines into a dict of raw strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def read_config_file(path):
    with open(path) as fh:
        return parse_config_text(fh.read(), path)


def coerce_model_config(raw):
    out = {}
    for key, value in raw.items():
        if key not in _MODEL_TYPES:
            continue
        out[key] = _MODEL_TYPES[key](value)
    return out


def build_run_config(file_values=None, overrides=None):
    """Merge defaults, file values and flag overrides into a :class:`RunConfig`.

    Unknown keys raise ``ValueError``.  ``seed`` also seeds the model.
    """
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(merged) - set(_MODEL_TYPES) - set(_RUN_TYPES)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    run_kwargs = {k: _RUN_TYPES[k](v) for k, v in merged.items() if k in _RUN_TYPES}
    model_kwargs = coerce_model_config(merged)
    if "seed" in run_kwargs and "seed" not in model_kwargs:
        model_kwargs["seed"] = run_kwargs["seed"]
    return RunConfig(model=ModelConfig(**model_kwargs), **run_kwargs)


def format_config(cfg):
    """Render a config as ``key = value`` lines (round-trips through the parser)."""
    lines = []
    for f in fields(cfg):
        if f.name == "model":
            continue
        lines.append(f"{f.name} = {_fmt(getattr(cfg, f.name))}")
    for key, value in cfg.model.to_dict().items():
        if key == "seed":
            continue
        lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def _fmt(value):
    if isinstance(value, (tuple, list)):
        if value and isinstance(value[0], (tuple, list)):
            return ";".join(",".join(str(v) for v in row) for row in value)
        return ",".join(str(v) for v in value)
    return str(value)
