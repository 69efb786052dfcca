"""Network assembly: configuration, parameter initialization, forward pass.

Parameters live in a flat ordered ``dict`` of float64 arrays.  Inside a
training step the same dict holds tape ``Var`` objects instead.

Variants (``ablation``):

``none``
    conv layers per subclip -> recursive layer -> diagonalizing -> head.
``no-recursive``
    conv layers per subclip, subclip maps averaged over time (a mean of
    SPD matrices is SPD) -> diagonalizing -> head.
``no-conv``
    recursive layer directly on the input descriptors -> diagonalizing -> head.
``euclidean``
    raw joint coordinates -> two temporal 1-d conv layers -> standard GRU
    -> head.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .layers import (
    HeadParams,
    RecursiveParams,
    SpdKernelBank,
    diagonalize_forward,
    head_logits,
    spd_activate,
    spd_conv_forward,
    spd_gru_rollout,
)

ABLATIONS = ("none", "no-conv", "no-recursive", "euclidean")
INPUT_NORMS = ("trace", "none")

# Gate projections start large so gate pre-activations spread over several
# units; otherwise every gate entry is ~1 and the hidden state doubles per step.
GATE_INIT_GAIN = 10.0
BETA_INIT = 0.01


@dataclass
class ModelConfig:
    joints: int = 15
    conv_layers: tuple = ((4, 1, 6), (8, 4, 3))
    conv_activation: str = "sinh"
    hidden_dim: int = 9
    fc_units: int = 800
    classes: int = 3
    subclips: int = 12
    epsilon: float = 1e-4
    bias_mode: str = "J"
    log_features: bool = False
    input_norm: str = "trace"
    ablation: str = "none"
    euclid_channels: tuple = (32, 64)
    euclid_kernel: int = 3
    euclid_hidden: int = 81
    seed: int = 0

    def __post_init__(self):
        self.conv_layers = tuple(tuple(int(v) for v in row) for row in self.conv_layers)
        self.euclid_channels = tuple(int(v) for v in self.euclid_channels)
        self.validate()

    def validate(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.subclips < 1:
            raise ValueError("subclips must be >= 1")
        if self.classes < 2:
            raise ValueError("need at least two classes")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.bias_mode not in ("J", "I"):
            raise ValueError("bias_mode must be 'J' or 'I'")
        if self.input_norm not in INPUT_NORMS:
            raise ValueError(f"input_norm must be one of {INPUT_NORMS}, got {self.input_norm!r}")
        if self.conv_activation not in ("exp", "sinh", "cosh"):
            raise ValueError(f"unknown conv activation {self.conv_activation!r}")
        self.spd_shapes()
        if self.ablation == "euclidean":
            if self.subclips - len(self.euclid_channels) * (self.euclid_kernel - 1) < 1:
                raise ValueError("temporal convolutions leave no time steps")

    @property
    def uses_conv(self):
        return self.ablation in ("none", "no-recursive")

    @property
    def uses_recursive(self):
        return self.ablation in ("none", "no-conv")

    def spd_shapes(self):
        """(channels, dim) after each SPD stage, starting from the input."""
        shapes = [(1, self.joints)]
        if self.uses_conv:
            for out_c, in_c, k in self.conv_layers:
                c, d = shapes[-1]
                if in_c != c:
                    raise ValueError(f"conv layer expects {in_c} input channels, previous stage gives {c}")
                if d < k:
                    raise ValueError(f"conv kernel {k} exceeds map size {d}")
                shapes.append((out_c, d - k + 1))
        if self.uses_recursive:
            shapes.append((shapes[-1][0], self.hidden_dim))
        return shapes

    def feature_length(self):
        if self.ablation == "euclidean":
            return self.euclid_hidden
        c, d = self.spd_shapes()[-1]
        return c * d * d

    def to_dict(self):
        return asdict(self)


def init_params(cfg, rng=None):
    """Random parameters scaled so each stage roughly preserves input magnitude."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    params = {}
    if cfg.ablation == "euclidean":
        in_dim = 3 * cfg.joints
        for i, out_dim in enumerate(cfg.euclid_channels):
            fan_in = in_dim * cfg.euclid_kernel
            params[f"econv{i}.w"] = rng.normal(0, 1 / np.sqrt(fan_in), (cfg.euclid_kernel, in_dim, out_dim))
            params[f"econv{i}.b"] = np.zeros(out_dim)
            in_dim = out_dim
        h = cfg.euclid_hidden
        for gate in ("r", "z", "n"):
            params[f"egru.Wx_{gate}"] = rng.normal(0, 1 / np.sqrt(in_dim), (in_dim, h))
            params[f"egru.Uh_{gate}"] = rng.normal(0, 1 / np.sqrt(h), (h, h))
            params[f"egru.b_{gate}"] = np.zeros(h)
    else:
        shapes = cfg.spd_shapes()
        if cfg.uses_conv:
            for i, (out_c, in_c, k) in enumerate(cfg.conv_layers):
                params[f"conv{i}.V"] = rng.normal(0, 1 / (k * np.sqrt(in_c)), (out_c, in_c, k, k))
        if cfg.uses_recursive:
            c, d_in = shapes[-2]
            for name in ("W_fr", "W_hr", "W_fz", "W_hz", "W_fh"):
                fan = d_in if name[2] == "f" else cfg.hidden_dim
                gain = 1.0 if name == "W_fh" else GATE_INIT_GAIN
                params[f"gru.{name}"] = rng.normal(0, gain / np.sqrt(fan), (c, fan, cfg.hidden_dim))
            for name in ("beta_r", "beta_z", "beta_h"):
                params[f"gru.{name}"] = np.array(BETA_INIT)
    feat = cfg.feature_length()
    params["head.fc_weight"] = rng.normal(0, 1 / np.sqrt(feat), (feat, cfg.fc_units))
    params["head.fc_bias"] = np.zeros(cfg.fc_units)
    params["head.out_weight"] = rng.normal(0, 1 / np.sqrt(cfg.fc_units), (cfg.fc_units, cfg.classes))
    params["head.out_bias"] = np.zeros(cfg.classes)
    return params


def param_shapes(cfg):
    return {k: v.shape for k, v in init_params(cfg, np.random.default_rng(0)).items()}


def recursive_params(cfg, params):
    return RecursiveParams(
        W_fr=params["gru.W_fr"],
        W_hr=params["gru.W_hr"],
        W_fz=params["gru.W_fz"],
        W_hz=params["gru.W_hz"],
        W_fh=params["gru.W_fh"],
        beta_r=params["gru.beta_r"],
        beta_z=params["gru.beta_z"],
        beta_h=params["gru.beta_h"],
        epsilon=cfg.epsilon,
        bias_mode=cfg.bias_mode,
    )


def head_params(params):
    return HeadParams(
        params["head.fc_weight"],
        params["head.fc_bias"],
        params["head.out_weight"],
        params["head.out_bias"],
    )


def conv_stack(cfg, params, x):
    """All SPD conv layers (filtering + activation) on (..., C, D, D) maps."""
    for i in range(len(cfg.conv_layers)):
        bank = SpdKernelBank(params[f"conv{i}.V"], cfg.epsilon)
        x = spd_activate(spd_conv_forward(x, bank), cfg.conv_activation)
    return x


def spd_features(cfg, params, x):
    """Diagonalizing-layer features from descriptors of shape (B, T, 1, D, D)."""
    if cfg.uses_conv:
        x = conv_stack(cfg, params, x)
    if cfg.uses_recursive:
        steps = [ad.take(x, (slice(None), t)) for t in range(ad.value_of(x).shape[1])]
        z = spd_gru_rollout(steps, recursive_params(cfg, params)).H
    else:
        z = ad.mean(x, axis=1)
    feat = diagonalize_forward(z)
    if cfg.log_features:
        feat = ad.log(feat)
    return feat


def euclidean_features(cfg, params, x):
    """Final GRU state from raw coordinates of shape (B, T, 3 * N_j)."""
    for i in range(len(cfg.euclid_channels)):
        x = ad.tanh(ad.add(ad.conv1d_valid(x, params[f"econv{i}.w"]), params[f"econv{i}.b"]))
    steps = ad.value_of(x).shape[1]
    h = np.zeros((ad.value_of(x).shape[0], cfg.euclid_hidden))
    for t in range(steps):
        xt = ad.take(x, (slice(None), t))

        def lin(gate, hh):
            return ad.add(
                ad.add(ad.matmul(xt, params[f"egru.Wx_{gate}"]), ad.matmul(hh, params[f"egru.Uh_{gate}"])),
                params[f"egru.b_{gate}"],
            )

        r = ad.sigmoid(lin("r", h))
        z = ad.sigmoid(lin("z", h))
        uh = ad.matmul(ad.mul(r, h), params["egru.Uh_n"])
        n = ad.tanh(ad.add(ad.add(ad.matmul(xt, params["egru.Wx_n"]), uh), params["egru.b_n"]))
        h = ad.add(ad.mul(ad.sub(1.0, z), n), ad.mul(z, h))
    return h


def forward(cfg, params, x):
    """Class logits (B, classes) for a batch of encoded inputs."""
    if cfg.ablation == "euclidean":
        feat = euclidean_features(cfg, params, x)
    else:
        feat = spd_features(cfg, params, x)
    return head_logits(feat, head_params(params))


def predict_proba(cfg, params, x):
    return ad.softmax(forward(cfg, params, x))
