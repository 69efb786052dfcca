"""Training loop, optimizer, gradient checking and checkpoints."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .layers import cross_entropy_from_logits
from .model import ModelConfig, forward, param_shapes
from .skeleton import downsample, extract_spd_features, random_rotate, random_scale

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "dmtnet-checkpoint"
CHECKPOINT_VERSION = 1


# -- input encoding --------------------------------------------------------


def encode_sequence(cfg, seq, rng=None, augment=False):
    """Model input for one sequence.

    Downsamples to ``cfg.subclips`` frames (random pick when ``rng`` is
    given, middle frames otherwise) and, with ``augment``, applies random
    scaling and rotation.  Returns (T, 1, N_j, N_j) descriptors, or
    (T, 3 * N_j) raw coordinates for the Euclidean baseline.

    With ``cfg.input_norm == "trace"`` the descriptors of one sequence are
    divided by their mean trace, so every sequence enters the network at
    the same overall scale.
    """
    seq = downsample(seq, cfg.subclips, rng)
    if augment:
        seq = random_rotate(random_scale(seq, rng), rng)
    if cfg.ablation == "euclidean":
        return seq.frames.reshape(cfg.subclips, -1)
    desc = extract_spd_features(seq).descriptors
    if cfg.input_norm == "trace":
        desc = desc / np.trace(desc, axis1=-2, axis2=-1).mean()
    return desc


def encode_batch(cfg, seqs, rng=None, augment=False):
    x = np.stack([encode_sequence(cfg, s, rng, augment) for s in seqs])
    y = np.array([s.label for s in seqs], dtype=np.intp)
    return x, y


# -- optimization ------------------------------------------------------------


@dataclass
class OptimState:
    """SGD with momentum, global-norm clipping and step decay per epoch block."""

    learning_rate: float = 1e-3
    momentum: float = 0.9
    clip_norm: float = 5.0
    decay: float = 0.5
    decay_every: int = 50
    step_count: int = 0
    skipped: int = 0
    buffers: dict = field(default_factory=dict)

    def lr_at(self, epoch):
        return self.learning_rate * self.decay ** (epoch // self.decay_every) if self.decay_every else self.learning_rate


def clip_gradients(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and total > max_norm:
        scale = max_norm / total
        return {k: g * scale for k, g in grads.items()}, total
    return grads, total


def sgd_step(params, grads, opt, lr=None):
    """Return updated parameters; ``opt`` buffers are updated in place.

    ``v <- momentum * v + clip(g)`` then ``p <- p - lr * v``.  A step with
    any non-finite gradient is skipped.
    """
    lr = opt.learning_rate if lr is None else lr
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {name} {np.shape(params[name])}")
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        opt.skipped += 1
        log.warning("non-finite gradient at step %d; update skipped", opt.step_count)
        return params
    grads, _ = clip_gradients(grads, opt.clip_norm)
    updated = dict(params)
    for name, g in grads.items():
        if opt.momentum:
            buf = opt.buffers.get(name)
            buf = g.copy() if buf is None else opt.momentum * buf + g
            opt.buffers[name] = buf
        else:
            buf = g
        updated[name] = params[name] - lr * buf
    opt.step_count += 1
    return updated


def loss_and_grads(cfg, params, x, y):
    """Summed cross-entropy, its parameter gradients, and the logits."""
    tape = ad.Tape()
    vars_ = {name: tape.param(name, value) for name, value in params.items()}
    logits = forward(cfg, vars_, x)
    loss = cross_entropy_from_logits(logits, y)
    grads = tape.backward(loss)
    return float(ad.value_of(loss)), grads, ad.value_of(logits)


def loss_value(cfg, params, x, y):
    return float(cross_entropy_from_logits(forward(cfg, params, x), y))


def _usable(cfg, dataset):
    keep = []
    for i, s in enumerate(dataset):
        if s.joints != cfg.joints or not 0 <= s.label < cfg.classes:
            log.warning("skipping sample %d: %d joints, label %d (model expects %d joints, %d classes)",
                        i, s.joints, s.label, cfg.joints, cfg.classes)
            continue
        keep.append(s)
    return keep


def train_epoch(cfg, params, dataset, opt, rng, batch_size=8, epoch=0, augment=True):
    """One pass over a shuffled dataset.

    Returns ``(params, metrics)`` with the summed loss and the accuracy
    of the on-the-fly predictions made during the pass.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    data = _usable(cfg, dataset)
    if not data:
        raise ValueError("no sample matches the model configuration")
    order = rng.permutation(len(data))
    lr = opt.lr_at(epoch)
    total_loss = 0.0
    correct = 0
    for start in range(0, len(order), batch_size):
        batch = [data[i] for i in order[start : start + batch_size]]
        x, y = encode_batch(cfg, batch, rng, augment)
        loss, grads, logits = loss_and_grads(cfg, params, x, y)
        total_loss += loss
        correct += int(np.sum(np.argmax(logits, axis=1) == y))
        params = sgd_step(params, grads, opt, lr)
    return params, {"epoch": epoch, "loss": total_loss, "accuracy": correct / len(data), "lr": lr}


def predict(cfg, params, dataset, batch_size=64):
    """Predicted labels in evaluation mode (middle-frame downsampling, no augmentation)."""
    preds = []
    for start in range(0, len(dataset), batch_size):
        x, _ = encode_batch(cfg, dataset[start : start + batch_size])
        preds.append(np.argmax(forward(cfg, params, x), axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.intp)


def accuracy(cfg, params, dataset):
    labels = np.array([s.label for s in dataset])
    return float(np.mean(predict(cfg, params, dataset) == labels))


def fit(cfg, params, dataset, opt, epochs, seed=0, batch_size=8, augment=True, callback=None):
    """Run ``epochs`` epochs; return final params and the per-epoch log.

    ``callback(metrics, params)`` runs after every epoch.
    """
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        params, metrics = train_epoch(cfg, params, dataset, opt, rng, batch_size, epoch, augment)
        history.append(metrics)
        if callback is not None:
            callback(metrics, params)
    return params, history


# -- gradient checking ---------------------------------------------------------


def _layer_of(name):
    return name.split(".", 1)[0]


NOISE_MULTIPLE = 1e4


def finite_difference_check(loss_fn, params, h=1e-5, coords=8, rng=None, floor=None):
    """Compare tape gradients of ``loss_fn`` with central differences.

    ``loss_fn`` maps a dict of parameters (arrays or tape ``Var``s) to a
    scalar.  For each parameter, ``coords`` coordinates are sampled (all
    of them if the parameter is smaller).  The error of one coordinate is
    ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.

    Central differences resolve a derivative only to about
    ``eps * |loss| / h``.  The default ``floor`` is ``1e4`` times that
    noise level, so gradients too small to be measured to 1e-4 relative
    accuracy are compared on an absolute scale instead.

    Returns a dict with the worst error per parameter, per layer and
    overall, plus the floor that was used.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("step h must lie in [1e-7, 1e-3]")
    if rng is None:
        rng = np.random.default_rng(0)
    tape = ad.Tape()
    loss = loss_fn({name: tape.param(name, v) for name, v in params.items()})
    grads = tape.backward(loss)
    if floor is None:
        noise = np.finfo(np.float64).eps * max(abs(ad.value_of(loss).item()), 1.0) / h
        floor = NOISE_MULTIPLE * noise
    per_param = {}
    for name, value in params.items():
        value = np.asarray(value, dtype=np.float64)
        picks = np.arange(value.size) if value.size <= coords else rng.choice(value.size, coords, replace=False)
        worst = 0.0
        for k in picks:
            idx = np.unravel_index(k, value.shape)
            shifted = []
            for sign in (1.0, -1.0):
                trial = dict(params)
                trial[name] = value.copy()
                trial[name][idx] += sign * h
                shifted.append(ad.value_of(loss_fn(trial)).item())
            numeric = (shifted[0] - shifted[1]) / (2 * h)
            analytic = float(grads[name][idx])
            worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor))
        per_param[name] = worst
    per_layer = {}
    for name, err in per_param.items():
        layer = _layer_of(name)
        per_layer[layer] = max(per_layer.get(layer, 0.0), err)
    return {"per_param": per_param, "per_layer": per_layer, "max": max(per_param.values()), "floor": floor}


def gradient_check(cfg, params, x, y, h=1e-5, coords=8, rng=None, floor=None):
    """:func:`finite_difference_check` of the summed cross-entropy of a model."""
    return finite_difference_check(
        lambda p: cross_entropy_from_logits(forward(cfg, p, x), y), params, h, coords, rng, floor
    )


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(path, cfg, params):
    """Text checkpoint: header, config, then one ``param`` block per array.

    Values are written with ``repr`` so reloading is bit-exact.
    """
    lines = [f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}"]
    for key, val in cfg.to_dict().items():
        lines.append(f"config {key} {_encode_config_value(val)}")
    for name, value in params.items():
        value = np.asarray(value, dtype=np.float64)
        shape = ",".join(str(n) for n in value.shape)
        lines.append(f"param {name} {shape} {value.size}")
        lines.append(" ".join(repr(float(v)) for v in value.reshape(-1)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _encode_config_value(val):
    if isinstance(val, (tuple, list)):
        if val and isinstance(val[0], (tuple, list)):
            return ";".join(",".join(str(v) for v in row) for row in val)
        return ",".join(str(v) for v in val)
    return str(val)


def load_checkpoint(path):
    """Return ``(config_dict, params)`` from a checkpoint file."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}":
        raise ValueError(f"{path}: not a v{CHECKPOINT_VERSION} checkpoint")
    config = {}
    params = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split(" ", 3)
        if parts[0] == "config":
            config[parts[1]] = parts[2] if len(parts) > 2 else ""
            i += 1
        elif parts[0] == "param":
            name, shape_txt, size = parts[1], parts[2], int(parts[3])
            shape = tuple(int(n) for n in shape_txt.split(",")) if shape_txt else ()
            values = [float(v) for v in lines[i + 1].split()] if size else []
            if len(values) != size:
                raise ValueError(f"{path}:{i + 2}: expected {size} values for {name}, found {len(values)}")
            params[name] = np.array(values, dtype=np.float64).reshape(shape)
            i += 2
        elif not lines[i].strip():
            i += 1
        else:
            raise ValueError(f"{path}:{i + 1}: unexpected line {lines[i][:40]!r}")
    return config, params


def check_params_match(cfg, params):
    """Raise ``ValueError`` listing every shape difference against ``cfg``."""
    expected = param_shapes(cfg)
    diff = []
    for name, shape in expected.items():
        if name not in params:
            diff.append(f"missing {name} {shape}")
        elif params[name].shape != shape:
            diff.append(f"{name}: checkpoint {params[name].shape} vs config {shape}")
    for name in params:
        if name not in expected:
            diff.append(f"unexpected {name} {params[name].shape}")
    if diff:
        raise ValueError("checkpoint does not match config: " + "; ".join(diff))


def config_from_checkpoint(config):
    """Rebuild a :class:`ModelConfig` from checkpoint ``config`` strings."""
    from .config import coerce_model_config

    return ModelConfig(**coerce_model_config(config))
