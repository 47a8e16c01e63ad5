"""Convolutional CTC acoustic model with hand-written backpropagation.

The network is a stack of time-channel separable 1D convolutions: an input
layer ``c1`` (stride 2), repeated residual blocks, a separable ``c2``, a
pointwise ``c3`` (these four groups form the encoder), and a pointwise ``c4``
projecting to the label logits (the decoder). Each module is depthwise conv →
pointwise conv → batch norm → ReLU; each block repeat carries a pointwise+norm
skip from its input, added before the final ReLU.

Parameters live in a flat name → array dict; every tensor is tagged encoder
or decoder by name and carries a trainable flag. Frozen tensors receive no
gradients and frozen batch-norm layers stop updating their running statistics,
so "frozen" means bit-identical.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .rng import stream

BN_EPS = 1e-5
BN_MOMENTUM = 0.9  # running = momentum * running + (1 - momentum) * batch


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class BlockConfig:
    repeats: int  # S: times the whole block is stacked
    modules: int  # R: separable modules inside one repeat
    kernel: int
    channels: int


@dataclass(frozen=True)
class ModelConfig:
    n_labels: int  # decoder width, alphabet size + 1 for blank
    n_features: int = 64
    c1_kernel: int = 9
    c1_channels: int = 32
    c1_stride: int = 2
    blocks: tuple[BlockConfig, ...] = (
        BlockConfig(repeats=1, modules=2, kernel=11, channels=32),
        BlockConfig(repeats=1, modules=2, kernel=13, channels=64),
    )
    c2_kernel: int = 15
    c2_channels: int = 64
    c3_channels: int = 128

    def __post_init__(self):
        kernels = [self.c1_kernel, self.c2_kernel] + [b.kernel for b in self.blocks]
        if any(k % 2 == 0 or k < 1 for k in kernels):
            raise ModelError("kernel sizes must be odd and positive")
        if self.n_labels < 2:
            raise ModelError("need at least one symbol plus blank")
        if min(self.c1_channels, self.c2_channels, self.c3_channels, self.n_features) < 1:
            raise ModelError("channel counts must be positive")
        if any(min(b.repeats, b.modules, b.channels) < 1 for b in self.blocks):
            raise ModelError("block fields must be positive")


def micro_config(n_labels: int) -> ModelConfig:
    """Desk-scale preset: trains on a CPU in minutes, touches every layer type."""
    return ModelConfig(n_labels=n_labels)


def quartznet15x5_config(n_labels: int) -> ModelConfig:
    """The full 15x5 architecture (5 block types, 3 repeats, 5 modules)."""
    return ModelConfig(
        n_labels=n_labels,
        c1_kernel=33,
        c1_channels=256,
        blocks=(
            BlockConfig(3, 5, 33, 256),
            BlockConfig(3, 5, 39, 256),
            BlockConfig(3, 5, 51, 512),
            BlockConfig(3, 5, 63, 512),
            BlockConfig(3, 5, 75, 512),
        ),
        c2_kernel=87,
        c2_channels=512,
        c3_channels=1024,
    )


CONFIG_PRESETS = {"micro": micro_config, "quartznet15x5": quartznet15x5_config}


def partition_of(name: str) -> str:
    return "decoder" if name.startswith("c4.") else "encoder"


@dataclass(eq=False)
class Model:
    cfg: ModelConfig
    tensors: dict[str, np.ndarray]
    trainable: dict[str, bool]
    mode: str = "train"
    step: int = 0
    dtype: type = np.float32
    _units: list = field(default_factory=list, repr=False)

    def set_mode(self, mode: str) -> None:
        if mode not in ("train", "eval"):
            raise ModelError(f"unknown mode {mode!r}")
        self.mode = mode


# --- primitive layers ---------------------------------------------------


def _len_mask(lens: np.ndarray, t: int, dtype) -> np.ndarray:
    return (np.arange(t)[None, :] < np.asarray(lens)[:, None]).astype(dtype)[:, :, None]


def _pw_fwd(x, w, b):
    return x @ w + b


def _pw_bwd(x, w, dy):
    dx = dy @ w.T
    dw = np.einsum("bti,bto->io", x, dy)
    db = dy.sum(axis=(0, 1))
    return dx, dw, db


def _bn_fwd(x, gamma, beta, rm, rv, mask, train: bool, update_stats: bool):
    if train:
        n = mask.sum()
        mean = x.sum(axis=(0, 1)) / n  # padded entries are zero already
        diff = (x - mean) * mask
        var = (diff * diff).sum(axis=(0, 1)) / n
        inv_std = 1.0 / np.sqrt(var + np.asarray(BN_EPS, dtype=x.dtype))
        xhat = diff * inv_std
        if update_stats:
            rm *= BN_MOMENTUM
            rm += (1.0 - BN_MOMENTUM) * mean
            rv *= BN_MOMENTUM
            rv += (1.0 - BN_MOMENTUM) * var
        y = (gamma * xhat + beta) * mask
        return y, (xhat, inv_std, n)
    inv_std = 1.0 / np.sqrt(rv + np.asarray(BN_EPS, dtype=x.dtype))
    y = (gamma * (x - rm) * inv_std + beta) * mask
    return y, None


def _bn_bwd(cache, gamma, mask, dy):
    xhat, inv_std, n = cache
    dgamma = (dy * xhat).sum(axis=(0, 1))
    dbeta = dy.sum(axis=(0, 1))
    dxhat = dy * gamma
    s1 = dxhat.sum(axis=(0, 1))
    s2 = (dxhat * xhat).sum(axis=(0, 1))
    dx = (inv_std / n) * (n * dxhat - s1 - xhat * s2) * mask
    return dx, dgamma, dbeta


def _relu_fwd(x):
    y = np.maximum(x, 0)
    return y, x > 0


def _relu_bwd(keep, dy):
    return dy * keep


# --- composite units -----------------------------------------------------


class _SepUnit:
    """Depthwise + pointwise conv + batch norm (+ optional ReLU)."""

    def __init__(self, prefix: str, kernel: int, c_in: int, c_out: int, stride: int = 1,
                 relu: bool = True):
        self.prefix = prefix
        self.kernel = kernel
        self.c_in = c_in
        self.c_out = c_out
        self.stride = stride
        self.relu = relu

    def param_specs(self):
        p = self.prefix
        return [
            (f"{p}.dw_w", (self.kernel, self.c_in), "dw_w"),
            (f"{p}.dw_b", (self.c_in,), "zeros"),
            (f"{p}.pw_w", (self.c_in, self.c_out), "pw_w"),
            (f"{p}.pw_b", (self.c_out,), "zeros"),
            (f"{p}.bn_g", (self.c_out,), "ones"),
            (f"{p}.bn_b", (self.c_out,), "zeros"),
            (f"{p}.bn_rm", (self.c_out,), "stat_zeros"),
            (f"{p}.bn_rv", (self.c_out,), "stat_ones"),
        ]

    def forward(self, model: Model, x, lens, train: bool):
        p, ts = self.prefix, model.tensors
        out_lens = (lens + self.stride - 1) // self.stride if self.stride > 1 else lens
        h_dw = _kernels.dw_conv_fwd(np.ascontiguousarray(x), ts[f"{p}.dw_w"], self.stride)
        h_dw = h_dw + ts[f"{p}.dw_b"]
        mask = _len_mask(out_lens, h_dw.shape[1], x.dtype)
        h_dw *= mask
        h_pw = _pw_fwd(h_dw, ts[f"{p}.pw_w"], ts[f"{p}.pw_b"]) * mask
        update = train and model.trainable.get(f"{p}.bn_rm", False)
        h_bn, bn_cache = _bn_fwd(
            h_pw, ts[f"{p}.bn_g"], ts[f"{p}.bn_b"], ts[f"{p}.bn_rm"], ts[f"{p}.bn_rv"],
            mask, train, update,
        )
        if self.relu:
            y, keep = _relu_fwd(h_bn)
        else:
            y, keep = h_bn, None
        cache = (x, h_dw, bn_cache, keep, mask) if train else None
        return y, out_lens, cache

    def backward(self, model: Model, cache, dy, grads):
        p, ts = self.prefix, model.tensors
        x, h_dw, bn_cache, keep, mask = cache
        dy = dy * mask
        if self.relu:
            dy = _relu_bwd(keep, dy)
        d_pw_out, dgamma, dbeta = _bn_bwd(bn_cache, ts[f"{p}.bn_g"], mask, dy)
        grads[f"{p}.bn_g"] = dgamma
        grads[f"{p}.bn_b"] = dbeta
        d_dw_out, dpw_w, dpw_b = _pw_bwd(h_dw, ts[f"{p}.pw_w"], d_pw_out)
        grads[f"{p}.pw_w"] = dpw_w
        grads[f"{p}.pw_b"] = dpw_b
        d_dw_out *= mask
        grads[f"{p}.dw_b"] = d_dw_out.sum(axis=(0, 1))
        dx, ddw_w = _kernels.dw_conv_bwd(
            np.ascontiguousarray(x), ts[f"{p}.dw_w"], self.stride, np.ascontiguousarray(d_dw_out)
        )
        grads[f"{p}.dw_w"] = ddw_w
        return dx


class _PwUnit:
    """Pointwise conv (+ optional batch norm and ReLU)."""

    def __init__(self, prefix: str, c_in: int, c_out: int, bn: bool = True, relu: bool = True):
        self.prefix = prefix
        self.c_in = c_in
        self.c_out = c_out
        self.bn = bn
        self.relu = relu

    def param_specs(self):
        p = self.prefix
        specs = [
            (f"{p}.pw_w", (self.c_in, self.c_out), "pw_w"),
            (f"{p}.pw_b", (self.c_out,), "zeros"),
        ]
        if self.bn:
            specs += [
                (f"{p}.bn_g", (self.c_out,), "ones"),
                (f"{p}.bn_b", (self.c_out,), "zeros"),
                (f"{p}.bn_rm", (self.c_out,), "stat_zeros"),
                (f"{p}.bn_rv", (self.c_out,), "stat_ones"),
            ]
        return specs

    def forward(self, model: Model, x, lens, train: bool):
        p, ts = self.prefix, model.tensors
        mask = _len_mask(lens, x.shape[1], x.dtype)
        h = _pw_fwd(x, ts[f"{p}.pw_w"], ts[f"{p}.pw_b"]) * mask
        bn_cache = None
        if self.bn:
            update = train and model.trainable.get(f"{p}.bn_rm", False)
            h, bn_cache = _bn_fwd(
                h, ts[f"{p}.bn_g"], ts[f"{p}.bn_b"], ts[f"{p}.bn_rm"], ts[f"{p}.bn_rv"],
                mask, train, update,
            )
        if self.relu:
            y, keep = _relu_fwd(h)
        else:
            y, keep = h, None
        cache = (x, bn_cache, keep, mask) if train else None
        return y, lens, cache

    def backward(self, model: Model, cache, dy, grads):
        p, ts = self.prefix, model.tensors
        x, bn_cache, keep, mask = cache
        dy = dy * mask
        if self.relu:
            dy = _relu_bwd(keep, dy)
        if self.bn:
            dy, dgamma, dbeta = _bn_bwd(bn_cache, ts[f"{p}.bn_g"], mask, dy)
            grads[f"{p}.bn_g"] = dgamma
            grads[f"{p}.bn_b"] = dbeta
        dx, dw, db = _pw_bwd(x, ts[f"{p}.pw_w"], dy)
        grads[f"{p}.pw_w"] = dw
        grads[f"{p}.pw_b"] = db
        return dx


class _ResidualUnit:
    """R separable modules with a pointwise+norm skip joined before the last ReLU."""

    def __init__(self, prefix: str, kernel: int, c_in: int, c_out: int, n_modules: int):
        self.prefix = prefix
        self.modules = []
        cin = c_in
        for m in range(n_modules):
            last = m == n_modules - 1
            self.modules.append(
                _SepUnit(f"{prefix}.m{m}", kernel, cin, c_out, relu=not last)
            )
            cin = c_out
        self.skip = _PwUnit(f"{prefix}.skip", c_in, c_out, bn=True, relu=False)

    def param_specs(self):
        specs = []
        for m in self.modules:
            specs += m.param_specs()
        return specs + self.skip.param_specs()

    def forward(self, model: Model, x, lens, train: bool):
        h = x
        mod_caches = []
        for m in self.modules:
            h, lens, c = m.forward(model, h, lens, train)
            mod_caches.append(c)
        s, _, skip_cache = self.skip.forward(model, x, lens, train)
        y, keep = _relu_fwd(h + s)
        mask = _len_mask(lens, y.shape[1], y.dtype)
        y = y * mask
        cache = (mod_caches, skip_cache, keep, mask) if train else None
        return y, lens, cache

    def backward(self, model: Model, cache, dy, grads):
        mod_caches, skip_cache, keep, mask = cache
        dh = _relu_bwd(keep, dy * mask)
        dx_skip = self.skip.backward(model, skip_cache, dh, grads)
        dx = dh
        for m, c in zip(reversed(self.modules), reversed(mod_caches)):
            dx = m.backward(model, c, dx, grads)
        return dx + dx_skip


def _build_units(cfg: ModelConfig) -> list:
    units = [_SepUnit("c1", cfg.c1_kernel, cfg.n_features, cfg.c1_channels, stride=cfg.c1_stride)]
    channels = cfg.c1_channels
    for bi, bc in enumerate(cfg.blocks):
        for r in range(bc.repeats):
            units.append(_ResidualUnit(f"b{bi}.r{r}", bc.kernel, channels, bc.channels, bc.modules))
            channels = bc.channels
    units.append(_SepUnit("c2", cfg.c2_kernel, channels, cfg.c2_channels))
    units.append(_PwUnit("c3", cfg.c2_channels, cfg.c3_channels))
    units.append(_PwUnit("c4", cfg.c3_channels, cfg.n_labels, bn=False, relu=False))
    return units


def glorot_bound(shape: tuple[int, ...], kind: str) -> float:
    if kind == "dw_w":
        k = shape[0]
        return float(np.sqrt(6.0 / (k + k)))
    if kind == "pw_w":
        fan_in, fan_out = shape
        return float(np.sqrt(6.0 / (fan_in + fan_out)))
    raise ModelError(f"no Glorot bound for kind {kind!r}")


def _init_tensor(name: str, shape, kind: str, seed: int, dtype) -> np.ndarray:
    if kind in ("zeros", "stat_zeros"):
        return np.zeros(shape, dtype=dtype)
    if kind in ("ones", "stat_ones"):
        return np.ones(shape, dtype=dtype)
    a = glorot_bound(shape, kind)
    r = stream(seed, "init", name)
    return r.uniform(-a, a, size=shape).astype(dtype)


def build_model(cfg: ModelConfig, seed: int, dtype=np.float32) -> Model:
    """Fresh model: Glorot-uniform conv kernels, zero biases, identity norms."""
    units = _build_units(cfg)
    tensors: dict[str, np.ndarray] = {}
    trainable: dict[str, bool] = {}
    for u in units:
        for name, shape, kind in u.param_specs():
            tensors[name] = _init_tensor(name, shape, kind, seed, dtype)
            trainable[name] = True
    return Model(cfg=cfg, tensors=tensors, trainable=trainable, dtype=dtype, _units=units)


def output_length(input_len: int, cfg: ModelConfig) -> int:
    """Only c1 strides; every other layer preserves length via same-padding."""
    return (input_len + cfg.c1_stride - 1) // cfg.c1_stride


class ForwardCache:
    def __init__(self, unit_caches, in_shape):
        self.unit_caches = unit_caches
        self.in_shape = in_shape


def forward(model: Model, feats: np.ndarray, lens, return_cache: bool = False):
    """Run the network over a padded batch [B, Tmax, F] with valid lengths.

    Returns (logits [B, Tout, n_labels], out_lens) and, when ``return_cache``
    (train mode only), the cache needed by :func:`backward`.
    """
    feats = np.asarray(feats, dtype=model.dtype)
    lens = np.asarray(lens, dtype=np.int64)
    if feats.ndim != 3 or feats.shape[2] != model.cfg.n_features:
        raise ModelError(
            f"expected [B, T, {model.cfg.n_features}] features, got {feats.shape}"
        )
    if np.any(lens > feats.shape[1]) or np.any(lens < 1):
        raise ModelError("valid lengths out of range")
    train = model.mode == "train"
    if return_cache and not train:
        raise ModelError("caching requires train mode")
    x = feats * _len_mask(lens, feats.shape[1], feats.dtype)
    caches = []
    for u in model._units:
        x, lens, c = u.forward(model, x, lens, train)
        caches.append(c)
    if return_cache:
        return x, lens, ForwardCache(caches, feats.shape)
    return x, lens


def backward(model: Model, cache: ForwardCache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the scalar loss behind ``dlogits`` for every trainable
    parameter tensor. Frozen tensors get no entry; padded frames contribute
    nothing."""
    if not isinstance(cache, ForwardCache):
        raise ModelError("backward requires the cache from forward(..., return_cache=True)")
    grads_all: dict[str, np.ndarray] = {}
    dx = np.asarray(dlogits, dtype=model.dtype)
    for u, c in zip(reversed(model._units), reversed(cache.unit_caches)):
        dx = u.backward(model, c, dx, grads_all)
    return {n: g for n, g in grads_all.items() if model.trainable.get(n, False)}


def set_trainable(model: Model, partition: str, flag: bool) -> None:
    """Set trainable flags on a partition ("encoder", "decoder", or "all").

    Freezing a partition also freezes its batch-norm running statistics."""
    if partition not in ("encoder", "decoder", "all"):
        raise ModelError(f"unknown partition {partition!r}")
    for name in model.tensors:
        if partition == "all" or partition_of(name) == partition:
            model.trainable[name] = flag


def swap_decoder(model: Model, new_alphabet, seed: int) -> Model:
    """New model with a freshly initialized decoder sized for ``new_alphabet``
    (an Alphabet or a plain logit count).

    Encoder tensors are copied bit-exactly; the step counter is preserved. The
    decoder draws from a different stream than build_model, so swapping to an
    identically sized alphabet under the same seed still yields fresh values."""
    n_labels = getattr(new_alphabet, "n_logits", new_alphabet)
    cfg = ModelConfig(
        n_labels=n_labels,
        n_features=model.cfg.n_features,
        c1_kernel=model.cfg.c1_kernel,
        c1_channels=model.cfg.c1_channels,
        c1_stride=model.cfg.c1_stride,
        blocks=model.cfg.blocks,
        c2_kernel=model.cfg.c2_kernel,
        c2_channels=model.cfg.c2_channels,
        c3_channels=model.cfg.c3_channels,
    )
    units = _build_units(cfg)
    tensors: dict[str, np.ndarray] = {}
    trainable: dict[str, bool] = {}
    for u in units:
        for name, shape, kind in u.param_specs():
            if partition_of(name) == "decoder":
                if kind in ("zeros", "ones", "stat_zeros", "stat_ones"):
                    tensors[name] = _init_tensor(name, shape, kind, seed, model.dtype)
                else:
                    a = glorot_bound(shape, kind)
                    r = stream(seed, "decoder", name)
                    tensors[name] = r.uniform(-a, a, size=shape).astype(model.dtype)
            else:
                tensors[name] = model.tensors[name].copy()
            trainable[name] = True
    return Model(
        cfg=cfg,
        tensors=tensors,
        trainable=trainable,
        mode=model.mode,
        step=model.step,
        dtype=model.dtype,
        _units=units,
    )


def fingerprint(model: Model, partition: str = "all") -> str:
    """SHA-256 over the raw bytes of the partition's tensors (sorted names)."""
    h = hashlib.sha256()
    for name in sorted(model.tensors):
        if partition == "all" or partition_of(name) == partition:
            h.update(name.encode())
            h.update(np.ascontiguousarray(model.tensors[name]).tobytes())
    return h.hexdigest()
