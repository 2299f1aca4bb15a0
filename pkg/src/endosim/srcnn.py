"""Three-layer super-resolution network with a from-scratch training core.

Forward pass, analytic gradients, Adam updates and the epoch loop are all
implemented directly on numpy arrays in NCHW layout. Convolutions use zero
same-padding so the SR frame aligns pixel-to-pixel with the HR frame.
Training arithmetic runs in single precision; the functions are dtype
preserving so correctness oracles can drive them in double precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image import Image

__all__ = [
    "ConvLayer",
    "SrcnnModel",
    "TrainConfig",
    "AdamState",
    "TrainHistory",
    "conv2d",
    "lrelu",
    "forward",
    "mse_loss",
    "backward",
    "loss_and_grads",
    "adam_step",
    "train",
    "infer",
    "save_weights",
    "load_weights",
]

WEIGHTS_MAGIC = b"SRCW"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class ConvLayer:
    kernel: np.ndarray  # (out_channels, in_channels, k, k)
    bias: np.ndarray  # (out_channels,)

    def __post_init__(self) -> None:
        if self.kernel.ndim != 4 or self.kernel.shape[2] != self.kernel.shape[3]:
            raise ValueError(f"bad kernel shape {self.kernel.shape}")
        if self.k % 2 == 0:
            raise ValueError("kernel size must be odd for symmetric same-padding")
        if self.bias.shape != (self.kernel.shape[0],):
            raise ValueError("bias length must match output channel count")

    @property
    def k(self) -> int:
        return self.kernel.shape[2]

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]


@dataclass(frozen=True)
class SrcnnModel:
    layer1: ConvLayer  # feature extraction, 1 -> 64, 9x9
    layer2: ConvLayer  # nonlinear mapping, 64 -> 32, 1x1
    layer3: ConvLayer  # reconstruction, 32 -> 1, 5x5
    lrelu_slope: float = 0.01

    @property
    def layers(self) -> tuple[ConvLayer, ConvLayer, ConvLayer]:
        return (self.layer1, self.layer2, self.layer3)

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.append(layer.kernel)
            out.append(layer.bias)
        return out

    def with_parameters(self, params: list[np.ndarray]) -> "SrcnnModel":
        layers = [
            ConvLayer(kernel=params[2 * i], bias=params[2 * i + 1]) for i in range(3)
        ]
        return SrcnnModel(*layers, lrelu_slope=self.lrelu_slope)


def init_model(
    seed: int,
    lrelu_slope: float = 0.01,
    channels: tuple[int, int] = (64, 32),
    init_sd: float = 1e-3,
    dtype: np.dtype = np.float32,
) -> SrcnnModel:
    """Zero-mean Gaussian kernels (sd 1e-3), zero biases, seeded."""
    rng = np.random.default_rng(seed)
    c1, c2 = channels

    def conv(out_c: int, in_c: int, k: int) -> ConvLayer:
        kernel = rng.normal(0.0, init_sd, (out_c, in_c, k, k)).astype(dtype)
        return ConvLayer(kernel=kernel, bias=np.zeros(out_c, dtype=dtype))

    return SrcnnModel(
        layer1=conv(c1, 1, 9),
        layer2=conv(c2, c1, 1),
        layer3=conv(1, c2, 5),
        lrelu_slope=lrelu_slope,
    )


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(N, C, H, W) -> (N, C*k*k, H*W) patch matrix under zero same-padding."""
    n, c, h, w = x.shape
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (N, C, H, W, k, k)
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, h * w)


def conv2d(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Cross-correlation with zero same-padding; spatial dims preserved."""
    n, c, h, w = x.shape
    if c != layer.in_channels:
        raise ValueError(f"input has {c} channels, layer expects {layer.in_channels}")
    k = layer.k
    wf = layer.kernel.reshape(layer.out_channels, -1)
    if k == 1:
        y = np.matmul(wf, x.reshape(n, c, h * w)) + layer.bias[:, None]
        return y.reshape(n, layer.out_channels, h, w)
    if c == 1:
        # single-channel patch matrix is small; one GEMM beats k*k shifts
        cols = _im2col(x, k)
        y = np.matmul(wf, cols) + layer.bias[:, None]
        return y.reshape(n, layer.out_channels, h, w)
    # many-channel path: accumulate one GEMM per kernel tap over the padded
    # input, avoiding the large strided im2col copy
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    y = np.zeros((layer.out_channels, n, h, w), dtype=x.dtype)
    for u in range(k):
        for v in range(k):
            sl = xp[:, :, u : u + h, v : v + w]
            y += np.tensordot(layer.kernel[:, :, u, v], sl, axes=([1], [1]))
    y += layer.bias[:, None, None, None]
    return np.ascontiguousarray(y.transpose(1, 0, 2, 3))


def lrelu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, x, x * np.asarray(slope, dtype=x.dtype))


def _lrelu_grad(x: np.ndarray, slope: float) -> np.ndarray:
    # subgradient at exactly 0 is 1 (positive branch)
    return np.where(x >= 0, np.asarray(1, dtype=x.dtype), np.asarray(slope, dtype=x.dtype))


def forward(model: SrcnnModel, lr_batch: np.ndarray) -> np.ndarray:
    """conv1 -> lrelu -> conv2 -> lrelu -> conv3; output is not clamped."""
    a = lrelu(conv2d(lr_batch, model.layer1), model.lrelu_slope)
    a = lrelu(conv2d(a, model.layer2), model.lrelu_slope)
    return conv2d(a, model.layer3)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    if pred.shape != target.shape:
        raise ValueError("mse_loss requires matching shapes")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    return float(np.mean(diff * diff))


def _transpose_layer(layer: ConvLayer) -> ConvLayer:
    """Layer computing the adjoint of the same-padded correlation."""
    flipped = layer.kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    return ConvLayer(
        kernel=np.ascontiguousarray(flipped),
        bias=np.zeros(flipped.shape[0], dtype=layer.kernel.dtype),
    )


def _conv_param_grads(
    x: np.ndarray, grad_out: np.ndarray, layer: ConvLayer
) -> tuple[np.ndarray, np.ndarray]:
    n, c, h, w = x.shape
    k = layer.k
    g = grad_out.reshape(n, layer.out_channels, h * w)
    db = g.sum(axis=(0, 2))
    if k == 1 or c == 1:
        cols = x.reshape(n, c, h * w) if k == 1 else _im2col(x, k)
        dw = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(layer.kernel.shape)
        return dw, db
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    dw = np.empty(layer.kernel.shape, dtype=x.dtype)
    go = grad_out
    for u in range(k):
        for v in range(k):
            sl = xp[:, :, u : u + h, v : v + w]
            dw[:, :, u, v] = np.tensordot(go, sl, axes=([0, 2, 3], [0, 2, 3]))
    return dw, db


def backward(
    model: SrcnnModel, lr_batch: np.ndarray, target: np.ndarray
) -> list[np.ndarray]:
    """Analytic gradients of mse_loss(forward(model, lr_batch), target) with
    respect to every parameter, in the order of model.parameters()."""
    return loss_and_grads(model, lr_batch, target)[1]


def loss_and_grads(
    model: SrcnnModel, lr_batch: np.ndarray, target: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Single fused forward/backward pass; returns (mse, gradients)."""
    slope = model.lrelu_slope
    z1 = conv2d(lr_batch, model.layer1)
    a1 = lrelu(z1, slope)
    z2 = conv2d(a1, model.layer2)
    a2 = lrelu(z2, slope)
    pred = conv2d(a2, model.layer3)
    if pred.shape != target.shape:
        raise ValueError("backward requires matching shapes")

    dtype = lr_batch.dtype
    g3 = (2.0 / pred.size) * (pred - target)
    g3 = g3.astype(dtype, copy=False)
    dw3, db3 = _conv_param_grads(a2, g3, model.layer3)

    g_a2 = conv2d(g3, _transpose_layer(model.layer3))
    g_z2 = g_a2 * _lrelu_grad(z2, slope)
    dw2, db2 = _conv_param_grads(a1, g_z2, model.layer2)

    g_a1 = conv2d(g_z2, _transpose_layer(model.layer2))
    g_z1 = g_a1 * _lrelu_grad(z1, slope)
    dw1, db1 = _conv_param_grads(lr_batch, g_z1, model.layer1)

    return mse_loss(pred, target), [dw1, db1, dw2, db2, dw3, db3]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 300
    batch_size: int = 8
    patch_size: int = 512
    patches_per_image: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    validation_interval: int = 1
    lrelu_slope: float = 0.01

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        for name in ("epochs", "batch_size", "patch_size", "patches_per_image",
                     "validation_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class AdamState:
    step_count: int
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(
            step_count=0,
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
        )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new parameters and state."""
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate
    t = state.step_count + 1
    new_params: list[np.ndarray] = []
    new_m: list[np.ndarray] = []
    new_v: list[np.ndarray] = []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params.append((p - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype))
        new_m.append(m.astype(p.dtype))
        new_v.append(v.astype(p.dtype))
    return new_params, AdamState(step_count=t, first_moment=new_m, second_moment=new_v)


@dataclass
class TrainHistory:
    # one row per epoch: (epoch index, mean train batch MSE, validation MSE)
    # epoch 0 is the initialized model (train loss is nan there)
    rows: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def best_validation_mse(self) -> float:
        return min(r[2] for r in self.rows if not np.isnan(r[2]))


def _validation_mse(model: SrcnnModel, val_pairs: list[tuple[Image, Image]]) -> float:
    total = 0.0
    for lr_img, hr_img in val_pairs:
        x = lr_img.data.astype(np.float32)[None, None]
        pred = forward(model, x)
        total += mse_loss(pred, hr_img.data.astype(np.float32)[None, None])
    return total / len(val_pairs)


def train(
    pairs: list[tuple[Image, Image]],
    val_pairs: list[tuple[Image, Image]],
    cfg: TrainConfig,
) -> tuple[SrcnnModel, TrainHistory]:
    """MSE training with Adam and best-validation checkpointing.

    Per epoch: patches_per_image aligned random crops per training pair
    (one crop window shared by the LR and HR members), shuffled, consumed
    in batches of batch_size with one Adam step each; then a full-frame
    validation pass. The returned model is the snapshot with the smallest
    validation MSE seen, including the initialized model.
    """
    if not pairs or not val_pairs:
        raise ValueError("training and validation sets must be non-empty")
    for lr_img, hr_img in pairs:
        if lr_img.data.shape != hr_img.data.shape:
            raise ValueError("lr/hr pair dimensions differ")
        if min(lr_img.data.shape) < cfg.patch_size:
            raise ValueError("patch_size larger than a training image")

    rng = np.random.default_rng(cfg.seed)
    model = init_model(cfg.seed, lrelu_slope=cfg.lrelu_slope)
    params = model.parameters()
    state = AdamState.zeros_like(params)

    history = TrainHistory()
    best_val = _validation_mse(model, val_pairs)
    best_params = params
    history.rows.append((0, float("nan"), best_val))

    for epoch in range(1, cfg.epochs + 1):
        patches: list[tuple[np.ndarray, np.ndarray]] = []
        for lr_img, hr_img in pairs:
            for _ in range(cfg.patches_per_image):
                x0 = int(rng.integers(0, lr_img.width - cfg.patch_size + 1))
                y0 = int(rng.integers(0, lr_img.height - cfg.patch_size + 1))
                sl = (slice(y0, y0 + cfg.patch_size), slice(x0, x0 + cfg.patch_size))
                patches.append(
                    (
                        lr_img.data[sl].astype(np.float32),
                        hr_img.data[sl].astype(np.float32),
                    )
                )
        order = rng.permutation(len(patches))

        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = np.stack([patches[i][0] for i in idx])[:, None]
            t = np.stack([patches[i][1] for i in idx])[:, None]
            model = model.with_parameters(params)
            batch_loss, grads = loss_and_grads(model, x, t)
            epoch_loss += batch_loss
            params, state = adam_step(params, grads, state, cfg)
            n_batches += 1

        model = model.with_parameters(params)
        if epoch % cfg.validation_interval == 0 or epoch == cfg.epochs:
            val = _validation_mse(model, val_pairs)
            if val < best_val:
                best_val = val
                best_params = params
        else:
            val = float("nan")
        history.rows.append((epoch, epoch_loss / n_batches, val))

    return model.with_parameters(best_params), history


def infer(model: SrcnnModel, lr: Image) -> Image:
    """Full-frame forward pass, clamped to [0, 1] for export."""
    x = lr.data.astype(model.layer1.kernel.dtype)[None, None]
    pred = forward(model, x)[0, 0]
    return Image(np.clip(pred.astype(np.float64), 0.0, 1.0))


def save_weights(model: SrcnnModel) -> bytes:
    """Serialize as: magic "SRCW", version u32, slope f32, then per layer
    out/in/k u32 each followed by kernel and bias as little-endian f32."""
    out = bytearray()
    out += WEIGHTS_MAGIC
    out += struct.pack("<I", WEIGHTS_VERSION)
    out += struct.pack("<f", model.lrelu_slope)
    for layer in model.layers:
        out += struct.pack("<III", layer.out_channels, layer.in_channels, layer.k)
        out += layer.kernel.astype("<f4").tobytes()
        out += layer.bias.astype("<f4").tobytes()
    return bytes(out)


def load_weights(blob: bytes) -> SrcnnModel:
    if blob[:4] != WEIGHTS_MAGIC:
        raise ValueError("not a SRCW weights file")
    if len(blob) < 12:
        raise ValueError("truncated weights file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != WEIGHTS_VERSION:
        raise ValueError(f"unsupported weights version {version}")
    (slope,) = struct.unpack_from("<f", blob, 8)
    pos = 12
    layers: list[ConvLayer] = []
    for _ in range(3):
        if pos + 12 > len(blob):
            raise ValueError("truncated weights file")
        out_c, in_c, k = struct.unpack_from("<III", blob, pos)
        pos += 12
        n_kernel = out_c * in_c * k * k
        n_bytes = 4 * (n_kernel + out_c)
        if pos + n_bytes > len(blob):
            raise ValueError("truncated weights file")
        kernel = np.frombuffer(blob, dtype="<f4", count=n_kernel, offset=pos)
        pos += 4 * n_kernel
        bias = np.frombuffer(blob, dtype="<f4", count=out_c, offset=pos)
        pos += 4 * out_c
        layers.append(
            ConvLayer(
                kernel=kernel.reshape(out_c, in_c, k, k).astype(np.float32),
                bias=bias.astype(np.float32),
            )
        )
    if pos != len(blob):
        raise ValueError("trailing bytes after weights payload")
    return SrcnnModel(*layers, lrelu_slope=float(slope))
