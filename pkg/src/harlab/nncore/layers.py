"""Layer specifications and forward/backward kernels.

Tensors are NHWC float64 throughout: a batch is (B, H, W, C), dense
activations are (B, units). Convolutions use a fixed 3x3 kernel at
stride 1, either zero-padded ("same") or unpadded ("valid"); max-pooling
is 2x2 stride 2 with floor division on odd dims. These are the only
primitives the activity-recognition architecture needs.

Each kernel returns (output, cache); the matching backward consumes the
cache and the upstream gradient. Backward passes are exact, which the
finite-difference tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from harlab.errors import ConfigError

KERNEL = 3  # conv kernel side, fixed

CONV_KINDS = ("conv-same", "conv-valid")
LAYER_KINDS = CONV_KINDS + ("maxpool2x2", "dropout", "flatten", "dense", "softmax")


@dataclass(frozen=True)
class TensorShape:
    """Per-sample shape: (height, width, channels) for images, (length,) for vectors."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) not in (1, 3):
            raise ConfigError(f"TensorShape needs 1 or 3 dims, got {dims}")
        if any(d < 1 for d in dims):
            raise ConfigError(f"all TensorShape dims must be >= 1, got {dims}")

    @classmethod
    def image(cls, height, width, channels=1) -> "TensorShape":
        return cls((height, width, channels))

    @classmethod
    def vector(cls, length) -> "TensorShape":
        return cls((length,))

    @property
    def is_image(self) -> bool:
        return len(self.dims) == 3

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def __str__(self):
        return "x".join(str(d) for d in self.dims)


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the network.

    kind        one of conv-same | conv-valid | maxpool2x2 | dropout |
                flatten | dense | softmax
    channels    output channels (conv kinds)
    rate        drop probability (dropout)
    units       output width (dense)
    activation  "relu" or "linear"; conv kinds default to relu
    """

    kind: str
    channels: int | None = None
    rate: float | None = None
    units: int | None = None
    activation: str | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.kind in CONV_KINDS:
            if not self.channels or self.channels < 1:
                raise ConfigError(f"{self.kind} needs channels >= 1")
            if self.activation is None:
                object.__setattr__(self, "activation", "relu")
        if self.kind == "dropout" and not (self.rate is not None and 0.0 <= self.rate < 1.0):
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.rate}")
        if self.kind == "dense":
            if not self.units or self.units < 1:
                raise ConfigError("dense needs units >= 1")
            if self.activation not in ("relu", "linear"):
                raise ConfigError(f"dense activation must be relu or linear, got {self.activation}")
        if self.activation not in (None, "relu", "linear"):
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def has_params(self) -> bool:
        return self.kind in CONV_KINDS or self.kind == "dense"


def canonical_layers(num_classes: int) -> tuple[LayerSpec, ...]:
    """The fixed architecture used for every dataset configuration."""
    return (
        LayerSpec("conv-same", channels=32),
        LayerSpec("conv-valid", channels=64),
        LayerSpec("maxpool2x2"),
        LayerSpec("dropout", rate=0.25),
        LayerSpec("flatten"),
        LayerSpec("dense", units=128, activation="relu"),
        LayerSpec("dropout", rate=0.5),
        LayerSpec("dense", units=num_classes, activation="linear"),
        LayerSpec("softmax"),
    )


def output_shape(spec: LayerSpec, in_shape: TensorShape) -> TensorShape:
    """Shape produced by ``spec`` on ``in_shape``; raises ConfigError if invalid."""
    kind = spec.kind
    if kind in CONV_KINDS:
        if not in_shape.is_image:
            raise ConfigError(f"{kind} needs an image input, got {in_shape}")
        h, w, _ = in_shape.dims
        if kind == "conv-same":
            return TensorShape((h, w, spec.channels))
        if h < KERNEL or w < KERNEL:
            raise ConfigError(f"conv-valid needs dims >= {KERNEL}, got {in_shape}")
        return TensorShape((h - KERNEL + 1, w - KERNEL + 1, spec.channels))
    if kind == "maxpool2x2":
        if not in_shape.is_image:
            raise ConfigError(f"maxpool2x2 needs an image input, got {in_shape}")
        h, w, c = in_shape.dims
        if h < 2 and w < 2:
            raise ConfigError(f"maxpool2x2 needs height or width >= 2, got {in_shape}")
        return TensorShape((max(h // 2, 1), max(w // 2, 1), c))
    if kind == "dropout":
        return in_shape
    if kind == "flatten":
        return TensorShape((in_shape.size,))
    if kind == "dense":
        if in_shape.is_image:
            raise ConfigError(f"dense needs a flat input, got {in_shape} (missing flatten?)")
        return TensorShape((spec.units,))
    if kind == "softmax":
        if in_shape.is_image:
            raise ConfigError(f"softmax needs a flat input, got {in_shape}")
        return in_shape
    raise ConfigError(f"unknown layer kind {kind!r}")


def shape_chain(specs, input_shape: TensorShape) -> list[TensorShape]:
    """Output shape after each layer. Raises ConfigError naming the bad layer."""
    shapes = []
    shape = input_shape
    for i, spec in enumerate(specs):
        try:
            shape = output_shape(spec, shape)
        except ConfigError as exc:
            raise ConfigError(f"layer {i} ({spec.kind}): {exc}") from None
        shapes.append(shape)
    return shapes


# --- conv 3x3, stride 1 ---------------------------------------------------
# Forward/backward as nine shifted (B,Ho,Wo,Cin) @ (Cin,Cout) products; avoids
# materialising im2col patches.

def conv2d_forward(x, w, b, same: bool, relu: bool):
    if same:
        x_pad = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    else:
        x_pad = x
    ho = x_pad.shape[1] - KERNEL + 1
    wo = x_pad.shape[2] - KERNEL + 1
    z = np.broadcast_to(b, (x.shape[0], ho, wo, w.shape[3])).copy()
    for i in range(KERNEL):
        for j in range(KERNEL):
            z += x_pad[:, i : i + ho, j : j + wo, :] @ w[i, j]
    if relu:
        mask = z > 0
        out = z * mask
    else:
        mask = None
        out = z
    return out, (x_pad, mask)


def conv2d_backward(dout, cache, w, same: bool):
    x_pad, mask = cache
    if mask is not None:
        dout = dout * mask
    ho, wo = dout.shape[1], dout.shape[2]
    dw = np.empty_like(w)
    dx_pad = np.zeros_like(x_pad)
    for i in range(KERNEL):
        for j in range(KERNEL):
            patch = x_pad[:, i : i + ho, j : j + wo, :]
            dw[i, j] = np.tensordot(patch, dout, axes=([0, 1, 2], [0, 1, 2]))
            dx_pad[:, i : i + ho, j : j + wo, :] += dout @ w[i, j].T
    db = dout.sum(axis=(0, 1, 2))
    dx = dx_pad[:, 1:-1, 1:-1, :] if same else dx_pad
    return dx, dw, db


# --- 2x2 max pool, stride 2 -----------------------------------------------
# Odd trailing rows/columns are dropped (floor division); ties route the
# gradient to the first maximum in window order.

def maxpool_forward(x):
    b, h, w, c = x.shape
    ho, wo = max(h // 2, 1), max(w // 2, 1)
    ph, pw = min(2, h), min(2, w)
    win = (
        x[:, : ho * ph, : wo * pw, :]
        .reshape(b, ho, ph, wo, pw, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(b, ho, wo, c, ph * pw)
    )
    idx = win.argmax(axis=4)
    out = np.take_along_axis(win, idx[..., None], axis=4)[..., 0]
    return out, (idx, x.shape)


def maxpool_backward(dout, cache):
    idx, x_shape = cache
    b, h, w, c = x_shape
    ho, wo = max(h // 2, 1), max(w // 2, 1)
    ph, pw = min(2, h), min(2, w)
    dwin = np.zeros((b, ho, wo, c, ph * pw))
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=4)
    dx = np.zeros(x_shape)
    dx[:, : ho * ph, : wo * pw, :] = (
        dwin.reshape(b, ho, wo, c, ph, pw)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(b, ho * ph, wo * pw, c)
    )
    return dx


# --- dropout (inverted scaling) ---------------------------------------------

def dropout_forward(x, rate, rng: np.random.Generator):
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout * mask


# --- dense -------------------------------------------------------------------

def dense_forward(x, w, b, relu: bool):
    z = x @ w + b
    if relu:
        mask = z > 0
        return z * mask, (x, mask)
    return z, (x, None)


def dense_backward(dout, cache, w):
    x, mask = cache
    if mask is not None:
        dout = dout * mask
    dw = x.T @ dout
    db = dout.sum(axis=0)
    dx = dout @ w.T
    return dx, dw, db


# --- softmax -------------------------------------------------------------------

def softmax_forward(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    return p, p


def softmax_backward(dout, p):
    # general Jacobian-vector product; the cross-entropy path bypasses this
    return p * (dout - (dout * p).sum(axis=1, keepdims=True))
