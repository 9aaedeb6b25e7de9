"""Model container, forward pass and backpropagation.

A CnnModel owns an ordered layer-spec list, per-layer parameter arrays
(Glorot-uniform weights, zero biases, seeded) and per-layer frozen
flags. Forward returns every layer's output so downstream analysis can
probe intermediate representations; loss_and_grad adds exact gradients
for categorical cross-entropy.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from harlab.errors import ConfigError, DataError
from harlab.nncore import layers as L
from harlab.nncore.layers import KERNEL, LayerSpec, TensorShape


@dataclass
class CnnModel:
    specs: tuple[LayerSpec, ...]
    input_shape: TensorShape
    class_labels: tuple[str, ...]
    params: list[dict]
    frozen: list[bool]
    seed: int
    shapes: list[TensorShape] = field(repr=False, default_factory=list)

    @property
    def num_classes(self) -> int:
        return len(self.class_labels)

    def copy(self) -> "CnnModel":
        return CnnModel(
            specs=self.specs,
            input_shape=self.input_shape,
            class_labels=self.class_labels,
            params=copy.deepcopy(self.params),
            frozen=list(self.frozen),
            seed=self.seed,
            shapes=list(self.shapes),
        )

    def param_count(self, layer_idx: int) -> int:
        return sum(int(p.size) for p in self.params[layer_idx].values())

    def total_params(self) -> int:
        return sum(self.param_count(i) for i in range(len(self.specs)))

    def trainable_params(self) -> int:
        return sum(
            self.param_count(i) for i in range(len(self.specs)) if not self.frozen[i]
        )

    def probe_points(self) -> dict[str, int]:
        """Named probe layers -> layer index (conv1, conv2, pool, flatten, fc1, ..., softmax).

        Dropout layers get no probe name: in eval mode their output is the
        identity of the preceding layer.
        """
        points = {}
        n_conv = 0
        n_dense = 0
        for i, spec in enumerate(self.specs):
            if spec.kind in L.CONV_KINDS:
                n_conv += 1
                points[f"conv{n_conv}"] = i
            elif spec.kind == "maxpool2x2":
                points["pool"] = i
            elif spec.kind == "flatten":
                points["flatten"] = i
            elif spec.kind == "dense":
                n_dense += 1
                points[f"fc{n_dense}"] = i
            elif spec.kind == "softmax":
                points["softmax"] = i
        return points


def _glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_layer_params(spec: LayerSpec, in_shape: TensorShape, rng) -> dict:
    """Fresh parameters for a single layer (empty dict if it has none)."""
    if spec.kind in L.CONV_KINDS:
        c_in = in_shape.dims[2]
        fan_in = KERNEL * KERNEL * c_in
        fan_out = KERNEL * KERNEL * spec.channels
        w = _glorot_uniform(rng, (KERNEL, KERNEL, c_in, spec.channels), fan_in, fan_out)
        return {"w": w, "b": np.zeros(spec.channels)}
    if spec.kind == "dense":
        n_in = in_shape.dims[0]
        w = _glorot_uniform(rng, (n_in, spec.units), n_in, spec.units)
        return {"w": w, "b": np.zeros(spec.units)}
    return {}


def build_model(specs, input_shape: TensorShape, class_labels, seed: int) -> CnnModel:
    specs = tuple(specs)
    class_labels = tuple(class_labels)
    shapes = L.shape_chain(specs, input_shape)
    if specs[-1].kind != "softmax":
        raise ConfigError("the final layer must be softmax")
    if shapes[-1].size != len(class_labels):
        raise ConfigError(
            f"output width {shapes[-1].size} != number of classes {len(class_labels)}"
        )
    rng = np.random.default_rng(seed)
    params = []
    shape = input_shape
    for spec in specs:
        params.append(init_layer_params(spec, shape, rng))
        shape = L.output_shape(spec, shape)
    return CnnModel(
        specs=specs,
        input_shape=input_shape,
        class_labels=class_labels,
        params=params,
        frozen=[False] * len(specs),
        seed=seed,
        shapes=shapes,
    )


def build_canonical_model(input_shape: TensorShape, class_labels, seed: int) -> CnnModel:
    return build_model(
        L.canonical_layers(len(class_labels)), input_shape, class_labels, seed
    )


@dataclass
class ForwardPass:
    outputs: list  # per-layer output arrays, aligned with model.specs
    caches: list
    probs: np.ndarray


def forward(model: CnnModel, batch, mode: str = "eval", rng=None) -> ForwardPass:
    """Run the network on a batch.

    mode "train" applies dropout using ``rng``; "eval" makes dropout the
    identity. Output probabilities sum to 1 per sample.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be train or eval, got {mode!r}")
    x = np.asarray(batch, dtype=np.float64)
    expected = (len(x),) + model.input_shape.dims
    if x.shape != expected:
        raise ConfigError(
            f"input layer: batch shape {x.shape} does not match model input "
            f"{model.input_shape} (expected {expected})"
        )
    train = mode == "train"
    if train and rng is None and any(s.kind == "dropout" for s in model.specs):
        raise ConfigError("training-mode forward with dropout layers requires an rng")

    outputs = []
    caches = []
    for i, spec in enumerate(model.specs):
        kind = spec.kind
        try:
            if kind in L.CONV_KINDS:
                p = model.params[i]
                x, cache = L.conv2d_forward(
                    x, p["w"], p["b"], same=(kind == "conv-same"),
                    relu=(spec.activation == "relu"),
                )
            elif kind == "maxpool2x2":
                x, cache = L.maxpool_forward(x)
            elif kind == "dropout":
                if train:
                    x, cache = L.dropout_forward(x, spec.rate, rng)
                else:
                    cache = None
            elif kind == "flatten":
                cache = x.shape
                x = x.reshape(len(x), -1)
            elif kind == "dense":
                p = model.params[i]
                x, cache = L.dense_forward(x, p["w"], p["b"], relu=(spec.activation == "relu"))
            elif kind == "softmax":
                x, cache = L.softmax_forward(x)
        except ValueError as exc:
            raise ConfigError(f"layer {i} ({kind}): {exc}") from None
        outputs.append(x)
        caches.append(cache)
    return ForwardPass(outputs=outputs, caches=caches, probs=outputs[-1])


def check_onehot(labels, num_classes: int):
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != num_classes:
        raise DataError(f"labels must be (batch, {num_classes}) one-hot, got {y.shape}")
    if not (np.all((y == 0.0) | (y == 1.0)) and np.all(y.sum(axis=1) == 1.0)):
        bad = int(np.argmax(y.sum(axis=1) != 1.0))
        raise DataError(f"label row {bad} is not one-hot")
    return y


def cross_entropy(probs, onehot) -> float:
    p = np.clip(probs, 1e-12, None)
    return float(-np.mean(np.sum(onehot * np.log(p), axis=1)))


def zero_grads_like(model: CnnModel) -> list[dict]:
    return [{k: np.zeros_like(v) for k, v in p.items()} for p in model.params]


def loss_and_grad(model: CnnModel, batch, onehot_labels, rng=None):
    """Mean cross-entropy and its gradient for every unfrozen parameter.

    Frozen layers get zero-filled gradient arrays; backpropagation stops
    below the deepest layer that still needs a gradient. Pass ``rng`` to
    activate dropout (training mode); without it dropout is the identity,
    which is what the finite-difference checks use.
    """
    mode = "train" if rng is not None else "eval"
    fp = forward(model, batch, mode=mode, rng=rng)
    y = check_onehot(onehot_labels, model.num_classes)
    if len(y) != len(fp.probs):
        raise DataError(f"{len(y)} label rows for {len(fp.probs)} samples")
    loss = cross_entropy(fp.probs, y)

    grads = zero_grads_like(model)
    unfrozen = [
        i for i, spec in enumerate(model.specs) if spec.has_params and not model.frozen[i]
    ]
    if not unfrozen:
        return loss, grads
    stop = min(unfrozen)

    n_layers = len(model.specs)
    if model.specs[-1].kind != "softmax":
        raise ConfigError("loss_and_grad expects a softmax final layer")
    # fused softmax + cross-entropy gradient at the logits
    dx = (fp.probs - y) / len(y)
    for i in range(n_layers - 2, stop - 1, -1):
        spec = model.specs[i]
        kind = spec.kind
        need_dx = i > stop
        if kind in L.CONV_KINDS:
            dx_new, dw, db = L.conv2d_backward(
                dx, fp.caches[i], model.params[i]["w"], same=(kind == "conv-same")
            )
            if not model.frozen[i]:
                grads[i]["w"] = dw
                grads[i]["b"] = db
            dx = dx_new if need_dx else None
        elif kind == "maxpool2x2":
            dx = L.maxpool_backward(dx, fp.caches[i])
        elif kind == "dropout":
            if fp.caches[i] is not None:
                dx = L.dropout_backward(dx, fp.caches[i])
        elif kind == "flatten":
            dx = dx.reshape(fp.caches[i])
        elif kind == "dense":
            dx_new, dw, db = L.dense_backward(dx, fp.caches[i], model.params[i]["w"])
            if not model.frozen[i]:
                grads[i]["w"] = dw
                grads[i]["b"] = db
            dx = dx_new if need_dx else None
    return loss, grads
