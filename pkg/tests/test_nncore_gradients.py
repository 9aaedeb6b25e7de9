"""Finite-difference verification of every analytic gradient.

The oracle evaluates the loss through the forward pass only (no backprop
code shared with the values under test beyond the forward graph itself)
and perturbs one parameter at a time with central differences.
"""

import numpy as np
import pytest

from harlab.nncore import (
    LayerSpec,
    TensorShape,
    build_model,
    cross_entropy,
    forward,
    loss_and_grad,
)

FD_STEP = 1e-5
REL_TOL = 1e-4


def loss_only(model, x, y, dropout_seed=None):
    rng = np.random.default_rng(dropout_seed) if dropout_seed is not None else None
    mode = "train" if rng is not None else "eval"
    fp = forward(model, x, mode=mode, rng=rng)
    return cross_entropy(fp.probs, y)


def numerical_grads(model, x, y, dropout_seed=None):
    grads = []
    for layer_params in model.params:
        layer_grads = {}
        for name, p in layer_params.items():
            g = np.zeros_like(p)
            flat_p = p.reshape(-1)
            flat_g = g.reshape(-1)
            for k in range(flat_p.size):
                orig = flat_p[k]
                flat_p[k] = orig + FD_STEP
                up = loss_only(model, x, y, dropout_seed)
                flat_p[k] = orig - FD_STEP
                down = loss_only(model, x, y, dropout_seed)
                flat_p[k] = orig
                flat_g[k] = (up - down) / (2 * FD_STEP)
            layer_grads[name] = g
        grads.append(layer_grads)
    return grads


def max_rel_error(analytic, numerical):
    worst = 0.0
    for ga_layer, gn_layer in zip(analytic, numerical):
        for name in ga_layer:
            ga, gn = ga_layer[name], gn_layer[name]
            denom = np.maximum(1e-6, np.maximum(np.abs(ga), np.abs(gn)))
            worst = max(worst, float(np.max(np.abs(ga - gn) / denom)))
    return worst


def decision_margin(model, x, dropout_seed):
    """Smallest distance of any relu preactivation from zero, and of any
    pool window's top-two gap. Central differences are only trustworthy
    when this is far above the FD step (no kink crossing)."""
    from harlab.nncore.layers import CONV_KINDS, conv2d_forward

    rng = np.random.default_rng(dropout_seed) if dropout_seed is not None else None
    mode = "train" if rng is not None else "eval"
    fp = forward(model, x, mode=mode, rng=rng)
    margins = [np.inf]
    prev = np.asarray(x, dtype=np.float64)
    for i, spec in enumerate(model.specs):
        if spec.kind in CONV_KINDS and spec.activation == "relu":
            z, _ = conv2d_forward(
                prev, model.params[i]["w"], model.params[i]["b"],
                same=(spec.kind == "conv-same"), relu=False,
            )
            margins.append(np.abs(z).min())
        elif spec.kind == "dense" and spec.activation == "relu":
            z = prev @ model.params[i]["w"] + model.params[i]["b"]
            margins.append(np.abs(z).min())
        elif spec.kind == "maxpool2x2":
            b, h, w, c = prev.shape
            ho, wo = max(h // 2, 1), max(w // 2, 1)
            ph, pw = min(2, h), min(2, w)
            win = (
                prev[:, : ho * ph, : wo * pw, :]
                .reshape(b, ho, ph, wo, pw, c)
                .transpose(0, 1, 3, 5, 2, 4)
                .reshape(b, ho, wo, c, ph * pw)
            )
            if win.shape[-1] >= 2:
                top2 = np.sort(win, axis=-1)[..., -2:]
                margins.append((top2[..., 1] - top2[..., 0]).min())
        prev = fp.outputs[i]
    return min(margins)


def tiny_model(arch_seed):
    """A small randomized architecture covering all layer kinds; retries
    variants whose relu/pool margins are too close to the FD step."""
    for attempt in range(50):
        rng = np.random.default_rng(arch_seed * 1000 + attempt)
        h = int(rng.integers(4, 7))
        w = int(rng.integers(4, 7))
        c_in = int(rng.integers(1, 3))
        n_classes = int(rng.integers(2, 5))
        dims = (h, w)
        specs = [
            LayerSpec(
                "conv-same" if rng.random() < 0.5 else "conv-valid",
                channels=int(rng.integers(1, 4)),
            ),
        ]
        if specs[0].kind == "conv-valid":
            dims = (dims[0] - 2, dims[1] - 2)
        if rng.random() < 0.5 and min(dims) >= 3:
            specs.append(LayerSpec("conv-valid", channels=int(rng.integers(1, 3))))
            dims = (dims[0] - 2, dims[1] - 2)
        if rng.random() < 0.6 and max(dims) >= 2:
            specs.append(LayerSpec("maxpool2x2"))
        use_dropout = rng.random() < 0.4
        if use_dropout:
            specs.append(LayerSpec("dropout", rate=0.25))
        specs.append(LayerSpec("flatten"))
        specs.append(LayerSpec("dense", units=int(rng.integers(3, 7)), activation="relu"))
        specs.append(LayerSpec("dense", units=n_classes, activation="linear"))
        specs.append(LayerSpec("softmax"))
        model = build_model(
            specs, TensorShape((h, w, c_in)), [f"c{i}" for i in range(n_classes)], seed=arch_seed
        )
        batch = rng.normal(size=(3, h, w, c_in))
        y = np.zeros((3, n_classes))
        y[np.arange(3), rng.integers(0, n_classes, size=3)] = 1.0
        dropout_seed = int(rng.integers(0, 2**31)) if use_dropout else None
        if decision_margin(model, batch, dropout_seed) > 100 * FD_STEP:
            return model, batch, y, dropout_seed
    raise AssertionError(f"no well-margined model found for seed {arch_seed}")


@pytest.mark.parametrize("arch_seed", range(20))
def test_gradients_match_finite_differences(arch_seed):
    model, x, y, dropout_seed = tiny_model(arch_seed)
    rng = np.random.default_rng(dropout_seed) if dropout_seed is not None else None
    _, analytic = loss_and_grad(model, x, y, rng=rng)
    numerical = numerical_grads(model, x, y, dropout_seed)
    assert max_rel_error(analytic, numerical) < REL_TOL


def test_explicit_minimal_conv_model():
    # 2x2 input, one conv channel, two classes: the smallest end-to-end case
    specs = [
        LayerSpec("conv-same", channels=1),
        LayerSpec("flatten"),
        LayerSpec("dense", units=2, activation="linear"),
        LayerSpec("softmax"),
    ]
    model = build_model(specs, TensorShape((2, 2, 1)), ("a", "b"), seed=11)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 2, 2, 1))
    y = np.zeros((4, 2))
    y[np.arange(4), rng.integers(0, 2, size=4)] = 1.0
    _, analytic = loss_and_grad(model, x, y)
    numerical = numerical_grads(model, x, y)
    assert max_rel_error(analytic, numerical) < REL_TOL


def test_frozen_layers_receive_zero_grads():
    model, x, y, _ = tiny_model(arch_seed=42)
    conv_idx = next(i for i, s in enumerate(model.specs) if s.has_params)
    model.frozen[conv_idx] = True
    _, grads = loss_and_grad(model, x, y)
    for arr in grads[conv_idx].values():
        assert not arr.any()
    last_dense = max(i for i, s in enumerate(model.specs) if s.has_params)
    assert any(arr.any() for arr in grads[last_dense].values())


def test_unfrozen_grads_unchanged_by_freezing_below():
    """Stopping backprop below the deepest frozen boundary must not alter
    the gradients that are still computed."""
    model, x, y, _ = tiny_model(arch_seed=7)
    _, full = loss_and_grad(model, x, y)
    frozen_model = model.copy()
    param_layers = [i for i, s in enumerate(model.specs) if s.has_params]
    for i in param_layers[:-1]:
        frozen_model.frozen[i] = True
    _, partial = loss_and_grad(frozen_model, x, y)
    last = param_layers[-1]
    for name in full[last]:
        np.testing.assert_array_equal(full[last][name], partial[last][name])
