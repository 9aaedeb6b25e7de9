import numpy as np
import pytest

from harlab.errors import ConfigError
from harlab.nncore import (
    TensorShape,
    build_canonical_model,
    canonical_layers,
    forward,
    shape_chain,
)

# Layer dimension table for the five supported dataset configurations:
# input image, conv1, conv2, max-pool, flatten width, fc1, fc2, softmax.
DATASET_DIMS = {
    "w-HAR": ((4, 30, 1), (4, 30, 32), (2, 28, 64), (1, 14, 64), 896, 128, 8, 8),
    "UCI-HAR": ((33, 17, 1), (33, 17, 32), (31, 15, 64), (15, 7, 64), 6720, 128, 6, 6),
    "UCI-HAPT": ((33, 17, 1), (33, 17, 32), (31, 15, 64), (15, 7, 64), 6720, 128, 12, 12),
    "UniMiB": ((25, 18, 1), (25, 18, 32), (23, 16, 64), (11, 8, 64), 5632, 128, 9, 9),
    "WISDM": ((27, 15, 1), (27, 15, 32), (25, 13, 64), (12, 6, 64), 4608, 128, 6, 6),
}


def labels(n):
    return tuple(f"a{i}" for i in range(n))


@pytest.mark.parametrize("name", DATASET_DIMS)
def test_canonical_chain_matches_dimension_table(name):
    inp, conv1, conv2, pool, flat, fc1, fc2, sm = DATASET_DIMS[name]
    specs = canonical_layers(num_classes=fc2)
    shapes = shape_chain(specs, TensorShape(inp))
    # specs: conv1, conv2, pool, dropout, flatten, fc1, dropout, fc2, softmax
    assert shapes[0].dims == conv1
    assert shapes[1].dims == conv2
    assert shapes[2].dims == pool
    assert shapes[3].dims == pool  # dropout preserves shape
    assert shapes[4].dims == (flat,)
    assert shapes[5].dims == (fc1,)
    assert shapes[7].dims == (fc2,)
    assert shapes[8].dims == (sm,)


def test_forward_activations_whar_config():
    model = build_canonical_model(TensorShape((4, 30, 1)), labels(8), seed=0)
    batch = np.random.default_rng(0).normal(size=(5, 4, 30, 1))
    fp = forward(model, batch, mode="eval")
    probes = model.probe_points()
    assert fp.outputs[probes["conv1"]].shape == (5, 4, 30, 32)
    assert fp.outputs[probes["conv2"]].shape == (5, 2, 28, 64)
    assert fp.outputs[probes["pool"]].shape == (5, 1, 14, 64)
    assert fp.outputs[probes["flatten"]].shape == (5, 896)
    assert fp.outputs[probes["fc1"]].shape == (5, 128)
    assert fp.probs.shape == (5, 8)


def test_forward_activations_uci_config():
    model = build_canonical_model(TensorShape((33, 17, 1)), labels(6), seed=0)
    batch = np.zeros((2, 33, 17, 1))
    fp = forward(model, batch, mode="eval")
    probes = model.probe_points()
    assert fp.outputs[probes["conv2"]].shape == (2, 31, 15, 64)
    assert fp.outputs[probes["pool"]].shape == (2, 15, 7, 64)
    assert fp.outputs[probes["flatten"]].shape == (2, 6720)


def test_zero_input_zero_weights_uniform_probs():
    model = build_canonical_model(TensorShape((4, 30, 1)), labels(8), seed=0)
    for p in model.params:
        for arr in p.values():
            arr[:] = 0.0
    fp = forward(model, np.zeros((3, 4, 30, 1)), mode="eval")
    np.testing.assert_allclose(fp.probs, 0.125, atol=1e-12)


def test_softmax_rows_sum_to_one():
    model = build_canonical_model(TensorShape((4, 30, 1)), labels(8), seed=3)
    batch = np.random.default_rng(1).normal(size=(17, 4, 30, 1)) * 5
    fp = forward(model, batch, mode="eval")
    np.testing.assert_allclose(fp.probs.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(fp.probs >= 0) and np.all(fp.probs <= 1)


def test_shape_mismatch_names_input_layer():
    model = build_canonical_model(TensorShape((4, 30, 1)), labels(8), seed=0)
    with pytest.raises(ConfigError, match="input layer"):
        forward(model, np.zeros((2, 5, 30, 1)), mode="eval")


def test_invalid_chain_names_offending_layer():
    specs = canonical_layers(num_classes=4)
    with pytest.raises(ConfigError, match=r"layer 1 \(conv-valid\)"):
        shape_chain(specs, TensorShape((2, 2, 1)))


def test_probe_points_canonical():
    model = build_canonical_model(TensorShape((4, 30, 1)), labels(8), seed=0)
    probes = model.probe_points()
    assert set(probes) == {"conv1", "conv2", "pool", "flatten", "fc1", "fc2", "softmax"}
    assert probes["conv1"] == 0 and probes["softmax"] == 8


def test_param_counts_whar_config():
    model = build_canonical_model(TensorShape((4, 30, 1)), labels(8), seed=0)
    counts = [model.param_count(i) for i in range(9)]
    # conv1: 3*3*1*32+32, conv2: 3*3*32*64+64, fc1: 896*128+128, fc2: 128*8+8
    assert counts[0] == 320
    assert counts[1] == 18496
    assert counts[5] == 114816
    assert counts[7] == 1032
    assert model.total_params() == 134664
