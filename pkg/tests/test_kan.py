"""Network forward semantics, gradients, and checkpoint round trips."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from kanele.kan import (
    ACTIVATIONS,
    CheckpointError,
    checkpoint_json,
    init_network,
    load_checkpoint,
    save_checkpoint,
)
from kanele.quant import requant_code
from kanele.train import loss_and_grad
from conftest import identity_net, random_net


def test_init_shapes_and_specs():
    net = init_network([2, 2, 1], [6, 5, 8], 6, 3, -8.0, 8.0, seed=0)
    assert net.dims == [2, 2, 1]
    assert net.bits == [6, 5, 8]
    assert net.layers[0].coeffs.shape == (2, 2, 9)
    assert net.layers[1].w_base.shape == (1, 2)
    assert net.layer_in_spec(0).bits == 6
    assert net.layer_in_spec(1).bits == 5
    assert all(layer.mask.all() for layer in net.layers)


def test_init_validation():
    with pytest.raises(ValueError):
        init_network([2], [6], 4, 2, -1.0, 1.0)
    with pytest.raises(ValueError):
        init_network([2, 1], [6, 5, 8], 4, 2, -1.0, 1.0)
    with pytest.raises(ValueError):
        init_network([2, 0], [6, 5], 4, 2, -1.0, 1.0)


def test_identity_net_tables_by_hand():
    net = identity_net()
    tab = net.layer_int_table(0)
    assert_array_equal(tab[0, 0], [0, 4, 8, 12])
    assert net.layers[0].out_quant.offset_int() == 0
    out, _ = net.forward_codes(np.array([[0], [1], [2], [3]]))
    assert_array_equal(out, [[0], [1], [2], [3]])


def test_table_entries_match_pointwise_edge_eval():
    """table[c] must be the snapped edge value at decode(c)."""
    rng = np.random.default_rng(11)
    for _ in range(5):
        net = random_net(rng)
        for l, layer in enumerate(net.layers):
            spec_in = net.layer_in_spec(l)
            tab = net.layer_int_table(l)
            f = ACTIVATIONS[net.base_kind][0]
            for _ in range(10):
                q = rng.integers(0, layer.d_out)
                p = rng.integers(0, layer.d_in)
                c = rng.integers(0, spec_in.n_codes)
                x = spec_in.decode(int(c))
                val = layer.scale * (
                    layer.w_base[q, p] * f(np.array([x]))[0]
                    + net.basis.eval_one(x) @ layer.coeffs[q, p]
                )
                want = layer.out_quant.entry_fixed_point(val) if layer.mask[q, p] else 0
                assert abs(int(tab[q, p, c]) - want) <= 1, (l, q, p, c)


def test_forward_codes_matches_manual_requant():
    rng = np.random.default_rng(4)
    net = random_net(rng)
    d0 = net.dims[0]
    codes = rng.integers(0, net.input_quant.base.n_codes, size=(50, d0))
    out, _ = net.forward_codes(codes)
    # manual: gather layer by layer
    cur = codes
    for l, layer in enumerate(net.layers):
        tab = net.layer_int_table(l)
        acc = np.zeros((50, layer.d_out), dtype=np.int64)
        for q in range(layer.d_out):
            for p in range(layer.d_in):
                acc[:, q] += tab[q, p, cur[:, p]]
        cur = requant_code(acc, layer.out_quant.offset_int(), layer.out_quant.guard_bits, layer.out_quant.bits)
    assert_array_equal(out, cur)


def test_single_vector_and_batch_agree():
    net = identity_net()
    single, _ = net.forward_codes(np.array([2]))
    batch, _ = net.forward_codes(np.array([[2]]))
    assert_array_equal(single, batch[0])


def test_masked_edge_is_additive():
    """Dropping an edge changes node sums exactly by that edge's table entries."""
    rng = np.random.default_rng(9)
    net = random_net(rng)
    l, layer = 0, net.layers[0]
    q = int(rng.integers(0, layer.d_out))
    p = int(np.flatnonzero(layer.mask[q])[0])
    codes = rng.integers(0, net.input_quant.base.n_codes, size=(30, layer.d_in))

    tab_with = net.layer_int_table(l)
    acc_with = np.zeros((30, layer.d_out), dtype=np.int64)
    for qq in range(layer.d_out):
        for pp in range(layer.d_in):
            acc_with[:, qq] += tab_with[qq, pp, codes[:, pp]]

    layer.mask[q, p] = False
    tab_without = net.layer_int_table(l)
    acc_without = np.zeros_like(acc_with)
    for qq in range(layer.d_out):
        for pp in range(layer.d_in):
            acc_without[:, qq] += tab_without[qq, pp, codes[:, pp]]

    diff = acc_with - acc_without
    assert_array_equal(diff[:, q], tab_with[q, p, codes[:, p]])
    other = np.delete(diff, q, axis=1)
    assert_array_equal(other, np.zeros_like(other))


def test_pruned_edges_zero_contribution_and_gradient():
    rng = np.random.default_rng(12)
    net = random_net(rng, prune_frac=0.4)
    x = rng.normal(0, 1, size=(16, net.dims[0]))
    for l, layer in enumerate(net.layers):
        tab = net.layer_int_table(l)
        assert (tab[~layer.mask] == 0).all()
    logits, _, caches = net.forward(x, want_cache=True)
    _, dlog = loss_and_grad("mse", logits, rng.normal(size=logits.shape))
    grads = net.backward(caches, dlog)
    for layer, g in zip(net.layers, grads):
        dead = ~layer.mask
        assert_array_equal(g.w_base[dead], 0.0)
        assert_array_equal(g.coeffs[dead], 0.0)


def test_soft_gradcheck_small():
    rng = np.random.default_rng(2)
    net = init_network([3, 4, 2], [12, 12, 12], 4, 2, -8.0, 8.0, seed=2)
    x = rng.normal(0, 1, size=(8, 3))
    y = rng.integers(0, 2, size=8)

    def loss():
        logits, _ = net.forward_soft(x)
        return loss_and_grad("cross_entropy", logits, y)[0]

    logits, caches = net.forward_soft(x, want_cache=True)
    _, dlog = loss_and_grad("cross_entropy", logits, y)
    grads = net.backward(caches, dlog)
    h = 1e-6
    layer = net.layers[0]
    for (i, j, k) in [(0, 0, 0), (1, 2, 3), (3, 1, 5)]:
        old = layer.coeffs[i, j, k]
        layer.coeffs[i, j, k] = old + h
        lp = loss()
        layer.coeffs[i, j, k] = old - h
        lm = loss()
        layer.coeffs[i, j, k] = old
        fd = (lp - lm) / (2 * h)
        an = grads[0].coeffs[i, j, k]
        assert abs(fd - an) <= 1e-3 * max(abs(fd), abs(an), 1e-6)


def test_checkpoint_round_trip_bitwise():
    rng = np.random.default_rng(5)
    net = random_net(rng, prune_frac=0.3)
    net.set_input_stats(rng.normal(size=net.dims[0]), rng.uniform(0.5, 2.0, net.dims[0]))
    net.meta["note"] = "round trip"
    doc = checkpoint_json(net)
    import tempfile, os

    with tempfile.TemporaryDirectory() as td:
        path = os.path.join(td, "ckpt.json")
        save_checkpoint(net, path)
        back = load_checkpoint(path)
        assert checkpoint_json(back) == doc
        codes = rng.integers(0, net.input_quant.base.n_codes, size=(20, net.dims[0]))
        a, _ = net.forward_codes(codes)
        b, _ = back.forward_codes(codes)
        assert_array_equal(a, b)


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    p.write_text('{"version": "other"}')
    with pytest.raises(CheckpointError, match=r"\$\.version"):
        load_checkpoint(p)


def test_checkpoint_rejects_shape_mismatch(tmp_path):
    import json

    net = init_network([2, 2], [4, 4], 3, 1, -2.0, 2.0, seed=0)
    save_checkpoint(net, tmp_path / "c.json")
    doc = json.loads((tmp_path / "c.json").read_text())
    doc["layers"][0]["w_base"] = [[1.0]]
    (tmp_path / "c.json").write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match=r"layers\[0\]"):
        load_checkpoint(tmp_path / "c.json")
