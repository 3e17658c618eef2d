"""Pruning schedule, mask latching, and dead-neuron sweeps."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from kanele.kan import init_network
from kanele.prune import PruneConfig, backward_prune, edge_norms, threshold_at, update_masks
from conftest import random_net


class TestSchedule:
    def test_endpoints_exact(self):
        cfg = PruneConfig(threshold=0.02, warmup_start=40, warmup_end=120)
        assert threshold_at(0, cfg) == 0.0
        assert threshold_at(39, cfg) == 0.0
        assert abs(threshold_at(40, cfg) - 0.05 * 0.02) < 1e-15
        assert abs(threshold_at(120, cfg) - 0.02) < 1e-15
        assert threshold_at(500, cfg) == 0.02

    def test_monotone_nondecreasing(self):
        cfg = PruneConfig(threshold=1.0, warmup_start=10, warmup_end=60)
        vals = [threshold_at(t, cfg) for t in range(0, 80)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_geometric_shape(self):
        """Equal epoch steps multiply the threshold by a constant ratio."""
        cfg = PruneConfig(threshold=0.5, warmup_start=0, warmup_end=100)
        r1 = threshold_at(30, cfg) / threshold_at(20, cfg)
        r2 = threshold_at(80, cfg) / threshold_at(70, cfg)
        assert abs(r1 - r2) < 1e-12

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PruneConfig(threshold=-0.1, warmup_start=0, warmup_end=10)
        with pytest.raises(ValueError):
            PruneConfig(threshold=0.1, warmup_start=10, warmup_end=10)


class TestNorms:
    def test_spline_only(self):
        """Norms ignore the base branch entirely."""
        net = init_network([2, 2], [6, 8], 4, 2, -4.0, 4.0, seed=3)
        net.layers[0].coeffs[:] = 0.0
        net.layers[0].w_base[:] = 10.0
        norms = edge_norms(net, 0)
        assert_array_equal(norms, np.zeros((2, 2)))

    def test_scaling(self):
        net = init_network([2, 2], [6, 8], 4, 2, -4.0, 4.0, seed=3)
        n1 = edge_norms(net, 0)
        net.layers[0].coeffs *= 3.0
        n3 = edge_norms(net, 0)
        np.testing.assert_allclose(n3, 3.0 * n1, rtol=1e-12)


class TestMasks:
    def test_latched(self):
        """A cut edge stays cut even if its norm later exceeds tau."""
        net = init_network([3, 3, 2], [6, 6, 8], 4, 2, -4.0, 4.0, seed=7)
        net.layers[0].coeffs[0, 0] *= 1e-6
        update_masks(net, 0.05)
        assert not net.layers[0].mask[0, 0]
        net.layers[0].coeffs[0, 0] = 50.0
        update_masks(net, 1e-9)
        assert not net.layers[0].mask[0, 0]

    def test_backward_sweep_removes_dead_fanout(self):
        """A hidden neuron with no outgoing edges loses its incoming edges too."""
        net = init_network([3, 4, 2], [6, 6, 8], 4, 2, -4.0, 4.0, seed=1)
        # silence every edge leaving hidden neuron 2
        net.layers[1].mask[:, 2] = False
        removed = backward_prune(net)
        assert not net.layers[0].mask[2, :].any()
        assert removed[0] == 3

    def test_backward_sweep_cascades(self):
        net = init_network([2, 3, 3, 1], [6, 6, 6, 8], 4, 2, -4.0, 4.0, seed=2)
        # kill the last layer's view of neuron 0, and make neuron 0 of layer 2
        # the only consumer of neuron 1 in layer 1
        net.layers[2].mask[:, 0] = False
        net.layers[1].mask[:, 1] = False
        net.layers[1].mask[0, 1] = True
        backward_prune(net)
        # neuron 0 of the middle hidden layer is dead, so its inputs go, and
        # neuron 1 of the first hidden layer fed only that neuron
        assert not net.layers[1].mask[0, :].any()
        assert not net.layers[0].mask[1, :].any()

    def test_sweep_is_fixed_point(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            net = random_net(rng, prune_frac=0.5)
            before = [layer.mask.copy() for layer in net.layers]
            backward_prune(net)
            for m, layer in zip(before, net.layers):
                assert_array_equal(m, layer.mask)

    def test_update_invalidates_tables(self):
        net = init_network([2, 2], [4, 8], 3, 1, -2.0, 2.0, seed=0)
        t0 = net.layer_int_table(0).copy()
        net.layers[0].coeffs[0, 0] *= 1e-9
        net.layers[0].w_base[0, 0] = 0.0
        update_masks(net, 10.0)
        t1 = net.layer_int_table(0)
        assert not net.layers[0].mask.all()
        assert (t1[~net.layers[0].mask] == 0).all()
        assert t0.shape == t1.shape
