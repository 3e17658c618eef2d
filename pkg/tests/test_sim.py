"""Integer netlist simulation and stimulus vector files."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from kanele.lutir import extract
from kanele.sim import (
    exhaustive_input_codes,
    pack_codes,
    read_vec_file,
    sim_batch,
    sim_forward,
    unpack_codes,
    vec_line,
    write_vec_file,
)
from conftest import identity_net, random_net


class TestForward:
    def test_identity_hand_trace(self):
        graph = extract(identity_net())
        out = sim_forward(graph, np.array([[0], [1], [2], [3]]))
        assert_array_equal(out, [[0], [1], [2], [3]])

    def test_single_vector_shape(self):
        graph = extract(identity_net())
        out = sim_forward(graph, np.array([3]))
        assert out.shape == (1,)
        assert out[0] == 3

    def test_rejects_out_of_range_codes(self):
        graph = extract(identity_net())
        with pytest.raises(ValueError):
            sim_forward(graph, np.array([[4]]))
        with pytest.raises(ValueError):
            sim_forward(graph, np.array([[-1]]))

    def test_output_dtype_and_range(self):
        rng = np.random.default_rng(6)
        net = random_net(rng)
        graph = extract(net)
        codes = rng.integers(0, 1 << graph.layers[0].in_bits, size=(40, graph.layers[0].d_in))
        out = sim_forward(graph, codes)
        assert out.dtype == np.int64
        assert (out >= 0).all()
        assert (out < (1 << graph.layers[-1].out_bits)).all()

    def test_matches_network_on_random_nets(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            net = random_net(rng, prune_frac=0.2)
            graph = extract(net)
            codes = rng.integers(0, net.input_quant.base.n_codes, size=(100, net.dims[0]))
            want, _ = net.forward_codes(codes)
            assert_array_equal(sim_forward(graph, codes), want)

    def test_exhaustive_identity(self):
        graph = extract(identity_net())
        codes = exhaustive_input_codes(graph)
        assert codes.shape == (4, 1)
        assert_array_equal(sim_forward(graph, codes)[:, 0], [0, 1, 2, 3])

    def test_exhaustive_guard(self):
        rng = np.random.default_rng(10)
        net = random_net(rng)
        graph = extract(net)
        first = graph.layers[0]
        if first.d_in * first.in_bits > 24:
            with pytest.raises(ValueError):
                exhaustive_input_codes(graph)
        else:
            codes = exhaustive_input_codes(graph)
            assert codes.shape[0] == 1 << (first.d_in * first.in_bits)
            assert len({pack_codes(r, first.in_bits) for r in codes}) == codes.shape[0]

    def test_batch_metrics(self):
        net = identity_net()
        graph = extract(net)
        feats = np.array([[0.0], [1.0], [2.0], [3.0]])
        m = sim_batch(graph, feats, labels=np.array([0, 1, 1, 1]))
        assert m.n == 4
        assert 0.0 <= m.accuracy <= 1.0
        assert m.output_codes.shape == (4,) or m.output_codes.shape == (4, 1)


class TestVecFiles:
    def test_pack_unpack_round_trip(self):
        rng = np.random.default_rng(0)
        for bits in (1, 3, 4, 6, 11):
            row = rng.integers(0, 1 << bits, size=7)
            v = pack_codes(row, bits)
            assert_array_equal(unpack_codes(v, bits, 7), row)

    def test_neuron_zero_in_low_bits(self):
        # row [1, 2] at 4 bits packs to 0x21: neuron 0 occupies the low nibble
        assert pack_codes(np.array([1, 2]), 4) == 0x21
        assert vec_line(np.array([1, 2]), 4) == "21"

    def test_line_width_rounds_up(self):
        # 3 neurons x 5 bits = 15 bits -> 4 hex digits
        line = vec_line(np.array([0, 0, 0]), 5)
        assert line == "0000"
        line = vec_line(np.array([31, 31, 31]), 5)
        assert len(line) == 4 and line == format((31 << 10) | (31 << 5) | 31, "04x")

    def test_lowercase_hex(self):
        line = vec_line(np.array([10, 11]), 4)
        assert line == "ba"

    def test_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        codes = rng.integers(0, 64, size=(25, 3))
        path = tmp_path / "v.vec"
        write_vec_file(path, codes, 6)
        back = read_vec_file(path, 6, 3)
        assert_array_equal(back, codes)

    def test_read_reports_bad_line(self, tmp_path):
        path = tmp_path / "v.vec"
        path.write_text("0a\nzz\n")
        with pytest.raises(ValueError, match=r":2:"):
            read_vec_file(path, 4, 2)

    def test_read_skips_blank_lines(self, tmp_path):
        path = tmp_path / "v.vec"
        path.write_text("01\n\n02\n")
        back = read_vec_file(path, 4, 2)
        assert back.shape == (2, 2)
        assert_array_equal(back[0], [1, 0])
