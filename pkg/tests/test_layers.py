"""Layer kernels against their independent oracles.

Derived expectations come from vtriplet.reference (naive loop convolution,
per-window pool scans, central finite differences); the fast kernels share
no code with those paths.
"""

import numpy as np
import pytest

from vtriplet import ShapeError
from vtriplet import layers
from vtriplet import reference
from vtriplet.errors import ConfigError


def lattice(rng, shape):
    """Shuffled even lattice on [-1, 1]: uniform-ish values with guaranteed
    pairwise gaps, so finite differences never straddle a relu/pool kink."""
    n = int(np.prod(shape))
    vals = np.linspace(-1.0, 1.0, n + (n % 2 == 1))[:n]
    rng.shuffle(vals)
    return vals.reshape(shape)


class TestConvForward:
    def test_all_ones_kernel_sums_window(self):
        x = np.ones((1, 1, 3, 3), dtype=np.float32)
        w = np.ones((1, 1, 3, 3), dtype=np.float32)
        out = layers.conv2d_forward(x, w, np.zeros(1, dtype=np.float32), stride=1, pad=0)
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == 9.0

    def test_zero_kernel_yields_bias(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 3, 6, 5)).astype(np.float32)
        w = np.zeros((4, 3, 3, 3), dtype=np.float32)
        b = np.array([0.5, -1.0, 2.0, 0.0], dtype=np.float32)
        out = layers.conv2d_forward(x, w, b, stride=1, pad=1)
        for oc in range(4):
            assert np.all(out[:, oc] == b[oc])

    def test_matches_direct_convolution(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-1, 1, (2, 3, 8, 8)).astype(np.float32)
        w = rng.uniform(-1, 1, (4, 3, 3, 3)).astype(np.float32)
        b = rng.uniform(-1, 1, 4).astype(np.float32)
        out = layers.conv2d_forward(x, w, b, stride=2, pad=1)
        expected = reference.conv2d_direct(x, w, b, stride=2, pad=1)
        np.testing.assert_allclose(out, expected, atol=1e-5)

    @pytest.mark.parametrize("stride", [1, 2])
    @pytest.mark.parametrize("pad", [0, 1])
    def test_small_shape_sweep(self, stride, pad):
        rng = np.random.default_rng(11)
        for h in (1, 3, 5, 8):
            for w_ext in (1, 4, 8):
                for k in (1, 2, 3):
                    if h + 2 * pad < k or w_ext + 2 * pad < k:
                        continue
                    x = rng.uniform(-1, 1, (2, 2, h, w_ext)).astype(np.float32)
                    wt = rng.uniform(-1, 1, (3, 2, k, k)).astype(np.float32)
                    b = rng.uniform(-1, 1, 3).astype(np.float32)
                    out = layers.conv2d_forward(x, wt, b, stride, pad)
                    expected = reference.conv2d_direct(x, wt, b, stride, pad)
                    np.testing.assert_allclose(out, expected, atol=1e-5)

    def test_rejects_channel_mismatch(self):
        x = np.zeros((1, 2, 4, 4), dtype=np.float32)
        w = np.zeros((1, 3, 3, 3), dtype=np.float32)
        with pytest.raises(ShapeError, match="channels"):
            layers.conv2d_forward(x, w, np.zeros(1, dtype=np.float32), 1, 0)

    def test_rejects_degenerate_output(self):
        x = np.zeros((1, 1, 2, 2), dtype=np.float32)
        w = np.zeros((1, 1, 3, 3), dtype=np.float32)
        with pytest.raises(ShapeError):
            layers.conv2d_forward(x, w, None, 1, 0)


class TestConvBackward:
    def test_zero_cotangent(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1, 2, 5, 5))
        w = rng.standard_normal((3, 2, 3, 3))
        gx, gw, gb = layers.conv2d_backward(x, w, np.zeros((1, 3, 3, 3)), stride=1, pad=0)
        assert not gx.any() and not gw.any() and not gb.any()

    def test_scalar_case(self):
        x = np.full((1, 1, 1, 1), 3.0)
        w = np.full((1, 1, 1, 1), 5.0)
        gx, gw, gb = layers.conv2d_backward(x, w, np.ones((1, 1, 1, 1)), stride=1, pad=0)
        assert gx[0, 0, 0, 0] == 5.0
        assert gw[0, 0, 0, 0] == 3.0
        assert gb[0] == 1.0

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-1, 1, (2, 2, 5, 4))
        w = rng.uniform(-1, 1, (3, 2, 3, 3))
        b = rng.uniform(-1, 1, 3)
        g = rng.uniform(-1, 1, (2, 3, 3, 2))

        def scalar_of(arrays):
            return float(np.sum(layers.conv2d_forward(arrays[0], arrays[1], arrays[2], 2, 1) * g))

        gx, gw, gb = layers.conv2d_backward(x, w, g, stride=2, pad=1)
        fd_x = reference.central_difference(lambda v: scalar_of((v, w, b)), x)
        fd_w = reference.central_difference(lambda v: scalar_of((x, v, b)), w)
        fd_b = reference.central_difference(lambda v: scalar_of((x, w, v)), b)
        assert reference.relative_error(gx, fd_x).max() < 1e-3
        assert reference.relative_error(gw, fd_w).max() < 1e-3
        assert reference.relative_error(gb, fd_b).max() < 1e-3

    def test_rejects_bad_grad_shape(self):
        x = np.zeros((1, 1, 4, 4))
        w = np.zeros((1, 1, 3, 3))
        with pytest.raises(ShapeError, match="grad_out"):
            layers.conv2d_backward(x, w, np.zeros((1, 1, 4, 4)), stride=1, pad=0)


class TestRelu:
    def test_definition(self):
        x = np.array([[-1.0, 0.0, 2.0]]).reshape(1, 1, 1, 3)
        np.testing.assert_array_equal(layers.relu_forward(x).ravel(), [0.0, 0.0, 2.0])

    def test_backward_zero_at_origin(self):
        x = np.array([-1.0, 0.0, 2.0]).reshape(1, 1, 1, 3)
        g = np.full_like(x, 5.0)
        np.testing.assert_array_equal(layers.relu_backward(x, g).ravel(), [0.0, 0.0, 5.0])

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 3, 4, 4)).astype(np.float32)
        once = layers.relu_forward(x)
        np.testing.assert_array_equal(layers.relu_forward(once), once)

    def test_matches_finite_differences_off_kink(self):
        rng = np.random.default_rng(6)
        x = lattice(rng, (1, 2, 4, 4))
        g = rng.uniform(-1, 1, x.shape)
        grad = layers.relu_backward(x, g)
        fd = reference.central_difference(lambda v: float(np.sum(layers.relu_forward(v) * g)), x)
        assert reference.relative_error(grad, fd).max() < 1e-3


class TestMaxPool:
    def test_max_of_four(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        out, idx = layers.maxpool_forward(x, window=2, stride=2)
        assert out[0, 0, 0, 0] == 4.0
        assert idx[0, 0, 0, 0] == 3  # linear index of the 4.0 entry

    def test_constant_input_ties_to_first(self):
        x = np.ones((1, 2, 4, 4))
        out, idx = layers.maxpool_forward(x, window=2, stride=2)
        g = np.ones_like(out)
        grad = layers.maxpool_backward(idx, g, x.shape)
        # gradient lands on the top-left corner of every window
        expected = np.zeros_like(x)
        expected[:, :, ::2, ::2] = 1.0
        np.testing.assert_array_equal(grad, expected)

    def test_matches_window_scan(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(-1, 1, (1, 2, 6, 6)).astype(np.float32)
        out, idx = layers.maxpool_forward(x, window=3, stride=3)
        ref_out, ref_idx = reference.maxpool_direct(x, window=3, stride=3)
        np.testing.assert_array_equal(out, ref_out)
        np.testing.assert_array_equal(idx, ref_idx)

    def test_overlapping_windows_match_scan(self):
        rng = np.random.default_rng(9)
        x = rng.uniform(-1, 1, (2, 3, 7, 5)).astype(np.float32)
        out, idx = layers.maxpool_forward(x, window=3, stride=2)
        ref_out, ref_idx = reference.maxpool_direct(x, window=3, stride=2)
        np.testing.assert_array_equal(out, ref_out)
        np.testing.assert_array_equal(idx, ref_idx)

    def test_gradient_mass_conserved(self):
        rng = np.random.default_rng(10)
        x = rng.uniform(-1, 1, (2, 2, 6, 6))
        out, idx = layers.maxpool_forward(x, window=2, stride=2)
        g = rng.uniform(-1, 1, out.shape)
        grad = layers.maxpool_backward(idx, g, x.shape)
        assert np.isclose(grad.sum(), g.sum())

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        x = lattice(rng, (1, 2, 6, 6))
        out, idx = layers.maxpool_forward(x, window=2, stride=2)
        g = rng.uniform(-1, 1, out.shape)
        grad = layers.maxpool_backward(idx, g, x.shape)
        fd = reference.central_difference(
            lambda v: float(np.sum(layers.maxpool_forward(v, 2, 2)[0] * g)), x
        )
        assert reference.relative_error(grad, fd).max() < 1e-3


class TestLrn:
    def test_zero_alpha_scales_by_bias_power(self):
        rng = np.random.default_rng(13)
        x = rng.uniform(-1, 1, (1, 6, 3, 3))
        out = layers.lrn_forward(x, n=5, alpha=0.0, beta=0.75, k=2.0)
        np.testing.assert_allclose(out, x / 2.0**0.75, rtol=1e-12)

    def test_single_channel_scalar_formula(self):
        x = np.full((1, 1, 1, 1), 0.8)
        out = layers.lrn_forward(x, n=1, alpha=0.3, beta=0.75, k=2.0)
        expected = 0.8 / (2.0 + 0.3 * 0.8**2) ** 0.75
        assert np.isclose(out[0, 0, 0, 0], expected, rtol=1e-12)

    def test_boundary_windows_clip(self):
        # 3 channels, n=3: channel 0's window is {0, 1}, channel 2's is {1, 2}
        x = np.array([1.0, 2.0, 3.0]).reshape(1, 3, 1, 1)
        out = layers.lrn_forward(x, n=3, alpha=1.0, beta=1.0, k=1.0)
        a = 1.0 / 3.0
        np.testing.assert_allclose(
            out.ravel(),
            [1.0 / (1 + a * 5), 2.0 / (1 + a * 14), 3.0 / (1 + a * 13)],
            rtol=1e-12,
        )

    def test_rejects_even_neighborhood(self):
        with pytest.raises(ConfigError, match="odd"):
            layers.lrn_forward(np.zeros((1, 4, 2, 2)), n=4, alpha=1e-4, beta=0.75, k=2.0)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(14)
        x = rng.uniform(-1, 1, (2, 7, 3, 2))
        g = rng.uniform(-1, 1, x.shape)
        grad = layers.lrn_backward(x, g, n=5, alpha=0.2, beta=0.75, k=2.0)
        fd = reference.central_difference(
            lambda v: float(np.sum(layers.lrn_forward(v, 5, 0.2, 0.75, 2.0) * g)), x
        )
        assert reference.relative_error(grad, fd).max() < 1e-3


class TestFullyConnected:
    def test_identity_weights(self):
        rng = np.random.default_rng(15)
        x = rng.standard_normal((2, 2, 2, 2)).astype(np.float32)
        w = np.eye(8, dtype=np.float32)
        out = layers.fc_forward(x, w, np.zeros(8, dtype=np.float32))
        np.testing.assert_array_equal(out, x.reshape(2, 8))

    def test_zero_input_yields_bias(self):
        b = np.array([1.0, -2.0, 3.0], dtype=np.float32)
        out = layers.fc_forward(np.zeros((4, 1, 2, 3), dtype=np.float32), np.ones((3, 6), dtype=np.float32), b)
        for row in out:
            np.testing.assert_array_equal(row, b)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(16)
        x = rng.uniform(-1, 1, (3, 1, 8, 8))
        w = rng.uniform(-1, 1, (8, 64))
        b = rng.uniform(-1, 1, 8)
        g = rng.uniform(-1, 1, (3, 8))
        gx, gw, gb = layers.fc_backward(x, w, g)
        fd_x = reference.central_difference(lambda v: float(np.sum(layers.fc_forward(v, w, b) * g)), x)
        fd_w = reference.central_difference(lambda v: float(np.sum(layers.fc_forward(x, v, b) * g)), w)
        fd_b = reference.central_difference(lambda v: float(np.sum(layers.fc_forward(x, w, v) * g)), b)
        assert reference.relative_error(gx, fd_x).max() < 1e-3
        assert reference.relative_error(gw, fd_w).max() < 1e-3
        assert reference.relative_error(gb, fd_b).max() < 1e-3

    def test_rejects_length_mismatch(self):
        with pytest.raises(ShapeError, match="flattened"):
            layers.fc_forward(np.zeros((1, 2, 2, 2)), np.zeros((4, 9)), np.zeros(4))
