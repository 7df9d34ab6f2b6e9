import numpy as np
import pytest
import torch
import torch.nn as nn
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st

from efgn.blocks import (
    ChannelAttention,
    DilatedStack,
    Gate,
    PartialConv,
    StripConv,
    StripConv3d,
    Upsampler,
    channel_shuffle,
    channel_unshuffle,
    gate,
    pixel_shuffle,
    shuffle_permutation,
)
from conftest import grad_check, kink_free


def labelled(c, h=2, w=2):
    return torch.arange(c, dtype=torch.float64).view(1, c, 1, 1).expand(1, c, h, w).clone()


def footprint(module, shape, at):
    """Rows and columns of input pixels with nonzero gradient for one output pixel."""
    x = torch.randn(*shape, dtype=torch.float64, requires_grad=True)
    y = module(x)
    y[(0, 0) + at].backward()
    mask = x.grad.abs().sum(dim=(0, 1)) > 0
    rows = torch.nonzero(mask.any(dim=1)).flatten()
    cols = torch.nonzero(mask.any(dim=0)).flatten()
    return int(rows.max() - rows.min() + 1), int(cols.max() - cols.min() + 1)


class TestChannelShuffle:
    def test_order(self):
        out = channel_shuffle(labelled(8), 4)
        assert out[0, :, 0, 0].tolist() == [0, 2, 4, 6, 1, 3, 5, 7]
        assert shuffle_permutation(8, 4) == [0, 2, 4, 6, 1, 3, 5, 7]

    def test_one_piece_is_identity(self):
        x = torch.randn(2, 6, 3, 3)
        assert torch.equal(channel_shuffle(x, 1), x)

    def test_four_bands_four_pieces_is_identity(self):
        assert shuffle_permutation(4, 4) == [0, 1, 2, 3]

    def test_indivisible(self):
        with pytest.raises(ValueError):
            channel_shuffle(torch.zeros(1, 6, 2, 2), 4)

    @settings(max_examples=50, deadline=None)
    @given(st.sampled_from([(8, 4), (12, 3), (12, 4), (64, 4), (6, 2), (5, 5)]), st.integers(0, 2**31))
    def test_roundtrip_and_multiset(self, cp, seed):
        c, pieces = cp
        x = torch.from_numpy(np.random.default_rng(seed).random((2, c, 3, 2)))
        y = channel_shuffle(x, pieces)
        assert torch.equal(channel_unshuffle(y, pieces), x)
        assert torch.equal(y.sort(dim=1).values, x.sort(dim=1).values)
        assert sorted(shuffle_permutation(c, pieces)) == list(range(c))


class TestDilatedStack:
    def test_single_rate_is_plain_conv(self, double_torch):
        torch.manual_seed(0)
        stack = DilatedStack(4, [1])
        conv = stack.body[0]
        x = torch.randn(1, 4, 6, 6)
        ref = F.leaky_relu(F.conv2d(x, conv.weight, conv.bias, padding=1), 0.2)
        assert torch.allclose(stack(x), ref)
        assert len([m for m in stack.modules() if isinstance(m, nn.Conv2d)]) == 1

    def test_receptive_field(self, double_torch):
        torch.manual_seed(0)
        stack = DilatedStack(2, [1, 2, 3])
        # (3-1)*(1+2+3) + 1 = 13
        assert stack.receptive_field == 13
        assert footprint(stack, (1, 2, 31, 31), (15, 15)) == (13, 13)

    def test_zero_weights_give_bias(self):
        stack = DilatedStack(3, [1, 2])
        with torch.no_grad():
            for m in stack.modules():
                if isinstance(m, nn.Conv2d):
                    m.weight.zero_()
            stack.body[-2].bias.copy_(torch.tensor([0.5, 1.0, 2.0]))
        out = stack(torch.randn(2, 3, 5, 5))
        assert torch.equal(out, torch.tensor([0.5, 1.0, 2.0]).view(1, 3, 1, 1).expand(2, 3, 5, 5))

    def test_preserves_shape(self):
        assert DilatedStack(8, [1, 2, 3])(torch.zeros(2, 8, 6, 6)).shape == (2, 8, 6, 6)


class TestStripConv:
    def test_k1_is_channel_scaling(self):
        conv = StripConv(3, 1, "horizontal")
        with torch.no_grad():
            conv.conv.weight.copy_(torch.tensor([2.0, -1.0, 0.5]).view(3, 1, 1, 1))
            conv.conv.bias.zero_()
        x = torch.randn(1, 3, 4, 4)
        assert torch.allclose(conv(x), x * torch.tensor([2.0, -1.0, 0.5]).view(1, 3, 1, 1))

    def test_horizontal_step_edge(self, double_torch):
        k, w = 15, 32
        kernel = np.linspace(-1, 1, k) ** 2 + 0.1
        conv = StripConv(1, k, "horizontal")
        with torch.no_grad():
            conv.conv.weight.copy_(torch.from_numpy(kernel).view(1, 1, 1, k))
            conv.conv.bias.zero_()
        step = np.zeros(w)
        step[w // 2 :] = 1.0
        x = torch.from_numpy(np.tile(step, (10, 1))).view(1, 1, 10, w)
        out = conv(x)[0, 0].detach().numpy()
        # hand oracle: zero-padded correlation of one row with the kernel
        padded = np.concatenate([np.zeros(k // 2), step, np.zeros(k // 2)])
        row = np.array([np.dot(padded[j : j + k], kernel) for j in range(w)])
        for r in range(10):
            np.testing.assert_allclose(out[r], row, atol=1e-12)

    def test_depthwise_param_count(self):
        conv = StripConv(64, 15, "vertical")
        assert sum(p.numel() for p in conv.parameters()) == 64 * 15 + 64

    def test_grouped_policy(self):
        conv = StripConv(8, 5, "vertical", groups=2)
        assert conv.conv.weight.shape == (8, 4, 5, 1)

    def test_even_kernel(self):
        with pytest.raises(ValueError):
            StripConv(4, 14, "vertical")

    def test_shapes(self):
        x = torch.zeros(2, 4, 7, 9)
        assert StripConv(4, 5, "vertical")(x).shape == x.shape
        assert StripConv(4, 5, "horizontal")(x).shape == x.shape


class TestGate:
    def test_ones_and_zeros(self):
        a = torch.randn(2, 3, 4, 4)
        assert torch.equal(gate(a, torch.ones_like(a)), a)
        assert torch.equal(gate(a, torch.zeros_like(a)), torch.zeros_like(a))

    def test_gradient_is_other_operand(self):
        a = torch.randn(2, 3, 4, 4, requires_grad=True)
        b = torch.randn(2, 3, 4, 4)
        gate(a, b).sum().backward()
        assert torch.equal(a.grad, b)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            Gate()(torch.zeros(1, 2, 3, 3), torch.zeros(1, 2, 3, 4))


class TestPartialConv:
    def test_full_ratio_is_plain_conv(self):
        pc = PartialConv(6, 1.0)
        x = torch.randn(1, 6, 5, 5)
        assert torch.allclose(pc(x), F.conv2d(x, pc.conv.weight, pc.conv.bias, padding=1))

    def test_passthrough_bit_identical(self):
        pc = PartialConv(64, 0.25)
        x = torch.randn(2, 64, 6, 6)
        y = pc(x)
        assert torch.equal(y[:, 16:], x[:, 16:])
        assert not torch.equal(y[:, :16], x[:, :16])

    def test_param_count(self):
        pc = PartialConv(64, 0.25)
        assert sum(p.numel() for p in pc.parameters()) == 16 * 16 * 9 + 16

    @pytest.mark.parametrize("ratio", [0.0, 1.5, 0.01])
    def test_bad_ratio(self, ratio):
        with pytest.raises(ValueError):
            PartialConv(8, ratio)


class TestChannelAttention:
    def test_scales_within_zero_and_x(self):
        ca = ChannelAttention(8, 4)
        x = torch.rand(2, 8, 5, 5) + 0.01
        y = ca(x)
        assert torch.all(y > 0) and torch.all(y < x)

    def test_constant_input_pooling(self):
        ca = ChannelAttention(4, 2)
        vals = torch.tensor([0.1, 0.5, -2.0, 3.0])
        x = vals.view(1, 4, 1, 1).expand(1, 4, 6, 6)
        pooled = x.flatten(2).mean(dim=2)
        assert torch.allclose(pooled[0], vals)
        ref = torch.sigmoid(ca.up(F.leaky_relu(ca.down(vals), 0.2)))
        assert torch.allclose(ca.weights(x)[0], ref)

    def test_spatial_permutation_invariance(self, double_torch):
        ca = ChannelAttention(8, 4)
        x = torch.randn(1, 8, 5, 5)
        perm = torch.randperm(25)
        xp = x.flatten(2)[:, :, perm].view(1, 8, 5, 5)
        assert torch.allclose(ca.weights(x), ca.weights(xp), atol=1e-14)

    def test_indivisible(self):
        with pytest.raises(ValueError):
            ChannelAttention(6, 4)


class TestUpsample:
    def test_depth_to_space_order(self):
        x = torch.arange(4.0).view(1, 4, 1, 1)
        out = pixel_shuffle(x, 2)
        assert out.shape == (1, 1, 2, 2)
        assert out[0, 0].tolist() == [[0.0, 1.0], [2.0, 3.0]]

    def test_matches_torch_pixel_shuffle(self):
        x = torch.randn(2, 12, 3, 5)
        assert torch.equal(pixel_shuffle(x, 2), F.pixel_shuffle(x, 2))

    def test_shapes(self):
        assert Upsampler(64, 4)(torch.zeros(1, 64, 16, 16)).shape == (1, 64, 64, 64)
        assert Upsampler(8, 2)(torch.zeros(2, 8, 5, 3)).shape == (2, 8, 10, 6)

    def test_identity_conv_constant_input(self):
        up = Upsampler(3, 4)
        with torch.no_grad():
            for conv in [m for m in up.modules() if isinstance(m, nn.Conv2d)]:
                conv.weight.zero_()
                conv.bias.zero_()
                # output channel c*4 + i feeds sub-pixel i of channel c
                for c in range(3):
                    for i in range(4):
                        conv.weight[c * 4 + i, c, 1, 1] = 1.0
        x = torch.tensor([0.2, 0.4, 0.9]).view(1, 3, 1, 1).expand(1, 3, 5, 5)
        y = up(x)
        assert y.shape == (1, 3, 20, 20)
        assert torch.allclose(y[:, :, 1:-1, 1:-1], x[:, :, :1, :1].expand(1, 3, 18, 18))
        assert torch.allclose(y, x[:, :, :1, :1].expand(1, 3, 20, 20))

    def test_unsupported(self):
        with pytest.raises(ValueError):
            Upsampler(4, 3)


GRAD_CASES = {
    "dilated_stack": lambda: DilatedStack(8, [1, 2, 3]),
    "strip_vertical": lambda: StripConv(8, 5, "vertical"),
    "strip_horizontal": lambda: StripConv(8, 5, "horizontal"),
    "partial_conv": lambda: PartialConv(8, 0.25),
    "channel_attention": lambda: ChannelAttention(8, 4),
    "upsample": lambda: Upsampler(8, 2),
}


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_block_gradients(name, double_torch):
    def build(seed):
        torch.manual_seed(seed)
        block = GRAD_CASES[name]()
        x = torch.randn(2, 8, 6, 6, requires_grad=True)
        probe = torch.randn_like(block(x))
        return block, lambda: (block(x) * probe).sum(), [x, *block.parameters()]

    block, fn, tensors = kink_free(build)
    err = grad_check(fn, tensors, max_entries=40)
    assert err < 1e-3, f"{name}: relative error {err:.2e}"


def test_gate_and_shuffle_gradients(double_torch):
    torch.manual_seed(0)
    a = torch.randn(2, 8, 6, 6, requires_grad=True)
    b = torch.randn(2, 8, 6, 6, requires_grad=True)
    probe = torch.randn(2, 8, 6, 6)
    assert grad_check(lambda: (gate(a, b) * probe).sum(), [a, b], max_entries=40) < 1e-3
    assert grad_check(lambda: (channel_shuffle(a, 4) * probe).sum(), [a], max_entries=40) < 1e-3


def test_strip3d_kernels():
    for axis, shape in [("depth", (5, 1, 1)), ("height", (1, 5, 1)), ("width", (1, 1, 5))]:
        conv = StripConv3d(4, 5, axis)
        assert tuple(conv.conv.kernel_size) == shape
        assert conv(torch.zeros(1, 4, 6, 7, 8)).shape == (1, 4, 6, 7, 8)
