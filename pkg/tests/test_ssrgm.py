import numpy as np
import pytest
import torch
import torch.nn as nn

from efgn.core import ModelConfig
from efgn.ssrgm import SEGB, SSRGM, SSRGM3d, SSRGM3dBlock, WPGB
from conftest import grad_check, kink_free
from test_blocks import footprint

MICRO = ModelConfig(n_feats=8, strip_kernel=5, feats_3d=4)


def identity_strip_(conv):
    with torch.no_grad():
        w = conv.weight
        w.zero_()
        centre = tuple(k // 2 for k in w.shape[2:])
        w[(slice(None), 0) + centre] = 1.0
        conv.bias.zero_()


def zero_(module):
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()


class TestWPGB:
    def test_identity_strips_give_square(self, double_torch):
        m = WPGB(8, 5)
        identity_strip_(m.vertical.conv)
        identity_strip_(m.horizontal.conv)
        x = torch.randn(2, 8, 6, 6)
        assert torch.allclose(m(x), m.partial(x * x), atol=1e-14)
        assert torch.equal(m(x)[:, 2:], (x * x)[:, 2:])

    def test_zero_input(self):
        m = WPGB(8, 5)
        x = torch.zeros(1, 8, 6, 6)
        for conv in (m.vertical.conv, m.horizontal.conv, m.partial.conv):
            nn.init.zeros_(conv.bias)
        assert torch.equal(m(x), torch.zeros_like(x))
        nn.init.constant_(m.partial.conv.bias, 0.3)
        y = m(x)
        assert torch.allclose(y[:, :2], torch.full((1, 2, 6, 6), 0.3))
        assert torch.equal(y[:, 2:], torch.zeros(1, 6, 6, 6))

    def test_receptive_field(self, double_torch):
        torch.manual_seed(0)
        m = WPGB(4, 15)
        rows, cols = footprint(m, (1, 4, 41, 41), (20, 20))
        assert rows >= 15 and cols >= 15
        plain = nn.Conv2d(4, 4, 3, padding=1)
        assert footprint(plain, (1, 4, 41, 41), (20, 20)) == (3, 3)


class TestSEGB:
    def test_identity_branches(self, double_torch):
        m = SEGB(8, 5, reduction=4)
        identity_strip_(m.vertical.conv)
        with torch.no_grad():
            m.pointwise.weight.copy_(torch.eye(8).view(8, 8, 1, 1))
            m.pointwise.bias.zero_()
        x = torch.randn(2, 8, 6, 6)
        assert torch.allclose(m(x), m.attention(x * x), atol=1e-14)

    def test_constant_channels_closed_form(self, double_torch):
        torch.manual_seed(1)
        m = SEGB(8, 5, reduction=4)
        identity_strip_(m.vertical.conv)
        with torch.no_grad():
            m.pointwise.weight.copy_(torch.eye(8).view(8, 8, 1, 1))
            m.pointwise.bias.zero_()
        v = np.linspace(-1, 1.5, 8)
        x = torch.from_numpy(v).view(1, 8, 1, 1).expand(1, 8, 6, 6)
        # hand evaluation of the bottleneck on the squeeze vector v**2
        w1, b1 = m.attention.down.weight.detach().numpy(), m.attention.down.bias.detach().numpy()
        w2, b2 = m.attention.up.weight.detach().numpy(), m.attention.up.bias.detach().numpy()
        hidden = w1 @ v**2 + b1
        hidden = np.where(hidden > 0, hidden, 0.2 * hidden)
        weights = 1 / (1 + np.exp(-(w2 @ hidden + b2)))
        out = m(x).detach().numpy()[0]
        np.testing.assert_allclose(out, (weights * v**2)[:, None, None] * np.ones((8, 6, 6)), atol=1e-12)

    def test_zero_input(self):
        m = SEGB(8, 5)
        for p in (m.vertical.conv.bias, m.pointwise.bias):
            nn.init.zeros_(p)
        x = torch.zeros(1, 8, 6, 6)
        assert torch.equal(m(x), x)


class TestSSRGM:
    def test_zero_inner_weights_identity(self):
        m = SSRGM(MICRO, 1)
        zero_(m)
        x = torch.randn(2, 8, 6, 6)
        assert torch.equal(m(x), x)

    def test_two_blocks_compose(self):
        m = SSRGM(MICRO, 2)
        x = torch.randn(1, 8, 6, 6)
        assert torch.equal(m(x), m[1](m[0](x)))
        assert m[0].wpgb.vertical.conv.weight.data_ptr() != m[1].wpgb.vertical.conv.weight.data_ptr()

    def test_default_shape(self):
        assert SSRGM(ModelConfig())(torch.zeros(2, 64, 5, 7)).shape == (2, 64, 5, 7)


class TestSSRGM3d:
    def test_identity_lift_and_squeeze(self):
        m = SSRGM3d(MICRO, 2)
        zero_(m.body)
        with torch.no_grad():
            for conv in (m.lift, m.squeeze):
                conv.weight.zero_()
                conv.bias.zero_()
                conv.weight[0, 0, 1, 1, 1] = 1.0
        x = torch.randn(2, 8, 6, 6)
        assert torch.equal(m(x), x)

    def test_zero_blocks_is_fixed_linear_map(self, double_torch):
        m = SSRGM3d(MICRO, 1)
        zero_(m.body)
        x, y = torch.randn(1, 8, 6, 6), torch.randn(1, 8, 6, 6)
        f = lambda t: m(t) - m(torch.zeros_like(t))
        assert torch.allclose(f(x + 2 * y), f(x) + 2 * f(y), atol=1e-12)

    def test_depth_identity_keeps_spectra(self):
        blk = SSRGM3dBlock(4, 5)
        identity_strip_(blk.depth.conv)
        v = torch.randn(1, 4, 7, 3, 3)
        assert torch.equal(blk.depth(v), v)

    def test_depth_strip_param_count(self):
        blk = SSRGM3dBlock(16, 15)
        assert sum(p.numel() for p in blk.depth.parameters()) == 16 * 15 + 16

    def test_shape(self):
        assert SSRGM3d(ModelConfig())(torch.zeros(1, 31, 8, 8)).shape == (1, 31, 8, 8)


GRAD_CASES = {
    "wpgb": lambda: WPGB(8, 5),
    "segb": lambda: SEGB(8, 5, 4),
    "ssrgm": lambda: SSRGM(MICRO, 1),
}


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_gate_block_gradients(name, double_torch):
    def build(seed):
        torch.manual_seed(seed)
        m = GRAD_CASES[name]()
        x = torch.randn(2, 8, 6, 6, requires_grad=True)
        probe = torch.randn(2, 8, 6, 6)
        return m, lambda: (m(x) * probe).sum(), [x, *m.parameters()]

    _, fn, tensors = kink_free(build)
    assert grad_check(fn, tensors, max_entries=40) < 1e-3


def test_ssrgm3d_gradients(double_torch):
    def build(seed):
        torch.manual_seed(seed)
        m = SSRGM3d(MICRO, 1)
        x = torch.randn(1, 8, 5, 5, requires_grad=True)
        probe = torch.randn(1, 8, 5, 5)
        return m, lambda: (m(x) * probe).sum(), [x, *m.parameters()]

    _, fn, tensors = kink_free(build)
    assert grad_check(fn, tensors, max_entries=30) < 1e-3
