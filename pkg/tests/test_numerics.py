import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from playforge.numerics import (
    GradientContract,
    MultiHeadAttention,
    check_gradients,
    logsumexp,
    masked_softmax_with_bias,
    sinusoidal_embedding,
    softplus,
)


def t64(values):
    return torch.as_tensor(values, dtype=torch.float64)


class TestSoftplus:
    def test_zero(self):
        assert softplus(t64(0.0)).item() == pytest.approx(math.log(2.0), abs=1e-12)

    def test_linear_asymptote(self):
        assert softplus(t64(30.0)).item() == pytest.approx(30.0, abs=1e-9)

    def test_exp_asymptote(self):
        assert softplus(t64(-30.0)).item() == pytest.approx(9.357622968840175e-14, rel=1e-6)

    def test_no_overflow(self):
        out = softplus(t64([1000.0, -1000.0]))
        assert out[0].item() == 1000.0
        assert out[1].item() == 0.0
        assert torch.isfinite(out).all()

    @given(st.floats(min_value=-50, max_value=50))
    def test_matches_reference(self, x):
        expected = math.log1p(math.exp(-abs(x))) + max(x, 0.0)
        assert softplus(t64(x)).item() == pytest.approx(expected, rel=1e-12, abs=1e-300)


class TestLogsumexp:
    def test_ln2(self):
        assert logsumexp(t64([0.0, 0.0])).item() == pytest.approx(math.log(2.0), abs=1e-12)

    def test_large_values_no_overflow(self):
        assert logsumexp(t64([1000.0, 1000.0])).item() == pytest.approx(
            1000.0 + math.log(2.0), abs=1e-9)

    def test_singleton(self):
        assert logsumexp(t64([3.25])).item() == pytest.approx(3.25, abs=1e-12)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            logsumexp(torch.zeros(0, dtype=torch.float64))

    @given(st.lists(st.floats(min_value=-100, max_value=100), min_size=1, max_size=8),
           st.floats(min_value=-1e6, max_value=1e6))
    def test_shift_invariance(self, values, shift):
        v = t64(values)
        assert logsumexp(v + shift).item() == pytest.approx(
            logsumexp(v).item() + shift, abs=1e-10 * max(1.0, abs(shift)))


class TestMaskedSoftmax:
    def test_uniform(self):
        out = masked_softmax_with_bias(torch.zeros(1, 4, dtype=torch.float64),
                                       torch.zeros(1, 4, dtype=torch.float64),
                                       torch.ones(1, 4, dtype=torch.bool))
        assert torch.allclose(out, torch.full((1, 4), 0.25, dtype=torch.float64))

    def test_bias_ln2(self):
        bias = t64([[math.log(2.0), 0.0]])
        out = masked_softmax_with_bias(torch.zeros(1, 2, dtype=torch.float64), bias,
                                       torch.ones(1, 2, dtype=torch.bool))
        assert out[0, 0].item() == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert out[0, 1].item() == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_single_survivor(self):
        out = masked_softmax_with_bias(t64([[0.3, -0.7]]), t64([[5.0, -2.0]]),
                                       torch.tensor([[True, False]]))
        assert out[0, 0].item() == 1.0
        assert out[0, 1].item() == 0.0

    def test_all_masked_errors(self):
        with pytest.raises(ValueError, match="all keys masked"):
            masked_softmax_with_bias(torch.zeros(1, 3, dtype=torch.float64), None,
                                     torch.zeros(1, 3, dtype=torch.bool))

    def test_bias_shape_mismatch(self):
        with pytest.raises(ValueError):
            masked_softmax_with_bias(torch.zeros(2, 3, dtype=torch.float64),
                                     torch.zeros(2, 4, dtype=torch.float64),
                                     torch.ones(2, 3, dtype=torch.bool))

    @given(st.integers(min_value=0, max_value=2 ** 12 - 1))
    @settings(max_examples=40)
    def test_rows_sum_to_one_and_masked_exactly_zero(self, seed):
        gen = torch.Generator().manual_seed(seed)
        logits = torch.randn(3, 4, generator=gen, dtype=torch.float64) * 5
        bias = torch.randn(3, 4, generator=gen, dtype=torch.float64)
        mask = torch.rand(3, 4, generator=gen) > 0.4
        mask[:, 0] = True
        out = masked_softmax_with_bias(logits, bias, mask)
        assert torch.allclose(out.sum(-1), torch.ones(3, dtype=torch.float64), atol=1e-10)
        assert (out[~mask.expand_as(out)] == 0.0).all()


class TestMultiHeadAttention:
    def _identity_attention(self, dim):
        mha = MultiHeadAttention(dim, 1)
        with torch.no_grad():
            eye = torch.eye(dim, dtype=torch.float64)
            for layer in (mha.w_q, mha.w_k, mha.w_v, mha.w_o):
                layer.weight.copy_(eye)
                layer.bias.zero_()
        return mha

    def test_hard_selection_returns_value(self):
        dim, n = 4, 5
        mha = self._identity_attention(dim)
        gen = torch.Generator().manual_seed(0)
        x = torch.randn(n, dim, generator=gen, dtype=torch.float64)
        bias = torch.full((1, n, n), -1e9, dtype=torch.float64)
        bias[:, :, 2] = 0.0
        out = mha(x, x, x, head_bias=bias)
        assert torch.allclose(out, x[2].expand(n, dim), atol=1e-12)

    def test_identical_values_passthrough(self):
        dim, n = 8, 6
        mha = MultiHeadAttention(dim, 2)
        mha.init_params(torch.Generator().manual_seed(1))
        gen = torch.Generator().manual_seed(2)
        q = torch.randn(n, dim, generator=gen, dtype=torch.float64)
        v_single = torch.randn(1, dim, generator=gen, dtype=torch.float64)
        values = v_single.expand(n, dim)
        bias = torch.randn(2, n, n, generator=gen, dtype=torch.float64)
        out = mha(q, q, values, head_bias=bias)
        # every attention row is a convex combination of identical values
        expected = mha.w_o(mha._split_heads(mha.w_v(values)).transpose(-3, -2).flatten(-2))
        assert torch.allclose(out, expected, atol=1e-12)

    def test_output_shape_paper_config(self):
        mha = MultiHeadAttention(128, 4)
        mha.init_params(torch.Generator().manual_seed(3))
        x = torch.randn(11, 128, dtype=torch.float64)
        assert mha(x, x, x).shape == (11, 128)

    def test_zero_bias_bit_identical_to_none(self):
        mha = MultiHeadAttention(8, 2)
        mha.init_params(torch.Generator().manual_seed(4))
        x = torch.randn(5, 8, dtype=torch.float64)
        none_path = mha(x, x, x, head_bias=None)
        zero_path = mha(x, x, x, head_bias=torch.zeros(2, 5, 5, dtype=torch.float64))
        assert torch.equal(none_path, zero_path)

    def test_dim_mismatch_errors(self):
        mha = MultiHeadAttention(8, 2)
        with pytest.raises(ValueError):
            mha(torch.randn(5, 6, dtype=torch.float64),
                torch.randn(5, 8, dtype=torch.float64),
                torch.randn(5, 8, dtype=torch.float64))

    def test_indivisible_heads_error(self):
        with pytest.raises(ValueError):
            MultiHeadAttention(6, 4)


class TestSinusoidalEmbedding:
    def test_t_zero(self):
        emb = sinusoidal_embedding(0, 16)
        assert torch.equal(emb[0::2], torch.zeros(8, dtype=torch.float64))
        assert torch.equal(emb[1::2], torch.ones(8, dtype=torch.float64))

    def test_dim4_t0(self):
        assert torch.equal(sinusoidal_embedding(0, 4), t64([0.0, 1.0, 0.0, 1.0]))

    def test_adjacent_frames_distinct(self):
        e1 = sinusoidal_embedding(1, 32)
        e2 = sinusoidal_embedding(2, 32)
        assert torch.linalg.norm(e1 - e2).item() > 0

    def test_odd_dim_errors(self):
        with pytest.raises(ValueError):
            sinusoidal_embedding(1, 5)

    def test_frequency_convention(self):
        emb = sinusoidal_embedding(3, 8)
        for i in range(4):
            freq = 10000.0 ** (-2.0 * i / 8)
            assert emb[2 * i].item() == pytest.approx(math.sin(3 * freq), abs=1e-12)
            assert emb[2 * i + 1].item() == pytest.approx(math.cos(3 * freq), abs=1e-12)


class TestCheckGradients:
    def test_square(self):
        report = check_gradients(GradientContract(
            function=lambda p: (p["x"] ** 2).sum(),
            params={"x": t64([3.0])},
        ))
        assert report.passed and report.max_rel_error < 1e-6

    def test_softplus_gradient_at_zero(self):
        x = t64([0.0]).requires_grad_(True)
        softplus(x).sum().backward()
        assert x.grad.item() == pytest.approx(0.5, abs=1e-12)
        report = check_gradients(GradientContract(
            function=lambda p: softplus(p["x"]).sum(), params={"x": t64([0.0])}))
        assert report.passed

    def test_logsumexp_gradient_is_softmax(self):
        v = t64([0.2, -1.0, 3.0]).requires_grad_(True)
        logsumexp(v).backward()
        assert torch.allclose(v.grad, torch.softmax(v.detach(), dim=-1), atol=1e-12)

    def test_nonfinite_value_errors(self):
        with pytest.raises(FloatingPointError):
            check_gradients(GradientContract(
                function=lambda p: (p["x"] / 0.0).sum(), params={"x": t64([1.0])}))

    def test_detects_wrong_gradient(self):
        class Bad(torch.autograd.Function):
            @staticmethod
            def forward(ctx, x):
                return x * x

            @staticmethod
            def backward(ctx, g):
                return g * 3.0

        report = check_gradients(GradientContract(
            function=lambda p: Bad.apply(p["x"]).sum(), params={"x": t64([2.0])}))
        assert not report.passed


@pytest.mark.parametrize("seed", range(20))
def test_primitive_ops_pass_fd_on_random_inputs(seed):
    gen = torch.Generator().manual_seed(seed)

    def rand(*shape):
        return torch.randn(*shape, generator=gen, dtype=torch.float64)

    probe = rand(4)
    mask = torch.tensor([True, True, False, True])
    mha = MultiHeadAttention(4, 2)
    mha.init_params(gen)
    mha_inputs = rand(3, 4)

    contracts = {
        "softplus": GradientContract(
            function=lambda p: softplus(p["x"]).sum(), params={"x": rand(5)}),
        "logsumexp": GradientContract(
            function=lambda p: logsumexp(p["x"]), params={"x": rand(6)}),
        "masked_softmax": GradientContract(
            function=lambda p: (masked_softmax_with_bias(p["logits"], p["bias"], mask)
                                * probe).sum(),
            params={"logits": rand(2, 4), "bias": rand(2, 4)}),
        "attention": GradientContract(
            function=lambda p: (mha(p["x"], p["x"], p["x"], head_bias=p["bias"]) ** 2).sum(),
            params={"x": mha_inputs, "bias": rand(2, 3, 3)}),
    }
    for name, contract in contracts.items():
        report = check_gradients(contract)
        assert report.passed, f"{name}: max rel error {report.max_rel_error}"
