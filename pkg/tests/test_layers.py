import numpy as np
import pytest

from _gradcheck import check_gradients
from mtctc import layers as L
from mtctc.tensor import Tensor, sum_


def test_linear_matches_manual(rng):
    lin = L.Linear(rng, 4, 3)
    x = rng.normal(size=(5, 4))
    out = lin(Tensor(x))
    expected = x @ lin.weight.data.T + lin.bias.data
    assert np.allclose(out.data, expected, atol=1e-15)


def test_linear_gradients(rng):
    lin = L.Linear(rng, 3, 2)
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    coef = Tensor(rng.normal(size=(4, 2)))
    check_gradients(lambda: sum_(lin(x) * coef), [lin.weight, lin.bias, x])


def test_embedding_rows(rng):
    emb = L.Embedding(rng, 7, 5)
    out = emb([2, 2, 6])
    assert out.shape == (3, 5)
    assert np.array_equal(out.data[0], emb.weight.data[2])
    check_gradients(lambda: sum_(emb([2, 2, 6])), [emb.weight])


def test_sinusoidal_positions_values():
    table = L.sinusoidal_positions(4, 6).data
    assert table.shape == (4, 6)
    assert np.allclose(table[0, 0::2], 0.0)
    assert np.allclose(table[0, 1::2], 1.0)
    assert abs(table[1, 0] - np.sin(1.0)) < 1e-15
    with pytest.raises(ValueError):
        L.sinusoidal_positions(4, 5)


class TestLstm:
    def test_output_shape_and_determinism(self, rng):
        stack = L.LstmStack(rng, input_size=3, hidden_size=5, num_layers=2)
        x = rng.normal(size=(7, 3))
        a = stack(Tensor(x)).data
        b = stack(Tensor(x)).data
        assert a.shape == (7, 5)
        assert a.tobytes() == b.tobytes()

    def test_two_layers_compose(self, rng):
        stack = L.LstmStack(rng, input_size=3, hidden_size=4, num_layers=2)
        x = Tensor(rng.normal(size=(6, 3)))
        full = stack(x).data

        one = L.LstmStack(rng, input_size=3, hidden_size=4, num_layers=1)
        one.forward_weights = [stack.forward_weights[0]]
        two = L.LstmStack(rng, input_size=4, hidden_size=4, num_layers=1)
        two.forward_weights = [stack.forward_weights[1]]
        assert np.array_equal(two(one(x)).data, full)

    def test_gradients(self, rng):
        stack = L.LstmStack(rng, input_size=3, hidden_size=4, num_layers=2)
        x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        coef = Tensor(rng.normal(size=(4, 4)))
        params = stack.parameters() + [x]
        check_gradients(lambda: sum_(stack(x) * coef), params)

    def test_bidirectional_shape_and_gradients(self, rng):
        stack = L.LstmStack(rng, input_size=3, hidden_size=4, num_layers=1, bidirectional=True)
        x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        out = stack(x)
        assert out.shape == (4, 8)
        coef = Tensor(rng.normal(size=(4, 8)))
        check_gradients(lambda: sum_(stack(x) * coef), stack.parameters() + [x])


class TestAttention:
    def test_weight_rows_sum_to_one(self, rng):
        attn = L.MultiHeadAttention(rng, dim=8, num_heads=2)
        x = Tensor(rng.normal(size=(5, 8)))
        _, weights = attn(x, x, return_weights=True)
        assert len(weights) == 2
        for w in weights:
            assert np.allclose(w.sum(axis=1), 1.0, atol=1e-9)

    def test_causal_masking_is_exact(self, rng):
        attn = L.MultiHeadAttention(rng, dim=8, num_heads=2)
        x = rng.normal(size=(6, 8))
        out_full = attn(Tensor(x), Tensor(x), causal=True).data
        modified = x.copy()
        modified[4:] += rng.normal(size=(2, 8))
        out_mod = attn(Tensor(modified), Tensor(modified), causal=True).data
        assert np.array_equal(out_full[:4], out_mod[:4])

    def test_gradients(self, rng):
        attn = L.MultiHeadAttention(rng, dim=4, num_heads=2)
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        coef = Tensor(rng.normal(size=(3, 4)))
        check_gradients(lambda: sum_(attn(x, x) * coef), attn.parameters() + [x])


class TestEncoderBlock:
    def test_shape_preserved(self, rng):
        block = L.TransformerEncoderBlock(rng, dim=8, num_heads=2, ff_dim=16)
        x = Tensor(rng.normal(size=(5, 8)))
        assert block(x).shape == (5, 8)

    def test_permutation_equivariance_without_positions(self, rng):
        block = L.TransformerEncoderBlock(rng, dim=8, num_heads=2, ff_dim=16)
        x = rng.normal(size=(6, 8))
        perm = rng.permutation(6)
        direct = block(Tensor(x[perm])).data
        permuted = block(Tensor(x)).data[perm]
        assert np.allclose(direct, permuted, atol=1e-12)

    def test_gradients(self, rng):
        block = L.TransformerEncoderBlock(rng, dim=4, num_heads=2, ff_dim=8)
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        coef = Tensor(rng.normal(size=(3, 4)))
        check_gradients(lambda: sum_(block(x) * coef), block.parameters() + [x])


class TestDecoderBlock:
    def test_causal_prefix_invariance(self, rng):
        block = L.TransformerDecoderBlock(rng, dim=8, num_heads=2, ff_dim=16)
        memory = Tensor(rng.normal(size=(4, 8)))
        y = rng.normal(size=(6, 8))
        base = block(Tensor(y), memory).data
        changed = y.copy()
        changed[5] += 1.0
        after = block(Tensor(changed), memory).data
        assert np.array_equal(base[:5], after[:5])

    def test_gradients(self, rng):
        block = L.TransformerDecoderBlock(rng, dim=4, num_heads=2, ff_dim=8)
        y = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        memory = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
        coef = Tensor(rng.normal(size=(3, 4)))
        check_gradients(
            lambda: sum_(block(y, memory) * coef), block.parameters() + [y, memory]
        )


class TestFrameStackProjector:
    def test_length_is_ceil(self, rng):
        proj = L.FrameStackProjector(rng, stack=2, in_dim=4, out_dim=6)
        assert proj(Tensor(rng.normal(size=(5, 4)))).shape == (3, 6)
        assert proj(Tensor(rng.normal(size=(6, 4)))).shape == (3, 6)

    def test_stack_one_keeps_length(self, rng):
        proj = L.FrameStackProjector(rng, stack=1, in_dim=4, out_dim=6)
        assert proj(Tensor(rng.normal(size=(5, 4)))).shape == (5, 6)

    def test_stacking_matches_manual(self, rng):
        proj = L.FrameStackProjector(rng, stack=3, in_dim=2, out_dim=4)
        x = rng.normal(size=(4, 2))
        padded = np.vstack([x, np.zeros((2, 2))])
        stacked = padded.reshape(2, 6)
        expected = stacked @ proj.project.weight.data.T + proj.project.bias.data
        assert np.allclose(proj(Tensor(x)).data, expected, atol=1e-15)

    def test_gradients(self, rng):
        proj = L.FrameStackProjector(rng, stack=2, in_dim=3, out_dim=4)
        x = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        coef = Tensor(rng.normal(size=(3, 4)))
        check_gradients(lambda: sum_(proj(x) * coef), proj.parameters() + [x])


def test_parameter_count_is_config_pure(rng):
    dim, heads, ff = 8, 2, 16
    block = L.TransformerEncoderBlock(rng, dim=dim, num_heads=heads, ff_dim=ff)
    attn = 4 * (dim * dim + dim)
    norm = 2 * (2 * dim)
    feed = (ff * dim + ff) + (dim * ff + dim)
    assert L.count_parameters(block) == attn + norm + feed

    other = L.TransformerEncoderBlock(
        np.random.default_rng(99), dim=dim, num_heads=heads, ff_dim=ff
    )
    assert L.count_parameters(other) == L.count_parameters(block)
