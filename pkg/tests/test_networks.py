import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcp.networks import Mlp, MlpSpec, Params, branch_outputs, forward, init_params
from dcp.tensor import ShapeError, Tensor


class TestMlpSpec:
    def test_too_few_widths(self):
        with pytest.raises(ValueError):
            MlpSpec(layer_widths=(3,))

    def test_nonpositive_width(self):
        with pytest.raises(ValueError):
            MlpSpec(layer_widths=(3, 0))

    def test_bad_output_activation(self):
        with pytest.raises(ValueError):
            MlpSpec(layer_widths=(3, 2), output_activation="tanh")


class TestInitParams:
    def test_deterministic_per_seed(self):
        spec = MlpSpec(layer_widths=(4, 8, 2))
        a = init_params(spec, seed=3)
        b = init_params(spec, seed=3)
        for ta, tb in zip(a.tensors(), b.tensors()):
            assert np.array_equal(ta.values, tb.values)

    def test_biases_zero(self):
        spec = MlpSpec(layer_widths=(4, 8, 2))
        params = init_params(spec, seed=0)
        for b in params.biases:
            assert np.array_equal(b.values, np.zeros_like(b.values))

    def test_different_seeds_differ(self):
        spec = MlpSpec(layer_widths=(4, 8, 2))
        a = init_params(spec, seed=1)
        b = init_params(spec, seed=2)
        assert any(
            not np.array_equal(ta.values, tb.values)
            for ta, tb in zip(a.tensors(), b.tensors())
        )

    def test_glorot_bounds(self):
        spec = MlpSpec(layer_widths=(10, 6))
        params = init_params(spec, seed=0)
        bound = np.sqrt(6.0 / 16.0)
        assert np.abs(params.weights[0].values).max() <= bound


class TestForward:
    def test_identity_network(self):
        spec = MlpSpec(layer_widths=(2, 2))
        params = Params(
            weights=[Tensor(np.eye(2), requires_grad=True)],
            biases=[Tensor(np.zeros((2, 1)), requires_grad=True)],
        )
        x = np.random.default_rng(0).normal(size=(5, 2))
        out = forward(params, spec, Tensor(x))
        np.testing.assert_allclose(out.values, x, atol=0)

    def test_relu_kills_negative_preactivations(self):
        spec = MlpSpec(layer_widths=(2, 3, 2))
        params = init_params(spec, seed=0)
        params.biases[0] = Tensor(np.full((3, 1), -100.0), requires_grad=True)
        out = forward(params, spec, Tensor([[0.1, -0.2]]))
        # hidden layer is all zeros, so the output is exactly the final bias
        np.testing.assert_array_equal(out.values, params.biases[1].values.T)

    def test_batch_decomposable(self):
        spec = MlpSpec(layer_widths=(3, 5, 2), output_activation="sigmoid")
        mlp = Mlp.create(spec, seed=4)
        x = np.random.default_rng(1).normal(size=(2, 3))
        batched = mlp(Tensor(x)).values
        rows = np.vstack([mlp(Tensor(x[i : i + 1])).values for i in range(2)])
        assert np.abs(batched - rows).max() <= 1e-12

    def test_shape_mismatch(self):
        spec = MlpSpec(layer_widths=(3, 2))
        with pytest.raises(ShapeError):
            forward(init_params(spec, 0), spec, Tensor(np.ones((4, 5))))


class TestBranchOutputs:
    def _branch(self, seed=0):
        extractor = Mlp.create(MlpSpec(layer_widths=(2, 4, 4)), seed=seed)
        head = Mlp.create(MlpSpec(layer_widths=(4, 3)), seed=seed + 1)
        return extractor, head

    def test_hand_softmax_confidence(self):
        extractor = Mlp(
            spec=MlpSpec(layer_widths=(2, 2)),
            params=Params(
                weights=[Tensor(np.eye(2), requires_grad=True)],
                biases=[Tensor(np.zeros((2, 1)), requires_grad=True)],
            ),
        )
        head = Mlp(
            spec=MlpSpec(layer_widths=(2, 2)),
            params=Params(
                weights=[Tensor(np.eye(2), requires_grad=True)],
                biases=[Tensor(np.zeros((2, 1)), requires_grad=True)],
            ),
        )
        out = branch_outputs(extractor, head, Tensor([[2.0, 1.0]]))
        assert out.predicted_labels[0] == 0
        assert abs(out.confidence[0] - 0.73105857863000488) < 1e-12

    def test_tie_breaks_to_lowest_index(self):
        extractor = Mlp(
            spec=MlpSpec(layer_widths=(2, 2)),
            params=Params(
                weights=[Tensor(np.eye(2), requires_grad=True)],
                biases=[Tensor(np.zeros((2, 1)), requires_grad=True)],
            ),
        )
        out = branch_outputs(extractor, extractor, Tensor([[1.0, 1.0]]))
        assert out.predicted_labels[0] == 0

    def test_confidence_in_unit_interval(self):
        extractor, head = self._branch()
        x = np.random.default_rng(2).normal(size=(20, 2))
        out = branch_outputs(extractor, head, Tensor(x))
        assert (out.confidence > 0).all() and (out.confidence <= 1).all()

    @settings(max_examples=50, deadline=None)
    @given(
        shift=st.floats(min_value=-30, max_value=30, allow_nan=False),
        seed=st.integers(min_value=0, max_value=100),
    )
    def test_argmax_invariant_under_per_row_logit_shift(self, shift, seed):
        logits = np.random.default_rng(seed).normal(size=(6, 4))
        from dcp.networks import softmax_rows

        base = softmax_rows(logits).argmax(axis=1)
        shifted = softmax_rows(logits + shift).argmax(axis=1)
        assert np.array_equal(base, shifted)
