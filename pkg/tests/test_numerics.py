import numpy as np
import pytest

from src.core.errors import NonFiniteError, ShapeError
from src.core.numerics import (
    Graph,
    OptimizerState,
    as_tensor,
    backward,
    forward,
    max_relative_error,
    numerical_gradient,
    optimizer_step,
)


def _attention_graph() -> Graph:
    graph = Graph()
    x = graph.input("x", differentiable=True)
    t = graph.input("t")
    w = graph.input("w", differentiable=True)
    b = graph.input("b", differentiable=True)
    k = graph.input("k", differentiable=True)
    target = graph.input("target")
    h = graph.relu(graph.add(graph.matmul(graph.concat(x, graph.sinusoidal(t, 4)), w), b, "row"))
    scores = graph.scale(graph.matmul(graph.layernorm(h), k, transpose_b=True), 0.5)
    out = graph.matmul(graph.softmax(scores), k)
    gated = graph.mul(out, t, "col")
    graph.set_output(graph.mse(graph.sub(out, gated), target))
    return graph


def _inputs(seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    return {
        "x": rng.normal(size=(3, 4)),
        "t": rng.uniform(0.1, 0.9, size=3),
        "w": rng.normal(size=(8, 5)),
        "b": rng.normal(size=5),
        "k": rng.normal(size=(2, 5)),
        "target": rng.normal(size=(3, 5)),
    }


class TestBackward:
    def test_matches_central_differences(self):
        graph = _attention_graph()
        inputs = _inputs()
        forward(graph, inputs)
        grads = backward(graph)
        assert set(grads) == {"b", "k", "w", "x"}
        for name in grads:
            numeric = numerical_gradient(lambda: float(graph.forward(inputs)), inputs[name])
            assert max_relative_error(grads[name], numeric) < 1e-4, name

    def test_shared_leaf_accumulates(self):
        graph = Graph()
        a = graph.input("a", differentiable=True)
        graph.set_output(graph.mse(graph.add(a, a), graph.input("zero")))
        value = np.array([[1.0, -2.0]])
        graph.forward({"a": value, "zero": np.zeros((1, 2))})
        # d/da ||2a||^2 = 8a
        np.testing.assert_allclose(graph.backward()["a"], 8.0 * value)

    def test_unreached_leaf_gets_zero_gradient(self):
        graph = Graph()
        a = graph.input("a", differentiable=True)
        graph.input("unused", differentiable=True)
        graph.set_output(graph.scale(a, 3.0))
        graph.forward({"a": np.ones(2), "unused": np.ones(4)})
        grads = graph.backward()
        np.testing.assert_array_equal(grads["unused"], np.zeros(4))
        np.testing.assert_array_equal(grads["a"], np.full(2, 3.0))

    def test_backward_before_forward(self):
        graph = _attention_graph()
        with pytest.raises(RuntimeError):
            graph.backward()


class TestChecks:
    def test_incompatible_shapes_name_the_operation(self):
        graph = Graph()
        graph.add(graph.input("a"), graph.input("b"))
        with pytest.raises(ShapeError, match="add"):
            graph.forward({"a": np.ones((2, 3)), "b": np.ones((3, 2))})

    def test_col_broadcast_requires_matching_rows(self):
        graph = Graph()
        graph.mul(graph.input("a"), graph.input("b"), "col")
        with pytest.raises(ShapeError):
            graph.forward({"a": np.ones((2, 3)), "b": np.ones(3)})

    @pytest.mark.parametrize("op", ["add", "sub", "mul"])
    def test_unknown_broadcast_mode_names_the_operation(self, op):
        graph = Graph()
        a, b = graph.input("a"), graph.input("b")
        with pytest.raises(ValueError, match=op):
            getattr(graph, op)(a, b, "diag")

    def test_non_finite_input_raises(self):
        graph = Graph()
        graph.relu(graph.input("a"))
        with pytest.raises(NonFiniteError):
            graph.forward({"a": np.array([1.0, np.nan])})

    def test_missing_input(self):
        graph = _attention_graph()
        inputs = _inputs()
        del inputs["k"]
        with pytest.raises(ValueError, match="k"):
            graph.forward(inputs)

    def test_as_tensor_rejects_inf(self):
        with pytest.raises(NonFiniteError):
            as_tensor([0.0, np.inf], "x")

    def test_duplicate_leaf(self):
        graph = Graph()
        graph.input("a")
        with pytest.raises(ValueError):
            graph.input("a")


class TestAdamW:
    def test_first_step_moves_by_learning_rate(self):
        params = {"p": np.array([1.0, -1.0, 0.5])}
        grads = {"p": np.array([0.3, -2.0, 1e-3])}
        state = OptimizerState(lr=0.01)
        optimizer_step(params, grads, state)
        # После коррекции смещения первый шаг равен lr * g / (|g| + eps)
        np.testing.assert_allclose(params["p"], [0.99, -0.99, 0.49], atol=1e-6)
        assert state.step == 1

    def test_weight_decay_is_decoupled(self):
        params = {"p": np.array([2.0])}
        state = OptimizerState(lr=0.1, weight_decay=0.5)
        optimizer_step(params, {"p": np.array([0.0])}, state)
        np.testing.assert_allclose(params["p"], [2.0 - 0.1 * 0.5 * 2.0])

    def test_gradient_shape_mismatch(self):
        with pytest.raises(ShapeError):
            optimizer_step({"p": np.zeros(3)}, {"p": np.zeros(2)}, OptimizerState())

    def test_missing_gradient(self):
        with pytest.raises(KeyError):
            optimizer_step({"p": np.zeros(3)}, {}, OptimizerState())

    def test_non_finite_gradient_is_not_clipped(self):
        with pytest.raises(NonFiniteError):
            optimizer_step({"p": np.zeros(2)}, {"p": np.array([np.nan, 1.0])}, OptimizerState())

    def test_minimises_quadratic(self):
        params = {"p": np.array([3.0, -4.0])}
        state = OptimizerState(lr=0.05)
        for _ in range(500):
            optimizer_step(params, {"p": 2.0 * params["p"]}, state)
        assert np.all(np.abs(params["p"]) < 0.1)
