"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/core/numerics.py

Numerics: Тензоры, обратное дифференцирование и AdamW
=====================================================

Минимальный вычислительный движок на numpy. Граф описывается символически
(список узлов в топологическом порядке), затем многократно вычисляется на
разных входах: один и тот же граф скорости используется для предобучения
бэкбона и для обучения промптов.

Основные возможности:
- Тензор = numpy.ndarray float64; после каждой операции проверяется конечность значений.
- Фиксированный набор операций: add, sub, scale, mul, matmul, relu, softmax (по строкам),
  mse, concat, sinusoidal (не дифференцируется по t), layernorm.
- Ограниченный броадкаст: второй операнд может быть строкой (bias) или столбцом
  (скаляр на строку). Общего броадкаста нет.
- Обратный проход посещает узлы в обратном топологическом порядке ровно один раз
  и возвращает градиенты для всех листьев, помеченных как дифференцируемые.
- AdamW с коррекцией смещения и развязанным weight decay (по умолчанию 0).

Классы:
- Node: запись узла графа (тип операции, входы, атрибуты).
- Graph: построение, прямой и обратный проход.
- OptimizerState: моменты AdamW и гиперпараметры.

Функции:
- as_tensor(value, name) -> Tensor
- forward(graph, inputs) -> Tensor
- backward(graph, output_gradient) -> dict[str, Tensor]
- optimizer_step(params, grads, state) -> tuple[dict, OptimizerState]
- numerical_gradient(fn, param, h) -> Tensor
- max_relative_error(analytic, numeric, floor) -> float

Связи с другими модулями:
- src.services.backbone, src.services.prompts, src.services.training:
    строят свои подграфы через методы Graph.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

import numpy as np
from numpy.typing import NDArray

from src.core.errors import NonFiniteError, ShapeError

Tensor = NDArray[np.float64]

# --- 1. ТЕНЗОРЫ ---


def as_tensor(value: Any, name: str = "tensor") -> Tensor:
    """Приводит значение к float64 и проверяет, что все элементы конечны."""
    array = np.asarray(value, dtype=np.float64)
    if array.size and not np.all(np.isfinite(array)):
        raise NonFiniteError(f"{name}: обнаружены NaN/Inf (форма {array.shape})")
    return array


def _check_finite(op: str, array: Tensor) -> None:
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(f"Операция '{op}' вернула NaN/Inf (форма {array.shape})")


# --- 2. ПРАВИЛА БРОАДКАСТА ---

# None - формы совпадают; "row" - b имеет форму (a.shape[-1],); "col" - b имеет форму (a.shape[0],)
_BROADCAST_MODES = (None, "row", "col")


def _check_broadcast(op: str, mode: Optional[str]) -> None:
    if mode not in _BROADCAST_MODES:
        raise ValueError(f"{op}: неизвестный режим broadcast {mode!r}, допустимы None, 'row', 'col'")


def _check_pair(op: str, a: Tensor, b: Tensor, mode: Optional[str]) -> None:
    if mode is None:
        ok = a.shape == b.shape
    elif mode == "row":
        ok = a.ndim >= 1 and b.ndim == 1 and b.shape[0] == a.shape[-1]
    else:
        ok = a.ndim == 2 and b.ndim == 1 and b.shape[0] == a.shape[0]
    if not ok:
        raise ShapeError(f"{op}: несовместимые формы {a.shape} и {b.shape} (broadcast={mode})")


def _expand(b: Tensor, mode: Optional[str]) -> Tensor:
    return b[:, None] if mode == "col" else b


def _reduce(grad: Tensor, mode: Optional[str]) -> Tensor:
    if mode is None:
        return grad
    if mode == "row":
        return grad.reshape(-1, grad.shape[-1]).sum(axis=0)
    return grad.sum(axis=1)


# --- 3. ПРЯМЫЕ И ОБРАТНЫЕ ПРАВИЛА ОПЕРАЦИЙ ---
# forward: (входы, атрибуты) -> выход
# backward: (градиент выхода, входы, выход, атрибуты) -> градиенты входов (None - не дифференцируется)


def _add_fwd(x, attrs):
    _check_pair("add", x[0], x[1], attrs["broadcast"])
    return x[0] + _expand(x[1], attrs["broadcast"])


def _add_bwd(g, x, out, attrs):
    return [g, _reduce(g, attrs["broadcast"])]


def _sub_fwd(x, attrs):
    _check_pair("sub", x[0], x[1], attrs["broadcast"])
    return x[0] - _expand(x[1], attrs["broadcast"])


def _sub_bwd(g, x, out, attrs):
    return [g, -_reduce(g, attrs["broadcast"])]


def _scale_fwd(x, attrs):
    return attrs["factor"] * x[0]


def _scale_bwd(g, x, out, attrs):
    return [attrs["factor"] * g]


def _mul_fwd(x, attrs):
    _check_pair("mul", x[0], x[1], attrs["broadcast"])
    return x[0] * _expand(x[1], attrs["broadcast"])


def _mul_bwd(g, x, out, attrs):
    mode = attrs["broadcast"]
    return [g * _expand(x[1], mode), _reduce(g * x[0], mode)]


def _matmul_fwd(x, attrs):
    a, b = x
    right = b.T if attrs["transpose_b"] else b
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != right.shape[0]:
        raise ShapeError(
            f"matmul: несовместимые формы {a.shape} и {b.shape} (transpose_b={attrs['transpose_b']})"
        )
    return a @ right


def _matmul_bwd(g, x, out, attrs):
    a, b = x
    if attrs["transpose_b"]:
        return [g @ b, g.T @ a]
    return [g @ b.T, a.T @ g]


def _relu_fwd(x, attrs):
    return np.maximum(x[0], 0.0)


def _relu_bwd(g, x, out, attrs):
    return [g * (x[0] > 0.0)]


def _softmax_fwd(x, attrs):
    shifted = x[0] - x[0].max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_bwd(g, x, out, attrs):
    return [out * (g - (g * out).sum(axis=-1, keepdims=True))]


def _mse_fwd(x, attrs):
    a, b = x
    if a.shape != b.shape:
        raise ShapeError(f"mse: несовместимые формы {a.shape} и {b.shape}")
    rows = a.shape[0] if a.ndim == 2 else 1
    return np.asarray(np.sum((a - b) ** 2) / rows)


def _mse_bwd(g, x, out, attrs):
    a, b = x
    rows = a.shape[0] if a.ndim == 2 else 1
    d = (2.0 / rows) * float(g) * (a - b)
    return [d, -d]


def _concat_fwd(x, attrs):
    lead = {t.shape[:-1] for t in x}
    if len(lead) != 1:
        raise ShapeError(f"concat: несовпадающие ведущие размерности {[t.shape for t in x]}")
    return np.concatenate(x, axis=-1)


def _concat_bwd(g, x, out, attrs):
    edges = np.cumsum([t.shape[-1] for t in x])[:-1]
    return list(np.split(g, edges, axis=-1))


def _sinusoidal_fwd(x, attrs):
    t = x[0]
    dim = attrs["dim"]
    if t.ndim != 1 or dim % 2:
        raise ShapeError(f"sinusoidal: ожидается вектор времени и чётная размерность, получено {t.shape}, dim={dim}")
    half = dim // 2
    freqs = np.exp(-math.log(attrs["max_period"]) * np.arange(half) / half)
    args = attrs["time_scale"] * t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


def _sinusoidal_bwd(g, x, out, attrs):
    return [None]


def _layernorm_fwd(x, attrs):
    a = x[0]
    mu = a.mean(axis=-1, keepdims=True)
    var = a.var(axis=-1, keepdims=True)
    return (a - mu) / np.sqrt(var + attrs["eps"])


def _layernorm_bwd(g, x, out, attrs):
    a = x[0]
    inv_std = 1.0 / np.sqrt(a.var(axis=-1, keepdims=True) + attrs["eps"])
    mean_g = g.mean(axis=-1, keepdims=True)
    mean_gy = (g * out).mean(axis=-1, keepdims=True)
    return [inv_std * (g - mean_g - out * mean_gy)]


_OPS: dict[str, tuple[Callable, Callable]] = {
    "add": (_add_fwd, _add_bwd),
    "sub": (_sub_fwd, _sub_bwd),
    "scale": (_scale_fwd, _scale_bwd),
    "mul": (_mul_fwd, _mul_bwd),
    "matmul": (_matmul_fwd, _matmul_bwd),
    "relu": (_relu_fwd, _relu_bwd),
    "softmax": (_softmax_fwd, _softmax_bwd),
    "mse": (_mse_fwd, _mse_bwd),
    "concat": (_concat_fwd, _concat_bwd),
    "sinusoidal": (_sinusoidal_fwd, _sinusoidal_bwd),
    "layernorm": (_layernorm_fwd, _layernorm_bwd),
}

# --- 4. ГРАФ ---


@dataclass(frozen=True)
class Node:
    id: int
    op: str
    inputs: tuple[int, ...] = ()
    attrs: dict = field(default_factory=dict)
    name: Optional[str] = None


class Graph:
    """
    Символический граф вычислений.

    Узлы добавляются методами построения (input, add, matmul, ...) и сразу
    оказываются в топологическом порядке. forward() связывает листья со
    значениями и кеширует выход каждого узла; backward() использует кеш.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.leaves: dict[str, int] = {}
        self.differentiable: set[str] = set()
        self.output: Optional[int] = None
        self._values: Optional[list[Tensor]] = None
        self._needs_grad: Optional[list[bool]] = None

    # --- построение ---

    def _push(self, op: str, inputs: tuple[int, ...] = (), name: Optional[str] = None, **attrs) -> int:
        for i in inputs:
            if not 0 <= i < len(self.nodes):
                raise ValueError(f"{op}: ссылка на несуществующий узел {i}")
        node = Node(id=len(self.nodes), op=op, inputs=inputs, attrs=attrs, name=name)
        self.nodes.append(node)
        self._values = None
        self._needs_grad = None
        return node.id

    def input(self, name: str, differentiable: bool = False) -> int:
        if name in self.leaves:
            raise ValueError(f"Лист '{name}' уже объявлен в графе")
        node_id = self._push("input", name=name)
        self.leaves[name] = node_id
        if differentiable:
            self.differentiable.add(name)
        return node_id

    def add(self, a: int, b: int, broadcast: Optional[str] = None) -> int:
        _check_broadcast("add", broadcast)
        return self._push("add", (a, b), broadcast=broadcast)

    def sub(self, a: int, b: int, broadcast: Optional[str] = None) -> int:
        _check_broadcast("sub", broadcast)
        return self._push("sub", (a, b), broadcast=broadcast)

    def scale(self, a: int, factor: float) -> int:
        return self._push("scale", (a,), factor=float(factor))

    def mul(self, a: int, b: int, broadcast: Optional[str] = None) -> int:
        _check_broadcast("mul", broadcast)
        return self._push("mul", (a, b), broadcast=broadcast)

    def matmul(self, a: int, b: int, transpose_b: bool = False) -> int:
        return self._push("matmul", (a, b), transpose_b=transpose_b)

    def relu(self, a: int) -> int:
        return self._push("relu", (a,))

    def softmax(self, a: int) -> int:
        return self._push("softmax", (a,))

    def mse(self, a: int, b: int) -> int:
        return self._push("mse", (a, b))

    def concat(self, *parts: int) -> int:
        return self._push("concat", tuple(parts))

    def sinusoidal(self, t: int, dim: int, max_period: float = 10000.0, time_scale: float = 1000.0) -> int:
        return self._push("sinusoidal", (t,), dim=int(dim), max_period=max_period, time_scale=time_scale)

    def layernorm(self, a: int, eps: float = 1e-5) -> int:
        return self._push("layernorm", (a,), eps=eps)

    def set_output(self, node_id: int) -> None:
        self.output = node_id

    # --- прямой проход ---

    def forward(self, inputs: Mapping[str, Tensor], output: Optional[int] = None) -> Tensor:
        missing = sorted(set(self.leaves) - set(inputs))
        if missing:
            raise ValueError(f"Не заданы входы графа: {missing}")
        if output is not None:
            self.output = output
        if self.output is None:
            self.output = len(self.nodes) - 1

        values: list[Tensor] = []
        needs_grad: list[bool] = []
        for node in self.nodes:
            if node.op == "input":
                value = np.asarray(inputs[node.name], dtype=np.float64)
                _check_finite(f"input:{node.name}", value)
                values.append(value)
                needs_grad.append(node.name in self.differentiable)
                continue
            forward_fn, _ = _OPS[node.op]
            value = forward_fn([values[i] for i in node.inputs], node.attrs)
            _check_finite(node.op, value)
            values.append(value)
            needs_grad.append(node.op != "sinusoidal" and any(needs_grad[i] for i in node.inputs))

        self._values = values
        self._needs_grad = needs_grad
        return values[self.output]

    def value(self, node_id: int) -> Tensor:
        if self._values is None:
            raise RuntimeError("Значения узлов недоступны: forward ещё не выполнялся")
        return self._values[node_id]

    # --- обратный проход ---

    def backward(self, output_gradient: Optional[Tensor] = None) -> dict[str, Tensor]:
        if self._values is None or self.output is None:
            raise RuntimeError("backward вызван до forward")
        values, needs_grad = self._values, self._needs_grad
        out_value = values[self.output]
        if output_gradient is None:
            output_gradient = np.ones_like(out_value)
        output_gradient = as_tensor(output_gradient, "output_gradient")
        if output_gradient.shape != out_value.shape:
            raise ShapeError(
                f"backward: форма градиента {output_gradient.shape} не совпадает с выходом {out_value.shape}"
            )

        grads: dict[int, Tensor] = {self.output: output_gradient}
        for node in reversed(self.nodes[: self.output + 1]):
            if node.op == "input" or node.id not in grads:
                continue
            g = grads.pop(node.id)
            _, backward_fn = _OPS[node.op]
            in_values = [values[i] for i in node.inputs]
            for i, gi in zip(node.inputs, backward_fn(g, in_values, values[node.id], node.attrs)):
                if gi is None or not needs_grad[i]:
                    continue
                grads[i] = grads[i] + gi if i in grads else gi

        result: dict[str, Tensor] = {}
        for name in sorted(self.differentiable):
            node_id = self.leaves[name]
            grad = grads.get(node_id)
            result[name] = np.zeros_like(values[node_id]) if grad is None else np.asarray(grad, dtype=np.float64)
        return result


def forward(graph: Graph, inputs: Mapping[str, Tensor]) -> Tensor:
    """Прямой проход графа по именованным входам."""
    return graph.forward(inputs)


def backward(graph: Graph, output_gradient: Optional[Tensor] = None) -> dict[str, Tensor]:
    """Обратный проход: градиенты всех дифференцируемых листьев."""
    return graph.backward(output_gradient)


# --- 5. ОПТИМИЗАТОР ADAMW ---


@dataclass
class OptimizerState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, Tensor] = field(default_factory=dict)
    v: dict[str, Tensor] = field(default_factory=dict)


def optimizer_step(
    params: dict[str, Tensor], grads: Mapping[str, Tensor], state: OptimizerState
) -> tuple[dict[str, Tensor], OptimizerState]:
    """
    Один шаг AdamW на месте: параметры и моменты обновляются in-place, step += 1.

    Raises:
        ShapeError: форма градиента не совпадает с параметром.
        NonFiniteError: градиент содержит NaN/Inf (без молчаливого клиппинга).
    """
    if state.step < 0:
        raise ValueError(f"Некорректный номер шага оптимизатора: {state.step}")
    names = sorted(params)
    for name in names:
        if name not in grads:
            raise KeyError(f"Нет градиента для параметра '{name}'")
        if grads[name].shape != params[name].shape:
            raise ShapeError(f"optimizer_step: '{name}' градиент {grads[name].shape} vs параметр {params[name].shape}")
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteError(f"optimizer_step: неконечный градиент для '{name}'")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for name in names:
        p, g = params[name], grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        if state.weight_decay:
            p -= state.lr * state.weight_decay * p
        p -= state.lr * update
    return params, state


# --- 6. ПРОВЕРКА ГРАДИЕНТОВ ---


def numerical_gradient(fn: Callable[[], float], param: Tensor, h: float = 1e-5) -> Tensor:
    """Центральные конечные разности по каждому элементу param (param временно меняется на месте)."""
    grad = np.zeros_like(param)
    flat = param.reshape(-1)
    if not np.shares_memory(flat, param):
        raise ValueError("numerical_gradient: параметр должен быть непрерывным массивом")
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = fn()
        flat[i] = original - h
        minus = fn()
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * h)
    return grad


def max_relative_error(analytic: Tensor, numeric: Tensor, floor: float = 1e-5) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
