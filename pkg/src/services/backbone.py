"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/services/backbone.py

Backbone: Замороженный flow-matching приор
==========================================

Небольшая сеть скорости v(z_t, t; context) с одним блоком cross-attention.
Предобучается flow matching на чистых игрушечных изображениях и замораживается;
дальше через неё обучаются только промпты.

Архитектура (B - батч, N - размер латента, H - ширина, A - размерность внимания):
    temb = sinusoidal(t)                               B x T
    h    = relu([z, temb] W_in + b_in)                 B x H
    q    = layernorm(h) W_q;  k = ctx W_k;  v = ctx W_v
    h    = h + softmax(q k^T / sqrt(A)) v W_o          cross-attention к контексту L x D
    h    = relu([h, temb] W_l + b_l)                   num_layers раз
    out  = h W_out + b_out                             B x N

Основные возможности:
- Один построитель графа (add_velocity_graph) для инференса, предобучения и
  обучения промптов: все пути считают одну и ту же сеть.
- Предобучение: z_t = (1 - t) z0 + t eps, цель eps - z0, t ~ U[0, 1];
  контекст с вероятностью null_context_fraction - e_null, иначе текст класса фигуры.
- Заморозка: округление до float32, read-only массивы, контрольный хеш.
- Сохранение в BPRM + JSON-манифест с хешами бэкбона и текстового пути.

Классы:
- BackboneWeights: именованные тензоры, флаг frozen, хеш.
- Backbone: веса + кешированный граф инференса.
- PretrainResult: веса и кривая потерь.

Функции:
- init_weights(config, e_null, seed) -> BackboneWeights
- add_velocity_graph(graph, config, z, t, ctx, trainable, prefix) -> int
- velocity(weights, z_t, t, context) -> np.ndarray
- clean_from_velocity(z_t, t, v) -> np.ndarray
- clean_prediction(weights, z_t, t, context) -> np.ndarray
- pretrain(config, data, pathway, progress) -> PretrainResult
- save_backbone(path, weights, pathway) / load_backbone(path) -> (BackboneWeights, TextPathway)

Связи с другими модулями:
- src.services.prompts: TextPathway (e_null и контексты классов).
- src.services.toyworld: чистые изображения для предобучения.
- src.services.training, src.services.sampler: используют граф и velocity.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np
from tqdm import tqdm

from src.core.checkpoint import content_hash, load_checkpoint, save_checkpoint
from src.core.errors import FrozenWeightsError, NonFiniteError, ShapeError
from src.core.logger import get_logger
from src.core.numerics import Graph, OptimizerState, optimizer_step
from src.core.rundir import version_string
from src.models.schemas import BackboneConfig, BackboneManifest, CleanSpec, DataConfig
from src.services.prompts import TextPathway, load_prompt
from src.services.toyworld import generate_clean

logger = get_logger(__name__)

# ==========================================
# --- 1. ВЕСА ---
# ==========================================


def weight_shapes(config: BackboneConfig) -> dict[str, tuple[int, ...]]:
    n, h, a, d, t = config.input_dim, config.hidden_dim, config.attn_dim, config.context_dim, config.time_dim
    shapes = {
        "w_in": (n + t, h),
        "b_in": (h,),
        "w_q": (h, a),
        "w_k": (d, a),
        "w_v": (d, a),
        "w_o": (a, h),
        "w_out": (h, n),
        "b_out": (n,),
        "e_null": (config.context_tokens, d),
    }
    for i in range(config.num_layers):
        shapes[f"w_l{i}"] = (h + t, h)
        shapes[f"b_l{i}"] = (h,)
    return shapes


@dataclass
class BackboneWeights:
    config: BackboneConfig
    tensors: dict[str, np.ndarray]
    frozen: bool = False
    hash: Optional[str] = None

    def __post_init__(self) -> None:
        expected = weight_shapes(self.config)
        if set(self.tensors) != set(expected):
            raise ValueError(f"Набор весов не совпадает с архитектурой: {sorted(set(self.tensors) ^ set(expected))}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ShapeError(f"Вес '{name}': ожидается {shape}, получено {self.tensors[name].shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if self.frozen:
            raise FrozenWeightsError(f"Бэкбон заморожен: запись в '{name}' запрещена")
        self.tensors[name] = np.asarray(value, dtype=np.float64)

    @property
    def e_null(self) -> np.ndarray:
        return self.tensors["e_null"]

    def content_hash(self) -> str:
        return content_hash(self.tensors)

    def freeze(self) -> str:
        """Округляет веса до float32, делает их read-only и записывает хеш."""
        for name, value in self.tensors.items():
            frozen = np.asarray(value, dtype=np.float32).astype(np.float64)
            frozen.setflags(write=False)
            self.tensors[name] = frozen
        self.frozen = True
        self.hash = self.content_hash()
        return self.hash

    def verify(self) -> None:
        """Raises FrozenWeightsError, если содержимое разошлось с хешем заморозки."""
        if not self.frozen or self.hash is None:
            raise FrozenWeightsError("Бэкбон не заморожен")
        actual = self.content_hash()
        if actual != self.hash:
            raise FrozenWeightsError(f"Хеш бэкбона изменился: {self.hash[:12]} -> {actual[:12]}")


def init_weights(config: BackboneConfig, e_null: np.ndarray, seed: Optional[int] = None) -> BackboneWeights:
    """He-инициализация скрытых слоёв, уменьшенный выходной слой, нулевые смещения."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in weight_shapes(config).items():
        if name == "e_null":
            if e_null.shape != shape:
                raise ShapeError(f"e_null: ожидается {shape}, получено {e_null.shape}")
            tensors[name] = np.array(e_null, dtype=np.float64)
        elif name.startswith("b_"):
            tensors[name] = np.zeros(shape)
        elif name == "w_out":
            tensors[name] = rng.normal(0.0, 0.1 * np.sqrt(1.0 / shape[0]), size=shape)
        elif name in ("w_q", "w_k", "w_v", "w_o"):
            tensors[name] = rng.normal(0.0, np.sqrt(1.0 / shape[0]), size=shape)
        else:
            tensors[name] = rng.normal(0.0, np.sqrt(2.0 / shape[0]), size=shape)
    return BackboneWeights(config=config, tensors=tensors)


# ==========================================
# --- 2. ГРАФ СКОРОСТИ ---
# ==========================================


def add_velocity_graph(
    graph: Graph, config: BackboneConfig, z: int, t: int, ctx: int, trainable: bool = False, prefix: str = "backbone"
) -> int:
    """
    Добавляет сеть скорости поверх узлов z (B x N), t (B,) и ctx (L x D).

    Веса - листья '{prefix}.<имя>'; trainable=True только при предобучении.
    """
    w = {
        name: graph.input(f"{prefix}.{name}", differentiable=trainable)
        for name in weight_shapes(config)
        if name != "e_null"
    }
    temb = graph.sinusoidal(t, config.time_dim)
    h = graph.relu(graph.add(graph.matmul(graph.concat(z, temb), w["w_in"]), w["b_in"], "row"))

    query = graph.matmul(graph.layernorm(h), w["w_q"])
    key = graph.matmul(ctx, w["w_k"])
    value = graph.matmul(ctx, w["w_v"])
    scores = graph.scale(graph.matmul(query, key, transpose_b=True), 1.0 / np.sqrt(config.attn_dim))
    attended = graph.matmul(graph.matmul(graph.softmax(scores), value), w["w_o"])
    h = graph.add(h, attended)

    for i in range(config.num_layers):
        h = graph.relu(graph.add(graph.matmul(graph.concat(h, temb), w[f"w_l{i}"]), w[f"b_l{i}"], "row"))
    return graph.add(graph.matmul(h, w["w_out"]), w["b_out"], "row")


def weight_bindings(weights: BackboneWeights, prefix: str = "backbone") -> dict[str, np.ndarray]:
    return {f"{prefix}.{name}": value for name, value in weights.tensors.items() if name != "e_null"}


class Backbone:
    """Веса + кешированный граф инференса. Считает число вызовов сети (NFE)."""

    def __init__(self, weights: BackboneWeights) -> None:
        self.weights = weights
        self.config = weights.config
        self.evaluations = 0
        graph = Graph()
        z, t, ctx = graph.input("z"), graph.input("t"), graph.input("context")
        graph.set_output(add_velocity_graph(graph, self.config, z, t, ctx))
        self._graph = graph
        self._bindings = weight_bindings(weights)

    def velocity(self, z_t: np.ndarray, t: Union[float, np.ndarray], context: np.ndarray) -> np.ndarray:
        """
        Скорость v(z_t, t; context). z_t: вектор (N,) или батч (B, N); t: скаляр или (B,).

        Raises:
            ShapeError: контекст не L x D или латент неверной длины.
            ValueError: t вне [0, 1].
        """
        expected = (self.config.context_tokens, self.config.context_dim)
        if np.shape(context) != expected:
            raise ShapeError(f"velocity: контекст должен иметь форму {expected}, получено {np.shape(context)}")
        z = np.asarray(z_t, dtype=np.float64)
        single = z.ndim == 1
        batch = z[None, :] if single else z
        if batch.ndim != 2 or batch.shape[1] != self.config.input_dim:
            raise ShapeError(f"velocity: латент {z.shape} не совместим с input_dim={self.config.input_dim}")
        times = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch.shape[0],)).copy()
        if np.any(times < 0.0) or np.any(times > 1.0):
            raise ValueError(f"velocity: t вне [0, 1]: {t}")
        self.evaluations += 1
        out = self._graph.forward({"z": batch, "t": times, "context": context, **self._bindings}).copy()
        return out[0] if single else out

    def clean_prediction(self, z_t: np.ndarray, t: Union[float, np.ndarray], context: np.ndarray) -> np.ndarray:
        return clean_from_velocity(z_t, t, self.velocity(z_t, t, context))


def clean_from_velocity(z_t: np.ndarray, t: Union[float, np.ndarray], v: np.ndarray) -> np.ndarray:
    """z_hat_0 = z_t - t * v; t может быть скаляром или вектором по строкам."""
    t_arr = np.asarray(t, dtype=np.float64)
    if t_arr.ndim == 1:
        t_arr = t_arr[:, None]
    return z_t - t_arr * v


def velocity(weights: Union[BackboneWeights, Backbone], z_t, t, context) -> np.ndarray:
    backbone = weights if isinstance(weights, Backbone) else Backbone(weights)
    return backbone.velocity(z_t, t, context)


def clean_prediction(weights: Union[BackboneWeights, Backbone], z_t, t, context) -> np.ndarray:
    backbone = weights if isinstance(weights, Backbone) else Backbone(weights)
    return backbone.clean_prediction(z_t, t, context)


# ==========================================
# --- 3. ПРЕДОБУЧЕНИЕ ---
# ==========================================


@dataclass
class PretrainResult:
    weights: BackboneWeights
    losses: list[float] = field(default_factory=list)


def pretrain(
    config: BackboneConfig, data: DataConfig, pathway: TextPathway, progress: bool = False
) -> PretrainResult:
    """
    Flow matching на чистых изображениях, затем заморозка.

    Raises:
        NonFiniteError: потеря стала NaN/Inf (сообщение содержит номер шага).
    """
    e_null = pathway.null_context()
    weights = init_weights(config, e_null)
    rng = np.random.default_rng([config.seed, 1])

    # Пул чистых изображений и текстовый контекст для каждого класса
    pools = {
        cls: np.stack(generate_clean(CleanSpec(side=data.side, shape_class=cls, seed=data.seed + i), data.n_train))
        for i, cls in enumerate(data.shape_classes)
    }
    class_contexts = {cls: pathway.encode_text(load_prompt(cls.value)) for cls in data.shape_classes}
    classes = list(data.shape_classes)

    graph = Graph()
    z, t, ctx, target = graph.input("z"), graph.input("t"), graph.input("context"), graph.input("target")
    v = add_velocity_graph(graph, config, z, t, ctx, trainable=True)
    graph.set_output(graph.mse(v, target))

    params = {f"backbone.{name}": value for name, value in weights.tensors.items() if name != "e_null"}
    state = OptimizerState(lr=config.pretrain_lr)
    losses: list[float] = []

    for step in tqdm(range(config.pretrain_steps), desc="pretrain", disable=not progress):
        cls = classes[int(rng.integers(len(classes)))]
        context = e_null if rng.uniform() < config.null_context_fraction else class_contexts[cls]
        z0 = pools[cls][rng.integers(len(pools[cls]), size=config.batch_size)]
        eps = rng.standard_normal(z0.shape)
        times = rng.uniform(0.0, 1.0, size=config.batch_size)
        z_t = (1.0 - times[:, None]) * z0 + times[:, None] * eps
        try:
            loss = float(graph.forward({"z": z_t, "t": times, "context": context, "target": eps - z0, **params}))
            grads = graph.backward()
            optimizer_step(params, grads, state)
        except NonFiniteError as e:
            raise NonFiniteError(f"Предобучение разошлось на шаге {step}: {e}") from e
        losses.append(loss)

    weights.freeze()
    logger.info(
        "Предобучение завершено: loss %.4f -> %.4f за %d шагов, хеш %s",
        losses[0], losses[-1], len(losses), weights.hash[:12],
    )
    return PretrainResult(weights=weights, losses=losses)


# ==========================================
# --- 4. СОХРАНЕНИЕ ---
# ==========================================


def manifest_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".json")


def save_backbone(path: Union[str, Path], weights: BackboneWeights, pathway: TextPathway) -> str:
    """Чекпоинт BPRM (backbone/*, pathway/*) и JSON-манифест. Возвращает контрольную сумму."""
    if not weights.frozen:
        raise FrozenWeightsError("Сохраняется только замороженный бэкбон")
    tensors = {f"backbone/{name}": value for name, value in weights.tensors.items()}
    tensors.update({f"pathway/{name}": value for name, value in pathway.tensors().items()})
    checksum = save_checkpoint(path, tensors)
    manifest = BackboneManifest(
        backbone=weights.config,
        pathway=pathway.config,
        backbone_hash=weights.hash,
        pathway_hash=pathway.content_hash(),
        version=version_string(),
    )
    manifest_path(path).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8", newline="\n")
    return checksum


def load_backbone(path: Union[str, Path]) -> tuple[BackboneWeights, TextPathway]:
    """
    Загружает бэкбон и текстовый путь, сверяя хеши с манифестом.

    Raises:
        FileNotFoundError: нет чекпоинта или манифеста.
        FrozenWeightsError: хеш содержимого не совпадает с манифестом.
    """
    meta_file = manifest_path(path)
    if not meta_file.is_file():
        raise FileNotFoundError(f"Манифест бэкбона не найден: {meta_file}")
    manifest = BackboneManifest.model_validate(json.loads(meta_file.read_text(encoding="utf-8")))
    tensors = load_checkpoint(path)

    backbone = {k.split("/", 1)[1]: v for k, v in tensors.items() if k.startswith("backbone/")}
    pathway_tensors: Mapping[str, np.ndarray] = {
        k.split("/", 1)[1]: v for k, v in tensors.items() if k.startswith("pathway/")
    }
    weights = BackboneWeights(config=manifest.backbone, tensors=backbone)
    if weights.freeze() != manifest.backbone_hash:
        raise FrozenWeightsError(f"{path}: хеш бэкбона не совпадает с манифестом")
    pathway = TextPathway(manifest.pathway, pathway_tensors)
    if pathway.content_hash() != manifest.pathway_hash:
        raise FrozenWeightsError(f"{path}: хеш текстового пути не совпадает с манифестом")
    return weights, pathway
