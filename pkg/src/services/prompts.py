"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/services/prompts.py

Prompts: Пути кондиционирования и банк промптов
===============================================

Модуль отвечает за всё, что попадает в контекст cross-attention бэкбона:
игрушечный токенизатор tau, замороженный текстовый энкодер TE и четыре варианта
промпта, а также банк "один промпт на вид деградации".

Варианты промпта (PromptVariant):
- text:      фиксированная строка символов -> TE(tau(c)). Обучаемых параметров нет.
- token:     матрица токен-эмбеддингов U (L x D_in) -> TE(U). Градиент проходит через замороженный TE.
- embedding: контекст p (L x D) подаётся напрямую, минуя токены.
- residual:  e_null + g * (A @ B), где A: L x rank, B: rank x D, g - скалярный гейт на токен,
             инициализированный нулём. При g = 0 контекст побитово равен e_null.

Основные возможности:
- Словарь (64 символа) и текстовые промпты хранятся в assets/prompts/*.txt.
- Таблица эмбеддингов и веса энкодера округляются до float32 и замораживаются
  (read-only массивы + контрольный хеш).
- build_context_graph встраивает любой вариант в граф numerics, поэтому
  обучение промпта дифференцирует ровно его параметры.
- Банк промптов сохраняется в формате BPRM вместе с состоянием оптимизатора.

Переменные:
- BASE_DIR: абсолютный путь к корню проекта.
- PROMPTS_DIR: абсолютный путь к assets/prompts.

Классы:
- Tokenizer, TextEncoder, TextPathway
- Prompt: запись промпта (вариант, вид деградации, параметры).
- PromptBank: отображение вид деградации -> промпт.
- ContextBinding: узел контекста в графе + привязки листьев.

Функции:
- load_prompt(template_name: str) -> str
- encode(prompt, pathway, e_null) -> np.ndarray (L x D)
- trainable_parameters(prompt) -> dict[str, np.ndarray]
- init_prompt(variant, kind, pathway, e_null, rank, seed) -> Prompt
- build_context_graph(graph, prompt, pathway, e_null) -> ContextBinding
- save_bank(path, bank, states) / load_bank(path) -> (PromptBank, dict)

Связи с другими модулями:
- src.core.numerics: граф энкодера и контекста.
- src.services.backbone: e_null = TE(tau("")), контексты классов при предобучении.
- src.services.training, src.services.sampler: обучение и применение промптов.
"""

import os
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from src.core.checkpoint import content_hash, load_checkpoint, save_checkpoint
from src.core.numerics import Graph, OptimizerState
from src.models.schemas import DegradationKind, PathwayConfig, PromptVariant

# --- 1. ПУТИ И ТЕКСТОВЫЕ ШАБЛОНЫ ---

BASE_DIR = os.path.dirname(os.path.dirname(os.path.dirname(__file__)))
PROMPTS_DIR = os.path.join(BASE_DIR, "assets", "prompts")

VOCAB_SIZE = 64
PAD = "PAD"


def load_prompt(template_name: str) -> str:
    """
    Загружает текстовый промпт или словарь из assets/prompts/.

    Args:
        template_name (str): Имя файла без расширения (например, 'veil' или 'vocabulary').

    Raises:
        FileNotFoundError: Если файл не существует.
    """
    file_path = os.path.join(PROMPTS_DIR, f"{template_name}.txt")
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"Файл промпта не найден: {file_path}")
    with open(file_path, "r", encoding="utf-8") as f:
        return f.read().strip()


def load_vocabulary() -> list[str]:
    symbols = [
        line.strip()
        for line in load_prompt("vocabulary").splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if len(symbols) != VOCAB_SIZE or len(set(symbols)) != VOCAB_SIZE or symbols[0] != PAD:
        raise ValueError(f"Словарь должен содержать {VOCAB_SIZE} уникальных символов и начинаться с {PAD}")
    return symbols


def _freeze_array(array: np.ndarray) -> np.ndarray:
    # Округление до float32: хеш переживает сохранение в 32-битный чекпоинт
    frozen = np.asarray(array, dtype=np.float32).astype(np.float64)
    frozen.setflags(write=False)
    return frozen


# --- 2. ТОКЕНИЗАТОР И ТЕКСТОВЫЙ ЭНКОДЕР ---


class Tokenizer:
    """tau: строка символов -> L индексов (с дополнением PAD) -> матрица L x D_in."""

    def __init__(self, config: PathwayConfig, table: Optional[np.ndarray] = None) -> None:
        self.config = config
        self.vocabulary = load_vocabulary()
        self.index = {symbol: i for i, symbol in enumerate(self.vocabulary)}
        if table is None:
            rng = np.random.default_rng([config.seed, 0])
            table = rng.normal(0.0, 1.0, size=(VOCAB_SIZE, config.token_dim))
        if table.shape != (VOCAB_SIZE, config.token_dim):
            raise ValueError(f"Таблица эмбеддингов: ожидается {(VOCAB_SIZE, config.token_dim)}, получено {table.shape}")
        self.table = _freeze_array(table)

    def ids(self, text: str) -> list[int]:
        symbols = text.upper().split()
        unknown = [s for s in symbols if s not in self.index]
        if unknown:
            raise KeyError(f"Неизвестные символы токенизатора: {unknown}")
        if len(symbols) > self.config.tokens:
            raise ValueError(f"Промпт длиннее L={self.config.tokens} токенов: '{text}'")
        return [self.index[s] for s in symbols] + [self.index[PAD]] * (self.config.tokens - len(symbols))

    def decode(self, ids: list[int]) -> str:
        return " ".join(self.vocabulary[i] for i in ids if self.vocabulary[i] != PAD)

    def embed(self, text: str) -> np.ndarray:
        return self.table[self.ids(text)].copy()


class TextEncoder:
    """TE: замороженный двухслойный MLP, применяемый к каждому токену: relu(U W1 + b1) W2 + b2."""

    NAMES = ("w1", "b1", "w2", "b2")

    def __init__(self, config: PathwayConfig, weights: Optional[Mapping[str, np.ndarray]] = None) -> None:
        self.config = config
        if weights is None:
            rng = np.random.default_rng([config.seed, 1])
            weights = {
                "w1": rng.normal(0.0, np.sqrt(2.0 / config.token_dim), size=(config.token_dim, config.hidden_dim)),
                "b1": rng.normal(0.0, 0.1, size=config.hidden_dim),
                "w2": rng.normal(0.0, np.sqrt(1.0 / config.hidden_dim), size=(config.hidden_dim, config.context_dim)),
                "b2": rng.normal(0.0, 0.1, size=config.context_dim),
            }
        self.weights = {name: _freeze_array(weights[name]) for name in self.NAMES}
        self._graph: Optional[Graph] = None

    def add_to_graph(self, graph: Graph, tokens: int, prefix: str = "te") -> int:
        """Добавляет энкодер поверх узла tokens; веса - недифференцируемые листья '{prefix}.*'."""
        w1, b1, w2, b2 = (graph.input(f"{prefix}.{name}") for name in self.NAMES)
        hidden = graph.relu(graph.add(graph.matmul(tokens, w1), b1, "row"))
        return graph.add(graph.matmul(hidden, w2), b2, "row")

    def bindings(self, prefix: str = "te") -> dict[str, np.ndarray]:
        return {f"{prefix}.{name}": value for name, value in self.weights.items()}

    def __call__(self, tokens: np.ndarray) -> np.ndarray:
        if self._graph is None:
            graph = Graph()
            self._graph = graph
            graph.set_output(self.add_to_graph(graph, graph.input("tokens")))
        expected = (self.config.tokens, self.config.token_dim)
        if np.shape(tokens) != expected:
            raise ValueError(f"TE: ожидается матрица токенов {expected}, получено {np.shape(tokens)}")
        return self._graph.forward({"tokens": tokens, **self.bindings()}).copy()


class TextPathway:
    """Связка tau + TE: замороженный путь от строки к контексту L x D."""

    def __init__(self, config: PathwayConfig, tensors: Optional[Mapping[str, np.ndarray]] = None) -> None:
        self.config = config
        tensors = tensors or {}
        self.tokenizer = Tokenizer(config, tensors.get("table"))
        self.encoder = TextEncoder(config, {n: tensors[n] for n in TextEncoder.NAMES} if tensors else None)

    def encode_text(self, text: str) -> np.ndarray:
        return self.encoder(self.tokenizer.embed(text))

    def tensors(self) -> dict[str, np.ndarray]:
        return {"table": self.tokenizer.table, **self.encoder.weights}

    def content_hash(self) -> str:
        return content_hash(self.tensors())

    def null_context(self) -> np.ndarray:
        """e_null = TE(tau("")): контекст из одних PAD-токенов."""
        return self.encode_text("")


# --- 3. ПРОМПТЫ ---

_EXPECTED_PARAMS = {
    PromptVariant.TEXT: frozenset(),
    PromptVariant.TOKEN: frozenset({"U"}),
    PromptVariant.EMBEDDING: frozenset({"p"}),
    PromptVariant.RESIDUAL: frozenset({"A", "B", "g"}),
}


@dataclass
class Prompt:
    variant: PromptVariant
    kind: DegradationKind
    params: dict[str, np.ndarray] = field(default_factory=dict)
    text: Optional[str] = None

    def __post_init__(self) -> None:
        self.variant = PromptVariant(self.variant)
        self.kind = DegradationKind(self.kind)
        if set(self.params) != _EXPECTED_PARAMS[self.variant]:
            raise ValueError(
                f"Промпт '{self.variant.value}' ожидает параметры {sorted(_EXPECTED_PARAMS[self.variant])}, "
                f"получено {sorted(self.params)}"
            )
        if (self.variant == PromptVariant.TEXT) != (self.text is not None):
            raise ValueError("Строка text задаётся только для текстового промпта")

    @property
    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))


def encode(prompt: Prompt, pathway: TextPathway, e_null: np.ndarray) -> np.ndarray:
    """Контекст L x D для любого варианта промпта."""
    if prompt.variant == PromptVariant.TEXT:
        return pathway.encode_text(prompt.text)
    if prompt.variant == PromptVariant.TOKEN:
        return pathway.encoder(prompt.params["U"])
    if prompt.variant == PromptVariant.EMBEDDING:
        return prompt.params["p"].copy()
    residual = prompt.params["A"] @ prompt.params["B"]
    return e_null + residual * prompt.params["g"][:, None]


def trainable_parameters(prompt: Prompt) -> dict[str, np.ndarray]:
    """
    Ровно те тензоры, которые может менять оптимизатор (ссылки, не копии).

    Raises:
        ValueError: у текстового промпта нечего обучать.
    """
    if prompt.variant == PromptVariant.TEXT:
        raise ValueError("Текстовый промпт не имеет обучаемых параметров")
    return prompt.params


def init_prompt(
    variant: Union[PromptVariant, str],
    kind: Union[DegradationKind, str],
    pathway: TextPathway,
    e_null: np.ndarray,
    rank: int = 4,
    seed: int = 0,
) -> Prompt:
    """
    Начальное значение промпта:
    token - эмбеддинги текстового промпта вида; embedding - копия e_null;
    residual - малые случайные A, B и нулевые гейты.
    """
    variant, kind = PromptVariant(variant), DegradationKind(kind)
    if variant == PromptVariant.TEXT:
        return Prompt(variant, kind, text=load_prompt(kind.value))
    if variant == PromptVariant.TOKEN:
        return Prompt(variant, kind, {"U": pathway.tokenizer.embed(load_prompt(kind.value))})
    if variant == PromptVariant.EMBEDDING:
        return Prompt(variant, kind, {"p": np.array(e_null, dtype=np.float64)})
    rng = np.random.default_rng(seed)
    tokens, dim = e_null.shape
    return Prompt(
        variant,
        kind,
        {
            "A": rng.normal(0.0, 0.1, size=(tokens, rank)),
            "B": rng.normal(0.0, 0.1, size=(rank, dim)),
            "g": np.zeros(tokens),
        },
    )


# --- 4. ПРОМПТ В ГРАФЕ ---


@dataclass
class ContextBinding:
    node: int
    constants: dict[str, np.ndarray]
    leaves: dict[str, str]  # имя листа графа -> имя параметра промпта

    def inputs(self, prompt: Prompt) -> dict[str, np.ndarray]:
        return {**self.constants, **{leaf: prompt.params[param] for leaf, param in self.leaves.items()}}

    def parameter_grads(self, grads: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        return {param: grads[leaf] for leaf, param in self.leaves.items()}


def build_context_graph(
    graph: Graph, prompt: Prompt, pathway: TextPathway, e_null: np.ndarray, prefix: str = "prompt"
) -> ContextBinding:
    """Встраивает вариант промпта в граф; параметры промпта - дифференцируемые листья."""
    if prompt.variant == PromptVariant.TEXT:
        node = graph.input(f"{prefix}.context")
        return ContextBinding(node, {f"{prefix}.context": encode(prompt, pathway, e_null)}, {})

    if prompt.variant == PromptVariant.TOKEN:
        tokens = graph.input(f"{prefix}.U", differentiable=True)
        node = pathway.encoder.add_to_graph(graph, tokens, prefix=f"{prefix}.te")
        return ContextBinding(node, pathway.encoder.bindings(f"{prefix}.te"), {f"{prefix}.U": "U"})

    if prompt.variant == PromptVariant.EMBEDDING:
        node = graph.input(f"{prefix}.p", differentiable=True)
        return ContextBinding(node, {}, {f"{prefix}.p": "p"})

    null = graph.input(f"{prefix}.e_null")
    a = graph.input(f"{prefix}.A", differentiable=True)
    b = graph.input(f"{prefix}.B", differentiable=True)
    g = graph.input(f"{prefix}.g", differentiable=True)
    node = graph.add(null, graph.mul(graph.matmul(a, b), g, "col"))
    return ContextBinding(
        node, {f"{prefix}.e_null": e_null}, {f"{prefix}.A": "A", f"{prefix}.B": "B", f"{prefix}.g": "g"}
    )


# --- 5. БАНК ПРОМПТОВ ---


class PromptBank:
    """Не более одного промпта на вид деградации."""

    def __init__(self) -> None:
        self._prompts: dict[DegradationKind, Prompt] = {}

    def put(self, prompt: Prompt) -> None:
        self._prompts[prompt.kind] = prompt

    def get(self, kind: Union[DegradationKind, str]) -> Prompt:
        kind = DegradationKind(kind)
        if kind not in self._prompts:
            available = ", ".join(k.value for k in self.kinds()) or "нет"
            raise KeyError(f"В банке нет промпта для '{kind.value}'. Доступны: {available}")
        return self._prompts[kind]

    def kinds(self) -> list[DegradationKind]:
        return sorted(self._prompts, key=lambda k: k.value)

    def __contains__(self, kind: object) -> bool:
        return kind in self._prompts

    def __len__(self) -> int:
        return len(self._prompts)


def save_bank(
    path, bank: PromptBank, pathway: TextPathway, states: Optional[Mapping[DegradationKind, OptimizerState]] = None
) -> str:
    """Сохраняет банк (и состояния AdamW) в BPRM. Возвращает контрольную сумму файла."""
    tensors: dict[str, np.ndarray] = {}
    for kind in bank.kinds():
        prompt = bank.get(kind)
        base = f"{kind.value}/{prompt.variant.value}"
        if prompt.variant == PromptVariant.TEXT:
            tensors[f"{base}/token_ids"] = np.asarray(pathway.tokenizer.ids(prompt.text), dtype=np.float64)
        for name, value in prompt.params.items():
            tensors[f"{base}/{name}"] = value
    for kind, state in (states or {}).items():
        base = f"optim/{DegradationKind(kind).value}"
        tensors[f"{base}/step"] = np.array([state.step], dtype=np.float64)
        tensors[f"{base}/hyper"] = np.array(
            [state.lr, state.beta1, state.beta2, state.eps, state.weight_decay], dtype=np.float64
        )
        for name in state.m:
            tensors[f"{base}/m/{name}"] = state.m[name]
            tensors[f"{base}/v/{name}"] = state.v[name]
    return save_checkpoint(path, tensors)


def load_bank(path, pathway: TextPathway) -> tuple[PromptBank, dict[DegradationKind, OptimizerState]]:
    tensors = load_checkpoint(path)
    grouped: dict[tuple[str, str], dict[str, np.ndarray]] = {}
    optim: dict[str, dict[str, np.ndarray]] = {}
    for name, value in tensors.items():
        parts = name.split("/")
        if parts[0] == "optim":
            optim.setdefault(parts[1], {})["/".join(parts[2:])] = value
        else:
            grouped.setdefault((parts[0], parts[1]), {})[parts[2]] = value

    bank = PromptBank()
    for (kind, variant), params in sorted(grouped.items()):
        text = None
        if variant == PromptVariant.TEXT.value:
            text = pathway.tokenizer.decode([int(round(i)) for i in params.pop("token_ids")])
        bank.put(Prompt(PromptVariant(variant), DegradationKind(kind), params, text=text))

    states: dict[DegradationKind, OptimizerState] = {}
    for kind, entries in sorted(optim.items()):
        lr, beta1, beta2, eps, weight_decay = (float(x) for x in entries["hyper"])
        state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)
        state.step = int(round(float(entries["step"][0])))
        state.m = {key[2:]: value for key, value in entries.items() if key.startswith("m/")}
        state.v = {key[2:]: value for key, value in entries.items() if key.startswith("v/")}
        states[DegradationKind(kind)] = state
    return bank, states
