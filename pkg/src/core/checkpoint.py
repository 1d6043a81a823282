"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/core/checkpoint.py

Checkpoint: Бинарный формат BPRM для именованных тензоров
=========================================================

Формат (все числа little-endian):
    magic        4 байта  b"BPRM"
    version      u16
    count        u32      число тензоров
    для каждого тензора (в порядке сортировки имён):
        name_len u16, name (UTF-8)
        rank     u8,  dims (u32 * rank)
        payload  float32 * prod(dims)
    checksum     8 байт   BLAKE2b-64 от всех предшествующих байт

Хранение в 32 битах, вычисления в 64: load возвращает float64-массивы,
значения совпадают с исходными с точностью float32.

Функции:
- save_checkpoint(path, tensors) -> str      (hex контрольной суммы)
- load_checkpoint(path) -> dict[str, np.ndarray]
- read_header(path) -> list[TensorHeader]
- content_hash(tensors) -> str               (sha256 по именам, формам и float64-байтам)
- file_checksum(path) -> str
"""

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from src.core.errors import ChecksumError

MAGIC = b"BPRM"
FORMAT_VERSION = 1
CHECKSUM_SIZE = 8


@dataclass(frozen=True)
class TensorHeader:
    name: str
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


def _digest(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=CHECKSUM_SIZE).digest()


def _encode(tensors: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(tensors))]
    for name in sorted(tensors):
        array = np.asarray(tensors[name])
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"Слишком длинное имя тензора: {name[:32]}...")
        if array.ndim > 0xFF:
            raise ValueError(f"Тензор '{name}': ранг {array.ndim} не поддерживается")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    body = b"".join(chunks)
    return body + _digest(body)


def save_checkpoint(path: Union[str, Path], tensors: Mapping[str, np.ndarray]) -> str:
    """Сохраняет тензоры в файл BPRM и возвращает hex контрольной суммы."""
    data = _encode(tensors)
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(data)
    return data[-CHECKSUM_SIZE:].hex()


class _Reader:
    def __init__(self, data: bytes, source: str) -> None:
        self.data = data
        self.source = source
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise ChecksumError(f"{self.source}: файл обрезан (смещение {self.offset}, нужно {size} байт)")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _verified_body(path: Union[str, Path]) -> tuple[bytes, str]:
    source = str(path)
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 6 + CHECKSUM_SIZE or data[: len(MAGIC)] != MAGIC:
        raise ChecksumError(f"{source}: не является чекпоинтом BPRM")
    body, stored = data[:-CHECKSUM_SIZE], data[-CHECKSUM_SIZE:]
    if _digest(body) != stored:
        raise ChecksumError(f"{source}: контрольная сумма не совпадает, файл повреждён")
    return body, source


def _walk(body: bytes, source: str, with_payload: bool):
    reader = _Reader(body, source)
    reader.take(len(MAGIC))
    version, count = reader.unpack("<HI")
    if version != FORMAT_VERSION:
        raise ChecksumError(f"{source}: неподдерживаемая версия формата {version}")
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        shape = tuple(reader.unpack(f"<{rank}I"))
        header = TensorHeader(name=name, shape=shape)
        payload = reader.take(4 * header.size)
        if with_payload:
            yield header, np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(shape)
        else:
            yield header, None
    if reader.offset != len(body):
        raise ChecksumError(f"{source}: лишние байты после последнего тензора")


def load_checkpoint(path: Union[str, Path]) -> dict[str, np.ndarray]:
    """
    Читает чекпоинт, проверяя магию, версию и контрольную сумму.

    Raises:
        ChecksumError: повреждённый, обрезанный или чужой файл.
    """
    body, source = _verified_body(path)
    return {header.name: array for header, array in _walk(body, source, with_payload=True)}


def read_header(path: Union[str, Path]) -> list[TensorHeader]:
    body, source = _verified_body(path)
    return [header for header, _ in _walk(body, source, with_payload=False)]


def file_checksum(path: Union[str, Path]) -> str:
    data = Path(path).read_bytes()
    return data[-CHECKSUM_SIZE:].hex()


def content_hash(tensors: Mapping[str, np.ndarray]) -> str:
    """Хеш содержимого набора тензоров: не зависит от порядка вставки, чувствителен к любому биту."""
    digest = hashlib.sha256()
    for name in sorted(tensors):
        array = np.ascontiguousarray(tensors[name], dtype=np.float64)
        digest.update(name.encode("utf-8"))
        digest.update(repr(array.shape).encode("ascii"))
        digest.update(array.tobytes())
    return digest.hexdigest()
