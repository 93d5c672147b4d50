"""Deterministic JSON / JSONL helpers.

Floats are emitted with 17 significant digits (lossless for float64), so
write -> read -> write is byte-identical and equal seeds give equal files.
NaN and infinities are rejected in both directions.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

from .errors import ParseError, SchemaError


def dumps_canonical(obj: Any) -> str:
    parts: list[str] = []
    _emit(obj, parts)
    return "".join(parts)


def _emit(obj: Any, parts: list[str]) -> None:
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, int):
        parts.append(str(obj))
    elif isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite number {obj} cannot be serialized")
        parts.append(format(obj, ".17g"))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        parts.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                parts.append(",")
            parts.append(json.dumps(str(key), ensure_ascii=False))
            parts.append(":")
            _emit(value, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, value in enumerate(obj):
            if i:
                parts.append(",")
            _emit(value, parts)
        parts.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _reject_constant(name: str) -> float:
    raise ValueError(f"forbidden JSON constant {name}")


def loads_strict(text: str) -> Any:
    """json.loads that rejects NaN/Infinity literals."""
    return json.loads(text, parse_constant=_reject_constant)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps_canonical(record))
            fh.write("\n")


def read_jsonl(path: str | Path, decode: Callable[[dict], Any]) -> Iterator[Any]:
    """Yield decode(obj) per line; ParseError carries the 1-based line number."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = loads_strict(line)
            except ValueError as exc:
                raise ParseError(line_number, str(exc)) from exc
            try:
                yield decode(obj)
            except SchemaError as exc:
                raise SchemaError(exc.field, f"line {line_number}: {exc}") from exc


def require_field(obj: dict, field: str, path: str = ""):
    name = f"{path}.{field}" if path else field
    if not isinstance(obj, dict) or field not in obj:
        raise SchemaError(name, "missing")
    return obj[field]


def as_finite_float(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(name, f"expected a number, got {type(value).__name__}")
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(name, "NaN/Inf forbidden")
    return value


def as_float_list(value, name: str, length: int) -> list[float]:
    if not isinstance(value, list) or len(value) != length:
        raise SchemaError(name, f"expected a list of {length} numbers")
    return [as_finite_float(v, f"{name}[{i}]") for i, v in enumerate(value)]
