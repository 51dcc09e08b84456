"""JSONL readers and writers for instance and result files."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from .core import GlobalAttention, SourceDocument
from .model import Instance


class InvalidInput(ValueError):
    pass


def instance_from_dict(obj: dict) -> Instance:
    try:
        source = SourceDocument(tuple(obj["source"]), obj.get("features"))
        ref = obj.get("reference")
        ga = obj.get("global_attention")
        return Instance(
            id=str(obj["id"]),
            source=source,
            reference=None if ref is None else tuple(int(t) for t in ref),
            global_attention=None if ga is None else GlobalAttention(ga),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"bad instance record: {exc}") from exc


def instance_to_dict(inst: Instance) -> dict:
    obj = {"id": inst.id, "source": list(inst.source.tokens)}
    if inst.source.features is not None:
        obj["features"] = inst.source.features.tolist()
    if inst.reference is not None:
        obj["reference"] = list(inst.reference)
    if inst.global_attention is not None:
        obj["global_attention"] = inst.global_attention.values.tolist()
    return obj


def read_jsonl(path) -> list:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise InvalidInput(f"{path}:{lineno}: {exc}") from exc
    return rows


def write_jsonl(path, rows: Iterable[dict]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def read_instances(path) -> list:
    instances = [instance_from_dict(obj) for obj in read_jsonl(path)]
    ids = [inst.id for inst in instances]
    if len(set(ids)) != len(ids):
        raise InvalidInput(f"{path}: duplicate instance ids")
    return instances


def write_instances(path, instances: Iterable[Instance]) -> None:
    write_jsonl(path, (instance_to_dict(i) for i in instances))
