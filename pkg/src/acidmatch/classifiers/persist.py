"""Versioned model files: a magic line followed by a JSON body."""

from __future__ import annotations

import json

from ..errors import ModelFormatError, ModelVersionError
from .cascade import CascadeModel
from .models import TrainedModel

MAGIC = "ACIDMATCH-MODEL"
VERSION = 1


def _encode(model) -> dict:
    if isinstance(model, CascadeModel):
        return {"family": "Cascade", "stage1_threshold": model.stage1_threshold, "manifest": model.manifest,
                "stage1": _encode(model.stage1), "stage2": _encode(model.stage2)}
    return {"family": model.family, "strategy": model.strategy, "params": model.params, "manifest": model.manifest}


def _decode(body: dict):
    try:
        if body["family"] == "Cascade":
            return CascadeModel(_decode(body["stage1"]), _decode(body["stage2"]), body["stage1_threshold"],
                                body.get("manifest", {}))
        return TrainedModel(body["family"], body["strategy"], body["params"], body.get("manifest", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupt model body: {exc}") from None


def dumps_model(model) -> str:
    return f"{MAGIC} v{VERSION}\n" + json.dumps(_encode(model), sort_keys=True, indent=1) + "\n"


def loads_model(text: str):
    header, _, body = text.partition("\n")
    parts = header.strip().split(" ")
    if len(parts) != 2 or parts[0] != MAGIC or not parts[1].startswith("v"):
        raise ModelFormatError("not an acidmatch model file (bad magic header)")
    try:
        version = int(parts[1][1:])
    except ValueError:
        raise ModelFormatError(f"unreadable model version {parts[1]!r}") from None
    if version != VERSION:
        raise ModelVersionError(f"model format v{version} is not supported (expected v{VERSION})")
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt model body: {exc}") from None
    return _decode(data)


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError:
        raise ModelFormatError(f"{path}: not a text model file") from None
    return loads_model(text)
