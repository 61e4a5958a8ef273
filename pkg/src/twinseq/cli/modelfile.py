"""Model files: one ``.npz`` archive holding every parameter array, the
batch-norm running statistics and a JSON ``__meta__`` entry with the
architecture."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..cells import StackConfig, StackParams, init_stack

FORMAT_VERSION = 1


def model_arrays(model: StackParams) -> dict[str, np.ndarray]:
    arrays = {name: p.data for name, p in model.named_parameters()}
    for name, state in model.batch_norm_states():
        arrays[f"{name}.running_mean"] = state.running_mean
        arrays[f"{name}.running_var"] = state.running_var
    return arrays


def save_model(model: StackParams, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = asdict(model.config)
    meta = {"format": FORMAT_VERSION, "config": cfg, "dtype": str(model.classifier.W.dtype), **(extra or {})}
    arrays = model_arrays(model)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)
    return path


def load_model(path) -> tuple[StackParams, dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["__meta__"]))
        if meta.get("format") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model format {meta.get('format')}")
        cfg = meta["config"]
        cfg["hidden_sizes"] = tuple(cfg["hidden_sizes"])
        config = StackConfig(**cfg)
        model = init_stack(config, 0, np.dtype(meta["dtype"]).type)
        expected = model_arrays(model)
        stored = set(archive.files) - {"__meta__"}
        if stored != set(expected):
            missing, extra = set(expected) - stored, stored - set(expected)
            raise ValueError(f"{path}: parameter mismatch (missing {sorted(missing)}, unexpected {sorted(extra)})")
        params = dict(model.named_parameters())
        for name, p in params.items():
            p.data = archive[name].astype(p.dtype)
        for name, state in model.batch_norm_states():
            state.running_mean = archive[f"{name}.running_mean"].astype(state.running_mean.dtype)
            state.running_var = archive[f"{name}.running_var"].astype(state.running_var.dtype)
    return model, meta
