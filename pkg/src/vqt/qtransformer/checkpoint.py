"""Model checkpoints as ``.npz`` archives.

Layout: a ``__meta__`` entry holding UTF-8 JSON ``{"format": "vqt-checkpoint",
"version": 1, "config": {...}, "tensors": [names]}`` plus one float64 array
per ``state_dict`` entry, keyed by its parameter name.
"""

from __future__ import annotations

import json

import numpy as np
import torch

from vqt.qtransformer.config import ModelConfig
from vqt.qtransformer.model import VQTModel

FORMAT = "vqt-checkpoint"
VERSION = 1


def save_checkpoint(path, model: VQTModel) -> None:
    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    meta = {"format": FORMAT, "version": VERSION, "config": model.cfg.to_dict(), "tensors": sorted(state)}
    blob = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=blob, **state)


def load_checkpoint(path) -> VQTModel:
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(archive["__meta__"].tobytes().decode("utf-8"))
        if meta.get("format") != FORMAT:
            raise ValueError(f"{path} is not a model checkpoint")
        if meta.get("version") != VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        model = VQTModel(ModelConfig.from_dict(meta["config"]))
        state = {k: torch.as_tensor(archive[k]) for k in meta["tensors"]}
    model.load_state_dict(state)
    return model
