"""Experiment configuration: a flat ``key = value`` text file plus flag overrides.

Grammar: one ``key = value`` per line; ``#`` starts a comment; blank lines
are ignored; lists are comma-separated; booleans are ``true``/``false``.
Unknown keys are errors.  Model hyperparameters use the ``ModelConfig``
field names (``d_model``, ``nq_addr`` ...).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from vqt.qtransformer.config import ModelConfig

MODES = ("exact", "sampled")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    shots: int | None = None  # None: the command's own default
    mode: str = "sampled"
    backend: str = "statevector"
    noise_p2q: float = 0.0
    noise_ro: float = 0.0
    trajectories: int | None = None
    # product-accuracy
    batches: int = 30
    batch_sizes: tuple[int, ...] = (4, 8, 16, 32, 64, 128)
    # attention-compare
    B: int = 10
    T: int = 10
    d: int = 10
    sweep: tuple[int, ...] = ()
    # train / ingest-check
    corpus: str = ""
    epochs: int = 50
    runs: int = 1
    val_fraction: float = 0.0  # tail of the corpus held out for validation
    # resources
    sizes: tuple[int, ...] = ()
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.backend not in ("statevector", "analytic"):
            raise ConfigError(f"backend must be statevector or analytic, got {self.backend!r}")
        for name in ("batches", "B", "T", "d", "epochs", "runs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.shots is not None and self.shots < 1:
            raise ConfigError(f"shots must be >= 1, got {self.shots}")
        if any(n < 1 for n in self.batch_sizes + self.sizes + self.sweep):
            raise ConfigError("batch sizes, sizes and sweep entries must be >= 1")
        for name in ("noise_p2q", "noise_ro", "val_fraction"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {getattr(self, name)}")

    def flat(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "model"}
        out.update(self.model.to_dict())
        return out

    def echo(self) -> str:
        lines = [f"# experiment: {self.experiment}"]
        for k, v in sorted(self.flat().items()):
            if k == "experiment":
                continue
            if isinstance(v, (tuple, list)):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif v is None:
                v = ""
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        blob = json.dumps(self.flat(), sort_keys=True, default=list).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


_EXP_FIELDS = {f.name: f for f in fields(ExperimentConfig) if f.name not in ("experiment", "model")}
_MODEL_FIELDS = {f.name: f for f in fields(ModelConfig)}
_INT_LISTS = ("batch_sizes", "sweep", "sizes")
_OPTIONAL_INTS = ("shots", "trajectories")


def _convert(key: str, raw: str, default):
    raw = raw.strip()
    try:
        if key in _INT_LISTS:
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if key in _OPTIONAL_INTS:
            return int(raw) if raw else None
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _EXP_FIELDS and key not in _MODEL_FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        entries[key] = value
    return entries


def resolve(experiment: str, entries: dict[str, str], overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from file ``entries`` (strings) and already-typed ``overrides``."""
    defaults_exp = ExperimentConfig(experiment)
    exp_kw, model_kw = {}, {}
    for key, raw in entries.items():
        if key in _EXP_FIELDS:
            exp_kw[key] = _convert(key, raw, getattr(defaults_exp, key))
        elif key in _MODEL_FIELDS:
            model_kw[key] = _convert(key, raw, getattr(defaults_exp.model, key))
        else:
            raise ConfigError(f"unknown key {key!r}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        (exp_kw if key in _EXP_FIELDS else model_kw)[key] = value
    # for training, the shot budget is the model's per-address shot count
    if experiment == "train" and exp_kw.get("shots") is not None:
        model_kw.setdefault("shots", exp_kw["shots"])
    try:
        model = ModelConfig(**model_kw)
        return replace(defaults_exp, model=model, **exp_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(experiment: str, path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    entries = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        entries = parse_config_text(text, str(path))
    return resolve(experiment, entries, overrides)
