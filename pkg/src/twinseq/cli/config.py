"""INI-style experiment configuration.

Every key belongs to a section and has a type and a default; unknown
sections or keys are rejected.  Only ``[experiment] mode`` is required.
Example::

    [experiment]
    mode = unitwin
    seeds = 0, 1, 2, 3, 4

    [train]
    lambda = 0.6
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

from ..cells import VARIANTS
from ..data.synth import SynthSpec
from ..train.loop import DEFAULT_LAMBDAS
from ..train.optim import Hyperparams


class ConfigError(ValueError):
    """Invalid, incomplete or unreadable configuration."""


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _auto_bool(text: str) -> bool | None:
    return None if text.strip().lower() == "auto" else _bool(text)


def _list(conv: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        items = [t.strip() for t in text.split(",") if t.strip()]
        return tuple(conv(t) for t in items)
    return parse


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parser_for(default) -> Callable[[str], Any]:
    if isinstance(default, tuple):
        return _list(type(default[0]))
    return type(default)


_HP = Hyperparams()
_SYNTH = SynthSpec()

# section -> key -> (parser, default); a default of ... marks a required key.
# Model, training and corpus defaults come from the dataclasses they feed.
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "experiment": {
        "name": (str, "twinseq"),
        "mode": (str, ...),
        "seeds": (_list(int), (0,)),
        "out": (str, "runs"),
    },
    "model": {
        "variant": (str, _HP.variant),
        "hidden_sizes": (_list(int), _HP.hidden_sizes),
        "batch_norm": (_auto_bool, _HP.batch_norm),
    },
    "train": {
        "lr": (float, _HP.lr),
        "lambda": (float, _HP.lam),
        "dropout": (float, _HP.dropout),
        "batch_size": (int, _HP.batch_size),
        "epochs": (int, _HP.epochs),
        "precision": (str, _HP.precision),
        "twin_stop_backward_grad": (_bool, _HP.twin_stop_backward_grad),
        "twin_init": (str, _HP.twin_init),
        "clip_norm": (float, _HP.clip_norm),
        "rms_alpha": (float, _HP.rms_alpha),
        "rms_eps": (float, _HP.rms_eps),
        "schedule_threshold": (float, _HP.schedule_threshold),
    },
    "data": {
        "corpus": (str, ""),
        "past": (int, 0),
        "future": (int, 0),
        "train_split": (str, "train"),
        "dev_split": (str, "dev"),
        "test_split": (str, "test"),
    },
    "bench": {
        "modes": (_list(str), ("unidir", "unitwin", "bidir")),
        "windows": (_list(int), (0, 5, 10, 15)),
        "lambdas": (_list(float), DEFAULT_LAMBDAS),
    },
    "synth": {f.name: (_parser_for(getattr(_SYNTH, f.name)), getattr(_SYNTH, f.name)) for f in fields(SynthSpec)},
}


@dataclass
class ExperimentConfig:
    """Parsed configuration: ``values[section][key]`` with defaults filled in."""

    values: dict[str, dict[str, Any]] = field(default_factory=dict)
    source: Path | None = None

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    def __eq__(self, other) -> bool:
        return isinstance(other, ExperimentConfig) and self.values == other.values

    @property
    def mode(self) -> str:
        return self.values["experiment"]["mode"]

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.values["experiment"]["seeds"]

    @property
    def out(self) -> Path:
        return Path(self.values["experiment"]["out"])

    @property
    def window(self) -> tuple[int, int]:
        return self.values["data"]["past"], self.values["data"]["future"]

    def override(self, section: str, key: str, value) -> None:
        if key not in SCHEMA.get(section, {}):
            raise ConfigError(f"unknown key [{section}] {key}")
        self.values[section][key] = value
        validate(self)

    def hyperparams(self, seed: int | None = None, **changes) -> Hyperparams:
        t, m = self.values["train"], self.values["model"]
        kw = dict(mode=self.mode, variant=m["variant"], hidden_sizes=m["hidden_sizes"], lr=t["lr"],
                  lam=t["lambda"], dropout=t["dropout"], batch_size=t["batch_size"], epochs=t["epochs"],
                  seed=self.seeds[0] if seed is None else seed, precision=t["precision"],
                  twin_stop_backward_grad=t["twin_stop_backward_grad"], twin_init=t["twin_init"], clip_norm=t["clip_norm"],
                  rms_alpha=t["rms_alpha"], rms_eps=t["rms_eps"],
                  schedule_threshold=t["schedule_threshold"], batch_norm=m["batch_norm"])
        kw.update(changes)
        return Hyperparams(**kw)

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(**self.values["synth"])


def validate(cfg: ExperimentConfig) -> None:
    v = cfg.values
    if v["experiment"]["mode"] not in ("unidir", "unitwin", "bidir"):
        raise ConfigError(f"[experiment] mode must be unidir, unitwin or bidir, got {v['experiment']['mode']!r}")
    if not v["experiment"]["seeds"]:
        raise ConfigError("[experiment] seeds must list at least one seed")
    if v["model"]["variant"] not in VARIANTS:
        raise ConfigError(f"[model] variant must be one of {', '.join(VARIANTS)}")
    if v["data"]["past"] < 0 or v["data"]["future"] < 0:
        raise ConfigError("[data] past and future must be non-negative")
    bad = [m for m in v["bench"]["modes"] if m not in ("unidir", "unitwin", "bidir")]
    if bad or not v["bench"]["modes"]:
        raise ConfigError(f"[bench] modes has invalid entries {bad}")
    if any(k < 0 for k in v["bench"]["windows"]) or not v["bench"]["windows"]:
        raise ConfigError("[bench] windows must be non-negative and non-empty")
    if any(lam < 0 for lam in v["bench"]["lambdas"]):
        raise ConfigError("[bench] lambdas must be non-negative")
    try:
        cfg.hyperparams()
        cfg.synth_spec()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text: str, source: Path | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(source or "<config>"))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    values = {s: {} for s in SCHEMA}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key [{section}] {key}")
            conv = SCHEMA[section][key][0]
            try:
                values[section][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
    for section, keys in SCHEMA.items():
        for key, (_, default) in keys.items():
            if key not in values[section]:
                if default is ...:
                    raise ConfigError(f"missing required key [{section}] {key}")
                values[section][key] = default
    cfg = ExperimentConfig(values, source)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path)


def serialize_config(cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    for section, keys in SCHEMA.items():
        buf.write(f"[{section}]\n")
        for key in keys:
            buf.write(f"{key} = {_fmt(cfg.values[section][key])}\n")
        buf.write("\n")
    return buf.getvalue()
