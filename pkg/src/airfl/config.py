"""JSON experiment configuration for the command-line runner.

Every section rejects unknown keys. Values are converted into the library's
own config objects by the ``to_*`` helpers, which apply their validation too.
"""

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, ValidationError

from .channel import CHANNEL_MODES, LOS_MA
from .fltrain.train import FADING, SCHEMES, STATIC, DataPaths, TrainConfig
from .ota import OtaConfig
from .pdd import PddConfig
from .pdd.state import PER_USER, SHARED
from .pdd.updates import BINARY_EXACT, PAPER_CLOSED_FORM

Scheme = Literal[SCHEMES]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class OtaSection(_Strict):
    max_power_dbm: float = 0.0
    noise_power_dbm: Optional[float] = -20.0     # null means a noiseless receiver
    wavelength: float = Field(1.0, gt=0)


class PddSection(_Strict):
    kappa0: float = Field(0.1, gt=0)
    penalty_decay: float = Field(0.7, gt=0, lt=1)
    inner_tol: float = Field(1e-6, gt=0)
    outer_tol: float = Field(1e-4, gt=0)
    max_inner: int = Field(50, ge=1)
    max_outer: int = Field(60, ge=1)
    e_update_mode: Literal[BINARY_EXACT, PAPER_CLOSED_FORM] = BINARY_EXACT
    layout_mode: Literal[SHARED, PER_USER] = SHARED


class DataSection(_Strict):
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None


class TrainSection(_Strict):
    rounds: int = Field(50, ge=1)
    learning_rate: float = Field(0.05, gt=0)
    users: int = Field(10, ge=1)
    per_user_samples: int = Field(270, ge=1)
    n_antennas: int = Field(4, ge=1)
    channel_mode: Literal[STATIC, FADING] = STATIC
    test_size: int = Field(2000, ge=1)
    distance_range: tuple[float, float] = (10.0, 100.0)
    dc_threshold: Optional[float] = Field(None, gt=0)
    aps_resolution: Optional[float] = Field(None, gt=0)
    record_time: bool = False


class InstanceSection(_Strict):
    """A single scheduling instance for ``solve`` and ``oracle``."""

    users: int = Field(8, ge=1)
    n_antennas: int = Field(4, ge=1)
    channel: Literal[CHANNEL_MODES] = LOS_MA
    distance_range: tuple[float, float] = (10.0, 100.0)
    sample_counts: Optional[list[float]] = None     # default: 270 per user
    oracle_step: float = Field(1e-2, gt=0)
    diagnostics: bool = False


class ExperimentConfig(_Strict):
    seeds: list[NonNegativeInt] = Field(default_factory=lambda: [0], min_length=1)
    schemes: list[Scheme] = Field(default_factory=lambda: [SCHEMES[0]], min_length=1)
    output_dir: str = "airfl-out"
    train: TrainSection = TrainSection()
    ota: OtaSection = OtaSection()
    pdd: PddSection = PddSection()
    data: DataSection = DataSection()
    instance: InstanceSection = InstanceSection()

    def to_ota(self):
        noise = float("-inf") if self.ota.noise_power_dbm is None else self.ota.noise_power_dbm
        return OtaConfig.from_dbm(self.ota.max_power_dbm, noise, self.ota.wavelength)

    def to_pdd(self):
        return PddConfig(**self.pdd.model_dump())

    def to_train(self, scheme, seed):
        return TrainConfig(scheme=scheme, seed=seed, ota=self.to_ota(), pdd=self.to_pdd(),
                           data=DataPaths(**self.data.model_dump()), **self.train.model_dump())


class ConfigError(ValueError):
    """Unreadable or invalid configuration; the message locates the problem."""


def _line_of(text, key):
    """1-based line of the first occurrence of the JSON string ``key`` in the raw text, if any."""
    needle = json.dumps(key)
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def parse_config(text, source="<config>"):
    """Parse and validate a JSON document into an ``ExperimentConfig``."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            keys = [p for p in err["loc"] if isinstance(p, str)]
            # a bad string value is easier to find than its key
            line = _line_of(text, err["input"]) if isinstance(err.get("input"), str) else None
            if line is None and keys:
                line = _line_of(text, keys[-1])
            where = f"line {line}: " if line else ""
            msgs.append(f"{source}: {where}field '{loc}': {err['msg']}")
        raise ConfigError("\n".join(msgs)) from exc


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return parse_config(text, str(path))


__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config"]
