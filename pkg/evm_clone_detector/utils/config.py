"""
Run configuration.

A RunConfig is assembled from defaults, an optional `key=value` config file
and command-line flags, in that order of precedence.
"""

import secrets
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..detection.detector import IndexMode
from ..detection.evaluation import EvaluationSettings
from ..models.data_models import Hyperparameters
from ..models.exceptions import ConfigError
from ..parsers.opcodes import DEFAULT_FORK, opcode_table
from ..parsers.tokenizer import NormalizationPolicy
from .logger import Logger

logger = Logger(__name__)

_DEFAULTS = Hyperparameters()


class RunConfig(BaseModel):
    """Validated settings of one command run."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    corpus: Optional[str] = None
    labels: Optional[str] = None
    model: Optional[str] = None

    dim: int = Field(default=_DEFAULTS.dim, ge=1)
    negative: int = Field(default=_DEFAULTS.negative, ge=1)
    alpha: float = Field(default=_DEFAULTS.alpha, gt=0)
    epochs: int = Field(default=_DEFAULTS.epochs, ge=0)
    infer_epochs: Optional[int] = Field(default=None, ge=0)
    min_count: int = Field(default=_DEFAULTS.min_count, ge=1)
    seed: Optional[int] = _DEFAULTS.seed

    threshold: float = Field(default=0.8, gt=0)
    top_k: int = Field(default=5, ge=1)
    threads: int = Field(default=1, ge=1)
    folds: int = Field(default=10, ge=2)

    fork: str = DEFAULT_FORK
    policy: NormalizationPolicy = NormalizationPolicy.DEFAULT
    index_mode: IndexMode = IndexMode.REEMBED
    skip_boilerplate: bool = False

    @field_validator("fork")
    @classmethod
    def _known_fork(cls, value: str) -> str:
        value = value.strip().lower()
        try:
            opcode_table(value)
        except ConfigError as e:
            raise ValueError(str(e)) from None
        return value

    @field_validator("policy", mode="before")
    @classmethod
    def _policy_alias(cls, value: Any) -> Any:
        return NormalizationPolicy.from_string(value) if isinstance(value, str) else value

    @model_validator(mode="after")
    def _check(self) -> 'RunConfig':
        if self.threads == 1 and self.seed is None:
            raise ValueError("a seed is required in deterministic (single-threaded) mode")
        return self

    @property
    def deterministic(self) -> bool:
        return self.threads == 1

    def hyperparameters(self) -> Hyperparameters:
        seed = self.seed if self.seed is not None else secrets.randbits(31)
        return Hyperparameters(
            dim=self.dim,
            negative=self.negative,
            alpha=self.alpha,
            epochs=self.epochs,
            infer_epochs=self.infer_epochs,
            min_count=self.min_count,
            seed=seed,
            workers=self.threads,
        )

    def evaluation_settings(self) -> EvaluationSettings:
        return EvaluationSettings(
            hyperparams=self.hyperparameters(),
            policy=self.policy,
            fork=self.fork,
            threshold=self.threshold,
            top_k=self.top_k,
            index_mode=self.index_mode,
            skip_boilerplate=self.skip_boilerplate,
        )


def _normalise_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def read_config_file(path: str) -> Dict[str, str]:
    """
    Read a `key=value` config file.

    Raises:
        ConfigError: When the file is missing or names an unknown key
    """
    try:
        with open(path, encoding="utf-8"):
            pass
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None

    values = {_normalise_key(key): value for key, value in dotenv_values(path).items() if value is not None}
    unknown = sorted(set(values) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in config file {path}: {', '.join(unknown)}")
    return values


def build_config(overrides: Optional[Mapping[str, Any]] = None, config_file: Optional[str] = None) -> RunConfig:
    """
    Merge defaults, config file values and overrides into a RunConfig.

    Args:
        overrides: Values that win over the file (None values are ignored)
        config_file: Optional `key=value` file

    Raises:
        ConfigError: On unknown keys or values that fail validation
    """
    values: Dict[str, Any] = {}
    if config_file:
        values.update(read_config_file(config_file))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[_normalise_key(key)] = value

    # "none" in a file unsets optional values
    for key in ("seed", "infer_epochs"):
        if isinstance(values.get(key), str) and values[key].strip().lower() in ("", "none"):
            values[key] = None

    try:
        config = RunConfig(**values)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"invalid configuration: {problems}") from None

    if config.threshold > 1:
        logger.warning(f"threshold {config.threshold} exceeds 1; no clone can match")
    if not config.deterministic:
        logger.warning(f"{config.threads} training threads: results are not reproducible across runs")
    return config
