"""Configuration module for numevent."""

import os
from typing import Literal

from pydantic import BaseModel, Field


class ExtractionConfig(BaseModel):
    """Agent-guided extraction settings."""

    backend: str = "rule_based"
    """Name of the registered extractor backend."""

    threshold: float = Field(default=0.5, ge=0.0)
    """Aggregated suggestion score a token needs to enter the vocabulary."""

    max_rounds: int = Field(default=3, ge=1)
    """Round budget for the select-expand-iterate loop."""

    concurrency: int = Field(default=8, ge=1)
    """Maximum number of documents extracted concurrently within a round."""


class HawkesFitConfig(BaseModel):
    """Hawkes maximum-likelihood settings."""

    max_iter: int = Field(default=5000, ge=1)
    """Iteration budget for projected gradient ascent."""

    tolerance: float = Field(default=1e-8, gt=0.0)
    """Relative log-likelihood change that counts as converged."""

    stationarity_margin: float = Field(default=0.999, gt=0.0, lt=1.0)
    """Spectral radius cap enforced on alpha during projection."""

    explosion_cap: int = Field(default=10_000_000, ge=1)
    """Maximum number of simulated events before the run is aborted."""


class EstimationConfig(BaseModel):
    """Local-projection settings."""

    horizon: int = Field(default=8, ge=0)
    """Maximum impulse-response horizon H in steps."""

    control_lags: int = Field(default=4, ge=0)
    """Number of lagged differences used as controls."""

    treatment: Literal["indicator", "count"] = "indicator"
    """How same-type events sharing a step enter the regression."""


class NumeventConfig(BaseModel):
    """Main configuration class for numevent."""

    extraction: ExtractionConfig = Field(default_factory=ExtractionConfig)
    """Extraction loop configuration."""

    hawkes: HawkesFitConfig = Field(default_factory=HawkesFitConfig)
    """Hawkes fitting and simulation configuration."""

    estimation: EstimationConfig = Field(default_factory=EstimationConfig)
    """Impulse-response estimation configuration."""

    log_level: str = "INFO"
    """Default logging level for the command-line interface."""

    @classmethod
    def from_env(cls) -> "NumeventConfig":
        """Load configuration from environment variables.

        Returns:
            NumeventConfig: Configuration object loaded from environment variables.
        """
        extraction = ExtractionConfig(
            backend=os.getenv("NUMEVENT_BACKEND", "rule_based"),
            threshold=float(os.getenv("NUMEVENT_THRESHOLD", "0.5")),
            max_rounds=int(os.getenv("NUMEVENT_MAX_ROUNDS", "3")),
            concurrency=int(os.getenv("NUMEVENT_CONCURRENCY", "8")),
        )

        hawkes = HawkesFitConfig(
            max_iter=int(os.getenv("NUMEVENT_HAWKES_MAX_ITER", "5000")),
            tolerance=float(os.getenv("NUMEVENT_HAWKES_TOLERANCE", "1e-8")),
            stationarity_margin=float(os.getenv("NUMEVENT_STATIONARITY_MARGIN", "0.999")),
            explosion_cap=int(os.getenv("NUMEVENT_EXPLOSION_CAP", "10000000")),
        )

        estimation = EstimationConfig(
            horizon=int(os.getenv("NUMEVENT_IRF_HORIZON", "8")),
            control_lags=int(os.getenv("NUMEVENT_CONTROL_LAGS", "4")),
            treatment=os.getenv("NUMEVENT_IRF_TREATMENT", "indicator"),
        )

        return cls(
            extraction=extraction,
            hawkes=hawkes,
            estimation=estimation,
            log_level=os.getenv("NUMEVENT_LOG_LEVEL", "INFO").upper(),
        )

    @classmethod
    def from_dotenv(cls, env_file: str = ".env") -> "NumeventConfig":
        """Load configuration from .env file.

        Args:
            env_file: Path to the .env file.

        Returns:
            NumeventConfig: Configuration object loaded from .env file.
        """
        try:
            from dotenv import load_dotenv
            load_dotenv(dotenv_path=env_file)
        except ImportError:
            pass  # Dotenv is optional

        return cls.from_env()
