"""Synthetic series/event datasets, guided event extraction and event-level evaluation."""

__version__ = "0.1.0"

from .config import NumeventConfig
from .evaluator import MatchRule, match_sets, monthly_report
from .generator import GeneratorConfig, force_events, generate
from .hawkes import EventSequence, HawkesParams, fit, simulate
from .vocab import AaodEvent, EventSet, Vocabulary, validate_event

__all__ = [
    "AaodEvent",
    "EventSequence",
    "EventSet",
    "GeneratorConfig",
    "HawkesParams",
    "MatchRule",
    "NumeventConfig",
    "Vocabulary",
    "fit",
    "force_events",
    "generate",
    "match_sets",
    "monthly_report",
    "simulate",
    "validate_event",
]
