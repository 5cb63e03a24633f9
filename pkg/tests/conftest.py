"""Shared fixtures: the bundled vocabulary, corpus and rule-based backend."""

from pathlib import Path

import pytest

from numevent.backends.rule_based import RuleBasedBackend
from numevent.dynamics import ArParams, IrfKernel
from numevent.generator import GeneratorConfig, MarkTable
from numevent.hawkes import HawkesParams
from numevent.io import load_vocabulary, read_documents, read_json
from numevent.vocab import Vocabulary

FIXTURES = Path(__file__).parent / "fixtures"

KERNEL = (
    (1.0, 0.5, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005),
    (-0.8, -0.4, -0.2, -0.1, -0.05, -0.03, -0.02, -0.01, -0.01),
)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def vocabulary() -> Vocabulary:
    return load_vocabulary(FIXTURES / "vocabulary.json")


@pytest.fixture
def corpus():
    return read_documents(FIXTURES / "corpus.jsonl")


@pytest.fixture
def rule_backend() -> RuleBasedBackend:
    return RuleBasedBackend.from_config(read_json(FIXTURES / "rule_based.json"))


def mark_table(direction: str = "down") -> MarkTable:
    return MarkTable(
        slots={
            "actor": {"opec": 1.0},
            "action": {"cut": 1.0},
            "object": {"production": 1.0},
            "direction": {direction: 1.0},
        }
    )


def make_config(
    vocabulary: Vocabulary,
    mu=(0.0, 0.0),
    alpha=((0.0, 0.0), (0.0, 0.0)),
    kernel=KERNEL,
    phi=(0.0, 0.0, 0.0, 0.0),
    sigma: float = 0.0,
    T: int = 200,
    m: int = 5,
    **overrides,
) -> GeneratorConfig:
    """A two-type generator config; noiseless and event-free unless told otherwise."""
    fields = dict(
        hawkes=HawkesParams(mu=mu, alpha=alpha, beta=1.0),
        irf=IrfKernel.from_array(kernel),
        ar=ArParams(phi=phi, sigma=sigma),
        mark_tables={0: mark_table(), 1: mark_table()},
        vocabulary=vocabulary,
        T=T,
        y0=100.0,
        m=m,
        seed=3,
    )
    fields.update(overrides)
    return GeneratorConfig(**fields)


@pytest.fixture
def config_factory(vocabulary):
    def factory(**kwargs) -> GeneratorConfig:
        return make_config(vocabulary, **kwargs)

    return factory
