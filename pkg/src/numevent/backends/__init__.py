"""Extractor backends for the agent-guided extraction loop."""

import importlib
import logging
import pkgutil
from typing import Dict, List, Type

from ..age import ExtractorBackend
from ..errors import UnknownBackend

logger = logging.getLogger(__name__)

# Registry of available extractor backends
_backends: Dict[str, Type[ExtractorBackend]] = {}


def register_backend(name: str, backend_class: Type[ExtractorBackend]) -> None:
    """Register an extractor backend under ``name``.

    Args:
        name: Name used on the command line and in configuration
        backend_class: ExtractorBackend subclass
    """
    _backends[name] = backend_class
    logger.debug(f"Registered extractor backend: {name}")


def get_available_backends() -> List[str]:
    """Names of the registered backends, sorted."""
    return sorted(_backends)


def get_backend(name: str) -> Type[ExtractorBackend]:
    """Look up a backend class by name.

    Raises:
        UnknownBackend: If nothing is registered under ``name``.
    """
    try:
        return _backends[name]
    except KeyError:
        raise UnknownBackend(
            f"Unknown extractor backend {name!r}; available: {', '.join(get_available_backends())}"
        ) from None


# Import all modules in this package so they can register themselves
for _, _module_name, _ in pkgutil.iter_modules(__path__):
    try:
        importlib.import_module(f"{__name__}.{_module_name}")
    except ImportError as e:
        logger.warning(f"Could not import extractor backend module {_module_name}: {e}")
