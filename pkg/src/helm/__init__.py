"""Hierarchical multi-label classification with label-specific transformer
tokens, graph message passing over the label taxonomy, and BYOL
self-supervision on unlabeled imagery."""

__version__ = "0.1.0"

from importlib import resources


def bundled_hierarchy_path(name: str) -> str:
    """Filesystem path of a hierarchy YAML shipped with the package (ucm, toy)."""
    return str(resources.files("helm").joinpath(f"hierarchies/{name}.yaml"))
