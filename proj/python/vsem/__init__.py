"""Multimodal knowledge graph construction and retrieval."""

from ._vsem import (
    Graph,
    Index,
    Provider,
    VsemError,
    build,
    languages,
    map_relation_label,
    relation_types,
    report_from_ranks,
)

__all__ = [
    "Graph",
    "Index",
    "Provider",
    "VsemError",
    "build",
    "error_code",
    "languages",
    "map_relation_label",
    "relation_types",
    "report_from_ranks",
]


def error_code(exc: VsemError) -> str:
    """Stable code name of a VsemError, e.g. "UnknownNode"."""
    return exc.args[1] if len(exc.args) > 1 else ""
