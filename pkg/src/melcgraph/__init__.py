"""melcgraph: cell-graph construction and node classification for multiplex
immunofluorescence (MELC-style) tissue data.

Submodules are imported lazily so that the command-line entry point can cap
BLAS thread pools before numpy is first loaded.
"""

from importlib import import_module

__version__ = "0.1.0"

_SUBMODULES = (
    "data",
    "ingest",
    "simulate",
    "graph",
    "reduction",
    "tsne",
    "umap",
    "grand",
    "trees",
    "metrics",
    "search",
    "plots",
    "pipeline",
    "cli",
)

__all__ = list(_SUBMODULES) + ["__version__"]


def __getattr__(name):
    if name in _SUBMODULES:
        return import_module(f"{__name__}.{name}")
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
