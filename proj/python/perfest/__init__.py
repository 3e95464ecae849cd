"""Label-free performance estimation for LLM services."""

from ._core import (
    MetaModel,
    PerfestError,
    features,
    gap,
    interpolate_profile,
    max_ent,
    nll,
    pearson,
    ppl,
    run_cli,
    select_features,
)

__all__ = [
    "MetaModel",
    "PerfestError",
    "features",
    "gap",
    "interpolate_profile",
    "max_ent",
    "nll",
    "pearson",
    "ppl",
    "run_cli",
    "select_features",
]
