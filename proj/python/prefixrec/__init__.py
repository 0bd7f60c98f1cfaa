"""Prefix-aware generative recommendation: python bindings for the C++ core."""

from ._core import (
    Codebooks,
    ConfigError,
    DataError,
    TableScorer,
    TheoryReport,
    TokenizedCatalog,
    beam_search_table,
    fit_codebooks,
    full_sort_table,
    hard_max_loss,
    pairwise_loss,
    tokenize,
    update_weights,
    verify_lower_bound,
    verify_weight_program,
)

__all__ = [
    "Codebooks",
    "ConfigError",
    "DataError",
    "TableScorer",
    "TheoryReport",
    "TokenizedCatalog",
    "beam_search_table",
    "fit_codebooks",
    "full_sort_table",
    "hard_max_loss",
    "pairwise_loss",
    "tokenize",
    "update_weights",
    "verify_lower_bound",
    "verify_weight_program",
]
