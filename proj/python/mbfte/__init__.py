"""Covert messaging over model-sampled text, toy-model bindings."""

from ._mbfte import (
    KeyBundle,
    MbfteError,
    bayes_posterior,
    bit_entropy,
    decodable,
    distribution,
    keygen_from_phrase,
    keygen_random,
    outcome_table,
    receive,
    send,
)

__all__ = [
    "KeyBundle",
    "MbfteError",
    "bayes_posterior",
    "bit_entropy",
    "decodable",
    "distribution",
    "keygen_from_phrase",
    "keygen_random",
    "outcome_table",
    "receive",
    "send",
]
