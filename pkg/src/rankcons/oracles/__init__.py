from .base import MissingPreference, OracleError, PairMemo, PreferenceOracle, RelevanceOracle, bind
from .cached import CachedOracle, CacheSchemaError, cached_oracle_load, dump_cached, parse_cached
from .synthetic import (
    SyntheticOracle,
    SyntheticOracleConfig,
    simulate_dataset,
    stable_hash,
    synthetic_preference,
    synthetic_relevance,
)

__all__ = [
    "CacheSchemaError",
    "CachedOracle",
    "MissingPreference",
    "OracleError",
    "PairMemo",
    "PreferenceOracle",
    "RelevanceOracle",
    "SyntheticOracle",
    "SyntheticOracleConfig",
    "bind",
    "cached_oracle_load",
    "dump_cached",
    "parse_cached",
    "simulate_dataset",
    "stable_hash",
    "synthetic_preference",
    "synthetic_relevance",
]
