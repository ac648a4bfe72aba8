"""Plackett-Luce skill ranking."""

from .sampler import (
    OutcomeRecord,
    Posterior,
    SamplerConfig,
    SamplerError,
    SkillPosterior,
    count_games,
    count_wins,
    extract_outcomes,
    gibbs_sample,
)
from .summary import (
    H2H_HEADER,
    RANKING_HEADER,
    HeadToHead,
    RankingRow,
    h2h_csv,
    h2h_text,
    head_to_head,
    pairwise_table,
    rankings_csv,
    rankings_text,
    summarize,
    summarize_posterior,
)

__all__ = [
    "OutcomeRecord", "Posterior", "SamplerConfig", "SamplerError", "SkillPosterior",
    "count_games", "count_wins", "extract_outcomes", "gibbs_sample",
    "H2H_HEADER", "RANKING_HEADER", "HeadToHead", "RankingRow", "h2h_csv", "h2h_text", "head_to_head", "pairwise_table",
    "rankings_csv", "rankings_text", "summarize", "summarize_posterior",
]
