"""Agent Island: a multiplayer social game for language-model agents, with
Plackett-Luce skill ranking and a same-provider voting analysis."""

from .gamelog import GameConfig, GameLog, ModelRef, parse_game_log, serialize_log
from .engine import parse_choice, run_game, seat_players, tally_votes

__version__ = "0.1.0"

__all__ = [
    "GameConfig", "GameLog", "ModelRef", "parse_game_log", "serialize_log",
    "parse_choice", "run_game", "seat_players", "tally_votes",
]
