"""Agent backends: the contract the engine talks to, plus three implementations.

* ``ScriptedBackend`` replays fixed responses per (player, phase).
* ``PLVoteBackend`` is a skill-driven stochastic agent used to produce
  games with known statistics.
* ``RemoteBackend`` calls a chat-completions style HTTP endpoint.
"""

from __future__ import annotations

import enum
import logging
import os
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, Sequence, Union

import httpx
import numpy as np

from .gamelog import (
    GameConfig,
    GameLog,
    ModelRef,
    WinnerDeclared,
    draw_labels,
    new_game_id,
)

log = logging.getLogger(__name__)


class Phase(str, enum.Enum):
    SIDEBAR_SELECT = "sidebar_select"
    SIDEBAR_MESSAGE = "sidebar_message"
    PITCH = "pitch"
    ELIMINATION_VOTE = "elimination_vote"
    MEMORY = "memory"
    FINAL_PITCH = "final_pitch"
    WINNER_VOTE = "winner_vote"


CHOICE_PHASES = (Phase.SIDEBAR_SELECT, Phase.ELIMINATION_VOTE, Phase.WINNER_VOTE)


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant
    text: str


@dataclass(frozen=True)
class PromptContext:
    """Everything a backend sees for one prompt.

    ``candidates`` lists the legal labels for choice phases. ``seats`` maps
    labels to models for simulated backends only; it is never rendered into
    prompt text.
    """

    model: ModelRef
    player: str
    phase: Phase
    messages: tuple[Message, ...]
    candidates: tuple[str, ...] = ()
    seats: Mapping[str, ModelRef] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("prompt context needs at least one message")
        if self.messages[0].role != "system":
            raise ValueError("first prompt message must have role 'system'")


@dataclass(frozen=True)
class Reply:
    """A response with an optional provider reasoning trace."""

    text: str
    reasoning: str | None = None


class AgentBackend(Protocol):
    def respond(self, ctx: PromptContext) -> Union[str, Reply]: ...


class BackendError(RuntimeError):
    """The backend could not produce a response (after any retries)."""


class FixtureUnderrun(BackendError):
    def __init__(self, player: str, phase: Phase):
        super().__init__(f"fixture underrun for {player}/{phase.value}")


class ScriptedBackend:
    """Returns queued fixture texts per (player label, phase).

    ``fallback`` supplies a fixed text for phases with no queued fixture for
    that player. A key that has neither raises ``FixtureUnderrun``.
    """

    def __init__(
        self,
        fixtures: Mapping[tuple[str, Phase | str], Iterable[str]] | None = None,
        fallback: Mapping[Phase | str, str] | None = None,
    ):
        self._queues: dict[tuple[str, Phase], deque[str]] = defaultdict(deque)
        for (player, phase), texts in (fixtures or {}).items():
            self._queues[(player, Phase(phase))].extend(texts)
        self._fallback = {Phase(k): v for k, v in (fallback or {}).items()}
        self.calls: list[PromptContext] = []

    def respond(self, ctx: PromptContext) -> str:
        self.calls.append(ctx)
        queue = self._queues.get((ctx.player, ctx.phase))
        if queue:
            return queue.popleft()
        if ctx.phase in self._fallback:
            return self._fallback[ctx.phase]
        raise FixtureUnderrun(ctx.player, ctx.phase)


def _as_generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _weighted_index(weights: Sequence[float], rng: np.random.Generator) -> int:
    total = float(sum(weights))
    u = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u < acc:
            return i
    return len(weights) - 1


def sample_pl_winner(
    skills: Mapping[ModelRef, float],
    players: Sequence[ModelRef],
    rng: np.random.Generator,
) -> ModelRef:
    """Draw a game winner with probability proportional to skill."""
    if not players:
        raise ValueError("players must be nonempty")
    if len(set(players)) != len(players):
        raise ValueError("players must be pairwise distinct")
    missing = [p.id for p in players if p not in skills]
    if missing:
        raise KeyError(f"no skill for {missing}")
    return players[_weighted_index([skills[p] for p in players], rng)]


BOILERPLATE = {
    Phase.SIDEBAR_MESSAGE: "Let's keep talking after the pitches.",
    Phase.PITCH: "I have played fairly and deserve to advance.",
    Phase.FINAL_PITCH: "I played a consistent game and ask for your vote.",
    Phase.MEMORY: "Nothing notable beyond the public record.",
}


class PLVoteBackend:
    """Stochastic agent whose votes depend on hidden model skills.

    Elimination votes pick candidate c with probability proportional to
    1/skill(c); winner votes pick finalist f proportional to skill(f).
    Sidebar partners are uniform. Everything else is fixed boilerplate.
    """

    def __init__(self, skills: Mapping[ModelRef, float], rng: np.random.Generator | int | None = None):
        bad = {m.id: v for m, v in skills.items() if not v > 0}
        if bad:
            raise ValueError(f"skills must be positive: {bad}")
        self.skills = dict(skills)
        self.rng = _as_generator(rng)

    def respond(self, ctx: PromptContext) -> str:
        if ctx.phase in CHOICE_PHASES:
            cands = ctx.candidates
            if ctx.phase is Phase.SIDEBAR_SELECT:
                pick = cands[int(self.rng.integers(len(cands)))]
            else:
                lam = [self.skills[ctx.seats[c]] for c in cands]
                if ctx.phase is Phase.ELIMINATION_VOTE:
                    lam = [1.0 / x for x in lam]
                pick = cands[_weighted_index(lam, self.rng)]
            return f"<choice>{pick}</choice>"
        return BOILERPLATE[ctx.phase]


def pl_vote_backend(skills: Mapping[ModelRef, float], rng: np.random.Generator | int | None = None) -> PLVoteBackend:
    return PLVoteBackend(skills, rng)


def synthetic_outcome_logs(
    skills: Mapping[ModelRef, float],
    n_games: int,
    players_per_game: int = 7,
    seed: int = 0,
) -> list[GameLog]:
    """Winner-only logs with no dialogue; winners follow ``sample_pl_winner``.

    Each game seats ``players_per_game`` distinct models drawn uniformly
    from ``skills``. Eliminations are filled with random non-winners so the
    logs satisfy the completed-game invariants.
    """
    pool = sorted(skills)
    if players_per_game < 3 or players_per_game > len(pool):
        raise ValueError("players_per_game must be in [3, number of models]")
    rng = np.random.default_rng(seed)
    config = GameConfig(num_players=players_per_game, elimination_rounds=players_per_game - 2)
    out = []
    for _ in range(n_games):
        seat_models = [pool[i] for i in rng.choice(len(pool), players_per_game, replace=False)]
        labels = draw_labels(players_per_game, rng)
        roster = dict(zip(labels, seat_models))
        winner_model = sample_pl_winner(skills, seat_models, rng)
        winner = labels[seat_models.index(winner_model)]
        others = [lab for lab in labels if lab != winner]
        order = rng.permutation(len(others))
        eliminated = tuple(others[i] for i in order[: config.elimination_rounds])
        out.append(GameLog(
            game_id=new_game_id(rng),
            config=config,
            roster=roster,
            events=(WinnerDeclared(player=winner, votes=0),),
            eliminated=eliminated,
            winner=winner,
            completed=True,
        ))
    return out


@dataclass
class RemoteConfig:
    endpoint_url: str
    api_key_env: str = "AGENT_ISLAND_API_KEY"
    max_concurrency: int = 8
    timeout: float = 120.0
    retries: int = 3
    backoff: float = 1.0
    backoff_cap: float = 30.0
    max_output_tokens: int | None = None
    model_map: Mapping[str, str] = field(default_factory=dict)
    extra: Mapping[str, object] = field(default_factory=dict)  # temperature etc., passed through


_RETRY_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class RemoteBackend:
    """Chat-completions client with bounded retries and an in-flight cap.

    Request body: ``{"model", "messages": [{"role", "content"}], "max_tokens", **extra}``.
    Response: ``choices[0].message.content``; ``reasoning`` or
    ``reasoning_content`` on the message, when present, is kept as a trace.
    """

    def __init__(
        self,
        config: RemoteConfig,
        *,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not config.endpoint_url:
            raise ValueError("remote backend needs an endpoint_url")
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout)
        self._sem = threading.BoundedSemaphore(max(1, config.max_concurrency))
        self._sleep = sleep

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _body(self, ctx: PromptContext) -> dict:
        body: dict = {
            "model": self.config.model_map.get(ctx.model.id, ctx.model.id),
            "messages": [{"role": m.role, "content": m.text} for m in ctx.messages],
        }
        if self.config.max_output_tokens is not None:
            body["max_tokens"] = self.config.max_output_tokens
        body.update(self.config.extra)
        return body

    def respond(self, ctx: PromptContext) -> Reply:
        body = self._body(ctx)
        last_error: Exception | None = None
        for attempt in range(self.config.retries + 1):
            if attempt:
                self._sleep(min(self.config.backoff_cap, self.config.backoff * 2 ** (attempt - 1)))
            try:
                with self._sem:
                    resp = self._client.post(
                        self.config.endpoint_url, json=body, headers=self._headers(),
                        timeout=self.config.timeout,
                    )
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if resp.status_code in _RETRY_STATUS:
                last_error = BackendError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return _parse_completion(resp)
        raise BackendError(f"gave up after {self.config.retries + 1} attempts: {last_error}")


def _parse_completion(resp: httpx.Response) -> Reply:
    try:
        msg = resp.json()["choices"][0]["message"]
        content = msg.get("content") or ""
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"unexpected response shape: {exc}") from None
    if isinstance(content, list):  # content parts
        content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
    reasoning = msg.get("reasoning") or msg.get("reasoning_content")
    return Reply(text=str(content), reasoning=reasoning if isinstance(reasoning, str) else None)
