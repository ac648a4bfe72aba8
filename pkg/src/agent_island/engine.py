"""The Agent Island game loop.

Per elimination round: sidebars, pitches, private elimination votes, one
elimination announced to everyone, then memory consolidation for every
player (eliminated players included). After the last round the finalists
pitch and the jury of eliminated players votes for the winner.

All randomness comes from one ``numpy.random.Generator`` seeded with
``GameConfig.seed``. Draw order: player labels (``draw_labels``), the game
id (16 bytes), then per round the sidebar permutation, fallback partners,
the pitch permutation and the elimination tie-break; finally the
final-pitch permutation and the jury tie-break. Tie-breaks draw only when
there is a tie.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .agents import AgentBackend, BackendError, Message, Phase, PromptContext, Reply
from .gamelog import (
    FAILED,
    PARSED,
    RETRIED_THEN_FAILED,
    RETRIED_THEN_PARSED,
    Elimination,
    EliminationVote,
    FinalPitch,
    GameConfig,
    GameEvent,
    GameFailed,
    GameLog,
    MemoryUpdate,
    ModelRef,
    Pitch,
    ReasoningTrace,
    SidebarMessage,
    SidebarSelect,
    WinnerDeclared,
    WinnerVote,
    draw_labels,
    is_label,
    new_game_id,
)
from .prompts import Templates, default_templates

log = logging.getLogger(__name__)

_CHOICE_RE = re.compile(r"<choice>(.*?)</choice>", re.IGNORECASE | re.DOTALL)


@dataclass(frozen=True)
class ParseResult:
    choice: str | None
    status: str
    raw_text: str


def parse_choice(raw: str, candidates: Iterable[str]) -> ParseResult:
    """Read the last ``<choice>LABEL</choice>`` tag in ``raw``.

    Tag and label match case-insensitively; the label must be one of
    ``candidates`` or the parse fails.
    """
    cands = {c.upper(): c for c in candidates}
    if not cands:
        raise ValueError("candidates must be nonempty")
    matches = _CHOICE_RE.findall(raw or "")
    if matches:
        picked = cands.get(matches[-1].strip().upper())
        if picked is not None:
            return ParseResult(picked, PARSED, raw)
    return ParseResult(None, FAILED, raw)


def _tally(votes: Sequence[str], candidates: Iterable[str], rng: np.random.Generator
           ) -> tuple[str, int, tuple[str, ...]]:
    cands = sorted(set(candidates))
    if not cands:
        raise ValueError("candidates must be nonempty")
    counts = Counter(votes)
    stray = set(counts) - set(cands)
    if stray:
        raise ValueError(f"votes outside candidate set: {sorted(stray)}")
    top = max(counts[c] for c in cands)
    maximal = [c for c in cands if counts[c] == top]
    if len(maximal) == 1:
        return maximal[0], top, ()
    return maximal[int(rng.integers(len(maximal)))], top, tuple(maximal)


def tally_votes(votes: Sequence[str], candidates: Iterable[str], rng: np.random.Generator) -> str:
    """Plurality winner; ties go to one uniform draw among the leaders."""
    return _tally(votes, candidates, rng)[0]


class GameAborted(Exception):
    def __init__(self, event: GameFailed):
        super().__init__(event.error)
        self.event = event


@dataclass
class GameState:
    config: GameConfig
    roster: Mapping[str, ModelRef]
    rng: np.random.Generator
    active: list[str]
    eliminated: list[str] = field(default_factory=list)
    round: int = 1
    memories: dict[str, str] = field(default_factory=dict)
    events: list[GameEvent] = field(default_factory=list)
    news: dict[str, list[str]] = field(default_factory=dict)
    templates: Templates = field(default_factory=default_templates)
    rules: dict[str, str] = field(default_factory=dict)

    @classmethod
    def new(cls, config: GameConfig, roster: Mapping[str, ModelRef],
            templates: Templates | None = None) -> GameState:
        rng = np.random.default_rng(config.seed)
        draw_labels(config.num_players, rng)  # keeps the stream aligned with seat_players()
        labels = sorted(roster)
        return cls(
            config=config,
            roster=dict(roster),
            rng=rng,
            active=labels,
            memories={p: "" for p in labels},
            news={p: [] for p in labels},
            templates=templates or default_templates(),
        )

    def record(self, event: GameEvent, viewers: Iterable[str] = (), notice: str | None = None) -> GameEvent:
        self.events.append(event)
        if notice is not None:
            for p in viewers:
                self.news[p].append(notice)
        return event

    def everyone(self) -> list[str]:
        return sorted(self.roster)


def seat_players(models: Sequence[ModelRef], seed: int) -> dict[str, ModelRef]:
    """Assign labels to models using the game's own RNG stream."""
    rng = np.random.default_rng(seed)
    return dict(zip(draw_labels(len(models), rng), models))


def _ask(state: GameState, backend: AgentBackend, player: str, phase: Phase,
         instruction: str, candidates: Sequence[str] = (), round_: int | None = None) -> str:
    t = state.templates
    cfg = state.config
    system = state.rules.get(player)
    if system is None:
        system = state.rules[player] = t.render(
            "rules", player=player, num_players=cfg.num_players, rounds=cfg.elimination_rounds,
            messages=cfg.sidebar_messages, finalists=cfg.num_finalists,
        )
    parts = []
    if state.memories[player]:
        parts.append(t.render("memory_header", memory=state.memories[player]))
    if state.news[player]:
        parts.append(t.render("news_header") + "\n" + "\n".join(state.news[player]))
    parts.append(instruction)
    ctx = PromptContext(
        model=state.roster[player],
        player=player,
        phase=phase,
        messages=(Message("system", system), Message("user", "\n\n".join(parts))),
        candidates=tuple(candidates),
        seats=state.roster,
    )
    try:
        reply = backend.respond(ctx)
    except BackendError as exc:
        raise GameAborted(GameFailed(round=round_, player=player, phase=phase.value,
                                     error=str(exc))) from exc
    if isinstance(reply, Reply):
        if reply.reasoning:
            state.record(ReasoningTrace(round=round_, player=player, text=reply.reasoning))
        reply = reply.text
    text = "" if reply is None else str(reply)
    return text[: cfg.response_char_budget]


def _vote(state: GameState, backend: AgentBackend, voter: str, phase: Phase,
          instruction: str, candidates: Sequence[str], round_: int | None
          ) -> tuple[str, str | None, str | None, str]:
    """Ask for a choice, re-prompting once on a failed parse.

    Returns (raw_text, first_raw_text, choice, status).
    """
    first = _ask(state, backend, voter, phase, instruction, candidates, round_)
    result = parse_choice(first, candidates)
    if result.choice is not None:
        return first, None, result.choice, PARSED
    retry = instruction + "\n\n" + state.templates.render("retry", candidates=", ".join(candidates))
    second = _ask(state, backend, voter, phase, retry, candidates, round_)
    result = parse_choice(second, candidates)
    status = RETRIED_THEN_PARSED if result.choice is not None else RETRIED_THEN_FAILED
    return second, first, result.choice, status


def run_sidebar_phase(state: GameState, backend: AgentBackend) -> list[GameEvent]:
    if len(state.active) < 2:
        raise ValueError("sidebars need at least two active players")
    r = state.round
    t = state.templates
    start = len(state.events)
    for i in state.rng.permutation(state.active).tolist():
        others = [p for p in state.active if p != i]
        raw = _ask(state, backend, i, Phase.SIDEBAR_SELECT,
                   t.render("sidebar_select", round=r, candidates=", ".join(others)), others, r)
        parsed = parse_choice(raw, others)
        partner = parsed.choice
        if partner is None:
            partner = others[int(state.rng.integers(len(others)))]
        state.record(SidebarSelect(round=r, player=i, raw_text=raw, parsed_choice=parsed.choice,
                                   parse_status=parsed.status, partner=partner))
        pair = (i, partner)
        total = state.config.sidebar_messages
        for k in range(total):
            sender, recipient = pair[k % 2], pair[(k + 1) % 2]
            text = _ask(state, backend, sender, Phase.SIDEBAR_MESSAGE,
                        t.render("sidebar_message", round=r, partner=recipient, index=k + 1,
                                 total=total), round_=r)
            state.record(
                SidebarMessage(round=r, sender=sender, recipient=recipient, text=text),
                viewers=pair,
                notice=t.render("notice_sidebar", round=r, sender=sender, recipient=recipient, text=text),
            )
    return state.events[start:]


def run_pitch_phase(state: GameState, backend: AgentBackend, final: bool = False) -> list[GameEvent]:
    if len(state.active) < 2:
        raise ValueError("pitches need at least two active players")
    r = state.round
    t = state.templates
    start = len(state.events)
    everyone = state.everyone()
    for p in state.rng.permutation(state.active).tolist():
        if final:
            text = _ask(state, backend, p, Phase.FINAL_PITCH, t.render("final_pitch"))
            state.record(FinalPitch(player=p, text=text), everyone,
                         t.render("notice_final_pitch", player=p, text=text))
        else:
            text = _ask(state, backend, p, Phase.PITCH,
                        t.render("pitch", round=r, next_round=r + 1), round_=r)
            state.record(Pitch(round=r, player=p, text=text), everyone,
                         t.render("notice_pitch", round=r, player=p, text=text))
    return state.events[start:]


def run_elimination_phase(state: GameState, backend: AgentBackend
                          ) -> tuple[Elimination, list[EliminationVote]]:
    if len(state.active) < 2:
        raise ValueError("elimination needs at least two active players")
    r = state.round
    t = state.templates
    votes: list[EliminationVote] = []
    for voter in list(state.active):
        cands = [p for p in state.active if p != voter]
        raw, first, choice, status = _vote(
            state, backend, voter, Phase.ELIMINATION_VOTE,
            t.render("elimination_vote", round=r, candidates=", ".join(cands)), cands, r)
        ev = EliminationVote(round=r, voter=voter, raw_text=raw, parsed_choice=choice,
                             parse_status=status, first_raw_text=first)
        notice = t.render("notice_own_vote", round=r, choice=choice) if choice else None
        votes.append(state.record(ev, [voter], notice))  # type: ignore[arg-type]
    out, count, tied = _tally([v.parsed_choice for v in votes if v.parsed_choice],
                              state.active, state.rng)
    state.active.remove(out)
    state.eliminated.append(out)
    elim = Elimination(round=r, player=out, votes=count, tied=tied)
    state.record(elim, state.everyone(),
                 t.render("notice_elimination", round=r, player=out, votes=count))
    return elim, votes


def run_memory_phase(state: GameState, backend: AgentBackend) -> list[MemoryUpdate]:
    r = state.round
    budget = state.config.memory_char_budget
    out = []
    for p in state.everyone():
        try:
            text = _ask(state, backend, p, Phase.MEMORY,
                        state.templates.render("memory", round=r, budget=budget), round_=r)
        except GameAborted as exc:
            log.warning("memory update failed for %s: %s", p, exc)
            out.append(state.record(MemoryUpdate(round=r, player=p, text=state.memories[p],
                                                 failed=True)))
            continue
        state.memories[p] = text[:budget]
        state.news[p] = []
        out.append(state.record(MemoryUpdate(round=r, player=p, text=state.memories[p])))
    return out  # type: ignore[return-value]


def run_final_vote(state: GameState, backend: AgentBackend) -> WinnerDeclared:
    if not state.eliminated:
        raise ValueError("the jury is empty")
    if len(state.active) < 2:
        raise ValueError("the final needs at least two finalists")
    finalists = list(state.active)
    instruction = state.templates.render("winner_vote", candidates=", ".join(finalists))
    ballots = []
    for juror in list(state.eliminated):
        raw, first, choice, status = _vote(state, backend, juror, Phase.WINNER_VOTE,
                                           instruction, finalists, None)
        state.record(WinnerVote(voter=juror, raw_text=raw, parsed_choice=choice,
                                parse_status=status, first_raw_text=first))
        if choice:
            ballots.append(choice)
    winner, count, tied = _tally(ballots, finalists, state.rng)
    return state.record(WinnerDeclared(player=winner, votes=count, tied=tied))  # type: ignore[return-value]


def run_game(
    config: GameConfig,
    roster: Mapping[str, ModelRef],
    backend: AgentBackend,
    templates: Templates | None = None,
) -> GameLog:
    """Play one full game and return its log.

    A backend failure outside the memory phase ends the game early; the log
    is then returned with ``completed=False`` and a trailing GameFailed event.
    """
    if len(roster) != config.num_players:
        raise ValueError(f"roster has {len(roster)} players, config expects {config.num_players}")
    if len(set(roster.values())) != len(roster):
        raise ValueError("roster models must be pairwise distinct")
    bad = [label for label in roster if not is_label(label)]
    if bad:
        raise ValueError(f"bad player labels: {bad}")

    state = GameState.new(config, roster, templates)
    game_id = new_game_id(state.rng)
    winner = None
    try:
        for r in range(1, config.elimination_rounds + 1):
            state.round = r
            run_sidebar_phase(state, backend)
            run_pitch_phase(state, backend)
            run_elimination_phase(state, backend)
            run_memory_phase(state, backend)
        state.round = config.elimination_rounds + 1
        run_pitch_phase(state, backend, final=True)
        winner = run_final_vote(state, backend).player
    except GameAborted as exc:
        state.events.append(exc.event)
    return GameLog(
        game_id=game_id,
        config=config,
        roster=dict(roster),
        events=tuple(state.events),
        eliminated=tuple(state.eliminated),
        winner=winner,
        completed=winner is not None,
    )
