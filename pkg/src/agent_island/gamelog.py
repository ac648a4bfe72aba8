"""Game-log domain types and the canonical JSON log format.

A log is one JSON document per game. Keys are sorted and the document
carries ``schema_version`` so older files can be rejected loudly rather than
misread. ``parse_game_log(serialize_log(log)) == log`` holds for every valid
log.
"""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import MISSING, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union
from urllib.parse import unquote, urlparse

import httpx

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_SLUG = re.compile(r"[a-z0-9][a-z0-9._:+-]*")
_LABEL = re.compile(r"[A-Z]{4}")

PARSED = "parsed"
FAILED = "failed"
RETRIED_THEN_PARSED = "retried_then_parsed"
RETRIED_THEN_FAILED = "retried_then_failed"
PARSE_STATUSES = (PARSED, FAILED, RETRIED_THEN_PARSED, RETRIED_THEN_FAILED)
_PARSED_STATUSES = (PARSED, RETRIED_THEN_PARSED)


class LogFormatError(ValueError):
    """A game log (or manifest) violates the schema."""


@dataclass(frozen=True, order=True)
class ModelRef:
    provider: str
    name: str

    def __post_init__(self) -> None:
        for part, value in (("provider", self.provider), ("name", self.name)):
            if not isinstance(value, str) or not _SLUG.fullmatch(value):
                raise ValueError(f"model {part} must be a lowercase slug, got {value!r}")

    @property
    def id(self) -> str:
        return f"{self.provider}/{self.name}"

    @classmethod
    def parse(cls, model_id: str) -> ModelRef:
        provider, sep, name = model_id.partition("/")
        if not sep or not provider or not name:
            raise ValueError(f"model id must look like 'provider/name', got {model_id!r}")
        return cls(provider, name)

    def __str__(self) -> str:
        return self.id


def is_label(value: object) -> bool:
    return isinstance(value, str) and _LABEL.fullmatch(value) is not None


@dataclass(frozen=True)
class GameConfig:
    num_players: int = 7
    elimination_rounds: int = 5
    sidebar_messages: int = 4
    seed: int = 0
    memory_char_budget: int = 4000
    response_char_budget: int = 6000

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValueError(f"{f.name} must be an integer")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        for name in ("num_players", "elimination_rounds", "sidebar_messages",
                     "memory_char_budget", "response_char_budget"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.num_players - self.elimination_rounds < 2:
            raise ValueError("need at least two finalists (num_players - elimination_rounds >= 2)")

    @property
    def num_finalists(self) -> int:
        return self.num_players - self.elimination_rounds


# Events. Each carries a ``type`` tag in JSON; round-scoped events carry ``round``.

@dataclass(frozen=True)
class SidebarSelect:
    round: int
    player: str
    raw_text: str
    parsed_choice: str | None
    parse_status: str
    partner: str
    type = "sidebar_select"


@dataclass(frozen=True)
class SidebarMessage:
    round: int
    sender: str
    recipient: str
    text: str
    type = "sidebar_message"


@dataclass(frozen=True)
class Pitch:
    round: int
    player: str
    text: str
    type = "pitch"


@dataclass(frozen=True)
class EliminationVote:
    round: int
    voter: str
    raw_text: str
    parsed_choice: str | None
    parse_status: str
    first_raw_text: str | None = None
    type = "elimination_vote"


@dataclass(frozen=True)
class Elimination:
    round: int
    player: str
    votes: int
    tied: tuple[str, ...] = ()
    type = "elimination"


@dataclass(frozen=True)
class MemoryUpdate:
    round: int
    player: str
    text: str
    failed: bool = False
    type = "memory_update"


@dataclass(frozen=True)
class FinalPitch:
    player: str
    text: str
    type = "final_pitch"


@dataclass(frozen=True)
class WinnerVote:
    voter: str
    raw_text: str
    parsed_choice: str | None
    parse_status: str
    first_raw_text: str | None = None
    type = "winner_vote"


@dataclass(frozen=True)
class WinnerDeclared:
    player: str
    votes: int
    tied: tuple[str, ...] = ()
    type = "winner_declared"


@dataclass(frozen=True)
class ReasoningTrace:
    round: int | None
    player: str
    text: str
    type = "reasoning_trace"


@dataclass(frozen=True)
class GameFailed:
    round: int | None
    player: str | None
    phase: str
    error: str
    type = "game_failed"


GameEvent = Union[
    SidebarSelect, SidebarMessage, Pitch, EliminationVote, Elimination, MemoryUpdate,
    FinalPitch, WinnerVote, WinnerDeclared, ReasoningTrace, GameFailed,
]
EVENT_TYPES: dict[str, type] = {
    cls.type: cls
    for cls in (SidebarSelect, SidebarMessage, Pitch, EliminationVote, Elimination,
                MemoryUpdate, FinalPitch, WinnerVote, WinnerDeclared, ReasoningTrace,
                GameFailed)
}
_LABEL_FIELDS = ("player", "sender", "recipient", "voter", "partner", "parsed_choice")


@dataclass(frozen=True)
class GameLog:
    game_id: str
    config: GameConfig
    roster: Mapping[str, ModelRef]
    events: tuple[GameEvent, ...] = ()
    eliminated: tuple[str, ...] = ()
    winner: str | None = None
    completed: bool = False

    def validate(self) -> None:
        """Raise LogFormatError naming the first violated invariant."""
        try:
            uuid.UUID(self.game_id)
        except (ValueError, AttributeError, TypeError):
            raise LogFormatError(f"game_id: not a UUID: {self.game_id!r}") from None
        if len(self.roster) != self.config.num_players:
            raise LogFormatError(
                f"roster: {len(self.roster)} players, config says {self.config.num_players}")
        for label, model in self.roster.items():
            if not is_label(label):
                raise LogFormatError(f"roster: bad player label {label!r}")
            if not isinstance(model, ModelRef):
                raise LogFormatError(f"roster: {label} is not a ModelRef")
        models = list(self.roster.values())
        if len(set(models)) != len(models):
            raise LogFormatError("roster: the same model appears under two labels")
        if len(set(self.eliminated)) != len(self.eliminated):
            raise LogFormatError("eliminated: duplicate labels")
        for label in self.eliminated:
            if label not in self.roster:
                raise LogFormatError(f"eliminated: unknown label {label!r}")
        if len(self.eliminated) > self.config.elimination_rounds:
            raise LogFormatError("eliminated: more eliminations than rounds")
        if self.winner is not None:
            if self.winner not in self.roster:
                raise LogFormatError(f"winner: unknown label {self.winner!r}")
            if self.winner in self.eliminated:
                raise LogFormatError("winner: listed among eliminated")
        if self.completed:
            if self.winner is None:
                raise LogFormatError("completed without winner")
            if len(self.eliminated) != self.config.elimination_rounds:
                raise LogFormatError("eliminated: completed game needs one elimination per round")
        for i, event in enumerate(self.events):
            _validate_event(event, i, self.roster, self.config.elimination_rounds)

    @property
    def finalists(self) -> tuple[str, ...]:
        out = set(self.eliminated)
        return tuple(label for label in sorted(self.roster) if label not in out)


def _validate_event(event: Any, index: int, roster: Mapping[str, ModelRef], rounds: int) -> None:
    where = f"events[{index}]"
    if type(event) not in EVENT_TYPES.values():
        raise LogFormatError(f"{where}: unknown event type {type(event).__name__}")
    for name in _LABEL_FIELDS:
        value = getattr(event, name, None)
        if value is not None and value not in roster:
            raise LogFormatError(f"{where}.{name}: label {value!r} not in roster")
    rnd = getattr(event, "round", None)
    if rnd is not None and not 1 <= rnd <= rounds:
        raise LogFormatError(f"{where}.round: {rnd} outside [1, {rounds}]")
    if isinstance(event, (EliminationVote, WinnerVote, SidebarSelect)):
        if event.parse_status not in PARSE_STATUSES:
            raise LogFormatError(f"{where}.parse_status: {event.parse_status!r}")
        if (event.parsed_choice is not None) != (event.parse_status in _PARSED_STATUSES):
            raise LogFormatError(f"{where}.parsed_choice: inconsistent with parse_status")


def _event_to_dict(event: GameEvent) -> dict[str, Any]:
    out: dict[str, Any] = {"type": event.type}
    for f in fields(event):
        value = getattr(event, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


def _event_from_dict(raw: Any, index: int) -> GameEvent:
    where = f"events[{index}]"
    if not isinstance(raw, dict):
        raise LogFormatError(f"{where}: expected an object")
    cls = EVENT_TYPES.get(raw.get("type"))
    if cls is None:
        raise LogFormatError(f"{where}.type: unknown event type {raw.get('type')!r}")
    kwargs = {}
    for f in fields(cls):
        if f.name in raw:
            value = raw[f.name]
            kwargs[f.name] = tuple(value) if isinstance(value, list) else value
        elif f.default is not MISSING:
            continue
        else:
            raise LogFormatError(f"{where}.{f.name}: missing required field")
    extra = set(raw) - {f.name for f in fields(cls)} - {"type"}
    if extra:
        raise LogFormatError(f"{where}: unexpected fields {sorted(extra)}")
    return cls(**kwargs)


def log_to_dict(game: GameLog) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "game_id": game.game_id,
        "config": {f.name: getattr(game.config, f.name) for f in fields(GameConfig)},
        "roster": {label: model.id for label, model in game.roster.items()},
        "events": [_event_to_dict(e) for e in game.events],
        "eliminated": list(game.eliminated),
        "winner": game.winner,
        "completed": game.completed,
    }


def serialize_log(game: GameLog) -> bytes:
    game.validate()
    return json.dumps(
        log_to_dict(game), sort_keys=True, ensure_ascii=False, separators=(",", ":")
    ).encode("utf-8")


def _require(doc: dict, key: str, kind: type | tuple[type, ...]) -> Any:
    if key not in doc:
        raise LogFormatError(f"{key}: missing required field")
    value = doc[key]
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise LogFormatError(f"{key}: wrong type {type(value).__name__}")
    return value


def _no_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in pairs:
        if key in out:
            raise LogFormatError(f"duplicate key {key!r}")
        out[key] = value
    return out


def parse_game_log(data: bytes | str) -> GameLog:
    """Decode and validate one log; raises LogFormatError on any problem."""
    try:
        doc = json.loads(data, object_pairs_hook=_no_duplicate_keys)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise LogFormatError(f"malformed encoding: {exc}") from None
    if not isinstance(doc, dict):
        raise LogFormatError("top level must be a JSON object")
    version = _require(doc, "schema_version", int)
    if version != SCHEMA_VERSION:
        raise LogFormatError(f"schema_version: unsupported version {version}")
    game_id = _require(doc, "game_id", str)
    raw_config = _require(doc, "config", dict)
    try:
        config = GameConfig(**raw_config)
    except (TypeError, ValueError) as exc:
        raise LogFormatError(f"config: {exc}") from None

    raw_roster = _require(doc, "roster", dict)
    roster: dict[str, ModelRef] = {}
    for label, model_id in raw_roster.items():
        if not isinstance(model_id, str):
            raise LogFormatError(f"roster.{label}: model id must be a string")
        try:
            roster[label] = ModelRef.parse(model_id)
        except ValueError as exc:
            raise LogFormatError(f"roster.{label}: {exc}") from None

    events = tuple(_event_from_dict(e, i) for i, e in enumerate(_require(doc, "events", list)))
    eliminated = _require(doc, "eliminated", list)
    if not all(isinstance(x, str) for x in eliminated):
        raise LogFormatError("eliminated: labels must be strings")
    if "winner" not in doc:
        if doc.get("completed") is True:
            raise LogFormatError("completed without winner")
        raise LogFormatError("winner: missing required field")
    winner = doc["winner"]
    if winner is not None and not isinstance(winner, str):
        raise LogFormatError("winner: must be a label or null")
    game = GameLog(
        game_id=game_id,
        config=config,
        roster=roster,
        events=events,
        eliminated=tuple(eliminated),
        winner=winner,
        completed=_require(doc, "completed", bool),
    )
    game.validate()
    return game


def read_log(path: str | os.PathLike) -> GameLog:
    return parse_game_log(Path(path).read_bytes())


def write_log(game: GameLog, directory: str | os.PathLike) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{game.game_id}.json"
    _atomic_write(path, serialize_log(game))
    return path


def load_logs(directory: str | os.PathLike, *, strict: bool = False) -> list[GameLog]:
    """Read every ``*.json`` log in a directory, sorted by file name.

    Unparseable files are skipped with a warning unless ``strict``.
    """
    logs = []
    for path in sorted(Path(directory).glob("*.json")):
        try:
            logs.append(read_log(path))
        except LogFormatError as exc:
            if strict:
                raise LogFormatError(f"{path.name}: {exc}") from None
            log.warning("skipping %s: %s", path.name, exc)
    return logs


def filter_scorable(logs: Iterable[GameLog]) -> list[GameLog]:
    return [g for g in logs if g.completed and g.winner is not None]


# Manifest handling

@dataclass(frozen=True)
class ManifestEntry:
    game_id: str
    uri: str


def parse_manifest(data: bytes | str) -> list[ManifestEntry]:
    try:
        doc = json.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise LogFormatError(f"manifest: malformed encoding: {exc}") from None
    if not isinstance(doc, list):
        raise LogFormatError("manifest: expected a JSON array")
    entries, seen = [], set()
    for i, item in enumerate(doc):
        if not isinstance(item, dict) or not isinstance(item.get("game_id"), str) \
                or not isinstance(item.get("uri"), str):
            raise LogFormatError(f"manifest[{i}]: needs string game_id and uri")
        if item["game_id"] in seen:
            raise LogFormatError(f"manifest[{i}]: duplicate game_id {item['game_id']}")
        seen.add(item["game_id"])
        entries.append(ManifestEntry(item["game_id"], item["uri"]))
    return entries


def read_manifest(path: str | os.PathLike) -> list[ManifestEntry]:
    return parse_manifest(Path(path).read_bytes())


@dataclass
class FetchReport:
    fetched: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)


class FetchError(RuntimeError):
    pass


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _already_have(path: Path, game_id: str) -> bool:
    if not path.exists():
        return False
    try:
        return read_log(path).game_id == game_id
    except (LogFormatError, OSError):
        return False


def _read_uri(uri: str, client: httpx.Client, retries: int, backoff: float, cap: float) -> bytes:
    parsed = urlparse(uri)
    if parsed.scheme in ("", "file"):
        path = unquote(parsed.path) if parsed.scheme == "file" else uri
        return Path(path).read_bytes()
    if parsed.scheme not in ("http", "https"):
        raise FetchError(f"unsupported URI scheme {parsed.scheme!r}")
    for attempt in range(retries + 1):
        try:
            resp = client.get(uri)
            if resp.status_code == 429 or resp.status_code >= 500:
                raise httpx.HTTPStatusError("retryable", request=resp.request, response=resp)
            resp.raise_for_status()
            return resp.content
        except (httpx.TransportError, httpx.HTTPStatusError) as exc:
            status = getattr(getattr(exc, "response", None), "status_code", None)
            retryable = status is None or status == 429 or status >= 500
            if not retryable or attempt == retries:
                raise FetchError(f"{uri}: {exc}") from exc
            time.sleep(min(cap, backoff * 2**attempt))
    raise AssertionError("unreachable")


def fetch_manifest(
    entries: Sequence[ManifestEntry],
    dest: str | os.PathLike,
    *,
    max_workers: int = 4,
    retries: int = 3,
    backoff: float = 1.0,
    backoff_cap: float = 30.0,
    timeout: float = 60.0,
) -> FetchReport:
    """Download each manifest entry to ``dest/<game_id>.json``.

    Entries already present (same game_id inside) are skipped. A failing
    entry is recorded in the report and does not abort the batch.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    report = FetchReport()

    def one(entry: ManifestEntry, client: httpx.Client) -> tuple[str, str | None]:
        path = dest / f"{entry.game_id}.json"
        if _already_have(path, entry.game_id):
            return "skipped", None
        try:
            data = _read_uri(entry.uri, client, retries, backoff, backoff_cap)
            game = parse_game_log(data)
        except (FetchError, LogFormatError, OSError) as exc:
            return "failed", str(exc)
        if game.game_id != entry.game_id:
            return "failed", f"id mismatch: manifest {entry.game_id}, log {game.game_id}"
        _atomic_write(path, data)
        return "fetched", None

    with httpx.Client(timeout=timeout, follow_redirects=True) as client, \
            ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        results = list(pool.map(lambda e: one(e, client), entries))
    for entry, (status, err) in zip(entries, results):
        if status == "fetched":
            report.fetched.append(entry.game_id)
        elif status == "skipped":
            report.skipped.append(entry.game_id)
        else:
            report.failed[entry.game_id] = err or "unknown error"
    return report


def fetch_manifest_logs(entries: Sequence[ManifestEntry], dest: str | os.PathLike, **kwargs) -> int:
    """Fetch a manifest into ``dest`` and return how many logs were newly written."""
    report = fetch_manifest(entries, dest, **kwargs)
    for game_id, err in report.failed.items():
        log.warning("failed to fetch %s: %s", game_id, err)
    return len(report.fetched)


def draw_labels(n: int, rng) -> list[str]:
    """Draw ``n`` distinct 4-letter labels from ``rng``, rejecting collisions.

    ``rng`` is a numpy Generator. Each candidate consumes one ``integers``
    call of four letters.
    """
    labels: list[str] = []
    seen: set[str] = set()
    while len(labels) < n:
        label = "".join(chr(65 + int(c)) for c in rng.integers(0, 26, size=4))
        if label not in seen:
            seen.add(label)
            labels.append(label)
    return labels


def new_game_id(rng) -> str:
    return str(uuid.UUID(bytes=rng.bytes(16), version=4))
