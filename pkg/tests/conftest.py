from __future__ import annotations

import uuid

import pytest

from agent_island.gamelog import (
    PARSED,
    Elimination,
    EliminationVote,
    FinalPitch,
    GameConfig,
    GameLog,
    ModelRef,
    Pitch,
    WinnerDeclared,
    WinnerVote,
)


def model(model_id: str) -> ModelRef:
    return ModelRef.parse(model_id)


def make_log(
    roster: dict[str, str],
    eliminated: list[str],
    winner: str | None,
    winner_votes: dict[str, str | None] | None = None,
    completed: bool | None = None,
    game_id: str | None = None,
) -> GameLog:
    """Small hand-built log; ``winner_votes`` maps juror -> choice (None = unparsed)."""
    rounds = len(eliminated) if eliminated else 1
    cfg = GameConfig(num_players=len(roster), elimination_rounds=max(rounds, 1))
    events = []
    for r, out in enumerate(eliminated, 1):
        events.append(Elimination(round=r, player=out, votes=1))
    for juror, choice in (winner_votes or {}).items():
        events.append(WinnerVote(voter=juror, raw_text=f"<choice>{choice}</choice>",
                                 parsed_choice=choice,
                                 parse_status=PARSED if choice else "failed"))
    if winner:
        events.append(WinnerDeclared(player=winner, votes=1))
    return GameLog(
        game_id=game_id or str(uuid.uuid4()),
        config=cfg,
        roster={k: model(v) for k, v in roster.items()},
        events=tuple(events),
        eliminated=tuple(eliminated),
        winner=winner,
        completed=(winner is not None) if completed is None else completed,
    )


@pytest.fixture
def minimal_log() -> GameLog:
    return build_minimal_log()


def build_minimal_log() -> GameLog:
    return GameLog(
        game_id="19f05e74-c3e1-4001-98c4-b80b643781c8",
        config=GameConfig(num_players=3, elimination_rounds=1, seed=7),
        roster={"AAAA": model("openai/gpt-x"), "BBBB": model("z-ai/glm-y"),
                "CCCC": model("anthropic/claude-z")},
        events=(
            Pitch(round=1, player="AAAA", text="vote for me"),
            EliminationVote(round=1, voter="AAAA", raw_text="<choice>CCCC</choice>",
                            parsed_choice="CCCC", parse_status=PARSED),
            Elimination(round=1, player="CCCC", votes=2),
            FinalPitch(player="BBBB", text="pick me ✓"),
            WinnerVote(voter="CCCC", raw_text="<choice>AAAA</choice>", parsed_choice="AAAA",
                       parse_status=PARSED),
            WinnerDeclared(player="AAAA", votes=1),
        ),
        eliminated=("CCCC",),
        winner="AAAA",
        completed=True,
    )


class StubServer:
    """Threaded HTTP server whose responses come from a queue of (status, body)."""

    def __init__(self):
        import json
        import threading
        from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

        self.responses: list[tuple[int, object]] = []
        self.default: tuple[int, object] = (200, {})
        self.requests: list[dict] = []
        self.files: dict[str, bytes] = {}
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, status, body):
                data = body if isinstance(body, bytes) else json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                stub.requests.append({"path": self.path, "headers": dict(self.headers),
                                      "body": json.loads(self.rfile.read(length) or b"null")})
                self._send(*(stub.responses.pop(0) if stub.responses else stub.default))

            def do_GET(self):
                stub.requests.append({"path": self.path})
                if stub.responses:
                    self._send(*stub.responses.pop(0))
                elif self.path in stub.files:
                    self._send(200, stub.files[self.path])
                else:
                    self._send(404, {"error": "not found"})

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_server():
    server = StubServer()
    yield server
    server.close()


# acceptance report: one line per criterion, printed after the run
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n} {status:4s} {title}: {detail}")
