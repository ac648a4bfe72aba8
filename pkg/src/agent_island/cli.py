"""Command-line entry point: ``agent-island {run,score,h2h,spp,fetch}``.

Exit codes: 0 ok, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis
from .agents import BOILERPLATE, Phase, PLVoteBackend, RemoteBackend, RemoteConfig, ScriptedBackend
from .engine import run_game, seat_players
from .gamelog import (
    GameConfig,
    GameLog,
    LogFormatError,
    ModelRef,
    fetch_manifest,
    filter_scorable,
    load_logs,
    read_manifest,
    write_log,
)
from .ranking import (
    SamplerConfig,
    extract_outcomes,
    gibbs_sample,
    h2h_csv,
    h2h_text,
    pairwise_table,
    rankings_csv,
    rankings_text,
    summarize_posterior,
)

log = logging.getLogger("agent_island")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2; 2 means runtime error here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def _nonneg(value: str) -> int:
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {n}")
    return n


@dataclass
class RunSpec:
    pool: list[ModelRef]
    games: int
    config: GameConfig
    backend: str
    out: Path
    skills: dict[ModelRef, float] = field(default_factory=dict)
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.games < 1:
            raise UsageError("games must be >= 1")
        if len(set(self.pool)) != len(self.pool):
            raise UsageError("model pool contains duplicates")
        if len(self.pool) < self.config.num_players:
            raise UsageError(f"pool has {len(self.pool)} models but games need "
                             f"{self.config.num_players}")


def parse_pool(items: Sequence[str]) -> tuple[list[ModelRef], dict[ModelRef, float]]:
    """Parse ``provider/name`` or ``provider/name=skill`` entries."""
    pool, skills = [], {}
    for item in items:
        item = item.strip()
        if not item or item.startswith("#"):
            continue
        model_id, _, skill = item.replace(" ", "=", 1).partition("=")
        try:
            model = ModelRef.parse(model_id.strip())
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        pool.append(model)
        if skill.strip():
            skills[model] = float(skill)
    return pool, skills


def _make_backend_factory(args, spec: RunSpec):
    if spec.backend == "synthetic":
        skills = {m: spec.skills.get(m, 1.0) for m in spec.pool}
        return lambda game_seed: PLVoteBackend(skills, np.random.default_rng([game_seed, 1]))
    if spec.backend == "scripted":
        fallback = {p: BOILERPLATE.get(p, "<choice></choice>") for p in Phase}
        if args.fixtures:
            doc = json.loads(Path(args.fixtures).read_text())
            fallback.update({Phase(k): v for k, v in doc.get("fallback", {}).items()})
        return lambda game_seed: ScriptedBackend(fallback=fallback)
    if not args.endpoint:
        raise UsageError("remote backend needs --endpoint (or endpoint= in --config)")
    remote = RemoteBackend(RemoteConfig(
        endpoint_url=args.endpoint, max_concurrency=args.max_concurrency,
        timeout=args.timeout, max_output_tokens=args.max_output_tokens,
    ))
    return lambda game_seed: remote


def plan_games(spec: RunSpec, seed: int) -> list[tuple[int, list[ModelRef]]]:
    """Per game: a derived game seed and P models drawn without replacement."""
    rng = np.random.default_rng(seed)
    plan = []
    for _ in range(spec.games):
        idx = rng.choice(len(spec.pool), spec.config.num_players, replace=False)
        plan.append((int(rng.integers(2**63)), [spec.pool[i] for i in idx]))
    return plan


def cmd_run(args) -> int:
    lines = list(args.model or [])
    if args.pool:
        try:
            lines += Path(args.pool).read_text().splitlines()
        except OSError as exc:
            raise UsageError(f"cannot read pool file: {exc}") from None
    pool, skills = parse_pool(lines)
    try:
        base = GameConfig(
            num_players=args.players, elimination_rounds=args.rounds,
            sidebar_messages=args.sidebar_messages,
            memory_char_budget=args.memory_chars, response_char_budget=args.response_chars,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    spec = RunSpec(pool, args.games, base, args.backend, Path(args.out), skills, args.jobs)
    factory = _make_backend_factory(args, spec)
    try:
        spec.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RuntimeError(f"cannot create output directory: {exc}") from None
    plan = plan_games(spec, args.seed)

    def play(item: tuple[int, list[ModelRef]]) -> GameLog:
        game_seed, models = item
        cfg = GameConfig(**{**base.__dict__, "seed": game_seed})
        game = run_game(cfg, seat_players(models, game_seed), factory(game_seed))
        write_log(game, spec.out)
        return game

    with ThreadPoolExecutor(max_workers=max(1, spec.jobs)) as pool_exec:
        games = list(pool_exec.map(play, plan))
    failed = 0
    for i, game in enumerate(games, 1):
        if game.completed:
            print(f"game {i} {game.game_id}: winner {game.winner} ({game.roster[game.winner].id})")
        else:
            failed += 1
            print(f"game {i} {game.game_id}: INCOMPLETE (backend failure)")
    print(f"wrote {len(games)} log(s) to {spec.out}; {failed} incomplete")
    return EXIT_OK


def _sampler_config(args) -> SamplerConfig:
    try:
        return SamplerConfig(iterations=args.iterations, burn_in=args.burn_in, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _scorable(log_dir: str) -> list[GameLog]:
    if not Path(log_dir).is_dir():
        raise UsageError(f"not a directory: {log_dir}")
    logs = filter_scorable(load_logs(log_dir))
    if not logs:
        raise RuntimeError(f"no scorable logs in {log_dir}")
    return logs


def _write(out_dir: str | None, name: str, text: str) -> None:
    path = Path(out_dir or ".") / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    print(f"wrote {path}")


def cmd_score(args) -> int:
    cfg = _sampler_config(args)
    logs = _scorable(args.logs)
    post = gibbs_sample(extract_outcomes(logs), cfg, kernel=args.kernel)
    rows = summarize_posterior(post)
    print(f"{len(logs)} scorable games, {len(rows)} models")
    print(rankings_text(rows))
    _write(args.out, "rankings.csv", rankings_csv(rows))
    return EXIT_OK


def cmd_h2h(args) -> int:
    models, _ = parse_pool(args.models)
    cfg = _sampler_config(args)
    logs = _scorable(args.logs)
    post = gibbs_sample(extract_outcomes(logs), cfg, kernel=args.kernel)
    unknown = [m.id for m in models if m not in post.models]
    if unknown:
        raise UsageError(f"models with no scorable games: {', '.join(unknown)}")
    rows = pairwise_table(post, models)
    print(h2h_text(rows))
    _write(args.out, "h2h.csv", h2h_csv(rows))
    return EXIT_OK


def cmd_spp(args) -> int:
    logs = _scorable(args.logs)
    obs = analysis.build_vote_observations(logs)
    if not obs:
        print("0 observations: no scorable game has two finalists from different providers")
        _write(args.out, "spp.csv", analysis.regression_csv([]))
        return EXIT_OK
    obs = analysis.bundle_providers(obs, args.threshold)
    pooled = analysis.fit_pooled(obs, threshold=args.threshold)
    by_provider = analysis.fit_by_provider(obs, threshold=args.threshold)
    print(analysis.regression_text("Panel A. Pooled", pooled))
    print()
    print(analysis.regression_text("Panel B. By finalist provider", by_provider))
    _write(args.out, "spp.csv", analysis.regression_csv([("pooled", pooled),
                                                         ("by_provider", by_provider)]))
    return EXIT_OK


def cmd_fetch(args) -> int:
    try:
        entries = read_manifest(args.manifest)
    except (OSError, LogFormatError) as exc:
        raise UsageError(f"bad manifest: {exc}") from None
    report = fetch_manifest(entries, args.out, max_workers=args.jobs)
    print(f"fetched {len(report.fetched)}, skipped {len(report.skipped)}, "
          f"failed {len(report.failed)}")
    for game_id, err in report.failed.items():
        print(f"  FAILED {game_id}: {err}", file=sys.stderr)
    return EXIT_RUNTIME if report.failed else EXIT_OK


def read_config_file(path: str) -> dict[str, str]:
    """``key=value`` lines; keys are flag names with ``-`` or ``_``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected key=value")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _sampler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iterations", type=_positive, default=2000)
    p.add_argument("--burn-in", type=_nonneg, default=500)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--kernel", choices=["numba", "numpy"], default=None,
                   help="sampler kernel (default: numba unless AGENT_ISLAND_DISABLE_NUMBA is set)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="agent-island", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value file; command-line flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="play games and write logs")
    p.add_argument("--model", action="append", help="provider/name[=skill]; repeatable")
    p.add_argument("--pool", help="file with one provider/name[=skill] per line")
    p.add_argument("--games", type=_positive, default=1)
    p.add_argument("--players", type=_positive, default=7)
    p.add_argument("--rounds", type=_positive, default=5)
    p.add_argument("--sidebar-messages", type=_positive, default=4)
    p.add_argument("--memory-chars", type=_positive, default=4000)
    p.add_argument("--response-chars", type=_positive, default=6000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=["scripted", "synthetic", "remote"], default="synthetic")
    p.add_argument("--fixtures", help="scripted backend: JSON {\"fallback\": {phase: text}}")
    p.add_argument("--endpoint", help="remote backend: chat-completions URL")
    p.add_argument("--max-concurrency", type=_positive, default=8)
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--max-output-tokens", type=_positive, default=None)
    p.add_argument("--jobs", type=_positive, default=1, help="games to run concurrently")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="Plackett-Luce rankings from a log directory")
    p.add_argument("logs")
    p.add_argument("--out")
    _sampler_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("h2h", help="pairwise statistics for listed models")
    p.add_argument("logs")
    p.add_argument("models", nargs="*")
    p.add_argument("--out")
    _sampler_flags(p)
    p.set_defaults(func=cmd_h2h)

    p = sub.add_parser("spp", help="same-provider preference regressions")
    p.add_argument("logs")
    p.add_argument("--threshold", type=_positive, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spp)

    p = sub.add_parser("fetch", help="download logs listed in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=_positive, default=4)
    p.set_defaults(func=cmd_fetch)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre, _ = parser.parse_known_args(argv) if "--config" in argv else (None, None)
    try:
        if pre is not None and pre.config:
            values = read_config_file(pre.config)
            subparsers = parser._subparsers._group_actions[0].choices  # type: ignore[union-attr]
            for sp in subparsers.values():
                known = {a.dest for a in sp._actions}
                sp.set_defaults(**{k: v for k, v in values.items() if k in known})
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"agent-island: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"agent-island: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, OSError, ValueError) as exc:
        print(f"agent-island: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
