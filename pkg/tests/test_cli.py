import json

import pytest

from agent_island.cli import main
from agent_island.gamelog import load_logs, serialize_log, write_log

from conftest import make_log
from synth import vote_logs


POOL = [f"prov{i % 4}/model-{i}={1 + i}" for i in range(10)]


@pytest.fixture
def pool_file(tmp_path):
    path = tmp_path / "pool.txt"
    path.write_text("# model pool\n" + "\n".join(POOL) + "\n")
    return path


@pytest.fixture
def logs_dir(tmp_path, pool_file):
    out = tmp_path / "logs"
    assert main(["run", "--pool", str(pool_file), "--games", "40", "--seed", "3",
                 "--out", str(out)]) == 0
    return out


def test_run_writes_logs(tmp_path, pool_file, capsys):
    out = tmp_path / "a"
    assert main(["run", "--pool", str(pool_file), "--games", "5", "--out", str(out)]) == 0
    logs = load_logs(out)
    assert len(logs) == 5
    for g in logs:
        assert g.completed and len(set(g.roster.values())) == 7
    assert "wrote 5 log(s)" in capsys.readouterr().out
    again = tmp_path / "b"
    main(["run", "--pool", str(pool_file), "--games", "5", "--out", str(again), "--jobs", "3"])
    assert sorted(serialize_log(g) for g in logs) == sorted(serialize_log(g) for g in load_logs(again))


def test_run_scripted_backend(tmp_path, pool_file):
    fixtures = tmp_path / "fx.json"
    fixtures.write_text(json.dumps({"fallback": {"pitch": "keep me"}}))
    out = tmp_path / "logs"
    assert main(["run", "--pool", str(pool_file), "--backend", "scripted", "--fixtures",
                 str(fixtures), "--players", "4", "--rounds", "2", "--out", str(out)]) == 0
    (g,) = load_logs(out)
    assert g.completed and len(g.eliminated) == 2


def test_run_remote_against_stub(tmp_path, pool_file, stub_server):
    stub_server.default = (200, {"choices": [{"message": {"content": "<choice>nobody</choice>"}}]})
    out = tmp_path / "logs"
    rc = main(["run", "--pool", str(pool_file), "--backend", "remote", "--endpoint", stub_server.url,
               "--players", "3", "--rounds", "1", "--out", str(out)])
    assert rc == 0
    (g,) = load_logs(out)
    assert g.completed
    assert stub_server.requests


@pytest.mark.parametrize("argv", [
    ["run", "--model", "a/b", "--games", "0", "--out", "x"],
    ["run", "--model", "a/b", "--out", "x"],  # pool smaller than players
    ["run", "--model", "Not A Model", "--out", "x"],
    ["run", "--pool", "/nonexistent/pool.txt", "--out", "x"],
    ["run", "--backend", "remote", "--players", "3", "--rounds", "1", "--out", "x",
     "--model", "a/a", "--model", "b/b", "--model", "c/c"],
    ["run", "--players", "3", "--rounds", "2", "--out", "x", "--model", "a/a"],
    ["score", "/nonexistent/dir"],
    ["score", ".", "--burn-in", "5000"],
    ["bogus"],
])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err


def test_score_and_determinism(logs_dir, tmp_path, capsys):
    outs = [tmp_path / "s1", tmp_path / "s2"]
    for o in outs:
        assert main(["score", str(logs_dir), "--out", str(o), "--iterations", "600",
                     "--burn-in", "100"]) == 0
    a, b = [(o / "rankings.csv").read_bytes() for o in outs]
    assert a == b
    lines = a.decode().splitlines()
    assert lines[0].startswith("rank,model,mean") and len(lines) == 11
    assert "40 scorable games, 10 models" in capsys.readouterr().out


def test_score_empty_dir_is_runtime_error(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["score", str(tmp_path / "empty")]) == 2


def test_score_skips_corrupt_files(logs_dir, tmp_path):
    (logs_dir / "junk.json").write_text("{nope")
    assert main(["score", str(logs_dir), "--out", str(tmp_path), "--iterations", "50",
                 "--burn-in", "0"]) == 0


def test_h2h(logs_dir, tmp_path):
    assert main(["h2h", str(logs_dir), "prov0/model-0", "prov1/model-1", "prov2/model-2",
                 "--out", str(tmp_path), "--iterations", "300", "--burn-in", "50"]) == 0
    lines = (tmp_path / "h2h.csv").read_text().splitlines()
    assert len(lines) == 7
    assert main(["h2h", str(logs_dir), "prov0/model-0", "--out", str(tmp_path),
                 "--iterations", "50", "--burn-in", "0"]) == 0
    assert len((tmp_path / "h2h.csv").read_text().splitlines()) == 1
    assert main(["h2h", str(logs_dir), "zz/unknown", "--iterations", "50", "--burn-in", "0"]) == 1


def test_spp_no_mixed_finals(tmp_path, capsys):
    logs = tmp_path / "logs"
    for _ in range(3):
        write_log(make_log({"AAAA": "p/a", "BBBB": "p/b", "CCCC": "q/c"}, ["CCCC"], "AAAA",
                           {"CCCC": "AAAA"}), logs)
    assert main(["spp", str(logs), "--out", str(tmp_path)]) == 0
    assert "0 observations" in capsys.readouterr().out
    assert (tmp_path / "spp.csv").read_text().startswith("panel,")


def test_spp_panels(tmp_path, capsys):
    logs = tmp_path / "logs"
    for g in vote_logs(300, seed=1):
        write_log(g, logs)
    assert main(["spp", str(logs), "--threshold", "50", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "Panel A" in text and "Panel B" in text
    csv_text = (tmp_path / "spp.csv").read_text()
    assert "pooled,same_provider," in csv_text and "by_provider," in csv_text


def test_fetch(tmp_path, capsys):
    g = make_log({"AAAA": "p/a", "BBBB": "q/b", "CCCC": "r/c"}, ["CCCC"], "AAAA")
    src = write_log(g, tmp_path / "src")
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps([{"game_id": g.game_id, "uri": src.as_uri()}]))
    dest = tmp_path / "dest"
    assert main(["fetch", "--manifest", str(manifest), "--out", str(dest)]) == 0
    assert "fetched 1, skipped 0, failed 0" in capsys.readouterr().out
    assert main(["fetch", "--manifest", str(manifest), "--out", str(dest)]) == 0
    assert "fetched 0, skipped 1" in capsys.readouterr().out
    manifest.write_text(json.dumps([{"game_id": "x", "uri": str(tmp_path / "missing.json")}]))
    assert main(["fetch", "--manifest", str(manifest), "--out", str(dest)]) == 2
    manifest.write_text("not json")
    assert main(["fetch", "--manifest", str(manifest), "--out", str(dest)]) == 1


def test_config_file_and_flag_precedence(tmp_path, pool_file):
    cfg = tmp_path / "island.conf"
    cfg.write_text(f"# defaults\npool = {pool_file}\ngames = 2\nplayers = 5\nrounds=3\n")
    out = tmp_path / "logs"
    assert main(["--config", str(cfg), "run", "--out", str(out)]) == 0
    logs = load_logs(out)
    assert len(logs) == 2 and all(len(g.roster) == 5 for g in logs)
    out2 = tmp_path / "logs2"
    assert main(["--config", str(cfg), "run", "--games", "1", "--out", str(out2)]) == 0
    assert len(load_logs(out2)) == 1
    cfg.write_text("no equals sign here\n")
    assert main(["--config", str(cfg), "run", "--out", str(out)]) == 1
