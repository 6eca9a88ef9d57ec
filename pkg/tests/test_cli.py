from __future__ import annotations

import json
import subprocess
import sys

import pytest

from slnchain.cli import EXIT_DOMAIN, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from slnchain.ledger import Ledger


@pytest.fixture
def run(tmp_path, monkeypatch, capsys):
    ledger = tmp_path / "t.ledger"
    monkeypatch.delenv("SLN_LEDGER", raising=False)

    def _run(*argv, json_out=False):
        args = ["--ledger", str(ledger)] + (["--json"] if json_out else []) + list(argv)
        code = main(args)
        out, err = capsys.readouterr()
        return code, (json.loads(out) if json_out and code == EXIT_OK else out), err

    _run.ledger = ledger
    return _run


def _hop(run, src, dst, obj="d1", states=("Init", "Transporting", "Succeeded")):
    for state in states:
        code, _, err = run("link", "publish", src, dst, obj, "--state", state)
        assert code == EXIT_OK, err


def test_init_and_first_link(run):
    assert run("init", "T1")[0] == EXIT_OK
    code, tx, _ = run("link", "publish", "v1", "v2", "d1", "--state", "Init", "--type", "place_order",
                      json_out=True)
    assert code == EXIT_OK and tx["tag"]["link_type"] == "place_order"
    assert len(Ledger(run.ledger)) == 2
    _, tx, _ = run("link", "publish", "v1", "v2", "d1", "--state", "Transporting", json_out=True)
    assert tx["tag"]["link_type"] == "place_order" and tx["tag"]["ts"] == 2


def test_illegal_transition_exit_code(run):
    run("init", "T1")
    _hop(run, "v1", "v2", states=("Init",))
    code, _, err = run("link", "publish", "v1", "v2", "d1", "--state", "Succeeded")
    assert code == EXIT_DOMAIN and "IllegalTransition" in err


def test_trace_with_and_without_shortcuts(run):
    run("init", "T1")
    nodes = [f"v{i}" for i in range(1, 9)]
    for a, b in zip(nodes, nodes[1:]):
        _hop(run, a, b)
    _, fast, _ = run("trace", "T1", "d1", json_out=True)
    _, slow, _ = run("trace", "T1", "d1", "--no-shortcuts", json_out=True)

    def names(tree):
        return {tree["node"]} | set().union(*(names(c) for c in tree["children"]))

    assert names(fast["tree"]) == names(slow["tree"]) == {"T1", *nodes}
    assert fast["visits"] <= slow["visits"] == len(nodes) + 1
    assert fast["states"] == slow["states"]
    code, text, _ = run("trace", "T1", "d1")
    assert code == EXIT_OK and text.splitlines()[-1] == f"visits: {fast['visits']}"


def test_trace_all_and_link_state(run):
    run("init", "T1")
    _hop(run, "a", "b", obj="x")
    _hop(run, "c", "e", obj="y", states=("Init", "Transporting"))
    code, results, _ = run("trace", "all", "T1", json_out=True)
    assert code == EXIT_OK and len(results) == 2
    _, state, _ = run("link", "state", "c-e-y", "y", json_out=True)
    assert state["state"] == "Transporting"
    assert run("link", "state", "nope", "y")[0] == EXIT_DOMAIN
    assert run("trace", "T9", "x")[0] == EXIT_DOMAIN
    assert run("trace", "T1")[0] == EXIT_USAGE


def test_confirmation_commands(run):
    run("init", "T1")
    _hop(run, "u", "v")
    assert run("confirm", "request", "u-v-d1")[0] == EXIT_OK
    _, session, _ = run("confirm", "dispute", "u-v-d1", json_out=True)
    assert session["phase"] == "Disputed" and session["holder"] == "u"
    assert run("confirm", "argue", "u-v-d1", "--from", "v")[0] == EXIT_DOMAIN
    _, session, _ = run("confirm", "argue", "u-v-d1", json_out=True)
    assert session["holder"] == "v"
    _, session, _ = run("confirm", "resolve", "u-v-d1", json_out=True)
    assert session["phase"] == "Resolved" and len(session["transcript"]) == 6
    _, score, _ = run("score", "v", json_out=True)
    # v paid the borrow penalty and the dispute fee, u one argument fee
    assert score == {"node": "v", "s": "9", "r": "0", "reliability": "9", "halted": False}
    assert run("score", "u", json_out=True)[1]["s"] == "19/2"
    assert run("confirm", "request", "u-v-d1")[0] == EXIT_DOMAIN
    assert run("confirm", "request", "missing")[0] == EXIT_DOMAIN


def test_accept_rewards(run):
    run("init", "T1")
    _hop(run, "u", "v")
    run("confirm", "request", "u-v-d1")
    run("confirm", "accept", "u-v-d1")
    _, score, _ = run("score", "u", json_out=True)
    assert score["reliability"] == "21/2"


def test_schema_publish_changes_rules(run):
    run("init", "T1")
    assert run("schema", "publish", "Init", "End")[0] == EXIT_OK
    _hop(run, "a", "b", states=("Init",))
    assert run("link", "publish", "a", "b", "d1", "--state", "Transporting")[0] == EXIT_DOMAIN
    assert run("schema", "publish", "Init", "Bogus")[0] == EXIT_USAGE


def test_verify_reports(run):
    run("init", "T1")
    _hop(run, "a", "b")
    code, report, _ = run("verify", "T1", json_out=True)
    assert code == EXIT_OK and report["valid"] and report["chains"][0]["object"] == "d1"
    assert run("verify", "nope")[0] == EXIT_DOMAIN


def test_corrupt_ledger_exit_code(run):
    run("init", "T1")
    _hop(run, "a", "b")
    data = bytearray(run.ledger.read_bytes())
    data[len(data) // 2] ^= 0x40
    run.ledger.write_bytes(bytes(data))
    code, _, err = run("verify", "T1", json_out=True)
    assert code == EXIT_IO and json.loads(err)["error"] == "LedgerCorrupt"


def test_usage_errors(run):
    assert run("bogus")[0] == EXIT_USAGE
    assert run("link", "publish", "a", "b", "d", "--state", "Lost")[0] == EXIT_USAGE
    run("init", "T1")
    assert run("init", "T1")[0] == EXIT_DOMAIN
    assert run("link", "publish", "a", "b", "d", "--state", "Init", "--attr", "novalue")[0] == EXIT_USAGE


def test_env_overrides_ledger(tmp_path, monkeypatch, capsys):
    target = tmp_path / "env.ledger"
    monkeypatch.setenv("SLN_LEDGER", str(target))
    assert main(["--ledger", str(tmp_path / "other"), "init", "T1"]) == EXIT_OK
    assert target.exists() and not (tmp_path / "other").exists()


def test_config_file_and_sim(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("SLN_LEDGER", raising=False)
    cfg = tmp_path / "sim.conf"
    cfg.write_text(f"# small run\nseed = 3\npath_length = 30\nseeds = 5\noutput_dir = {tmp_path / 'out'}\n")
    assert main(["--config", str(cfg), "--json", "sim", "shortcuts"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["rows"] == 29 * 5
    first = (tmp_path / "out" / "shortcut_dist.csv").read_bytes()
    main(["--config", str(cfg), "sim", "shortcuts"])
    assert (tmp_path / "out" / "shortcut_dist.csv").read_bytes() == first
    bad = tmp_path / "bad.conf"
    bad.write_text("no equals sign\n")
    assert main(["--config", str(bad), "sim", "shortcuts"]) == EXIT_USAGE


def test_sim_host_access_command(capsys):
    assert main(["sim", "theorem1", "--samples", "10000"]) == EXIT_OK
    assert "1.1349" in capsys.readouterr().out
    assert main(["sim", "theorem1", "--n", "1"]) == EXIT_DOMAIN


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "slnchain", "--ledger", str(tmp_path / "l"), "init", "T"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "created process T" in proc.stdout
