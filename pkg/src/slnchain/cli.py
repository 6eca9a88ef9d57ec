"""Command-line interface: ``slnchain`` / ``python -m slnchain``.

Exit codes: 0 ok, 2 usage, 3 domain error, 4 I/O or corrupt ledger.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterator, Sequence

from filelock import FileLock

from .confirmation import ScoreBook
from .errors import LedgerCorrupt, LinkNotFound, ProcessNotFound, SLNError
from .ledger import Ledger
from .model import LinkState, SemanticLink, StateTransitionRule
from .publisher import LINK, ProcessHandle, publish_link, publish_schema_rule
from .shortcut import ShortcutRng
from .simharness import EXPERIMENTS, SimConfig, format_host_access_report, host_access_report
from .tracer import PathTree, path_states, query_link_state, query_path, trace_process

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_IO = 0, 2, 3, 4
DEFAULT_LEDGER = "sln.ledger"


class UsageError(Exception):
    pass


def read_config(path: str | None) -> dict[str, str]:
    """Flat ``key=value`` file; blank lines and ``#`` comments are ignored."""
    if path is None:
        return {}
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        values[key.strip()] = value.strip()
    return values


class Context:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = read_config(args.config)
        self.ledger_path = (
            os.environ.get("SLN_LEDGER") or args.ledger or self.config.get("ledger_path") or DEFAULT_LEDGER
        )
        self.seed = int(self.config.get("seed", 0))
        self.params = {
            "initial": Fraction(self.config.get("initial", "10")),
            "threshold": Fraction(self.config.get("threshold", "0")),
            "stake": Fraction(self.config.get("stake", "2")),
            "alpha": Fraction(self.config.get("alpha", "1/2")),
        }
        self._ledger: Ledger | None = None

    @property
    def ledger(self) -> Ledger:
        if self._ledger is None:
            self._ledger = Ledger(self.ledger_path)
        return self._ledger

    @contextmanager
    def writing(self) -> Iterator[Ledger]:
        Path(self.ledger_path).parent.mkdir(parents=True, exist_ok=True)
        with FileLock(str(self.ledger_path) + ".lock", timeout=10):
            self._ledger = None
            yield self.ledger

    def scores(self) -> ScoreBook:
        return ScoreBook.replay(self.ledger, self.params["initial"], self.params["threshold"])

    def emit(self, human: str, data: Any) -> None:
        if self.args.json:
            print(json.dumps(data, sort_keys=True, default=str))
        else:
            print(human)


# -- helpers -------------------------------------------------------------------


def _process(ledger: Ledger, name: str | None) -> ProcessHandle:
    processes = [a.id for a in ledger.accounts() if a.kind == "process"]
    if name is None:
        if len(processes) != 1:
            raise UsageError("--process is required when the ledger has zero or several processes")
        name = processes[0]
    if name not in processes:
        raise ProcessNotFound(name)
    return ProcessHandle(name)


def _find_link(ledger: Ledger, link_id: str) -> dict[str, Any]:
    for tx in ledger:
        if tx.kind == LINK and tx.tag["link_id"] == link_id:
            return dict(tx.tag, obj=tx.asset.base)
    raise LinkNotFound(link_id)


def render_tree(tree: PathTree) -> str:
    lines = []
    stack: list[tuple[PathTree, int]] = [(tree, 0)]
    while stack:
        node, depth = stack.pop()
        label = node.node
        if node.link_id is not None:
            states = "/".join(s.value for s in node.states_seen)
            label += f"  [{node.link_id}: {states}]"
        if not node.visited:
            label += "  (from shortcut)"
        lines.append("  " * depth + label)
        stack.extend((c, depth + 1) for c in reversed(node.children))
    return "\n".join(lines)


def _session_json(session) -> dict[str, Any]:
    return {
        "link_id": session.link_id,
        "phase": session.phase.value,
        "holder": session.holder,
        "rounds": session.rounds,
        "transcript": session.export(),
    }


# -- commands ------------------------------------------------------------------


def cmd_init(ctx: Context) -> None:
    with ctx.writing() as ledger:
        ledger.create_account(ctx.args.process_id, kind="process")
    ctx.emit(f"created process {ctx.args.process_id}", {"process": ctx.args.process_id})


def cmd_account_new(ctx: Context) -> None:
    with ctx.writing() as ledger:
        account = ledger.create_account(ctx.args.id)
    ctx.emit(f"created account {account.id}", {"account": account.id, "public_key": account.public_key.hex()})


def cmd_link_publish(ctx: Context) -> None:
    a = ctx.args
    attrs = {}
    for item in a.attr or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--attr expects k=v, got {item!r}")
        attrs[key] = value
    link_id = a.link_id or f"{a.src}-{a.dst}-{a.object}"
    with ctx.writing() as ledger:
        process = _process(ledger, a.process)
        previous = [tx for tx in ledger.with_link(a.object, link_id) if tx.kind == LINK]
        link_type = a.type or (previous[-1].tag["link_type"] if previous else "transport")
        link = SemanticLink(link_id, a.src, a.dst, a.object, link_type=link_type, attributes=attrs)
        tx = publish_link(link, LinkState.parse(a.state), process, ledger,
                          rng=ShortcutRng(ctx.seed), scores=ctx.scores())
    ctx.emit(f"published {link_id} {a.state} as {tx.this_hash.hex()[:16]} ({tx.payer} -> {tx.payee}, {tx.asset})",
             tx.to_json())


def cmd_link_state(ctx: Context) -> None:
    state, location = query_link_state(ctx.args.link_id, ctx.args.object, ctx.ledger)
    ctx.emit(f"{ctx.args.link_id}: {state.value} at {location}",
             {"link_id": ctx.args.link_id, "state": state.value, "location": str(location)})


def cmd_trace(ctx: Context) -> None:
    a = ctx.args
    use = not a.no_shortcuts
    if a.target == "all" and a.object is not None:
        results = trace_process(a.object, ctx.ledger, use)
        human = "\n".join(f"{render_tree(r.tree)}\nvisits: {r.visits}" for r in results)
        data = [{"tree": r.tree.to_json(), "visits": r.visits} for r in results]
        ctx.emit(human or "no objects", data)
        return
    if a.object is None:
        raise UsageError("trace needs <process-id> <object> or all <process-id>")
    result = query_path(a.target, a.object, ctx.ledger, use)
    states = [[lid, s.value] for lid, s in path_states(result.tree)]
    ctx.emit(f"{render_tree(result.tree)}\nvisits: {result.visits}",
             {"tree": result.tree.to_json(), "visits": result.visits, "states": states})


def cmd_schema_publish(ctx: Context) -> None:
    a = ctx.args
    rule = StateTransitionRule(LinkState.parse(a.from_state), frozenset(LinkState.parse(s) for s in a.to_states))
    with ctx.writing() as ledger:
        tx = publish_schema_rule(rule, _process(ledger, a.process), ledger)
    ctx.emit(f"schema {rule.from_state.value} -> {sorted(s.value for s in rule.to_states)}", tx.to_json())


def cmd_confirm(ctx: Context) -> None:
    a = ctx.args
    with ctx.writing() as ledger:
        book = ctx.scores()
        if a.action == "request":
            link = _find_link(ledger, a.link_id)
            session = book.request(a.link_id, link["source"], link["target"],
                                   ctx.params["stake"], ctx.params["alpha"])
        elif a.action == "accept":
            session = book.confirm(a.link_id)
        elif a.action == "dispute":
            session = book.dispute(a.link_id)
        elif a.action == "argue":
            current = book.session(a.link_id)
            session = book.argue(a.link_id, a.sender or current.holder)
        else:
            session = book.resolve(a.link_id)
    ctx.emit(f"{a.link_id}: {session.phase.value} (rounds {session.rounds})", _session_json(session))


def cmd_score(ctx: Context) -> None:
    book = ctx.scores()
    acc = book.account(ctx.args.node_id)
    data = {"node": acc.node, "s": str(acc.s), "r": str(acc.r),
            "reliability": str(acc.reliability), "halted": book.is_halted(acc.node)}
    ctx.emit(f"{acc.node}: s={acc.s} r={acc.r} reliability={acc.reliability}"
             + (" (halted)" if data["halted"] else ""), data)


def cmd_verify(ctx: Context) -> int:
    ledger = ctx.ledger
    if not any(a.id == ctx.args.process_id and a.kind == "process" for a in ledger.accounts()):
        raise ProcessNotFound(ctx.args.process_id)
    chains = []
    for chain in ledger.locate_chain(ctx.args.process_id):
        report = ledger.verify_chain(chain)
        bad = [i for i, c in enumerate(report.checks) if not c.ok]
        chains.append({"object": chain.base, "transactions": len(chain.transactions),
                       "valid": report.valid, "failed": bad})
    valid = all(c["valid"] for c in chains)
    human = "\n".join(f"{c['object']}: {c['transactions']} transactions, "
                      + ("ok" if c["valid"] else f"FAILED at {c['failed']}") for c in chains)
    ctx.emit(human or "no chains", {"process": ctx.args.process_id, "valid": valid, "chains": chains})
    return EXIT_OK if valid else EXIT_DOMAIN


def cmd_sim(ctx: Context) -> None:
    a = ctx.args
    if a.experiment == "theorem1":
        report = host_access_report(a.n, Fraction(a.p).limit_denominator(10_000), a.samples, ctx.seed)
        data = {k: (str(v) if isinstance(v, Fraction) else v) for k, v in report.items()}
        ctx.emit(format_host_access_report(report), data)
        return
    config = SimConfig.from_mapping(ctx.config)
    table = EXPERIMENTS[a.experiment](config)
    out = a.out or ctx.config.get("output_dir", ".")
    path = table.write(out)
    summary = [s.__dict__ for s in table.summary]
    ctx.emit(f"wrote {path} ({len(table.rows)} rows)", {"csv": str(path), "rows": len(table.rows),
                                                        "summary": summary})


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slnchain", description="Semantic link traceability over a simulated ledger.")
    p.add_argument("--ledger", help=f"ledger file (default ${{SLN_LEDGER}} or {DEFAULT_LEDGER})")
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("init", help="create a process root account")
    s.add_argument("process_id")
    s.set_defaults(func=cmd_init)

    acct = sub.add_parser("account").add_subparsers(dest="account_cmd", required=True)
    s = acct.add_parser("new", help="create a node account")
    s.add_argument("id")
    s.set_defaults(func=cmd_account_new)

    link = sub.add_parser("link").add_subparsers(dest="link_cmd", required=True)
    s = link.add_parser("publish", help="publish one state of a link")
    s.add_argument("src")
    s.add_argument("dst")
    s.add_argument("object")
    s.add_argument("--state", required=True)
    s.add_argument("--type", help="link type (default: the link's earlier type, else 'transport')")
    s.add_argument("--attr", action="append", metavar="K=V")
    s.add_argument("--process")
    s.add_argument("--link-id")
    s.set_defaults(func=cmd_link_publish)
    s = link.add_parser("state", help="latest state and location of a link")
    s.add_argument("link_id")
    s.add_argument("object")
    s.set_defaults(func=cmd_link_state)

    s = sub.add_parser("trace", help="trace an object's path, or 'all <process-id>'")
    s.add_argument("target", metavar="process-id|all")
    s.add_argument("object", nargs="?")
    s.add_argument("--no-shortcuts", action="store_true")
    s.set_defaults(func=cmd_trace)

    schema = sub.add_parser("schema").add_subparsers(dest="schema_cmd", required=True)
    s = schema.add_parser("publish", help="replace the allowed next states of a state")
    s.add_argument("from_state")
    s.add_argument("to_states", nargs="+")
    s.add_argument("--process")
    s.set_defaults(func=cmd_schema_publish)

    s = sub.add_parser("confirm", help="confirmation protocol step for a link")
    s.add_argument("action", choices=["request", "accept", "dispute", "argue", "resolve"])
    s.add_argument("link_id")
    s.add_argument("--from", dest="sender", help="arguing node (default: the current stake holder)")
    s.set_defaults(func=cmd_confirm)

    s = sub.add_parser("score", help="trustiness, responsibility and reliability of a node")
    s.add_argument("node_id")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("verify", help="verify every chain of a process")
    s.add_argument("process_id")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("sim", help="run an experiment")
    s.add_argument("experiment", choices=[*EXPERIMENTS, "theorem1"])
    s.add_argument("--out", help="output directory for CSV files")
    s.add_argument("--n", type=int, default=6)
    s.add_argument("--p", default="5/6")
    s.add_argument("--samples", type=int, default=1_000_000)
    s.set_defaults(func=cmd_sim)
    return p


def _error(ctx_json: bool, code: str, message: str) -> None:
    if ctx_json:
        print(json.dumps({"error": code, "message": message}), file=sys.stderr)
    else:
        print(f"error: {code}: {message}", file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        ctx = Context(args)
        status = args.func(ctx)
        return EXIT_OK if status is None else status
    except UsageError as exc:
        _error(args.json, "Usage", str(exc))
        return EXIT_USAGE
    except LedgerCorrupt as exc:
        _error(args.json, exc.code, str(exc))
        return EXIT_IO
    except SLNError as exc:
        _error(args.json, exc.code, str(exc))
        return EXIT_DOMAIN
    except (ValueError, TypeError) as exc:
        _error(args.json, "Usage", str(exc))
        return EXIT_USAGE
    except OSError as exc:
        _error(args.json, "IOError", str(exc))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
