"""Traceability queries: link state, object path and whole process."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .errors import LinkNotFound, ProcessNotFound
from .ledger import Ledger, Transaction
from .model import LinkState, ObjectLocation, SemanticLink, SuffixedObjectId, infer_object_location
from .publisher import LINK, ROOT, link_history
from .shortcut import SHORTCUT


@dataclass
class PathTree:
    """One node of an object's path tree.

    ``asset`` is the suffixed ID under which the object reached ``node``;
    ``link_id`` and ``states_seen`` describe the link into it. ``visited``
    is False for nodes known only from a shortcut's replicated segment.
    """

    node: str
    asset: SuffixedObjectId | None = None
    via: Transaction | None = None
    link_id: str | None = None
    states_seen: list[LinkState] = field(default_factory=list)
    visited: bool = False
    children: list[PathTree] = field(default_factory=list)

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def nodes(self) -> set[str]:
        return {t.node for t in self.walk()}

    def to_json(self) -> dict[str, Any]:
        return {
            "node": self.node,
            "asset": None if self.asset is None else str(self.asset),
            "link_id": self.link_id,
            "states": [s.value for s in self.states_seen],
            "visited": self.visited,
            "children": [c.to_json() for c in self.children],
        }


@dataclass
class PathResult:
    tree: PathTree
    visits: int


def _link_from_tx(tx: Transaction) -> SemanticLink:
    tag = tx.tag
    return SemanticLink(tag["link_id"], tag["source"], tag["target"], tx.asset.base,
                        link_type=tag.get("link_type", "transport"))


def query_link_state(link_id: str, base: str, ledger: Ledger) -> tuple[LinkState, ObjectLocation]:
    history = link_history(link_id, base, ledger)
    if not history:
        raise LinkNotFound(f"{link_id} on {base}")
    last = history[-1]
    state = LinkState.parse(last.tag["state"])
    return state, infer_object_location(_link_from_tx(last), state)


def _require_process(root: str, ledger: Ledger) -> None:
    if not ledger.has_account(root):
        raise ProcessNotFound(root)


def query_path(root: str, base: str, ledger: Ledger, use_shortcuts: bool = True) -> PathResult:
    """Trace the path tree of ``base`` from the process root.

    At each visited account the transfers of the object that extend the
    account's position are collected; per branch only the longest jump is
    followed, plus any fork markers, and nodes it skips are filled in from
    the jump's suffix and replicated link records. ``visits`` counts
    distinct accounts read.
    """
    _require_process(root, ledger)
    tree = PathTree(root, visited=True)
    by_key: dict[str, PathTree] = {}
    fetched: dict[str, list[Transaction]] = {}
    expanded: set[str] = set()

    def fetch(account: str) -> list[Transaction]:
        if account not in fetched:
            fetched[account] = ledger.sent_by(account, base)
        return fetched[account]

    def child(parent: PathTree, asset: SuffixedObjectId, node: str) -> PathTree:
        key = str(asset)
        if key not in by_key:
            by_key[key] = PathTree(node, asset)
            parent.children.append(by_key[key])
        return by_key[key]

    work: list[tuple[PathTree, SuffixedObjectId | None]] = [(tree, None)]
    while work:
        here, held = work.pop()
        here.visited = True
        txs = fetch(here.node)
        if held is None:
            for tx in txs:
                if tx.kind == ROOT and not tx.asset.path:
                    node = child(here, tx.asset, tx.payee)
                    node.via = tx
                    if str(tx.asset) not in expanded:
                        expanded.add(str(tx.asset))
                        work.append((node, tx.asset))
            continue

        depth = len(held.path)
        links: dict[SuffixedObjectId, list[Transaction]] = {}
        jumps: list[Transaction] = []
        for tx in txs:
            if not held.is_prefix_of(tx.asset):
                continue
            if tx.kind == LINK:
                if tx.asset == held:
                    # states of the incoming link published by its new holder
                    here.states_seen.append(LinkState.parse(tx.tag["state"]))
                    continue
                if len(tx.asset.path) == depth + 1:
                    links.setdefault(tx.asset, []).append(tx)
            if tx.payee == here.node or tx.asset == held:
                continue
            if tx.kind == LINK or (use_shortcuts and tx.kind == SHORTCUT):
                jumps.append(tx)

        chosen = _longest_jumps(jumps)
        # nodes that forward on several links are always visited
        chosen += [tx for tx in jumps if tx.tag.get("fork") and tx not in chosen]
        for tx in chosen:
            parent = here
            records = tx.tag.get("segment", []) if tx.kind == SHORTCUT else []
            for k in range(depth + 1, len(tx.asset.path) + 1):
                asset = SuffixedObjectId(base, tx.asset.path[:k])
                node = child(parent, asset, asset.path[-1])
                if node.link_id is None:
                    own = links.get(asset)
                    if own:
                        node.link_id = own[0].tag["link_id"]
                        node.states_seen = [LinkState.parse(t.tag["state"]) for t in own]
                    elif k - depth - 1 < len(records) and records[k - depth - 1][0]:
                        link_id, state = records[k - depth - 1]
                        node.link_id = link_id
                        node.states_seen = [LinkState.parse(state)]
                    node.via = tx
                parent = node
            if str(tx.asset) not in expanded:
                expanded.add(str(tx.asset))
                work.append((parent, tx.asset))

        # links still held by this account (not transferred yet)
        for asset in sorted(links, key=str):
            if str(asset) not in by_key:
                own = links[asset]
                node = child(here, asset, asset.path[-1])
                node.link_id = own[0].tag["link_id"]
                node.states_seen = [LinkState.parse(t.tag["state"]) for t in own]
                node.via = own[-1]

    _sort_tree(tree)
    return PathResult(tree, len(fetched))


def _longest_jumps(candidates: list[Transaction]) -> list[Transaction]:
    """Keep, per branch, the transaction with the longest suffix (latest on ties)."""
    best: list[Transaction] = []
    for tx in candidates:
        dominated = False
        kept = []
        for other in best:
            if tx.asset.is_prefix_of(other.asset) and tx.asset != other.asset:
                dominated = True
                kept.append(other)
            elif other.asset.is_prefix_of(tx.asset):
                continue
            else:
                kept.append(other)
        if not dominated:
            kept.append(tx)
        best = kept
    return sorted(best, key=lambda t: str(t.asset), reverse=True)


def _sort_tree(tree: PathTree) -> None:
    stack = [tree]
    while stack:
        t = stack.pop()
        t.children.sort(key=lambda c: (c.node, str(c.asset)))
        stack.extend(t.children)


def path_states(tree: PathTree) -> list[tuple[str, LinkState]]:
    """Latest state of every link in the tree, depth first."""
    out = []
    stack = [tree]
    while stack:
        t = stack.pop()
        if t.link_id is not None and t.states_seen:
            out.append((t.link_id, t.states_seen[-1]))
        stack.extend(reversed(t.children))
    return out


def process_objects(root: str, ledger: Ledger) -> list[str]:
    """Objects issued from the process root, in issue order."""
    return [
        c.base for c in ledger.locate_chain(root)
        if c.transactions[0].kind == ROOT
    ]


def trace_process(root: str, ledger: Ledger, use_shortcuts: bool = True) -> list[PathResult]:
    _require_process(root, ledger)
    return [query_path(root, base, ledger, use_shortcuts) for base in process_objects(root, ledger)]
