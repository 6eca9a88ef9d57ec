"""Publishing link states, branches and schema rules as ledger transactions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Sequence

from .errors import IllegalTransition, NotAssetOwner, ProcessNotFound, PublisherHalted
from .ledger import Ledger, Transaction
from .model import (
    LinkImplicationRule,
    LinkPattern,
    LinkState,
    SchemaRule,
    SemanticLink,
    StateTransitionRule,
    SuffixedObjectId,
    check_identifier,
    default_rules,
    host_mapping,
    infer_object_location,
    transition_table,
)
from .shortcut import (
    SHORTCUT,
    ShortcutRng,
    add_shortcuts,
    is_transfer_state,
    link_records,
    path_nodes,
)

if TYPE_CHECKING:
    from .confirmation import ScoreBook

ROOT = "ROOT"
LINK = "LINK"
SCHEMA = "SCHEMA"
IMPLICATIONS = "implications"


@dataclass
class ProcessHandle:
    """A logistic process, identified by its root account."""

    root: str
    created: bool = False

    def __post_init__(self):
        check_identifier(self.root, "process id")


def open_process(root: str, ledger: Ledger) -> ProcessHandle:
    """Create the root account of a process if it does not exist yet."""
    if ledger.has_account(root):
        return ProcessHandle(root, created=False)
    ledger.create_account(root, kind="process")
    return ProcessHandle(root, created=True)


def issue_object(obj: str, holder: str, process: ProcessHandle, ledger: Ledger) -> Transaction:
    """Bootstrap transaction giving a new object to its first holder."""
    if not ledger.has_account(process.root):
        ledger.create_account(process.root, kind="process")
        process.created = True
    ledger.ensure_account(holder)
    return ledger.publish_transaction(process.root, holder, SuffixedObjectId(obj),
                                      {"kind": ROOT, "state": LinkState.SUCCEEDED.value})


def link_tag(link: SemanticLink, state: LinkState) -> dict[str, Any]:
    return {
        "kind": LINK,
        "link_id": link.link_id,
        "link_type": link.link_type,
        "source": link.source,
        "target": link.target,
        "state": state.value,
        "attributes": {str(k): str(v) for k, v in link.attributes.items()},
    }


def longest_suffix(payer: str, base: str, ledger: Ledger) -> SuffixedObjectId:
    """Longest suffix of ``base`` that ``payer`` received from another account.

    Self-transactions are skipped: they carry the suffixes of the payer's own
    outgoing links. Equal lengths resolve to the latest transaction.
    """
    best = SuffixedObjectId(base)
    best_len = -1
    for tx in ledger.received_by(payer, base):
        if tx.payer == payer or tx.kind not in (ROOT, LINK):
            continue
        if len(tx.asset.path) >= best_len:
            best, best_len = tx.asset, len(tx.asset.path)
    return best


def link_history(link_id: str, base: str, ledger: Ledger) -> list[Transaction]:
    return [tx for tx in ledger.with_link(base, link_id) if tx.kind == LINK]


# -- schema rules ---------------------------------------------------------


def _schema_key(rule: SchemaRule) -> str:
    if isinstance(rule, StateTransitionRule):
        return rule.from_state.value
    return IMPLICATIONS


def _schema_base(process: ProcessHandle, key: str) -> str:
    return f"{process.root}~schema~{key}"


def rule_to_tag(rule: SchemaRule) -> dict[str, Any]:
    if isinstance(rule, StateTransitionRule):
        return {
            "kind": SCHEMA,
            "rule": "transition",
            "from_state": rule.from_state.value,
            "to_states": sorted(s.value for s in rule.to_states),
        }
    return {
        "kind": SCHEMA,
        "rule": "implication",
        "premises": [list(p.terms()) for p in rule.premises],
        "conclusion": list(rule.conclusion.terms()),
    }


def rule_from_tag(tag: dict[str, Any]) -> SchemaRule:
    if tag["rule"] == "transition":
        return StateTransitionRule(LinkState.parse(tag["from_state"]),
                                   frozenset(LinkState.parse(s) for s in tag["to_states"]))
    return LinkImplicationRule(tuple(LinkPattern(*p) for p in tag["premises"]),
                               LinkPattern(*tag["conclusion"]))


def publish_schema_rule(rule: SchemaRule, process: ProcessHandle, ledger: Ledger) -> Transaction:
    """Append ``rule`` to the schema chain of its from-state under the process root.

    The first rule for a key is issued from the root to a per-key rule
    account; later rules are self-transactions of that account, so the
    newest transition rule is always the last transaction of its chain.
    Implication rules share one chain and accumulate.
    """
    if not ledger.has_account(process.root):
        raise ProcessNotFound(process.root)
    key = _schema_key(rule)
    holder = f"{process.root}~{key}"
    ledger.ensure_account(holder, kind="schema")
    asset = SuffixedObjectId(_schema_base(process, key))
    payer = holder if ledger.first(asset.base) is not None else process.root
    return ledger.publish_transaction(payer, holder, asset, rule_to_tag(rule))


def load_active_schema(process: ProcessHandle, ledger: Ledger) -> list[SchemaRule]:
    """Latest published rule per from-state, defaults elsewhere, then implication rules."""
    table = {r.from_state: r for r in default_rules()}
    for state in LinkState:
        txs = ledger.with_base(_schema_base(process, state.value))
        if txs:
            table[state] = rule_from_tag(txs[-1].tag)
    implications: list[SchemaRule] = []
    for tx in ledger.with_base(_schema_base(process, IMPLICATIONS)):
        rule = rule_from_tag(tx.tag)
        if rule not in implications:
            implications.append(rule)
    return [table[s] for s in LinkState if s in table] + implications


# -- link publishing -------------------------------------------------------


@dataclass
class Publisher:
    """Publishes link states for logistic processes on one ledger.

    ``scores`` enables the reliability gate; ``rng`` drives shortcut
    sampling and ``shortcuts=False`` disables shortcut construction.
    """

    ledger: Ledger
    rng: ShortcutRng = field(default_factory=ShortcutRng)
    scores: ScoreBook | None = None
    shortcuts: bool = True

    def publish_link(self, link: SemanticLink, state: LinkState | str, process: ProcessHandle) -> Transaction:
        return publish_link(link, state, process, self.ledger, rng=self.rng,
                            scores=self.scores, shortcuts=self.shortcuts)

    def publish_branch(self, links: Sequence[SemanticLink], states: Sequence[LinkState | str],
                       process: ProcessHandle) -> list[Transaction]:
        return publish_branch(links, states, process, self.ledger, rng=self.rng,
                              scores=self.scores, shortcuts=self.shortcuts)


def publish_link(
    link: SemanticLink,
    state: LinkState | str,
    process: ProcessHandle,
    ledger: Ledger,
    rng: ShortcutRng | None = None,
    scores: ScoreBook | None = None,
    shortcuts: bool = True,
) -> Transaction:
    """Publish ``state`` of ``link`` and return the link-state transaction.

    On the first use of a process the root account is created; on the first
    link of an object the object is issued from the root to the link source.
    The ledger holds the link's state history: the first state must be Init
    and each later one must be allowed by the process's active schema.
    """
    state = LinkState.parse(state)
    if scores is not None and scores.is_halted(link.source):
        raise PublisherHalted(f"{link.source} reliability is below the threshold")

    if not ledger.has_account(process.root):
        ledger.create_account(process.root, kind="process")
        process.created = True
    ledger.ensure_account(link.source)
    ledger.ensure_account(link.target)

    base = link.obj
    history = link_history(link.link_id, base, ledger)
    if history:
        last = history[-1]
        prev_state = LinkState.parse(last.tag["state"])
        rules = load_active_schema(process, ledger)
        if state not in transition_table(rules)[prev_state]:
            raise IllegalTransition(f"{link.link_id}: {prev_state} -> {state}")
        asset = last.asset
        payer = last.payee
        prev_location = infer_object_location(link, prev_state)
        if state is LinkState.END and payer == link.target and _forwarded(payer, asset, ledger):
            raise IllegalTransition(f"{link.link_id}: {link.target} already forwarded {base}")
        fork = False
    else:
        if state is not LinkState.INIT:
            raise IllegalTransition(f"{link.link_id}: a new link starts at Init, not {state}")
        if ledger.first(base) is None:
            issue_object(base, link.source, process, ledger)
        held = longest_suffix(link.source, base, ledger)
        if ledger.holding(link.source, held) is None:
            raise NotAssetOwner(f"{link.source} does not hold {base}")
        _check_handover(link.source, held, ledger)
        opened = {tx.asset for tx in _forwarded(link.source, held, ledger)}
        asset = held.extend(link.target)
        fork = bool(opened - {asset})
        payer = link.source
        prev_location = None

    location = infer_object_location(link, state)
    payee = host_mapping(link, location, prev_location)
    tx = ledger.publish_transaction(payer, payee, asset, link_tag(link, state))

    if shortcuts and fork:
        _mark_fork(held, link.source, ledger)
    if shortcuts and payee != payer and is_transfer_state(state):
        add_shortcuts(asset, payee, ledger, rng or ShortcutRng())
    return tx


def _check_handover(node: str, held: SuffixedObjectId, ledger: Ledger) -> None:
    # a node may only start a new link once the link into it succeeded and did not end
    if not held.path:
        return
    states = [tx.tag["state"] for tx in ledger.with_asset(held) if tx.kind == LINK]
    if LinkState.END.value in states:
        raise IllegalTransition(f"{held} reached End at {node}")
    if LinkState.SUCCEEDED.value not in states:
        raise IllegalTransition(f"{node} received {held} through a {states[-1]} link")


def _forwarded(node: str, held: SuffixedObjectId, ledger: Ledger) -> list[Transaction]:
    """Links ``node`` has opened for the object it holds as ``held``."""
    depth = len(held.path) + 1
    return [
        tx for tx in ledger.sent_by(node, held.base)
        if tx.kind == LINK and len(tx.asset.path) == depth and held.is_prefix_of(tx.asset)
    ]


def _mark_fork(held: SuffixedObjectId, node: str, ledger: Ledger) -> None:
    """Point every earlier path node at ``node``, which now forwards on several links.

    Shortcut tracing may jump over a node; these markers make sure a node
    with more than one outgoing link is always visited.
    """
    nodes = path_nodes(held, ledger)
    records = link_records(held, ledger)
    for i, earlier in enumerate(nodes[:-1]):
        if any(tx.kind == SHORTCUT and tx.tag.get("fork") and tx.payee == node and tx.asset == held
               for tx in ledger.sent_by(earlier, held.base)):
            continue
        tag = {"kind": SHORTCUT, "distance": len(nodes) - 1 - i, "segment": records[i:], "fork": True}
        ledger.publish_transaction(earlier, node, held, tag)


def publish_branch(
    links: Sequence[SemanticLink],
    states: Sequence[LinkState | str],
    process: ProcessHandle,
    ledger: Ledger,
    rng: ShortcutRng | None = None,
    scores: ScoreBook | None = None,
    shortcuts: bool = True,
) -> list[Transaction]:
    """Publish links that forward one object from one source to several targets."""
    if len(links) != len(states):
        raise ValueError("links and states must have the same length")
    if links:
        first = links[0]
        for link in links[1:]:
            if link.source != first.source or link.obj != first.obj:
                raise ValueError("branch links must share source and object")
    return [
        publish_link(link, state, process, ledger, rng=rng, scores=scores, shortcuts=shortcuts)
        for link, state in zip(links, states)
    ]
