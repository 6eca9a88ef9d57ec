from __future__ import annotations

import pytest

from conftest import FULL_HOP, chain, hop
from slnchain.confirmation import ScoreBook
from slnchain.errors import IllegalTransition, NotAssetOwner, ProcessNotFound, PublisherHalted
from slnchain.model import (
    LinkImplicationRule,
    LinkPattern,
    LinkState,
    SemanticLink,
    StateTransitionRule,
    SuffixedObjectId,
)
from slnchain.publisher import (
    LINK,
    ROOT,
    Publisher,
    link_history,
    load_active_schema,
    longest_suffix,
    publish_branch,
    publish_link,
    publish_schema_rule,
)

I, T, S, F, E = (LinkState.INIT, LinkState.TRANSPORTING, LinkState.SUCCEEDED,
                 LinkState.FAILED, LinkState.END)


def test_first_init_bootstraps_object(ledger, process):
    (tx,) = hop(ledger, process, "v1", "v2", obj="d1", states=(I,))
    first = ledger.first("d1")
    assert first.kind == ROOT and first.payer == "T" and first.payee == "v1"
    assert (tx.payer, tx.payee, str(tx.asset)) == ("v1", "v1", "d1.v2")
    assert len(ledger) == 2


def test_hosts_follow_state_mapping(ledger, process):
    txs = hop(ledger, process, "v1", "v2", states=(I, T, S, E))
    assert [(t.payer, t.payee) for t in txs] == [("v1", "v1"), ("v1", "v1"), ("v1", "v2"), ("v2", "v2")]
    assert {str(t.asset) for t in txs} == {"d.v2"}


def test_failed_then_end_lands_at_target(ledger, process):
    txs = hop(ledger, process, "v1", "v2", states=(I, T, F, E))
    assert txs[2].payee == "v2" and txs[3].payer == "v2"


def test_init_then_end_stays_at_source(ledger, process):
    txs = hop(ledger, process, "v1", "v2", states=(I, E))
    assert txs[1].payee == "v1"


def test_illegal_transition_rejected(ledger, process):
    hop(ledger, process, "v1", "v2", states=(I,))
    with pytest.raises(IllegalTransition):
        hop(ledger, process, "v1", "v2", states=(S,))


def test_new_link_must_start_at_init(ledger, process):
    with pytest.raises(IllegalTransition):
        hop(ledger, process, "v1", "v2", states=(T,))


def test_suffix_records_ordered_targets(ledger, process):
    nodes = ["v1", "v2", "v3", "v4", "v5"]
    chain(ledger, process, nodes)
    last = link_history("d:v4-v5", "d", ledger)[-1]
    assert last.asset == SuffixedObjectId("d", tuple(nodes[1:]))


def test_cannot_forward_before_receiving(ledger, process):
    hop(ledger, process, "v1", "v2", states=(I, T))
    with pytest.raises(NotAssetOwner):
        hop(ledger, process, "v2", "v3", states=(I,))


def test_cannot_forward_after_failed_delivery(ledger, process):
    hop(ledger, process, "v1", "v2", states=(I, T, F))
    with pytest.raises(IllegalTransition):
        hop(ledger, process, "v2", "v3", states=(I,))


def test_stranger_cannot_publish_object(ledger, process):
    hop(ledger, process, "v1", "v2")
    with pytest.raises(NotAssetOwner):
        hop(ledger, process, "x", "y", states=(I,))


def test_branch_gets_distinct_suffixes(ledger, process):
    hop(ledger, process, "v1", "v2")
    links = [SemanticLink("b1", "v2", "a", "d"), SemanticLink("b2", "v2", "b", "d")]
    txs = publish_branch(links, [I, I], process, ledger)
    assert [str(t.asset) for t in txs] == ["d.v2.a", "d.v2.b"]
    for link in links:
        for state in (T, S):
            publish_link(link, state, process, ledger)
    assert longest_suffix("a", "d", ledger) == SuffixedObjectId("d", ("v2", "a"))


def test_branch_links_must_share_source():
    with pytest.raises(ValueError):
        publish_branch([SemanticLink("b1", "v2", "a", "d"), SemanticLink("b2", "v3", "b", "d")],
                       [I, I], None, None)


def test_published_rule_changes_legal_moves(ledger, process):
    hop(ledger, process, "v1", "v2", states=(I,))
    publish_schema_rule(StateTransitionRule(I, {E}), process, ledger)
    with pytest.raises(IllegalTransition):
        hop(ledger, process, "v1", "v2", states=(T,))
    hop(ledger, process, "v1", "v2", states=(E,))


def test_latest_schema_rule_wins(ledger, process):
    ledger.create_account("T", kind="process")
    publish_schema_rule(StateTransitionRule(I, {E}), process, ledger)
    publish_schema_rule(StateTransitionRule(I, {T, F}), process, ledger)
    table = {r.from_state: r.to_states for r in load_active_schema(process, ledger)
             if isinstance(r, StateTransitionRule)}
    assert table[I] == frozenset({T, F})
    assert table[T] == frozenset({T, S, F})


def test_schema_needs_existing_process(ledger, process):
    with pytest.raises(ProcessNotFound):
        publish_schema_rule(StateTransitionRule(I, {E}), process, ledger)


def test_implication_rules_accumulate(ledger, process):
    r1 = LinkImplicationRule((LinkPattern("?a", "x", "d", "?b"),), LinkPattern("?b", "y", "d", "?a"))
    r2 = LinkImplicationRule((LinkPattern("?a", "y", "d", "?b"),), LinkPattern("?a", "z", "d", "?b"))
    ledger.create_account("T", kind="process")
    publish_schema_rule(r1, process, ledger)
    publish_schema_rule(r2, process, ledger)
    rules = load_active_schema(process, ledger)
    assert [r for r in rules if isinstance(r, LinkImplicationRule)] == [r1, r2]


def test_halted_publisher_is_rejected(ledger, process):
    scores = ScoreBook(threshold=0)
    scores.account("v1").s = -1
    with pytest.raises(PublisherHalted):
        hop(ledger, process, "v1", "v2", states=(I,), scores=scores)
    hop(ledger, process, "v9", "v2", obj="e", states=(I,), scores=scores)


def test_publisher_object_wraps_functions(ledger, process):
    pub = Publisher(ledger, shortcuts=False)
    link = SemanticLink("l", "v1", "v2", "d")
    for state in FULL_HOP:
        pub.publish_link(link, state, process)
    assert all(tx.kind in (ROOT, LINK) for tx in ledger)
