from __future__ import annotations

import numpy as np
import pytest

from slnchain.ledger import Ledger
from slnchain.model import LinkState, SemanticLink
from slnchain.publisher import ProcessHandle, publish_link
from slnchain.shortcut import ShortcutRng

FULL_HOP = (LinkState.INIT, LinkState.TRANSPORTING, LinkState.SUCCEEDED)

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE: dict[str, bool] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")


@pytest.fixture
def ledger() -> Ledger:
    return Ledger(key_seed=b"test")


@pytest.fixture
def process() -> ProcessHandle:
    return ProcessHandle("T")


def hop(ledger, process, src, dst, obj="d", link_id=None, states=FULL_HOP, rng=None, **kw):
    """Publish ``states`` of the link ``src -> dst`` carrying ``obj``."""
    link = SemanticLink(link_id or f"{src}-{dst}", src, dst, obj)
    rng = rng if rng is not None else ShortcutRng(0)
    return [publish_link(link, s, process, ledger, rng=rng, **kw) for s in states]


def chain(ledger, process, nodes, obj="d", rng=None, **kw):
    for a, b in zip(nodes, nodes[1:]):
        hop(ledger, process, a, b, obj=obj, link_id=f"{obj}:{a}-{b}", rng=rng, **kw)


def random_process(seed, steps, branch_p, pending):
    """A random process tree: each step forwards from a node holding the object."""
    gen = np.random.default_rng(seed)
    ledger = Ledger()
    process = ProcessHandle("T")
    rng = ShortcutRng(seed)
    holders = ["n0"]
    for fresh in range(1, steps + 1):
        src = holders[-1] if gen.random() >= branch_p else holders[int(gen.integers(len(holders)))]
        hop(ledger, process, src, f"n{fresh}", link_id=f"l{fresh}", rng=rng)
        holders.append(f"n{fresh}")
    if pending:
        src = holders[int(gen.integers(len(holders)))]
        hop(ledger, process, src, f"n{steps + 1}", link_id="open", states=(LinkState.INIT, LinkState.TRANSPORTING),
            rng=rng)
    return ledger


def scan_nodes(ledger, root, base):
    """Every node touched by ``base``, by a linear scan of the ledger."""
    nodes = {root, ledger.first(base).payee}
    for tx in ledger.with_base(base):
        if tx.kind == "LINK":
            nodes.add(tx.tag["target"])
    return nodes
