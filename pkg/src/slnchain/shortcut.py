"""Probabilistic shortcut transactions along an object's path.

When an object arrives at a new node, every earlier node on its path at
distance ``s`` from the new holder publishes a shortcut to it with
probability ``1/s``. Decisions come from a counter-based generator keyed on
``(seed, object, hop, node index)`` so that the ledger-backed path and the
vectorised sampler used by large simulations agree draw for draw.
"""

from __future__ import annotations

import hashlib
from typing import Any

import numpy as np

from .ledger import Ledger, Transaction
from .model import SUFFIX_SEP, LinkState, SuffixedObjectId

SHORTCUT = "SHORTCUT"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def _hash64(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


class ShortcutRng:
    """Counter-based uniform source: ``u(object, hop, i)`` is a pure function."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def _key(self, obj: str) -> np.ndarray:
        seed = np.array([self.seed], dtype=np.uint64)
        return _mix(_mix(seed ^ _GOLDEN) ^ np.uint64(_hash64(obj)))

    def uniforms(self, obj: str, hops: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Uniforms in [0, 1) for elementwise (hop, node index) pairs."""
        key = self._key(obj)
        hops = np.asarray(hops, dtype=np.uint64)
        idx = np.asarray(idx, dtype=np.uint64)
        with np.errstate(over="ignore"):
            k2 = _mix(key ^ _mix((hops + np.uint64(1)) * _GOLDEN))
            bits = _mix(k2 + (idx + np.uint64(1)) * _GOLDEN)
        return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def decisions(self, obj: str, hop: int) -> np.ndarray:
        """Which of the ``hop`` nodes preceding the new holder add a shortcut.

        Entry ``i`` (0-based) is node ``v_{i+1}``, at distance ``hop - i``.
        """
        idx = np.arange(hop)
        u = self.uniforms(obj, np.full(hop, hop), idx)
        return u * (hop - idx) < 1.0


def sample_path_shortcuts(n: int, rng: ShortcutRng, obj: str = "d") -> list[list[int]]:
    """Shortcut targets per node for a linear path of ``n`` nodes, without a ledger.

    Returns, for each 0-based node index, the sorted indices of nodes it
    links to. Uses the same decisions as :func:`add_shortcuts`.
    """
    targets: list[list[int]] = [[] for _ in range(n)]
    if n < 2:
        return targets
    hops = np.repeat(np.arange(1, n), np.arange(1, n))
    idx = np.concatenate([np.arange(h) for h in range(1, n)])
    u = rng.uniforms(obj, hops, idx)
    chosen = u * (hops - idx) < 1.0
    for h, i in zip(hops[chosen].tolist(), idx[chosen].tolist()):
        targets[i].append(h)
    return targets


def shortcut_counts(n: int, rng: ShortcutRng, obj: str = "d") -> np.ndarray:
    """Number of shortcuts held by each node of a linear path of ``n`` nodes."""
    counts = np.zeros(n, dtype=np.int64)
    if n < 2:
        return counts
    hops = np.repeat(np.arange(1, n), np.arange(1, n))
    idx = np.concatenate([np.arange(h) for h in range(1, n)])
    chosen = rng.uniforms(obj, hops, idx) * (hops - idx) < 1.0
    np.add.at(counts, idx[chosen], 1)
    return counts


def path_nodes(asset: SuffixedObjectId, ledger: Ledger) -> list[str]:
    """First holder of the object followed by the targets recorded in the suffix."""
    issue = ledger.first(asset.base)
    start = [issue.payee] if issue is not None else []
    return start + list(asset.path)


def link_records(asset: SuffixedObjectId, ledger: Ledger, start: int = 0) -> list[list[str]]:
    """``[link_id, state]`` of the link into each suffix node of ``asset``, from ``path[start]`` on."""
    out = []
    key = SUFFIX_SEP.join((asset.base, *asset.path[:start]))
    for node in asset.path[start:]:
        key += SUFFIX_SEP + node
        record = ["", ""]
        for tx in ledger.with_asset(key):
            if tx.kind == "LINK":
                record = [tx.tag["link_id"], tx.tag["state"]]
        out.append(record)
    return out


def _publish_shortcut(
    node: str, asset: SuffixedObjectId, payee: str, distance: int, segment, ledger: Ledger
) -> Transaction | None:
    for tx in ledger.sent_by(node, asset.base):
        if tx.payee == payee and tx.asset == asset and tx.kind == SHORTCUT:
            return None
    tag: dict[str, Any] = {"kind": SHORTCUT, "distance": distance, "segment": segment}
    return ledger.publish_transaction(node, payee, asset, tag)


def add_shortcuts(
    asset: SuffixedObjectId,
    payee: str,
    ledger: Ledger,
    rng: ShortcutRng,
    force: bool = False,
) -> list[Transaction]:
    """Publish shortcuts from earlier path nodes to ``payee``, the new holder of ``asset``.

    ``force`` publishes from every earlier node regardless of the draw. Each
    shortcut tag carries the ``[link_id, state]`` records of the links it
    jumps over, so a tracer can rebuild the skipped part of the path.
    """
    nodes = path_nodes(asset, ledger)
    if len(nodes) < 2 or nodes[-1] != payee:
        raise ValueError(f"{payee} is not the last node of {asset}")
    hop = len(nodes) - 1
    chosen = np.ones(hop, dtype=bool) if force else rng.decisions(asset.base, hop)
    picked = np.flatnonzero(chosen).tolist()
    if not picked:
        return []
    # records[k] is the link into nodes[picked[0] + k + 1]
    records = link_records(asset, ledger, picked[0])
    published = []
    for i in picked:
        node = nodes[i]
        if node == payee:
            continue
        tx = _publish_shortcut(node, asset, payee, hop - i, records[i - picked[0]:], ledger)
        if tx is not None:
            published.append(tx)
    return published


def shortcut_targets(node: str, base: str, ledger: Ledger) -> list[tuple[str, int]]:
    """Shortcut destinations held by ``node`` for ``base``, longest jump first."""
    best: dict[str, int] = {}
    for tx in ledger.sent_by(node, base):
        if tx.kind == SHORTCUT:
            best[tx.payee] = max(best.get(tx.payee, 0), len(tx.asset.path))
    return sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))


def replica_count(node: str, base: str, ledger: Ledger) -> int:
    """Node IDs replicated at ``node``: the suffix span of its longest shortcut."""
    own = max((len(tx.asset.path) for tx in ledger.received_by(node, base)
               if tx.payer != node and tx.kind != SHORTCUT), default=0)
    jumps = [length for _, length in shortcut_targets(node, base, ledger)]
    return max(jumps, default=own) - own


def is_transfer_state(state: LinkState) -> bool:
    return state in (LinkState.SUCCEEDED, LinkState.FAILED)
