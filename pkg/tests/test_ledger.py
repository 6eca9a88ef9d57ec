from __future__ import annotations

import dataclasses
import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slnchain.errors import AccountNotFound, DoubleSpend, DuplicateAccount, LedgerCorrupt, NotAssetOwner
from slnchain.ledger import MAGIC, ROOT_HASH, Ledger, canonical_payload
from slnchain.model import SuffixedObjectId


def _accounts(ledger, *names):
    for n in names:
        ledger.create_account(n)


def test_mint_then_transfer_chains_hashes(ledger):
    _accounts(ledger, "T", "a", "b")
    t0 = ledger.publish_transaction("T", "a", SuffixedObjectId("d"), {"kind": "ROOT"})
    t1 = ledger.publish_transaction("a", "b", SuffixedObjectId("d", ("b",)), {"kind": "LINK"})
    assert t0.prev_hash == ROOT_HASH
    assert t1.prev_hash == t0.this_hash
    assert t1.tag["ts"] == 1
    assert ledger.verify_chain(ledger.with_base("d")).valid


def test_golden_hash_of_canonical_form():
    ledger = Ledger(key_seed=b"golden")
    _accounts(ledger, "T", "a")
    tx = ledger.publish_transaction("T", "a", SuffixedObjectId("d"), {"kind": "ROOT"})
    expected = hashlib.sha256(
        b"".join(len(x).to_bytes(4, "big") + x for x in (
            bytes(32), b"T", b"a", b"d", b'{"kind":"ROOT","ts":0}',
            ledger.locate_account("a").public_key,
        ))
    ).digest()
    assert tx.this_hash == expected
    assert canonical_payload({"b": 1, "a": [1, "x"]}) == b'{"a":[1,"x"],"b":1}'


def test_non_holder_cannot_spend(ledger):
    _accounts(ledger, "T", "a", "b")
    ledger.publish_transaction("T", "a", SuffixedObjectId("d"), {})
    with pytest.raises(NotAssetOwner):
        ledger.publish_transaction("b", "a", SuffixedObjectId("d", ("a",)), {})


def test_double_spend_rejected(ledger):
    _accounts(ledger, "T", "a", "b", "c")
    ledger.publish_transaction("T", "a", SuffixedObjectId("d"), {})
    ledger.publish_transaction("a", "b", SuffixedObjectId("d"), {})
    with pytest.raises(DoubleSpend):
        ledger.publish_transaction("a", "c", SuffixedObjectId("d"), {})


def test_suffix_lets_holder_forward_again(ledger):
    _accounts(ledger, "T", "a", "b", "c")
    ledger.publish_transaction("T", "a", SuffixedObjectId("d"), {})
    ledger.publish_transaction("a", "b", SuffixedObjectId("d", ("b",)), {})
    tx = ledger.publish_transaction("a", "c", SuffixedObjectId("d", ("c",)), {})
    assert tx.payee == "c"


def test_account_errors(ledger):
    ledger.create_account("a")
    with pytest.raises(DuplicateAccount):
        ledger.create_account("a")
    with pytest.raises(AccountNotFound):
        ledger.locate_account("zz")


def test_locate_queries(ledger):
    _accounts(ledger, "T", "a", "b")
    ledger.publish_transaction("T", "a", SuffixedObjectId("d"), {})
    ledger.publish_transaction("a", "b", SuffixedObjectId("d", ("b",)), {})
    assert [c.base for c in ledger.locate_chain("T")] == ["d"]
    assert len(ledger.locate_transactions("a", "b", "d")) == 1
    assert ledger.first("d").payer == "T"


def test_persistence_round_trip(tmp_path):
    path = tmp_path / "x.log"
    a = Ledger(path)
    _accounts(a, "T", "a", "b")
    a.publish_transaction("T", "a", SuffixedObjectId("d"), {"kind": "ROOT"})
    a.publish_transaction("a", "b", SuffixedObjectId("d", ("b",)), {"kind": "LINK"})
    b = Ledger(path)
    assert [t.this_hash for t in b] == [t.this_hash for t in a]
    assert path.read_bytes().startswith(MAGIC)
    b.publish_transaction("b", "a", SuffixedObjectId("d", ("b", "a")), {})
    assert len(Ledger(path)) == 3


def test_every_byte_flip_in_log_is_detected(tmp_path):
    path = tmp_path / "x.log"
    led = Ledger(path)
    _accounts(led, "T", "a", "b")
    led.publish_transaction("T", "a", SuffixedObjectId("d"), {"kind": "ROOT"})
    led.publish_transaction("a", "b", SuffixedObjectId("d", ("b",)), {"kind": "LINK"})
    data = path.read_bytes()
    for i in range(len(data)):
        for mask in (0x01, 0x80):
            bad = bytearray(data)
            bad[i] ^= mask
            path.write_bytes(bytes(bad))
            with pytest.raises(LedgerCorrupt):
                Ledger(path)


def test_truncated_log_is_detected(tmp_path):
    path = tmp_path / "x.log"
    led = Ledger(path)
    _accounts(led, "T", "a")
    led.publish_transaction("T", "a", SuffixedObjectId("d"), {})
    data = path.read_bytes()
    path.write_bytes(data[:-3])
    with pytest.raises(LedgerCorrupt):
        Ledger(path)


TX_FIELDS = ["prev_hash", "payer", "payee", "payload", "payee_key", "this_hash", "signature"]


def _flip(value, pos):
    if isinstance(value, str):
        raw = bytearray(value.encode())
        raw[pos % len(raw)] ^= 0x01
        return raw.decode("latin-1")
    raw = bytearray(value)
    raw[pos % len(raw)] ^= 0x01
    return bytes(raw)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 3), st.sampled_from(TX_FIELDS), st.integers(0, 200))
def test_in_memory_tamper_fails_verification(which, field, pos):
    led = Ledger(key_seed=b"t")
    _accounts(led, "T", "a", "b", "c", "e")
    nodes = ["a", "b", "c", "e"]
    led.publish_transaction("T", "a", SuffixedObjectId("d"), {})
    for i in range(1, 4):
        led.publish_transaction(nodes[i - 1], nodes[i], SuffixedObjectId("d", tuple(nodes[1:i + 1])), {})
    txs = list(led.with_base("d"))
    txs[which] = dataclasses.replace(txs[which], **{field: _flip(getattr(txs[which], field), pos)})
    report = led.verify_chain(txs)
    assert not report.valid
    assert not report.checks[which].ok


def test_verification_report_flags_downstream():
    led = Ledger()
    _accounts(led, "T", "a", "b", "c")
    led.publish_transaction("T", "a", SuffixedObjectId("d"), {})
    led.publish_transaction("a", "b", SuffixedObjectId("d", ("b",)), {})
    led.publish_transaction("b", "c", SuffixedObjectId("d", ("b", "c")), {})
    txs = list(led.with_base("d"))
    txs[1] = dataclasses.replace(txs[1], payload=b'{"kind":"X"}')
    checks = led.verify_chain(txs).checks
    assert checks[0].ok and not checks[1].hash_ok and not checks[2].link_ok


def test_resigned_transaction_with_dangling_link_is_rejected(tmp_path):
    import hmac

    from slnchain.ledger import Transaction, _lp

    path = tmp_path / "x.log"
    led = Ledger(path)
    _accounts(led, "T", "a")
    tx = led.publish_transaction("T", "a", SuffixedObjectId("d"), {})
    forged = dataclasses.replace(tx, prev_hash=bytes([7]) * 32)
    forged = dataclasses.replace(forged, this_hash=forged.compute_hash())
    key = led.locate_account("T").private_key
    forged = dataclasses.replace(forged, signature=hmac.new(key, forged.this_hash, hashlib.sha256).digest())
    assert isinstance(forged, Transaction)
    with open(path, "ab") as fh:
        fh.write(_lp(forged.to_record()))
    with pytest.raises(LedgerCorrupt):
        Ledger(path)
