"""In-process append-only transaction ledger.

Every transaction moves a suffixed object ID from a payer account to a payee
account and is hash-chained to the transaction through which the payer
received that object. Signatures are simulated with HMAC-SHA256 keyed by the
payer's private key.

Canonical byte form
-------------------
A length-prefixed field is ``u32_be(len(b)) || b``. The hash preimage of a
transaction is the concatenation of the length-prefixed fields

    prev_hash, payer, payee, asset, payload, payee_public_key

with strings UTF-8 encoded, ``asset`` rendered as ``base.v1.v2...`` and
``payload`` the key-sorted compact JSON of the tag. ``this_hash`` is the
SHA-256 of the preimage; ``signature = HMAC-SHA256(payer_private_key,
this_hash)``.

Log file
--------
``b"SLNC1"`` followed by records ``u32_be(len(record)) || record``. An account
record is ``b"A"`` + fields ``(id, public_key, private_key, kind, seal)`` with
``seal = HMAC-SHA256(private_key, b"account:" || u32(len(id)) || id || kind)``; a
transaction record is ``b"T"`` + the hash preimage fields + fields
``(this_hash, signature)``.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import struct
import threading
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterator, Mapping

from .errors import (
    AccountNotFound,
    DoubleSpend,
    DuplicateAccount,
    LedgerCorrupt,
    NotAssetOwner,
)
from .model import SuffixedObjectId, check_identifier

MAGIC = b"SLNC1"
ROOT_HASH = bytes(32)
_U32 = struct.Struct(">I")


def _lp(data: bytes) -> bytes:
    return _U32.pack(len(data)) + data


def _read_fields(buf: bytes, count: int) -> list[bytes]:
    out, pos = [], 0
    for _ in range(count):
        if pos + 4 > len(buf):
            raise LedgerCorrupt("truncated field header")
        (n,) = _U32.unpack_from(buf, pos)
        pos += 4
        if pos + n > len(buf):
            raise LedgerCorrupt("truncated field body")
        out.append(buf[pos : pos + n])
        pos += n
    if pos != len(buf):
        raise LedgerCorrupt("trailing bytes in record")
    return out


def canonical_payload(tag: Mapping[str, Any]) -> bytes:
    return json.dumps(tag, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def derive_public_key(private_key: bytes) -> bytes:
    return hashlib.sha256(b"sln-public:" + private_key).digest()


def _account_seal(private_key: bytes, account_id: str, kind: str) -> bytes:
    return hmac.new(private_key, b"account:" + _lp(account_id.encode()) + kind.encode(), hashlib.sha256).digest()


@dataclass(frozen=True)
class Account:
    id: str
    public_key: bytes
    private_key: bytes = field(repr=False)
    kind: str = "node"


@dataclass(frozen=True)
class Transaction:
    prev_hash: bytes
    payer: str
    payee: str
    asset: SuffixedObjectId
    payload: bytes
    payee_key: bytes
    this_hash: bytes
    signature: bytes

    @cached_property
    def tag(self) -> dict[str, Any]:
        return json.loads(self.payload)

    @property
    def kind(self) -> str:
        return self.tag.get("kind", "")

    def preimage(self) -> bytes:
        return b"".join(
            _lp(x)
            for x in (
                self.prev_hash,
                self.payer.encode(),
                self.payee.encode(),
                str(self.asset).encode(),
                self.payload,
                self.payee_key,
            )
        )

    def compute_hash(self) -> bytes:
        return hashlib.sha256(self.preimage()).digest()

    def to_record(self) -> bytes:
        return b"T" + self.preimage() + _lp(self.this_hash) + _lp(self.signature)

    def to_json(self) -> dict[str, Any]:
        return {
            "payer": self.payer,
            "payee": self.payee,
            "asset": str(self.asset),
            "tag": self.tag,
            "prev_hash": self.prev_hash.hex(),
            "this_hash": self.this_hash.hex(),
        }


@dataclass(frozen=True)
class ChainList:
    root: str
    base: str
    transactions: tuple[Transaction, ...]


@dataclass(frozen=True)
class TxCheck:
    hash_ok: bool
    signature_ok: bool
    link_ok: bool

    @property
    def ok(self) -> bool:
        return self.hash_ok and self.signature_ok and self.link_ok


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple[TxCheck, ...]

    @property
    def valid(self) -> bool:
        return all(c.ok for c in self.checks)


class Ledger:
    """Append-only store implementing the blockchain service surface.

    Pass ``path`` to persist to a log file; an existing file is replayed and
    verified on open. ``key_seed`` makes simulated key generation deterministic.
    """

    def __init__(self, path: str | os.PathLike | None = None, key_seed: bytes = b""):
        self.path = Path(path) if path is not None else None
        self.key_seed = key_seed
        self._lock = threading.RLock()
        self._accounts: dict[str, Account] = {}
        self._txs: list[Transaction] = []
        self._by_hash: dict[bytes, int] = {}
        self._by_base: dict[str, list[int]] = {}
        self._by_payer: dict[tuple[str, str], list[int]] = {}
        self._by_payee: dict[tuple[str, str], list[int]] = {}
        self._by_asset: dict[str, list[int]] = {}
        self._by_link: dict[tuple[str, str], list[int]] = {}
        self._spent: dict[tuple[bytes, str], str] = {}
        if self.path is not None:
            if self.path.exists() and self.path.stat().st_size:
                self._load()
            else:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.write_bytes(MAGIC)

    # -- persistence ------------------------------------------------------

    def _load(self) -> None:
        try:
            self._parse(self.path.read_bytes())
        except (UnicodeDecodeError, ValueError) as exc:
            if isinstance(exc, LedgerCorrupt):
                raise
            raise LedgerCorrupt(str(exc)) from exc

    def _parse(self, data: bytes) -> None:
        if not data.startswith(MAGIC):
            raise LedgerCorrupt("missing SLNC1 header")
        pos = len(MAGIC)
        while pos < len(data):
            if pos + 4 > len(data):
                raise LedgerCorrupt("truncated record header")
            (n,) = _U32.unpack_from(data, pos)
            pos += 4
            record = data[pos : pos + n]
            if len(record) != n or not record:
                raise LedgerCorrupt("truncated record")
            pos += n
            if record[:1] == b"A":
                aid, pub, priv, kind, seal = _read_fields(record[1:], 5)
                account = Account(aid.decode(), pub, priv, kind.decode())
                if (derive_public_key(priv) != pub or account.id in self._accounts
                        or not hmac.compare_digest(seal, _account_seal(priv, account.id, account.kind))):
                    raise LedgerCorrupt(f"bad account record {account.id!r}")
                self._accounts[account.id] = account
            elif record[:1] == b"T":
                f = _read_fields(record[1:], 8)
                try:
                    asset = SuffixedObjectId.parse(f[3].decode())
                except ValueError as exc:
                    raise LedgerCorrupt(str(exc)) from exc
                tx = Transaction(f[0], f[1].decode(), f[2].decode(), asset, f[4], f[5], f[6], f[7])
                payee = self._accounts.get(tx.payee)
                linked = tx.prev_hash == ROOT_HASH or tx.prev_hash in self._by_hash
                if (tx.compute_hash() != tx.this_hash or not self._signature_ok(tx) or not linked
                        or payee is None or payee.public_key != tx.payee_key):
                    raise LedgerCorrupt(f"transaction {len(self._txs)} fails verification")
                self._index(tx)
            else:
                raise LedgerCorrupt("unknown record type")

    def _write(self, record: bytes) -> None:
        if self.path is None:
            return
        with open(self.path, "ab") as fh:
            fh.write(_lp(record))
            fh.flush()

    # -- accounts ---------------------------------------------------------

    def create_account(self, account_id: str, kind: str = "node") -> Account:
        check_identifier(account_id, "account id")
        with self._lock:
            if account_id in self._accounts:
                raise DuplicateAccount(account_id)
            private = hashlib.sha256(b"sln-private:" + self.key_seed + b":" + account_id.encode()).digest()
            account = Account(account_id, derive_public_key(private), private, kind)
            seal = _account_seal(private, account_id, kind)
            fields = (account_id.encode(), account.public_key, private, kind.encode(), seal)
            self._write(b"A" + b"".join(_lp(x) for x in fields))
            self._accounts[account_id] = account
            return account

    def locate_account(self, account_id: str) -> Account:
        try:
            return self._accounts[account_id]
        except KeyError:
            raise AccountNotFound(account_id) from None

    def ensure_account(self, account_id: str, kind: str = "node") -> Account:
        with self._lock:
            if account_id in self._accounts:
                return self._accounts[account_id]
            return self.create_account(account_id, kind)

    def has_account(self, account_id: str) -> bool:
        return account_id in self._accounts

    def accounts(self) -> list[Account]:
        return list(self._accounts.values())

    # -- publishing -------------------------------------------------------

    def holding(self, account_id: str, asset: SuffixedObjectId) -> Transaction | None:
        """Latest transaction that gave ``account_id`` the longest prefix of ``asset``."""
        best, best_len = None, -1
        for i in self._by_payee.get((account_id, asset.base), ()):
            tx = self._txs[i]
            if tx.asset.is_prefix_of(asset) and len(tx.asset.path) >= best_len:
                best, best_len = tx, len(tx.asset.path)
        return best

    def publish_transaction(
        self,
        payer: str,
        payee: str,
        asset: SuffixedObjectId,
        tag: Mapping[str, Any],
    ) -> Transaction:
        with self._lock:
            payer_acc = self.locate_account(payer)
            payee_acc = self.locate_account(payee)
            prev = self.holding(payer, asset)
            if prev is None:
                if asset.base in self._by_base:
                    raise NotAssetOwner(f"{payer} does not hold {asset}")
                prev_hash = ROOT_HASH
            else:
                prev_hash = prev.this_hash
            spent_to = self._spent.get((prev_hash, str(asset)))
            if spent_to is not None and spent_to != payee:
                raise DoubleSpend(f"{asset} from {payer} already spent to {spent_to}")
            body = dict(tag)
            body["ts"] = len(self._txs)
            payload = canonical_payload(body)
            draft = Transaction(prev_hash, payer, payee, asset, payload, payee_acc.public_key, b"", b"")
            this_hash = draft.compute_hash()
            signature = hmac.new(payer_acc.private_key, this_hash, hashlib.sha256).digest()
            tx = Transaction(prev_hash, payer, payee, asset, payload, payee_acc.public_key, this_hash, signature)
            self._write(tx.to_record())
            self._index(tx)
            return tx

    def _index(self, tx: Transaction) -> None:
        i = len(self._txs)
        self._txs.append(tx)
        self._by_hash[tx.this_hash] = i
        base = tx.asset.base
        self._by_base.setdefault(base, []).append(i)
        self._by_payer.setdefault((tx.payer, base), []).append(i)
        self._by_payee.setdefault((tx.payee, base), []).append(i)
        self._by_asset.setdefault(str(tx.asset), []).append(i)
        self._spent.setdefault((tx.prev_hash, str(tx.asset)), tx.payee)
        link_id = tx.tag.get("link_id")
        if link_id is not None:
            self._by_link.setdefault((base, str(link_id)), []).append(i)

    # -- queries ----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._txs)

    def __iter__(self) -> Iterator[Transaction]:
        return iter(self._txs[: len(self._txs)])

    def transactions(self) -> tuple[Transaction, ...]:
        return tuple(self._txs[: len(self._txs)])

    def by_hash(self, digest: bytes) -> Transaction | None:
        i = self._by_hash.get(digest)
        return None if i is None else self._txs[i]

    def with_base(self, base: str) -> list[Transaction]:
        return [self._txs[i] for i in self._by_base.get(base, ())]

    def first(self, base: str) -> Transaction | None:
        """The issuing transaction of ``base``, if any."""
        idxs = self._by_base.get(base)
        return self._txs[idxs[0]] if idxs else None

    def with_link(self, base: str, link_id: str) -> list[Transaction]:
        """Transactions of ``base`` whose tag names ``link_id``."""
        return [self._txs[i] for i in self._by_link.get((base, link_id), ())]

    def with_asset(self, asset: SuffixedObjectId | str) -> list[Transaction]:
        return [self._txs[i] for i in self._by_asset.get(str(asset), ())]

    def sent_by(self, payer: str, base: str) -> list[Transaction]:
        return [self._txs[i] for i in self._by_payer.get((payer, base), ())]

    def received_by(self, payee: str, base: str) -> list[Transaction]:
        return [self._txs[i] for i in self._by_payee.get((payee, base), ())]

    def bases(self) -> list[str]:
        return list(self._by_base)

    def locate_transactions(self, payer: str, payee: str, base: str) -> list[Transaction]:
        return [tx for tx in self.sent_by(payer, base) if tx.payee == payee]

    def locate_chain(self, root: str) -> list[ChainList]:
        self.locate_account(root)
        chains = []
        for base, idxs in list(self._by_base.items()):
            if self._txs[idxs[0]].payer == root:
                chains.append(ChainList(root, base, tuple(self._txs[i] for i in idxs)))
        return chains

    # -- verification -----------------------------------------------------

    def _signature_ok(self, tx: Transaction) -> bool:
        account = self._accounts.get(tx.payer)
        if account is None or derive_public_key(account.private_key) != account.public_key:
            return False
        expected = hmac.new(account.private_key, tx.this_hash, hashlib.sha256).digest()
        return hmac.compare_digest(expected, tx.signature)

    def verify_chain(self, chain: ChainList | list[Transaction] | tuple[Transaction, ...]) -> VerificationReport:
        """Check hash integrity, signatures and hash-pointer links of ``chain``.

        A transaction's link check fails when its predecessor (looked up by
        stored hash within the chain) is missing, paid someone else, or does
        not itself verify, so tampering propagates downstream.
        """
        txs = chain.transactions if isinstance(chain, ChainList) else tuple(chain)
        position = {tx.this_hash: i for i, tx in enumerate(txs)}
        intact: list[bool] = []
        checks = []
        for tx in txs:
            hash_ok = tx.compute_hash() == tx.this_hash
            sig_ok = self._signature_ok(tx)
            if tx.prev_hash == ROOT_HASH:
                link_ok = True
            else:
                j = position.get(tx.prev_hash)
                link_ok = (
                    j is not None
                    and j < len(intact)
                    and intact[j]
                    and txs[j].payee == tx.payer
                    and txs[j].asset.is_prefix_of(tx.asset)
                )
            checks.append(TxCheck(hash_ok, sig_ok, link_ok))
            intact.append(hash_ok and sig_ok and link_ok)
        return VerificationReport(tuple(checks))
