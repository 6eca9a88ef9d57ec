"""Penalty-reward confirmation of published links.

Each node owns a trustiness balance ``s`` and a responsibility balance ``r``.
A session for one link moves a stake between those balances:

* request:  s_u -> s_v
* confirm:  s_v -> s_u, and both parties are rewarded ``alpha`` (minted)
* dispute:  s_v -> r_v (borrow, penalty ``alpha``), then r_v -> r_u (argument, fee ``alpha``)
* argue:    r_holder -> r_other (fee ``alpha``), turns alternate
* resolve:  r_holder -> s_v, then s_v -> s_u

Fees and penalties are taken from the sender's trustiness balance and
removed from circulation. All arithmetic uses :class:`fractions.Fraction`.
When a ledger is attached, every movement is also published as a SCORE
transaction between the sub-accounts ``<node>#s`` and ``<node>#r``, and
:meth:`ScoreBook.replay` rebuilds balances and sessions from those records.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any

from .errors import (
    DuplicateRequest,
    InsufficientResponsibility,
    InsufficientTrustiness,
    LinkNotFound,
    WrongPhase,
)
from .ledger import Ledger
from .model import SuffixedObjectId, check_identifier

SCORE = "SCORE"

DEFAULT_STAKE = Fraction(2)
DEFAULT_ALPHA = Fraction(1, 2)
DEFAULT_INITIAL = Fraction(10)
DEFAULT_THRESHOLD = Fraction(0)

Number = int | str | Fraction


class Phase(str, Enum):
    REQUESTED = "Requested"
    CONFIRMED = "Confirmed"
    DISPUTED = "Disputed"
    ARGUING = "Arguing"
    RESOLVED = "Resolved"
    EXHAUSTED = "Exhausted"


TERMINAL = frozenset({Phase.CONFIRMED, Phase.RESOLVED, Phase.EXHAUSTED})


@dataclass
class ScoreAccounts:
    node: str
    s: Fraction
    r: Fraction = Fraction(0)

    @property
    def reliability(self) -> Fraction:
        return self.s - self.r


@dataclass(frozen=True)
class ScoreTx:
    """One score movement; ``fee`` is burnt from the sender's trustiness."""

    op: str
    sender: str
    sender_acct: str
    receiver: str
    receiver_acct: str
    amount: Fraction
    fee: Fraction = Fraction(0)
    minted: Fraction = Fraction(0)

    def to_json(self) -> dict[str, Any]:
        return {
            "op": self.op,
            "from": f"{self.sender}#{self.sender_acct}",
            "to": f"{self.receiver}#{self.receiver_acct}",
            "amount": str(self.amount),
            "fee": str(self.fee),
            "minted": str(self.minted),
        }


@dataclass
class ConfirmationSession:
    link_id: str
    initiator: str
    counterpart: str
    stake: Fraction = DEFAULT_STAKE
    alpha: Fraction = DEFAULT_ALPHA
    phase: Phase | None = None
    transcript: list[ScoreTx] = field(default_factory=list)
    holder: str | None = None
    arguments: int = 0

    def __post_init__(self):
        check_identifier(self.link_id, "link id")
        self.stake = Fraction(self.stake)
        self.alpha = Fraction(self.alpha)
        if self.stake <= 0 or self.alpha <= 0:
            raise ValueError("stake and alpha must be positive")
        if self.initiator == self.counterpart:
            raise ValueError("a session needs two distinct parties")

    @property
    def rounds(self) -> int:
        """Argument exchanges: each party arguing once is one round."""
        return (self.arguments + 1) // 2

    @property
    def terminal(self) -> bool:
        return self.phase in TERMINAL

    def other(self, node: str) -> str:
        return self.counterpart if node == self.initiator else self.initiator

    def export(self) -> list[dict[str, Any]]:
        """Ordered transcript records for audit."""
        return [dict(tx.to_json(), seq=i, link_id=self.link_id) for i, tx in enumerate(self.transcript)]


def score_asset(link_id: str) -> SuffixedObjectId:
    return SuffixedObjectId("score~" + hashlib.sha256(link_id.encode()).hexdigest()[:16])


class ScoreBook:
    """Score balances of all nodes plus the confirmation sessions over them.

    Nodes are created lazily with ``initial`` trustiness. ``minted`` and
    ``fees`` accumulate rewards and charges so that conservation can be
    checked at any time with :meth:`conserved`.
    """

    def __init__(
        self,
        initial: Number = DEFAULT_INITIAL,
        threshold: Number = DEFAULT_THRESHOLD,
        ledger: Ledger | None = None,
    ):
        self.initial = Fraction(initial)
        self.threshold = Fraction(threshold)
        self.ledger = ledger
        self.accounts: dict[str, ScoreAccounts] = {}
        self.sessions: dict[str, ConfirmationSession] = {}
        self.minted = Fraction(0)
        self.fees = Fraction(0)
        self._lock = threading.RLock()

    def account(self, node: str) -> ScoreAccounts:
        if node not in self.accounts:
            check_identifier(node, "node id")
            self.accounts[node] = ScoreAccounts(node, self.initial)
        return self.accounts[node]

    def reliability(self, node: str) -> Fraction:
        return reliability(self.account(node))

    def is_halted(self, node: str) -> bool:
        return check_halt(self.account(node), self.threshold)

    def total(self) -> Fraction:
        return sum((a.s + a.r for a in self.accounts.values()), Fraction(0))

    def conserved(self) -> bool:
        return self.total() == self.initial * len(self.accounts) + self.minted - self.fees

    def session(self, link_id: str) -> ConfirmationSession:
        try:
            return self.sessions[link_id]
        except KeyError:
            raise LinkNotFound(f"no confirmation session for {link_id}") from None

    # -- protocol entry points ----------------------------------------------

    def request(self, link_id: str, initiator: str, counterpart: str,
                stake: Number = DEFAULT_STAKE, alpha: Number = DEFAULT_ALPHA) -> ConfirmationSession:
        with self._lock:
            session = ConfirmationSession(link_id, initiator, counterpart, Fraction(stake), Fraction(alpha))
            return request_confirmation(session, self)

    def confirm(self, link_id: str) -> ConfirmationSession:
        with self._lock:
            return confirm(self.session(link_id), self)

    def dispute(self, link_id: str) -> ConfirmationSession:
        with self._lock:
            return dispute(self.session(link_id), self)

    def argue(self, link_id: str, from_node: str) -> ConfirmationSession:
        with self._lock:
            return argue(self.session(link_id), from_node, self)

    def resolve(self, link_id: str) -> ConfirmationSession:
        with self._lock:
            return resolve(self.session(link_id), self)

    # -- movements ----------------------------------------------------------

    def _move(self, session: ConfirmationSession, tx: ScoreTx) -> None:
        src, dst = self.account(tx.sender), self.account(tx.receiver)
        setattr(src, tx.sender_acct, getattr(src, tx.sender_acct) - tx.amount)
        src.s -= tx.fee
        setattr(dst, tx.receiver_acct, getattr(dst, tx.receiver_acct) + tx.amount)
        self.fees += tx.fee
        if tx.minted:
            self.account(session.initiator).s += tx.minted
            self.account(session.counterpart).s += tx.minted
            self.minted += 2 * tx.minted
        session.transcript.append(tx)
        self._record(session, tx)

    def _record(self, session: ConfirmationSession, tx: ScoreTx) -> None:
        if self.ledger is None:
            return
        payer = f"{tx.sender}#{tx.sender_acct}"
        payee = f"{tx.receiver}#{tx.receiver_acct}"
        self.ledger.ensure_account(payer, kind="score")
        self.ledger.ensure_account(payee, kind="score")
        tag = {
            "kind": SCORE,
            "op": tx.op,
            "link_id": session.link_id,
            "initiator": session.initiator,
            "counterpart": session.counterpart,
            "stake": str(session.stake),
            "alpha": str(session.alpha),
            "sender": tx.sender,
            "amount": str(tx.amount),
            "fee": str(tx.fee),
            "minted": str(tx.minted),
        }
        self.ledger.publish_transaction(payer, payee, score_asset(session.link_id), tag)

    @classmethod
    def replay(cls, ledger: Ledger, initial: Number = DEFAULT_INITIAL,
               threshold: Number = DEFAULT_THRESHOLD, attach: bool = True) -> ScoreBook:
        """Rebuild balances and sessions from the SCORE transactions of ``ledger``.

        With ``attach`` the returned book publishes further movements to the
        same ledger.
        """
        book = cls(initial, threshold)
        for tx in ledger:
            if tx.kind != SCORE:
                continue
            tag = tx.tag
            op, link_id = tag["op"], tag["link_id"]
            if op == "request":
                book.request(link_id, tag["initiator"], tag["counterpart"],
                             Fraction(tag["stake"]), Fraction(tag["alpha"]))
            elif op == "confirm":
                book.confirm(link_id)
            elif op == "borrow":
                book.dispute(link_id)
            elif op in ("argue", "exhaust"):
                book.argue(link_id, tag["sender"])
            elif op == "respond":
                book.resolve(link_id)
        book.ledger = ledger if attach else None
        return book


# -- protocol operations ------------------------------------------------------


def _require_phase(session: ConfirmationSession, *phases: Phase | None) -> None:
    if session.phase not in phases:
        raise WrongPhase(f"{session.link_id} is {session.phase and session.phase.value}")


def request_confirmation(session: ConfirmationSession, book: ScoreBook) -> ConfirmationSession:
    if session.link_id in book.sessions:
        raise DuplicateRequest(session.link_id)
    u = book.account(session.initiator)
    book.account(session.counterpart)
    if u.s < session.stake:
        raise InsufficientTrustiness(f"{u.node} has {u.s} < {session.stake}")
    book.sessions[session.link_id] = session
    book._move(session, ScoreTx("request", u.node, "s", session.counterpart, "s", session.stake))
    session.phase = Phase.REQUESTED
    return session


def confirm(session: ConfirmationSession, book: ScoreBook) -> ConfirmationSession:
    _require_phase(session, Phase.REQUESTED)
    v = book.account(session.counterpart)
    if v.s < session.stake:
        raise InsufficientTrustiness(f"{v.node} has {v.s} < {session.stake}")
    book._move(session, ScoreTx("confirm", v.node, "s", session.initiator, "s",
                                session.stake, minted=session.alpha))
    session.phase = Phase.CONFIRMED
    return session


def dispute(session: ConfirmationSession, book: ScoreBook) -> ConfirmationSession:
    """The counterpart borrows the stake into responsibility and argues it to the initiator."""
    _require_phase(session, Phase.REQUESTED)
    v = book.account(session.counterpart)
    # borrow + penalty, then the argument's fee, all from s_v
    need = session.stake + 2 * session.alpha
    if v.s < need:
        raise InsufficientTrustiness(f"{v.node} has {v.s} < {need}")
    book._move(session, ScoreTx("borrow", v.node, "s", v.node, "r", session.stake, fee=session.alpha))
    book._move(session, ScoreTx("dispute", v.node, "r", session.initiator, "r",
                                session.stake, fee=session.alpha))
    session.holder = session.initiator
    session.arguments = 1
    session.phase = Phase.DISPUTED
    return session


def argue(session: ConfirmationSession, from_node: str, book: ScoreBook) -> ConfirmationSession:
    """Send the stake back from ``from_node``'s responsibility balance.

    Only the party currently holding the stake may argue. A sender that is
    halted or cannot pay the fee exhausts the session instead.
    """
    _require_phase(session, Phase.DISPUTED, Phase.ARGUING)
    if from_node not in (session.initiator, session.counterpart):
        raise WrongPhase(f"{from_node} is not a party of {session.link_id}")
    if from_node != session.holder:
        raise WrongPhase(f"it is {session.holder}'s turn to argue {session.link_id}")
    sender = book.account(from_node)
    if sender.r < session.stake:
        raise InsufficientResponsibility(f"{from_node} has r={sender.r} < {session.stake}")
    if check_halt(sender, book.threshold) or sender.s < session.alpha:
        book._move(session, ScoreTx("exhaust", from_node, "r", from_node, "r", Fraction(0)))
        session.phase = Phase.EXHAUSTED
        return session
    other = session.other(from_node)
    book._move(session, ScoreTx("argue", from_node, "r", other, "r", session.stake, fee=session.alpha))
    session.holder = other
    session.arguments += 1
    session.phase = Phase.ARGUING
    return session


def resolve(session: ConfirmationSession, book: ScoreBook) -> ConfirmationSession:
    """The stake holder returns it to s_v, which passes it back to s_u."""
    _require_phase(session, Phase.DISPUTED, Phase.ARGUING)
    holder = book.account(session.holder)
    if holder.r < session.stake:
        raise InsufficientResponsibility(f"{holder.node} has r={holder.r} < {session.stake}")
    book._move(session, ScoreTx("respond", holder.node, "r", session.counterpart, "s", session.stake))
    book._move(session, ScoreTx("return", session.counterpart, "s", session.initiator, "s", session.stake))
    session.holder = None
    session.phase = Phase.RESOLVED
    return session


def reliability(accounts: ScoreAccounts) -> Fraction:
    return accounts.s - accounts.r


def check_halt(accounts: ScoreAccounts, threshold: Number = DEFAULT_THRESHOLD) -> bool:
    return reliability(accounts) < Fraction(threshold)


def stalled_party(session: ConfirmationSession) -> str | None:
    """The party that holds the stake in an unfinished dispute, if any."""
    if session.terminal or session.phase not in (Phase.DISPUTED, Phase.ARGUING):
        return None
    return session.holder
