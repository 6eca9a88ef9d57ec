"""Semantic link network types and the pure reasoning functions over them.

Covers link states, object-location inference, the default state-transition
schema, host mapping of link states onto ledger accounts, and fixed-point
derivation of implied links.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Iterable, Mapping, Union

from .errors import IllegalTransition, InvalidIdentifier, MissingPreviousLocation

SUFFIX_SEP = "."


class LinkState(str, Enum):
    INIT = "Init"
    TRANSPORTING = "Transporting"
    SUCCEEDED = "Succeeded"
    FAILED = "Failed"
    END = "End"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str | LinkState) -> LinkState:
        if isinstance(text, LinkState):
            return text
        for state in cls:
            if state.value.lower() == str(text).lower():
                return state
        raise ValueError(f"unknown link state {text!r}")


ALL_STATES: tuple[LinkState, ...] = tuple(LinkState)

DEFAULT_TRANSITIONS: Mapping[LinkState, frozenset[LinkState]] = {
    LinkState.INIT: frozenset({LinkState.TRANSPORTING, LinkState.FAILED, LinkState.END}),
    LinkState.TRANSPORTING: frozenset(
        {LinkState.TRANSPORTING, LinkState.SUCCEEDED, LinkState.FAILED}
    ),
    LinkState.FAILED: frozenset({LinkState.END}),
    LinkState.SUCCEEDED: frozenset({LinkState.END}),
    LinkState.END: frozenset(),
}


def check_identifier(value: str, what: str = "identifier") -> str:
    if not isinstance(value, str) or not value:
        raise InvalidIdentifier(f"{what} must be a non-empty string")
    if SUFFIX_SEP in value:
        raise InvalidIdentifier(f"{what} {value!r} may not contain {SUFFIX_SEP!r}")
    return value


@dataclass(frozen=True)
class SuffixedObjectId:
    """An object ID plus the target nodes it has passed through, in order."""

    base: str
    path: tuple[str, ...] = ()

    def __post_init__(self):
        check_identifier(self.base, "object id")
        object.__setattr__(self, "path", tuple(self.path))
        for node in self.path:
            check_identifier(node, "suffix node")

    def __str__(self) -> str:
        return SUFFIX_SEP.join((self.base, *self.path))

    @classmethod
    def parse(cls, text: str) -> SuffixedObjectId:
        base, *path = text.split(SUFFIX_SEP)
        return cls(base, tuple(path))

    def extend(self, node: str) -> SuffixedObjectId:
        return SuffixedObjectId(self.base, self.path + (node,))

    def is_prefix_of(self, other: SuffixedObjectId) -> bool:
        """True when ``other`` is this ID or one of its suffix extensions."""
        return (
            self.base == other.base
            and len(self.path) <= len(other.path)
            and other.path[: len(self.path)] == self.path
        )


@dataclass(frozen=True)
class SemanticLink:
    """A logistic transportation ``source -<link_id, obj>-> target``."""

    link_id: str
    source: str
    target: str
    obj: str
    link_type: str = "transport"
    state_history: tuple[LinkState, ...] = (LinkState.INIT,)
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        check_identifier(self.source, "source")
        check_identifier(self.target, "target")
        check_identifier(self.obj, "object id")
        history = tuple(LinkState.parse(s) for s in self.state_history)
        if not history or history[0] is not LinkState.INIT:
            raise IllegalTransition("a link's state history must start at Init")
        for prev, nxt in zip(history, history[1:]):
            if nxt not in DEFAULT_TRANSITIONS[prev]:
                raise IllegalTransition(f"{prev} -> {nxt} is not a legal transition")
        object.__setattr__(self, "state_history", history)
        object.__setattr__(self, "attributes", dict(self.attributes))

    @property
    def state(self) -> LinkState:
        return self.state_history[-1]


class LocationKind(str, Enum):
    AT_SOURCE = "AtSource"
    ON_LINK = "OnLink"
    AT_TARGET = "AtTarget"
    END = "End"


@dataclass(frozen=True)
class ObjectLocation:
    kind: LocationKind
    ref: str | None = None

    @classmethod
    def at_source(cls, node: str) -> ObjectLocation:
        return cls(LocationKind.AT_SOURCE, node)

    @classmethod
    def on_link(cls, link_id: str) -> ObjectLocation:
        return cls(LocationKind.ON_LINK, link_id)

    @classmethod
    def at_target(cls, node: str) -> ObjectLocation:
        return cls(LocationKind.AT_TARGET, node)

    def __str__(self) -> str:
        return self.kind.value if self.ref is None else f"{self.kind.value}({self.ref})"


END_LOCATION = ObjectLocation(LocationKind.END)


# -- schema rules -----------------------------------------------------------


@dataclass(frozen=True)
class StateTransitionRule:
    from_state: LinkState
    to_states: frozenset[LinkState]

    def __post_init__(self):
        object.__setattr__(self, "from_state", LinkState.parse(self.from_state))
        to_states = frozenset(LinkState.parse(s) for s in self.to_states)
        if not to_states:
            raise ValueError("a state-transition rule needs at least one target state")
        object.__setattr__(self, "to_states", to_states)


@dataclass(frozen=True)
class LinkPattern:
    """``<source, label, obj, target>``; fields starting with ``?`` are variables."""

    source: str
    label: str
    obj: str
    target: str

    def terms(self) -> tuple[str, str, str, str]:
        return (self.source, self.label, self.obj, self.target)


@dataclass(frozen=True)
class LinkImplicationRule:
    premises: tuple[LinkPattern, ...]
    conclusion: LinkPattern

    def __post_init__(self):
        premises = tuple(self.premises)
        if not premises:
            raise ValueError("an implication rule needs at least one premise")
        bound = {t for p in premises for t in p.terms() if _is_var(t)}
        free = {t for t in self.conclusion.terms() if _is_var(t)} - bound
        if free:
            raise ValueError(f"conclusion variables {sorted(free)} are not bound by premises")
        object.__setattr__(self, "premises", premises)


SchemaRule = Union[StateTransitionRule, LinkImplicationRule]
LinkFact = tuple[str, str, str, str]


def default_rules() -> list[StateTransitionRule]:
    """The default transition table as rules (End has no row)."""
    return [
        StateTransitionRule(s, targets)
        for s, targets in DEFAULT_TRANSITIONS.items()
        if targets
    ]


def transition_table(
    rules: Iterable[SchemaRule] | None = None,
) -> dict[LinkState, frozenset[LinkState]]:
    """Default table with each rule replacing the row of its from-state; later rules win."""
    table = dict(DEFAULT_TRANSITIONS)
    for rule in rules or ():
        if isinstance(rule, StateTransitionRule):
            table[rule.from_state] = rule.to_states
    return table


# -- operations ---------------------------------------------------------------


def infer_object_location(link: SemanticLink, state: LinkState) -> ObjectLocation:
    state = LinkState.parse(state)
    if state is LinkState.INIT:
        return ObjectLocation.at_source(link.source)
    if state is LinkState.TRANSPORTING:
        return ObjectLocation.on_link(link.link_id)
    if state in (LinkState.SUCCEEDED, LinkState.FAILED):
        return ObjectLocation.at_target(link.target)
    return END_LOCATION


def legal_next_states(state: LinkState) -> frozenset[LinkState]:
    return DEFAULT_TRANSITIONS[LinkState.parse(state)]


def validate_transition(
    prev: LinkState, nxt: LinkState, rules: Iterable[SchemaRule] | None = None
) -> bool:
    return LinkState.parse(nxt) in transition_table(rules)[LinkState.parse(prev)]


def state_reachable(
    src: LinkState, dst: LinkState, rules: Iterable[SchemaRule] | None = None
) -> bool:
    """Reflexive-transitive reachability in the transition graph."""
    table = transition_table(rules)
    src, dst = LinkState.parse(src), LinkState.parse(dst)
    seen = {src}
    queue = deque([src])
    while queue:
        state = queue.popleft()
        if state is dst:
            return True
        for nxt in table[state]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return False


def host_mapping(
    link: SemanticLink,
    location: ObjectLocation,
    prev_location: ObjectLocation | None = None,
) -> str:
    """Account that receives the transaction recording ``link`` at ``location``."""
    if location.kind is LocationKind.END:
        if prev_location is None or prev_location.kind is LocationKind.END:
            raise MissingPreviousLocation("End needs the previous non-End location")
        return host_mapping(link, prev_location)
    if location.kind in (LocationKind.AT_SOURCE, LocationKind.ON_LINK):
        return link.source
    return link.target


# -- implication rules --------------------------------------------------------


def _is_var(term: str) -> bool:
    return term.startswith("?")


def _match(pattern: LinkPattern, fact: LinkFact, binding: dict[str, str]) -> dict | None:
    out = dict(binding)
    for term, value in zip(pattern.terms(), fact):
        if _is_var(term):
            if out.setdefault(term, value) != value:
                return None
        elif term != value:
            return None
    return out


def _instantiate(pattern: LinkPattern, binding: Mapping[str, str]) -> LinkFact:
    return tuple(binding[t] if _is_var(t) else t for t in pattern.terms())  # type: ignore[return-value]


def derive_implied_links(
    links: Iterable[LinkFact], rules: Iterable[SchemaRule]
) -> set[LinkFact]:
    """Saturate ``links`` under the implication rules (semi-naive evaluation)."""
    implications = [r for r in rules if isinstance(r, LinkImplicationRule)]
    known: set[LinkFact] = {tuple(f) for f in links}  # type: ignore[misc]
    delta = set(known)
    while delta:
        ordered = sorted(known)
        new: set[LinkFact] = set()
        for rule in implications:
            # semi-naive: at least one premise must come from the last round
            for i in range(len(rule.premises)):
                pools = [sorted(delta) if j == i else ordered for j in range(len(rule.premises))]
                new |= _apply_with_pools(rule, pools)
        delta = new - known
        known |= delta
    return known


def _apply_with_pools(rule: LinkImplicationRule, pools: list[list[LinkFact]]) -> set[LinkFact]:
    out: set[LinkFact] = set()
    for combo in product(*pools):
        binding: dict[str, str] | None = {}
        for premise, fact in zip(rule.premises, combo):
            binding = _match(premise, fact, binding)
            if binding is None:
                break
        if binding is not None:
            out.add(_instantiate(rule.conclusion, binding))
    return out
