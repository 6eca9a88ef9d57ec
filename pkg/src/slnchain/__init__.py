"""Semantic link network traceability over a simulated append-only ledger."""

from .confirmation import ConfirmationSession, Phase, ScoreAccounts, ScoreBook
from .errors import SLNError
from .ledger import Account, ChainList, Ledger, Transaction, VerificationReport
from .model import (
    LinkImplicationRule,
    LinkPattern,
    LinkState,
    ObjectLocation,
    SemanticLink,
    StateTransitionRule,
    SuffixedObjectId,
    derive_implied_links,
    host_mapping,
    infer_object_location,
    state_reachable,
    validate_transition,
)
from .publisher import ProcessHandle, Publisher, publish_branch, publish_link, publish_schema_rule
from .shortcut import ShortcutRng
from .simharness import MetricsTable, SimConfig
from .tracer import PathTree, path_states, query_link_state, query_path, trace_process

__version__ = "0.1.0"

__all__ = [
    "Account",
    "ChainList",
    "ConfirmationSession",
    "Ledger",
    "LinkImplicationRule",
    "LinkPattern",
    "LinkState",
    "MetricsTable",
    "ObjectLocation",
    "PathTree",
    "Phase",
    "ProcessHandle",
    "Publisher",
    "SLNError",
    "ScoreAccounts",
    "ScoreBook",
    "SemanticLink",
    "ShortcutRng",
    "SimConfig",
    "StateTransitionRule",
    "SuffixedObjectId",
    "Transaction",
    "VerificationReport",
    "derive_implied_links",
    "host_mapping",
    "infer_object_location",
    "path_states",
    "publish_branch",
    "publish_link",
    "publish_schema_rule",
    "query_link_state",
    "query_path",
    "state_reachable",
    "trace_process",
    "validate_transition",
]
