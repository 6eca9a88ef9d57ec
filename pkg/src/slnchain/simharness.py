"""Seeded experiments over generated logistic processes.

Every experiment is a pure function of :class:`SimConfig`: paths, party
choices and shortcut draws are derived from the seed, and results are
written in a fixed order, so reruns produce byte-identical CSV files.

A path of length ``n`` has ``n`` nodes after the root and ``n - 1`` hops.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .confirmation import ScoreBook
from .errors import DomainError, InsufficientTrustiness
from .ledger import Ledger
from .model import LinkState, SemanticLink, host_mapping, infer_object_location
from .publisher import ProcessHandle, issue_object, publish_link
from .shortcut import ShortcutRng, sample_path_shortcuts, shortcut_counts
from .tracer import query_path

STRATEGIES = ("always-confirm", "dispute-then-resolve", "always-argue")


@dataclass
class SimConfig:
    seed: int = 0
    path_length: int = 1000
    seeds: int = 1000
    avg_lengths: tuple[int, ...] = (5, 10, 15, 20, 25, 30, 35, 40)
    length_spread: int = 2
    paths_per_case: int = 1000
    parties: int = 100
    replica_lengths: tuple[int, ...] = (100, 500, 1000)
    replica_runs: int = 100
    pairs: int = 100
    sessions_per_pair: int = 3
    strategies: tuple[str, ...] = STRATEGIES
    stake: Fraction = Fraction(2)
    alpha: Fraction = Fraction(1, 2)
    initial: Fraction = Fraction(10)
    threshold: Fraction = Fraction(0)

    def __post_init__(self):
        for name in ("stake", "alpha", "initial", "threshold"):
            setattr(self, name, Fraction(getattr(self, name)))
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies {sorted(unknown)}")
        if min(self.avg_lengths, default=1) - self.length_spread < 1:
            raise ValueError("every sampled path length must be at least 1")

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> SimConfig:
        """Build a config from flat ``key=value`` strings; lists are comma separated."""
        kwargs: dict[str, Any] = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in values.items():
            if key not in types:
                continue
            kind = str(types[key])
            if kind.startswith("tuple[int"):
                kwargs[key] = tuple(int(x) for x in raw.split(",") if x.strip())
            elif kind.startswith("tuple[str"):
                kwargs[key] = tuple(x.strip() for x in raw.split(",") if x.strip())
            elif kind == "Fraction":
                kwargs[key] = Fraction(raw.strip())
            else:
                kwargs[key] = int(raw)
        return cls(**kwargs)


@dataclass(frozen=True)
class SummaryRow:
    case: str
    quantity: str
    mean: float
    max: float
    min: float
    std: float


def summarize(case: str, quantity: str, values: Sequence[float]) -> SummaryRow:
    arr = np.asarray(values, dtype=np.float64)
    return SummaryRow(case, quantity, float(arr.mean()), float(arr.max()), float(arr.min()), float(arr.std()))


@dataclass
class MetricsTable:
    """CSV rows of one experiment plus per-case summaries."""

    name: str
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    summary: list[SummaryRow] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(x) for x in row])
        return buf.getvalue()

    def write(self, directory: str | Path) -> Path:
        path = Path(directory) / f"{self.name}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_csv().encode("utf-8"))
        return path


def _fmt(x: Any) -> str:
    if isinstance(x, Fraction):
        x = float(x)
    if isinstance(x, (float, np.floating)):
        return repr(round(float(x), 10))
    return str(x)


# -- process generation -----------------------------------------------------


def _rng(config: SimConfig, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([config.seed & 0xFFFFFFFF, *stream]))


@dataclass
class GeneratedPath:
    obj: str
    nodes: list[str]


def publish_linear_path(
    obj: str,
    nodes: Sequence[str],
    process: ProcessHandle,
    ledger: Ledger,
    rng: ShortcutRng,
    states: Sequence[LinkState] = (LinkState.INIT, LinkState.TRANSPORTING, LinkState.SUCCEEDED),
) -> None:
    """Publish ``obj`` along ``nodes`` hop by hop with the given states per hop."""
    if len(nodes) == 1:
        issue_object(obj, nodes[0], process, ledger)
    for i in range(len(nodes) - 1):
        link = SemanticLink(f"{obj}-l{i + 1}", nodes[i], nodes[i + 1], obj)
        for state in states:
            publish_link(link, state, process, ledger, rng=rng)


def generate_process(
    config: SimConfig,
    length: int | None = None,
    objects: int = 1,
    ledger: Ledger | None = None,
    stream: int = 0,
) -> tuple[Ledger, ProcessHandle, list[GeneratedPath]]:
    """Publish ``objects`` linear paths of ``length`` nodes on a (fresh) ledger."""
    length = config.path_length if length is None else length
    if length < 0:
        raise DomainError("path length must be non-negative")
    ledger = ledger if ledger is not None else Ledger(key_seed=str(config.seed).encode())
    process = ProcessHandle(f"T{stream}")
    if not ledger.has_account(process.root):
        ledger.create_account(process.root, kind="process")
    rng = _rng(config, 1, stream)
    shortcut_rng = ShortcutRng(config.seed)
    pool = max(config.parties, length)
    paths = []
    for j in range(objects):
        obj = f"d{stream}x{j}"
        nodes = [f"p{k}" for k in rng.choice(pool, size=length, replace=False)] if length else []
        if nodes:
            publish_linear_path(obj, nodes, process, ledger, shortcut_rng)
        paths.append(GeneratedPath(obj, nodes))
    return ledger, process, paths


# -- shortcut distribution ----------------------------------------------------


def experiment_shortcut_distribution(config: SimConfig) -> MetricsTable:
    """Shortcut counts of nodes v1..v(n-1) of a path of ``path_length`` nodes, per seed."""
    n = config.path_length
    table = MetricsTable("shortcut_dist", ("node_index", "shortcut_count", "seed"))
    first, per_seed_max = [], []
    node_index = np.arange(1, n)
    for s in range(config.seeds):
        seed = config.seed + s
        counts = shortcut_counts(n, ShortcutRng(seed))[: n - 1]
        table.rows.extend(zip(node_index.tolist(), counts.tolist(), [seed] * (n - 1)))
        first.append(int(counts[0]) if n > 1 else 0)
        per_seed_max.append(int(counts.max()) if n > 1 else 0)
    table.summary.append(summarize(f"n={n}", "first_node_shortcuts", first))
    table.summary.append(summarize(f"n={n}", "max_node_shortcuts", per_seed_max))
    table.extra["first_node_mean"] = float(np.mean(first))
    table.extra["max_count"] = max(per_seed_max)
    return table


# -- query steps ----------------------------------------------------------------


def fit_log(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares fit ``y = a ln x + b``; returns ``(a, b, r_squared)``."""
    x = np.log(np.asarray(xs, dtype=np.float64))
    y = np.asarray(ys, dtype=np.float64)
    a, b = np.polyfit(x, y, 1)
    resid = y - (a * x + b)
    total = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / total if total else 1.0
    return float(a), float(b), r2


def _query_case(args: tuple[SimConfig, int, int]) -> dict[str, Any]:
    config, case, avg = args
    rng = _rng(config, 2, case)
    lengths = rng.integers(avg - config.length_spread, avg + config.length_spread + 1,
                           size=config.paths_per_case)
    with_sc, without_sc = [], []
    mismatches = slower = nonlinear = 0
    for j, length in enumerate(lengths.tolist()):
        ledger, process, (path,) = generate_process(config, length, stream=case * 1_000_003 + j)
        fast = query_path(process.root, path.obj, ledger)
        slow = query_path(process.root, path.obj, ledger, use_shortcuts=False)
        mismatches += fast.tree.nodes() != slow.tree.nodes()
        slower += fast.visits > slow.visits
        nonlinear += slow.visits != length + 1
        with_sc.append(fast.visits)
        without_sc.append(slow.visits)
    return {"avg": avg, "lengths": lengths.tolist(), "with": with_sc, "without": without_sc,
            "mismatches": mismatches, "slower": slower, "nonlinear": nonlinear}


def experiment_query_steps(config: SimConfig, workers: int = 1) -> MetricsTable:
    """Mean visits of path queries with and without shortcuts per average length."""
    jobs = [(config, case, avg) for case, avg in enumerate(config.avg_lengths)]
    results = _map(_query_case, jobs, workers)
    table = MetricsTable("query_steps", ("avg_length", "steps_with", "steps_without", "ln_bound"))
    means_with = [float(np.mean(r["with"])) for r in results]
    a, b, r2 = fit_log(config.avg_lengths, means_with) if len(results) > 1 else (0.0, means_with[0], 1.0)
    for r, mean_with in zip(results, means_with):
        avg = r["avg"]
        table.rows.append((avg, mean_with, float(np.mean(r["without"])), a * math.log(avg) + b))
        table.summary.append(summarize(f"L={avg}", "steps_with", r["with"]))
        table.summary.append(summarize(f"L={avg}", "steps_without", r["without"]))
    table.extra.update(
        fit=(a, b, r2),
        mismatches=sum(r["mismatches"] for r in results),
        slower=sum(r["slower"] for r in results),
        nonlinear=sum(r["nonlinear"] for r in results),
        paths=sum(len(r["with"]) for r in results),
        mean_lengths=[float(np.mean(r["lengths"])) for r in results],
    )
    return table


def _map(func: Callable, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [func(job) for job in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, jobs))


# -- replicas -------------------------------------------------------------------


def path_replicas(n: int, rng: ShortcutRng, obj: str = "d") -> int:
    """Total node IDs replicated along a path of ``n`` nodes.

    A node replicates every node ID between itself and its farthest shortcut.
    """
    total = 0
    for i, targets in enumerate(sample_path_shortcuts(n, rng, obj)):
        if targets:
            total += max(targets) - i
    return total


def experiment_replicas(config: SimConfig) -> MetricsTable:
    table = MetricsTable("replicas", ("length", "replicas", "n_squared"))
    for case, n in enumerate(config.replica_lengths):
        values = []
        for run in range(config.replica_runs):
            reps = path_replicas(n, ShortcutRng(config.seed + run), obj=f"r{case}")
            values.append(reps)
            table.rows.append((n, reps, n * n))
        table.summary.append(summarize(f"n={n}", "replicas", values))
    return table


# -- host accesses for one link's states ------------------------------------------


def host_access_formula(n: int, p: Fraction | float | str) -> Fraction:
    """``(1/n) * sum_{i=1}^{n-1} (p^i + q^i + 2 (1 - p^i - q^i))`` with ``q = 1 - p``, exactly."""
    p = Fraction(p)
    if not isinstance(n, int) or n < 2:
        raise DomainError("n must be an integer >= 2")
    if not 0 < p < 1:
        raise DomainError("p must lie strictly between 0 and 1")
    q = 1 - p
    total = sum((p**i + q**i + 2 * (1 - p**i - q**i) for i in range(1, n)), Fraction(0))
    return total / n


def actual_mapping_slots() -> list[str]:
    """Host of each link state under the host mapping (End taken after Succeeded)."""
    link = SemanticLink("l", "u", "v", "d")
    prev = infer_object_location(link, LinkState.SUCCEEDED)
    return [
        host_mapping(link, infer_object_location(link, s), prev if s is LinkState.END else None)
        for s in LinkState
    ]


def expected_host_accesses(slots: Sequence[str], k: int | None = None) -> Fraction:
    """Exact expected distinct hosts when ``k`` states are drawn uniformly with replacement.

    ``k=None`` averages over ``k`` uniform on ``1..len(slots)``.
    """
    size = len(slots)
    ks = range(1, size + 1) if k is None else [k]
    shares = [Fraction(slots.count(h), size) for h in sorted(set(slots))]
    per_k = [sum((1 - (1 - s) ** kk for s in shares), Fraction(0)) for kk in ks]
    return sum(per_k, Fraction(0)) / len(per_k)


def monte_carlo_host_accesses(
    slots: Sequence[str],
    k: int | None = None,
    samples: int = 1_000_000,
    seed: int = 0,
) -> float:
    """Mean number of distinct hosts touched by ``k`` uniform state queries.

    ``slots`` lists the host of each state; ``k=None`` draws ``k`` uniformly
    from ``1..len(slots)`` per sample.
    """
    size = len(slots)
    if k is not None and k < 1:
        raise DomainError("k must be at least 1")
    rng = np.random.default_rng(seed)
    hosts = sorted(set(slots))
    host_of = np.array([hosts.index(h) for h in slots])
    kmax = size if k is None else k
    ks = rng.integers(1, size + 1, size=samples) if k is None else np.full(samples, k)
    picks = host_of[rng.integers(0, size, size=(samples, kmax))]
    used = np.arange(kmax)[None, :] < ks[:, None]
    touched = sum(((picks == h) & used).any(axis=1).astype(np.int64) for h in range(len(hosts)))
    return float(np.mean(touched))


def host_access_report(n: int = 6, p: Fraction | float | str = Fraction(5, 6), samples: int = 1_000_000,
                    seed: int = 0) -> dict[str, Any]:
    formula = host_access_formula(n, Fraction(p).limit_denominator(10_000))
    slots = actual_mapping_slots()
    simulated = monte_carlo_host_accesses(slots, None, samples, seed)
    return {
        "formula": formula,
        "formula_value": float(formula),
        "slots": slots,
        "mapping_exact": float(expected_host_accesses(slots)),
        "mapping_monte_carlo": simulated,
        "claimed": 1.414,
    }


def format_host_access_report(report: dict[str, Any]) -> str:
    return "\n".join([
        f"(i)   closed-form sum: {report['formula_value']:.4f}",
        f"(ii)  Monte-Carlo over the host mapping {report['slots']}: "
        f"{report['mapping_monte_carlo']:.4f} (exact {report['mapping_exact']:.4f})",
        f"(iii) claimed value: {report['claimed']:.3f}",
        "note: the claimed value is reproduced by neither (i) nor (ii); (i) assumes "
        "5 of 6 states on the source host, while the implemented mapping puts 2 of 5 there.",
    ])


# -- confirmation ---------------------------------------------------------------


def _run_strategy(book: ScoreBook, strategy: str, link_id: str, u: str, v: str,
                  config: SimConfig) -> Any:
    session = book.request(link_id, u, v, config.stake, config.alpha)
    if strategy == "always-confirm":
        return book.confirm(link_id)
    book.dispute(link_id)
    if strategy == "dispute-then-resolve":
        return book.resolve(link_id)
    while not session.terminal:
        book.argue(link_id, session.holder)
    return session


def experiment_confirmation(config: SimConfig) -> MetricsTable:
    """Run ``pairs`` node pairs, each with a strategy drawn from the configured mix."""
    table = MetricsTable("confirmation", ("strategy", "rounds", "terminal_phase", "final_reliability"))
    book = ScoreBook(config.initial, config.threshold)
    rng = _rng(config, 4)
    picks = rng.integers(0, len(config.strategies), size=config.pairs)
    per_strategy: dict[str, list[int]] = {s: [] for s in config.strategies}
    open_sessions = 0
    for i, pick in enumerate(picks.tolist()):
        strategy = config.strategies[pick]
        u, v = f"u{i}", f"v{i}"
        for k in range(config.sessions_per_pair):
            if book.is_halted(u) or book.is_halted(v):
                break
            try:
                session = _run_strategy(book, strategy, f"c{i}x{k}", u, v, config)
            except InsufficientTrustiness:
                break
            open_sessions += not session.terminal
            reliability = min(book.reliability(u), book.reliability(v))
            table.rows.append((strategy, session.rounds, session.phase.value, reliability))
            per_strategy[strategy].append(session.rounds)
    for strategy, rounds in per_strategy.items():
        if rounds:
            table.summary.append(summarize(strategy, "rounds", rounds))
    table.extra.update(open_sessions=open_sessions, conserved=book.conserved(), book=book)
    return table


EXPERIMENTS: dict[str, Callable[[SimConfig], MetricsTable]] = {
    "shortcuts": experiment_shortcut_distribution,
    "steps": experiment_query_steps,
    "replicas": experiment_replicas,
    "confirmation": experiment_confirmation,
}
