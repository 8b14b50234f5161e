"""Micro-campaign validation gate.

A candidate recipe is never trusted directly: it is scored in a short
isolated fuzzing run over a frozen corpus snapshot, using a coverage map
disjoint from the main run, and promoted only when its reward is strictly
positive.

Reward accounting: delta_edges / delta_paths / delta_crashes are measured
against the snapshot's replayed baseline coverage. The hit count h is the
number of mutation calls whose output produced new coverage in the
micro-campaign's own map (the recipe paid off); the miss count m is the
number of calls where the recipe failed to engage at all (selector
mismatch, no writable offset, missing tokens, inapplicable operator).
Calls that applied an operator without discovering anything are neutral.
A well-formed recipe on a fully saturated corpus therefore scores exactly
0.0, a recipe that cannot engage scores negative, and a discovering recipe
scores positive.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from dataclasses import dataclass
from pathlib import Path

from .engine import CorpusEntry, make_entry, mutate
from .recipe import MutationRecipe, lower_recipe
from .targets import EdgeBitmap, merge_into

INTERVENTIONS = ("default", "dictionary", "seed_focus", "per_seed_recipe")

STATUS_PROMOTED = "promoted"
STATUS_NO_SIGNIFICANCE = "no_significance"
REASON_NO_SUCCESS = "no_successful_micro_campaign"

SNAPSHOT_MANIFEST = "manifest.json"


class EmptyQueue(Exception):
    pass


class IoFailure(Exception):
    pass


class BudgetZero(Exception):
    pass


class ExecutorFailure(Exception):
    """The execution harness itself failed (distinct from a target crash)."""


class EmptyResults(Exception):
    pass


@dataclass(frozen=True)
class Candidate:
    recipe: MutationRecipe
    intervention: str
    candidate_id: str

    def __post_init__(self):
        if self.intervention not in INTERVENTIONS:
            raise ValueError(f"unknown intervention {self.intervention!r}")


@dataclass(frozen=True)
class RewardWeights:
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 10.0
    delta_h: float = 1e-3
    delta_m: float = 5e-4

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta_h", "delta_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class MicroResult:
    candidate_id: str
    delta_edges: int
    delta_paths: int
    delta_crashes: int
    hits: int
    misses: int
    execs: int
    reward: float
    bitmap_available: bool


@dataclass(frozen=True)
class PromotionDecision:
    winner: str | None
    winner_reward: float
    status: str


@dataclass(frozen=True)
class SnapshotRef:
    path: Path
    entries: tuple[str, ...]
    manifest: dict[str, str]
    digest: str


def compute_reward(
    delta_edges: int,
    delta_paths: int,
    delta_crashes: int,
    hits: int,
    misses: int,
    weights: RewardWeights,
    bitmap_available: bool = True,
) -> float:
    """Scalar reward for one micro-campaign.

    alpha per new edge (beta per new path when no coverage bitmap is
    available), gamma per new crash, delta_h per hit, minus delta_m per
    miss.
    """
    for name, value in (
        ("delta_edges", delta_edges),
        ("delta_paths", delta_paths),
        ("delta_crashes", delta_crashes),
        ("hits", hits),
        ("misses", misses),
    ):
        if value < 0:
            raise ValueError(f"{name} must be >= 0")
    if bitmap_available:
        coverage = weights.alpha * delta_edges
    else:
        coverage = weights.beta * delta_paths
    return coverage + weights.gamma * delta_crashes + weights.delta_h * hits - weights.delta_m * misses


def snapshot_corpus(queue_dir: Path | str, dest_dir: Path | str) -> SnapshotRef:
    """Freeze the queue into a private snapshot directory.

    Copies every queue entry byte-for-byte and writes a manifest mapping
    entry name to content digest; later queue changes cannot affect the
    snapshot.
    """
    queue_dir = Path(queue_dir)
    dest_dir = Path(dest_dir)
    try:
        names = sorted(p.name for p in queue_dir.iterdir() if p.is_file())
    except OSError as exc:
        raise IoFailure(f"cannot read queue dir {queue_dir}: {exc}") from exc
    if not names:
        raise EmptyQueue(f"queue dir {queue_dir} has no entries")
    try:
        dest_dir.mkdir(parents=True, exist_ok=False)
        manifest: dict[str, str] = {}
        for name in names:
            data = (queue_dir / name).read_bytes()
            (dest_dir / name).write_bytes(data)
            manifest[name] = hashlib.sha256(data).hexdigest()
        manifest_bytes = json.dumps(manifest, sort_keys=True).encode()
        (dest_dir / SNAPSHOT_MANIFEST).write_bytes(manifest_bytes)
    except OSError as exc:
        raise IoFailure(f"cannot write snapshot {dest_dir}: {exc}") from exc
    return SnapshotRef(
        path=dest_dir,
        entries=tuple(names),
        manifest=manifest,
        digest=hashlib.sha256(manifest_bytes).hexdigest(),
    )


def snapshot_digest(ref: SnapshotRef) -> str:
    """Recompute the snapshot digest from its on-disk content."""
    manifest = {}
    for name in ref.entries:
        manifest[name] = hashlib.sha256((ref.path / name).read_bytes()).hexdigest()
    return hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()


def load_snapshot(ref: SnapshotRef) -> tuple[CorpusEntry, ...]:
    return tuple(
        make_entry(name, (ref.path / name).read_bytes()) for name in ref.entries
    )


def evaluate_candidate(
    candidate: Candidate,
    snapshot: SnapshotRef,
    executor,
    weights: RewardWeights,
    rng_seed: int,
    budget_execs: int | None = None,
    budget_sec: float | None = None,
    max_size: int = 1024,
    map_capacity: int = 4096,
    bitmap_available: bool = True,
) -> MicroResult:
    """Score one candidate in an isolated run seeded from the snapshot.

    The run uses its own coverage map; deltas are measured against the
    snapshot's replayed baseline. Budget is wall-clock seconds by default
    in campaign use; tests use the deterministic exec-count mode.
    """
    if budget_execs is None and budget_sec is None:
        raise BudgetZero("no budget given")
    if budget_execs is not None and budget_execs <= 0:
        raise BudgetZero(f"budget_execs must be > 0, got {budget_execs}")
    if budget_sec is not None and budget_sec <= 0:
        raise BudgetZero(f"budget_sec must be > 0, got {budget_sec}")

    corpus = list(load_snapshot(snapshot))
    if not corpus:
        raise EmptyQueue("snapshot holds no entries")

    compact = lower_recipe(candidate.recipe)
    rng = random.Random(rng_seed)
    bitmap = EdgeBitmap(capacity=map_capacity)
    # Crashes are counted once per distinct edge-set signature (uniqueness
    # by coverage, not triage).
    crash_sigs: set[frozenset[int]] = set()

    # Replay the snapshot to establish the baseline the deltas are
    # measured against.
    for entry in corpus:
        try:
            result = executor.execute(entry.data)
        except Exception as exc:
            raise ExecutorFailure(f"executor failed on snapshot entry: {exc}") from exc
        merge_into(bitmap, result)
        if result.crashed:
            crash_sigs.add(result.edges_hit)

    delta_edges = 0
    delta_paths = 0
    delta_crashes = 0
    hits = 0
    misses = 0
    execs = 0
    corpus_view = tuple(corpus)
    queue_pos = 0
    deadline = time.monotonic() + budget_sec if budget_sec is not None else None

    while True:
        if budget_execs is not None and execs >= budget_execs:
            break
        if deadline is not None and time.monotonic() >= deadline:
            break
        entry = corpus[queue_pos % len(corpus)]
        queue_pos += 1
        outcome = mutate(compact, entry.data, corpus_view, rng, max_size, seed=entry)
        try:
            result = executor.execute(outcome.output)
        except Exception as exc:
            raise ExecutorFailure(f"executor failed during micro run: {exc}") from exc
        execs += 1
        if outcome.miss:
            misses += 1
            continue
        _, new_edges = merge_into(bitmap, result)
        if result.crashed and result.edges_hit not in crash_sigs:
            crash_sigs.add(result.edges_hit)
            delta_crashes += 1
        if new_edges > 0:
            delta_edges += new_edges
            delta_paths += 1
            hits += 1
            if not result.crashed:
                fresh = make_entry(f"{entry.seed_id}+{execs}", outcome.output)
                corpus.append(fresh)
                corpus_view = tuple(corpus)

    reward = compute_reward(
        delta_edges, delta_paths, delta_crashes, hits, misses, weights, bitmap_available
    )
    return MicroResult(
        candidate_id=candidate.candidate_id,
        delta_edges=delta_edges,
        delta_paths=delta_paths,
        delta_crashes=delta_crashes,
        hits=hits,
        misses=misses,
        execs=execs,
        reward=reward,
        bitmap_available=bitmap_available,
    )


def decide_winner(
    results: list[MicroResult],
) -> tuple[PromotionDecision, list[tuple[str, dict]]]:
    """Rank candidates by reward and gate promotion on reward > 0.

    Ties break toward the earlier candidate. Returns the decision plus the
    audit events to emit, in order. The gate-event payload strings are
    fixed: status=no_significance / reason=no_successful_micro_campaign.
    """
    if not results:
        raise EmptyResults("no micro results to rank")
    best = max(results, key=lambda r: r.reward)
    if best.reward > 0:
        decision = PromotionDecision(
            winner=best.candidate_id, winner_reward=best.reward, status=STATUS_PROMOTED
        )
        events = [
            (
                "winner_decided",
                {
                    "status": STATUS_PROMOTED,
                    "winner": best.candidate_id,
                    "winner_reward": best.reward,
                },
            ),
            (
                "recipe_promoted",
                {"candidate_id": best.candidate_id, "reward": best.reward},
            ),
        ]
    else:
        decision = PromotionDecision(
            winner=None, winner_reward=best.reward, status=STATUS_NO_SIGNIFICANCE
        )
        events = [
            (
                "winner_decided",
                {"status": STATUS_NO_SIGNIFICANCE, "winner_reward": best.reward},
            ),
            ("promotion_skipped", {"reason": REASON_NO_SUCCESS}),
        ]
    return decision, events
