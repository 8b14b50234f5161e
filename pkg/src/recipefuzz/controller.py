"""Campaign controller.

Runs the in-process coverage-guided main loop over an executor, feeds the
plateau detector one telemetry frame per virtual second, and on a plateau
runs the full intervention pipeline: corpus snapshot, candidate proposals,
micro-campaign gate, promote-or-skip. Every decision lands in an
append-only event log. No proposal provider is reachable from the
mutation path; providers are consulted exclusively by the plateau
handler.

Campaign time is virtual: each telemetry frame spans one virtual second
and covers a fixed number of executions, so runs with exec-count or
(virtual) second budgets are bit-for-bit deterministic given the seed.
"""

from __future__ import annotations

import hashlib
import json
import random
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from .engine import CorpusEntry, havoc_mutate, make_entry, mutate
from .micro import (
    Candidate,
    INTERVENTIONS,
    MicroResult,
    RewardWeights,
    SnapshotRef,
    decide_winner,
    evaluate_candidate,
    snapshot_corpus,
)
from .plateau import DetectorConfig, DetectorState, TelemetryFrame, check_plateau, observe
from .providers import RuleProvider, default_recipe_doc
from .recipe import SchemaViolation, lower_recipe, parse_recipe, serialize_recipe
from .targets import DEFAULT_MAP_SIZE, EdgeBitmap, default_seeds, get_target, merge_into

ABLATIONS = ("baseline", "rule-only", "no-mutator", "controller-only", "full")

# Event kinds, in the vocabulary consumers grep for.
K_PLATEAU = "plateau_detected"
K_SNAPSHOT = "corpus_snapshot"
K_PROPOSAL = "proposal_recorded"
K_MICRO = "micro_result"
K_WINNER = "winner_decided"
K_PROMOTED = "recipe_promoted"
K_SKIPPED = "promotion_skipped"
K_COMPLETED = "run_completed"

SCHEDULE_ENERGY = 4
SKIP_NON_FAVORED = 0.75


class ConfigInvalid(Exception):
    pass


@dataclass(frozen=True)
class AuditEvent:
    t: float
    kind: str
    payload: dict
    context_hash: str | None = None
    response_hash: str | None = None

    def to_json_line(self) -> str:
        doc = {"t": self.t, "kind": self.kind, "payload": self.payload}
        if self.context_hash is not None:
            doc["context_hash"] = self.context_hash
        if self.response_hash is not None:
            doc["response_hash"] = self.response_hash
        return json.dumps(doc, sort_keys=True)


def load_events(path: Path | str) -> list[AuditEvent]:
    events = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        events.append(
            AuditEvent(
                t=doc["t"],
                kind=doc["kind"],
                payload=doc["payload"],
                context_hash=doc.get("context_hash"),
                response_hash=doc.get("response_hash"),
            )
        )
    return events


@dataclass(frozen=True)
class Blackboard:
    """The proposal layer's only view of campaign state."""

    snapshot_path: str
    snapshot_digest: str
    seeds: tuple[dict, ...]
    recent_stats: tuple[TelemetryFrame, ...]
    static_context: dict
    config_digest: str
    cycle: int

    def to_doc(self) -> dict:
        return {
            "snapshot": {
                "path": self.snapshot_path,
                "digest": self.snapshot_digest,
                "seeds": list(self.seeds),
            },
            "recent_stats": [
                {
                    "t": f.t,
                    "execs_done": f.execs_done,
                    "paths_total": f.paths_total,
                    "edges_found": f.edges_found,
                }
                for f in self.recent_stats
            ],
            "static_context": self.static_context,
            "config_digest": self.config_digest,
            "cycle": self.cycle,
        }


def hash_context(blackboard: Blackboard | dict) -> str:
    doc = blackboard.to_doc() if isinstance(blackboard, Blackboard) else blackboard
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def hash_response(document: str | bytes) -> str:
    if isinstance(document, str):
        document = document.encode("utf-8")
    return hashlib.sha256(document).hexdigest()


@dataclass
class CampaignConfig:
    target: str = "parser"
    output_dir: Path | str = "run_out"
    ablation: str = "full"
    budget_sec: float | None = None
    budget_execs: int | None = None
    rng_seed: int = 0
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    frame_execs: int = 4
    k_cand: int = 4
    micro_budget_execs: int | None = 500
    micro_budget_sec: float | None = None
    reward: RewardWeights = field(default_factory=RewardWeights)
    providers: tuple = ()
    static_tokens: tuple[bytes, ...] | None = None
    max_size: int = 1024
    map_capacity: int = DEFAULT_MAP_SIZE

    def digest(self) -> str:
        doc = {
            "target": self.target,
            "ablation": self.ablation,
            "budget_sec": self.budget_sec,
            "budget_execs": self.budget_execs,
            "rng_seed": self.rng_seed,
            "detector": {
                "window_sec": self.detector.window_sec,
                "theta_execs": self.detector.theta_execs,
                "theta_paths": self.detector.theta_paths,
                "rearm_policy": self.detector.rearm_policy,
            },
            "frame_execs": self.frame_execs,
            "k_cand": self.k_cand,
            "micro_budget_execs": self.micro_budget_execs,
            "micro_budget_sec": self.micro_budget_sec,
            "reward": [
                self.reward.alpha,
                self.reward.beta,
                self.reward.gamma,
                self.reward.delta_h,
                self.reward.delta_m,
            ],
            "providers": [getattr(p, "name", type(p).__name__) for p in self.providers],
            "static_tokens": [t.decode("latin-1") for t in self.static_tokens or ()],
            "max_size": self.max_size,
            "map_capacity": self.map_capacity,
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def validate_config(config: CampaignConfig) -> None:
    if config.ablation not in ABLATIONS:
        raise ConfigInvalid(f"unknown ablation {config.ablation!r}")
    if (config.budget_sec is None) == (config.budget_execs is None):
        raise ConfigInvalid("exactly one of budget_sec / budget_execs required")
    if config.budget_sec is not None and config.budget_sec < 0:
        raise ConfigInvalid("budget_sec must be >= 0")
    if config.budget_execs is not None and config.budget_execs < 0:
        raise ConfigInvalid("budget_execs must be >= 0")
    if config.k_cand < 1:
        raise ConfigInvalid("k_cand must be >= 1")
    if config.frame_execs < 1:
        raise ConfigInvalid("frame_execs must be >= 1")


@dataclass(frozen=True)
class RunArtifacts:
    output_dir: Path
    fuzzer_stats: dict[str, str]
    coverage_series: tuple[tuple[float, int], ...]
    events: tuple[AuditEvent, ...]

    @property
    def edges_found(self) -> int:
        return int(self.fuzzer_stats["edges_found"])

    @property
    def execs_done(self) -> int:
        return int(self.fuzzer_stats["execs_done"])


def propose_candidates(
    blackboard: Blackboard,
    providers,
    k: int,
    cycle: int = 1,
) -> tuple[list[Candidate], list[dict]]:
    """Fill k candidate slots, one intervention type per slot.

    Providers are consulted in order per slot; a schema-invalid document is
    dropped and recorded (error_kind=schema_invalid) and the next provider
    gets the slot. The built-in rule provider terminates the chain, so the
    bundle always comes back full.
    """
    if k < 1:
        raise ConfigInvalid("k must be >= 1")
    doc = blackboard.to_doc()
    ctx_hash = hash_context(doc)
    chain = list(providers) + [RuleProvider()]
    candidates: list[Candidate] = []
    records: list[dict] = []
    for i in range(k):
        intervention = INTERVENTIONS[i % len(INTERVENTIONS)]
        chosen = None
        for provider in chain:
            text = provider.propose(doc, intervention)
            if text is None:
                continue
            resp_hash = hash_response(text)
            try:
                recipe = parse_recipe(text)
            except SchemaViolation as exc:
                records.append(
                    {
                        "provider": getattr(provider, "name", type(provider).__name__),
                        "intervention": intervention,
                        "schema_valid": False,
                        "error_kind": "schema_invalid",
                        "fallback_used": False,
                        "violations": [list(v) for v in exc.violations],
                        "context_hash": ctx_hash,
                        "response_hash": resp_hash,
                    }
                )
                continue
            records.append(
                {
                    "provider": getattr(provider, "name", type(provider).__name__),
                    "intervention": intervention,
                    "schema_valid": True,
                    "fallback_used": False,
                    "recipe_id": recipe.id,
                    "context_hash": ctx_hash,
                    "response_hash": resp_hash,
                }
            )
            chosen = recipe
            break
        if chosen is None:
            # Rule provider covers default/dictionary always; seed-scoped
            # interventions fall back to the default recipe document.
            text = default_recipe_doc()
            chosen = parse_recipe(text)
            records.append(
                {
                    "provider": "rule",
                    "intervention": intervention,
                    "schema_valid": True,
                    "fallback_used": False,
                    "recipe_id": chosen.id,
                    "context_hash": ctx_hash,
                    "response_hash": hash_response(text),
                }
            )
        candidates.append(
            Candidate(
                recipe=chosen,
                intervention=intervention,
                candidate_id=f"c{cycle:02d}_{i}_{intervention}",
            )
        )
    return candidates, records


class _Campaign:
    """Mutable state for one campaign run."""

    def __init__(self, config: CampaignConfig, executor, seeds):
        self.config = config
        self.executor = executor
        self.out = Path(config.output_dir)
        # A rerun into the same directory starts clean: stale queue
        # entries or snapshots must not leak into this campaign.
        for sub in ("queue", "snapshots", "recipes"):
            if (self.out / sub).exists():
                shutil.rmtree(self.out / sub)
        self.queue_dir = self.out / "queue"
        self.queue_dir.mkdir(parents=True)
        (self.out / "recipes").mkdir(parents=True)

        self.rng = random.Random(config.rng_seed)
        self.bitmap = EdgeBitmap(capacity=config.map_capacity)
        self.queue: list[CorpusEntry] = []
        self.favored: dict[int, tuple[int, int]] = {}  # edge slot -> (len, queue idx)
        self.favored_set: set[int] = set()
        self.crash_sigs: set[frozenset[int]] = set()

        self.t = 0.0
        self.execs_done = 0
        self.cycles_done = 0
        self.last_find = 0.0
        self.plateau_cycles = 0
        self.promotions = 0
        self.events: list[AuditEvent] = []
        self.coverage: list[tuple[float, int]] = []

        self._events_fh = (self.out / "events.jsonl").open("w")
        self._queue_pos = 0
        self._cur_entry: CorpusEntry | None = None
        self._energy = 0

        gate_on = config.ablation in ("rule-only", "no-mutator", "full")
        self.detector_on = gate_on or config.ablation == "controller-only"
        self.gate_on = gate_on
        self.recipes_on = config.ablation in ("rule-only", "full")
        self.providers = tuple(config.providers) if config.ablation == "full" else ()
        if config.ablation == "no-mutator":
            self.providers = tuple(config.providers)

        self.detector_state = DetectorState.for_config(config.detector)

        self.default_compact = lower_recipe(parse_recipe(default_recipe_doc()))
        self.active = self.default_compact if self.recipes_on else None
        self.active_expires: float | None = None

        for i, (name, data) in enumerate(seeds):
            entry = make_entry(f"id_{i:06d}_{name}", data)
            self._add_to_queue(entry, execute=True)

    # -- queue / coverage plumbing ------------------------------------

    def _add_to_queue(self, entry: CorpusEntry, execute: bool) -> int:
        """Returns the number of new edges the entry contributed."""
        new_edges = 0
        if execute:
            result = self.executor.execute(entry.data)
            self.execs_done += 1
            _, new_edges = merge_into(self.bitmap, result)
        idx = len(self.queue)
        self.queue.append(entry)
        (self.queue_dir / entry.seed_id).write_bytes(entry.data)
        if execute:
            for edge in result.edges_hit:
                slot = edge % self.bitmap.capacity
                held = self.favored.get(slot)
                if held is None or len(entry.data) < held[0]:
                    self.favored[slot] = (len(entry.data), idx)
        self.favored_set = {i for _, i in self.favored.values()}
        return new_edges

    def _next_entry(self) -> CorpusEntry:
        while True:
            if self._queue_pos >= len(self.queue):
                self._queue_pos = 0
                self.cycles_done += 1
            idx = self._queue_pos
            self._queue_pos += 1
            if idx in self.favored_set or self.rng.random() >= SKIP_NON_FAVORED:
                return self.queue[idx]

    def _emit(self, kind: str, payload: dict, context_hash=None, response_hash=None):
        event = AuditEvent(self.t, kind, payload, context_hash, response_hash)
        self.events.append(event)
        self._events_fh.write(event.to_json_line() + "\n")
        self._events_fh.flush()

    # -- main loop -----------------------------------------------------

    def _one_exec(self) -> None:
        if self._energy <= 0:
            self._cur_entry = self._next_entry()
            self._energy = SCHEDULE_ENERGY
        self._energy -= 1
        entry = self._cur_entry
        if self.active is not None:
            outcome = mutate(
                self.active, entry.data, tuple(self.queue), self.rng,
                self.config.max_size, seed=entry,
            )
            data = outcome.output
        else:
            data = havoc_mutate(entry.data, self.rng, self.config.max_size)
        result = self.executor.execute(data)
        self.execs_done += 1
        _, new_edges = merge_into(self.bitmap, result)
        if result.crashed:
            self.crash_sigs.add(result.edges_hit)
            return
        if new_edges > 0:
            child = make_entry(f"id_{len(self.queue):06d}_x{self.execs_done}", data)
            idx = len(self.queue)
            self.queue.append(child)
            (self.queue_dir / child.seed_id).write_bytes(child.data)
            for edge in result.edges_hit:
                slot = edge % self.bitmap.capacity
                held = self.favored.get(slot)
                if held is None or len(child.data) < held[0]:
                    self.favored[slot] = (len(child.data), idx)
            self.favored_set = {i for _, i in self.favored.values()}
            self.last_find = self.t + 1.0  # credited to this frame's close

    def _handle_plateau(self, event) -> None:
        self.plateau_cycles += 1
        cycle = self.plateau_cycles
        self._emit(
            K_PLATEAU,
            {
                "fired_at": event.fired_at,
                "window_start": event.window_start,
                "delta_execs": event.delta_execs,
                "delta_paths": event.delta_paths,
            },
        )
        snap_dir = self.out / "snapshots" / f"cycle_{cycle:02d}"
        snapshot = snapshot_corpus(self.queue_dir, snap_dir)
        self._emit(
            K_SNAPSHOT,
            {
                "path": str(snapshot.path),
                "entries": len(snapshot.entries),
                "digest": snapshot.digest,
            },
        )
        if not self.gate_on:
            return

        blackboard = self._build_blackboard(snapshot, cycle)
        ctx_hash = hash_context(blackboard)
        candidates, records = propose_candidates(
            blackboard, self.providers, self.config.k_cand, cycle
        )
        for record in records:
            payload = {k: v for k, v in record.items() if k not in ("context_hash", "response_hash")}
            self._emit(
                K_PROPOSAL,
                payload,
                context_hash=record["context_hash"],
                response_hash=record["response_hash"],
            )

        results: list[MicroResult] = []
        for i, candidate in enumerate(candidates):
            micro_seed = self.config.rng_seed * 1_000_003 + cycle * 1_000 + i
            result = evaluate_candidate(
                candidate,
                snapshot,
                self.executor,
                self.config.reward,
                micro_seed,
                budget_execs=self.config.micro_budget_execs,
                budget_sec=self.config.micro_budget_sec,
                max_size=self.config.max_size,
                map_capacity=self.config.map_capacity,
            )
            results.append(result)
            self._emit(
                K_MICRO,
                {
                    "candidate_id": result.candidate_id,
                    "intervention": candidate.intervention,
                    "recipe_id": candidate.recipe.id,
                    "delta_edges": result.delta_edges,
                    "delta_paths": result.delta_paths,
                    "delta_crashes": result.delta_crashes,
                    "hits": result.hits,
                    "misses": result.misses,
                    "execs": result.execs,
                    "reward": result.reward,
                    "bitmap_available": result.bitmap_available,
                },
                context_hash=ctx_hash,
            )

        decision, gate_events = decide_winner(results)
        for kind, payload in gate_events:
            self._emit(kind, payload, context_hash=ctx_hash)
        if decision.status == "promoted":
            self.promotions += 1
            winner = next(
                c for c in candidates if c.candidate_id == decision.winner
            )
            recipe_path = self.out / "recipes" / f"{winner.recipe.id}.json"
            recipe_path.write_text(serialize_recipe(winner.recipe))
            if self.recipes_on:
                self.active = lower_recipe(winner.recipe)
                self.active_expires = self.t + winner.recipe.ttl_sec

    def _build_blackboard(self, snapshot: SnapshotRef, cycle: int) -> Blackboard:
        seeds = tuple(
            {
                "seed_id": e.seed_id,
                "seed_hash": e.seed_hash,
                "size": len(e.data),
                "family": e.family,
            }
            for e in sorted(self.queue, key=lambda e: e.seed_id)
        )
        if self.config.static_tokens:
            static_context = {
                "available": True,
                "tokens": [t.decode("latin-1") for t in self.config.static_tokens],
            }
        else:
            static_context = {"available": False, "tokens": []}
        recent = tuple(self.detector_state.frames[-10:])
        # Run-relative path: identical campaign content must hash the same
        # no matter where the run directory lives.
        return Blackboard(
            snapshot_path=str(snapshot.path.relative_to(self.out)),
            snapshot_digest=snapshot.digest,
            seeds=seeds,
            recent_stats=recent,
            static_context=static_context,
            config_digest=self.config.digest(),
            cycle=cycle,
        )

    def _frame(self) -> None:
        for _ in range(self.config.frame_execs):
            if (
                self.config.budget_execs is not None
                and self.execs_done >= self.config.budget_execs
            ):
                break
            self._one_exec()
        self.t += 1.0
        self.coverage.append((self.t, self.bitmap.count))
        if self.active_expires is not None and self.t >= self.active_expires:
            self.active = self.default_compact
            self.active_expires = None
        if not self.detector_on:
            return
        frame = TelemetryFrame(
            t=self.t,
            execs_done=self.execs_done,
            paths_total=len(self.queue),
            edges_found=self.bitmap.count,
        )
        self.detector_state = observe(self.detector_state, frame)
        event, self.detector_state = check_plateau(self.detector_state, self.config.detector)
        if event is not None:
            self._handle_plateau(event)

    def run(self) -> RunArtifacts:
        try:
            self.coverage.append((0.0, self.bitmap.count))
            while True:
                if self.config.budget_execs is not None:
                    if self.execs_done >= self.config.budget_execs:
                        break
                elif self.t >= self.config.budget_sec:
                    break
                self._frame()
            self._emit(
                K_COMPLETED,
                {
                    "execs_done": self.execs_done,
                    "edges_found": self.bitmap.count,
                    "paths_total": len(self.queue),
                    "crashes": len(self.crash_sigs),
                    "plateau_cycles": self.plateau_cycles,
                    "promotions": self.promotions,
                    "active_recipe_id": self.active.id if self.active else None,
                },
            )
        finally:
            self._events_fh.close()
        return self._write_artifacts()

    def _write_artifacts(self) -> RunArtifacts:
        run_time = self.t
        eps = self.execs_done / run_time if run_time > 0 else 0.0
        coverage_pct = 100.0 * self.bitmap.count / self.bitmap.capacity
        stats = {
            "run_time": f"{run_time:g}",
            "execs_done": str(self.execs_done),
            "execs_per_sec": f"{eps:.2f}",
            "cycles_done": str(self.cycles_done),
            "corpus_count": str(len(self.queue)),
            "edges_found": str(self.bitmap.count),
            "bitmap_cvg": f"{coverage_pct:.2f}%",
            "last_find": f"{self.last_find:g}",
            "stability": "100.00%",
        }
        stats_text = "".join(f"{k:<18}: {v}\n" for k, v in stats.items())
        (self.out / "fuzzer_stats").write_text(stats_text)

        cov_lines = ["t_sec,edges_found"]
        cov_lines += [f"{t:g},{edges}" for t, edges in self.coverage]
        (self.out / "coverage.csv").write_text("\n".join(cov_lines) + "\n")

        digests = {}
        for name in ("fuzzer_stats", "coverage.csv", "events.jsonl"):
            digests[name] = hashlib.sha256((self.out / name).read_bytes()).hexdigest()
        meta = {
            "mode": self.config.ablation,
            "target": self.config.target,
            "executor": getattr(self.executor, "name", type(self.executor).__name__),
            "seed": self.config.rng_seed,
            "config_digest": self.config.digest(),
            "active_recipe_id": self.active.id if self.active else None,
            "promotions": self.promotions,
            "artifact_digests": digests,
        }
        (self.out / "run_metadata.json").write_text(json.dumps(meta, indent=2))

        return RunArtifacts(
            output_dir=self.out,
            fuzzer_stats=stats,
            coverage_series=tuple(self.coverage),
            events=tuple(self.events),
        )


def run_campaign(
    config: CampaignConfig,
    executor=None,
    seeds: tuple[tuple[str, bytes], ...] | None = None,
) -> RunArtifacts:
    """Run one campaign to its budget and write the artifact set.

    The executor defaults to the built-in target named by the config;
    seeds default to the target's curated corpus. Artifacts: fuzzer_stats,
    coverage.csv, events.jsonl, run_metadata.json plus queue/, snapshots/
    and recipes/ directories under output_dir.
    """
    validate_config(config)
    if executor is None:
        try:
            executor = get_target(config.target)
        except KeyError as exc:
            raise ConfigInvalid(str(exc)) from None
    if seeds is None:
        try:
            seeds = default_seeds(config.target)
        except KeyError:
            raise ConfigInvalid(
                f"no built-in seeds for target {config.target!r}; pass seeds explicitly"
            ) from None
    if not seeds:
        raise ConfigInvalid("seed corpus must be non-empty")
    campaign = _Campaign(config, executor, seeds)
    return campaign.run()
