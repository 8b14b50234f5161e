"""Campaign orchestration: event trail, gate wiring, ablations, artifacts."""

import json

import pytest

from recipefuzz.controller import (
    Blackboard,
    CampaignConfig,
    ConfigInvalid,
    hash_context,
    hash_response,
    load_events,
    propose_candidates,
    run_campaign,
)
from recipefuzz.micro import compute_reward, RewardWeights
from recipefuzz.plateau import TelemetryFrame
from recipefuzz.providers import DEFAULT_RECIPE_ID, StaticTokenProvider
from recipefuzz.stats import parse_run_dir


def saturated_config(tmp_path, **overrides):
    kwargs = dict(
        target="parser",
        output_dir=tmp_path / "run",
        ablation="full",
        budget_execs=2500,
        rng_seed=42,
    )
    kwargs.update(overrides)
    return CampaignConfig(**kwargs)


def kinds_of(artifacts):
    return [e.kind for e in artifacts.events]


class AbortingProvider:
    """Fails the run hard if anything ever consults it."""

    name = "aborting"

    def propose(self, blackboard, intervention):
        raise AssertionError("provider invoked")


class TestSaturatedCampaign:
    def test_structural_signature(self, tmp_path):
        artifacts = run_campaign(saturated_config(tmp_path))
        kinds = kinds_of(artifacts)
        assert kinds.count("plateau_detected") == 1
        assert kinds.count("corpus_snapshot") == 1
        assert kinds.count("micro_result") == 4
        assert kinds.count("recipe_promoted") == 0
        winner = next(e for e in artifacts.events if e.kind == "winner_decided")
        assert winner.payload["status"] == "no_significance"
        skipped = next(e for e in artifacts.events if e.kind == "promotion_skipped")
        assert skipped.payload["reason"] == "no_successful_micro_campaign"

    def test_event_grammar(self, tmp_path):
        artifacts = run_campaign(saturated_config(tmp_path))
        kinds = [
            k
            for k in kinds_of(artifacts)
            if k
            in (
                "plateau_detected",
                "corpus_snapshot",
                "micro_result",
                "winner_decided",
                "recipe_promoted",
                "promotion_skipped",
            )
        ]
        assert kinds[0] == "plateau_detected"
        assert kinds[1] == "corpus_snapshot"
        assert kinds[2:6] == ["micro_result"] * 4
        assert kinds[6] == "winner_decided"
        assert kinds[7] in ("recipe_promoted", "promotion_skipped")
        assert len(kinds) == 8

    def test_micro_results_carry_reward_inputs(self, tmp_path):
        artifacts = run_campaign(saturated_config(tmp_path))
        micro = [e for e in artifacts.events if e.kind == "micro_result"]
        for event in micro:
            payload = event.payload
            assert payload["reward"] == compute_reward(
                payload["delta_edges"],
                payload["delta_paths"],
                payload["delta_crashes"],
                payload["hits"],
                payload["misses"],
                RewardWeights(),
                payload["bitmap_available"],
            )

    def test_default_recipe_continuity(self, tmp_path):
        artifacts = run_campaign(saturated_config(tmp_path))
        completed = artifacts.events[-1]
        assert completed.kind == "run_completed"
        assert completed.payload["active_recipe_id"] == DEFAULT_RECIPE_ID
        meta = json.loads((artifacts.output_dir / "run_metadata.json").read_text())
        assert meta["active_recipe_id"] == DEFAULT_RECIPE_ID

    def test_decision_replayable_from_event_log(self, tmp_path):
        artifacts = run_campaign(saturated_config(tmp_path))
        events = load_events(artifacts.output_dir / "events.jsonl")
        micro = [e for e in events if e.kind == "micro_result"]
        rewards = [
            compute_reward(
                e.payload["delta_edges"],
                e.payload["delta_paths"],
                e.payload["delta_crashes"],
                e.payload["hits"],
                e.payload["misses"],
                RewardWeights(),
                e.payload["bitmap_available"],
            )
            for e in micro
        ]
        best = max(rewards)
        winner = next(e for e in events if e.kind == "winner_decided")
        if best > 0:
            assert winner.payload["status"] == "promoted"
        else:
            assert winner.payload["status"] == "no_significance"
        assert winner.payload["winner_reward"] == best


class TestStaircasePromotion:
    def test_gate_token_promoted_and_installed(self, tmp_path):
        config = CampaignConfig(
            target="staircase",
            output_dir=tmp_path / "run",
            ablation="full",
            budget_execs=4000,
            rng_seed=7,
            providers=(StaticTokenProvider([b"XKEY1"]),),
        )
        artifacts = run_campaign(config)
        promoted = [e for e in artifacts.events if e.kind == "recipe_promoted"]
        assert len(promoted) == 1
        assert promoted[0].payload["candidate_id"].endswith("_dictionary")
        assert promoted[0].payload["reward"] > 0
        # The promoted recipe drives the main loop into the gated edges.
        control = run_campaign(
            CampaignConfig(
                target="staircase",
                output_dir=tmp_path / "control",
                ablation="rule-only",
                budget_execs=4000,
                rng_seed=7,
            )
        )
        assert artifacts.edges_found > control.edges_found
        recipes = list((artifacts.output_dir / "recipes").iterdir())
        assert len(recipes) == 1

    def test_promoted_recipe_expires_after_ttl(self, tmp_path):
        class ShortTTLProvider:
            name = "short-ttl"

            def propose(self, blackboard, intervention):
                if intervention != "dictionary":
                    return None
                return json.dumps(
                    {
                        "id": "short_lived",
                        "selector": {"mode": "mode", "key": "any"},
                        "priority": 5,
                        "ttl_sec": 40,
                        "operator_weights": {"InsertToken": 0.8, "BitFlip": 0.2},
                        "dictionary_tokens": ["XKEY1"],
                    }
                )

        config = CampaignConfig(
            target="staircase",
            output_dir=tmp_path / "run",
            ablation="full",
            budget_execs=4000,
            rng_seed=5,
            providers=(ShortTTLProvider(),),
        )
        artifacts = run_campaign(config)
        promoted = [e for e in artifacts.events if e.kind == "recipe_promoted"]
        assert len(promoted) == 1
        # Promotion happens near the detector window, the ttl lapses well
        # before the budget: the default rule recipe is active again.
        completed = artifacts.events[-1]
        assert completed.payload["active_recipe_id"] == DEFAULT_RECIPE_ID

    def test_promoted_event_grammar(self, tmp_path):
        config = CampaignConfig(
            target="staircase",
            output_dir=tmp_path / "run",
            ablation="full",
            budget_execs=3000,
            rng_seed=3,
            providers=(StaticTokenProvider([b"XKEY1"]),),
        )
        artifacts = run_campaign(config)
        kinds = kinds_of(artifacts)
        w = kinds.index("winner_decided")
        assert kinds[w + 1] == "recipe_promoted"
        assert "promotion_skipped" not in kinds


class TestHotPathPurity:
    def test_aborting_provider_without_plateau(self, tmp_path):
        # Budget shorter than the detector window: the detector can never
        # fire, and a provider that aborts on call proves the mutation
        # path never consults providers.
        config = CampaignConfig(
            target="parser",
            output_dir=tmp_path / "run",
            ablation="full",
            budget_sec=8.0,
            rng_seed=1,
            providers=(AbortingProvider(),),
        )
        artifacts = run_campaign(config)
        assert kinds_of(artifacts) == ["run_completed"]
        assert artifacts.execs_done > 0


class TestBudgetsAndDeterminism:
    def test_zero_budget(self, tmp_path):
        config = saturated_config(tmp_path, budget_execs=None, budget_sec=0.0)
        artifacts = run_campaign(config)
        assert artifacts.coverage_series == ((0.0, artifacts.edges_found),)
        assert kinds_of(artifacts) == ["run_completed"]
        for name in ("fuzzer_stats", "coverage.csv", "events.jsonl", "run_metadata.json"):
            assert (artifacts.output_dir / name).is_file()

    def test_identical_runs(self, tmp_path):
        a = run_campaign(saturated_config(tmp_path, output_dir=tmp_path / "a"))
        b = run_campaign(saturated_config(tmp_path, output_dir=tmp_path / "b"))
        assert a.fuzzer_stats == b.fuzzer_stats
        assert a.coverage_series == b.coverage_series
        # Snapshot paths embed the output directory; everything else must
        # be bit-identical.
        lines_a = [
            e.to_json_line().replace(str(a.output_dir), "OUT") for e in a.events
        ]
        lines_b = [
            e.to_json_line().replace(str(b.output_dir), "OUT") for e in b.events
        ]
        assert lines_a == lines_b

    def test_rerun_into_same_directory_is_clean(self, tmp_path):
        config = saturated_config(tmp_path)
        first = run_campaign(config)
        second = run_campaign(config)
        assert first.fuzzer_stats == second.fuzzer_stats
        snap_a = next(e for e in first.events if e.kind == "corpus_snapshot")
        snap_b = next(e for e in second.events if e.kind == "corpus_snapshot")
        assert snap_a.payload["digest"] == snap_b.payload["digest"]
        assert snap_a.payload["entries"] == snap_b.payload["entries"]

    def test_seed_changes_run(self, tmp_path):
        a = run_campaign(
            saturated_config(tmp_path, output_dir=tmp_path / "a", rng_seed=1)
        )
        b = run_campaign(
            saturated_config(tmp_path, output_dir=tmp_path / "b", rng_seed=2)
        )
        assert a.fuzzer_stats["execs_done"] == b.fuzzer_stats["execs_done"]
        sa = next(e for e in a.events if e.kind == "corpus_snapshot")
        sb = next(e for e in b.events if e.kind == "corpus_snapshot")
        # Same saturated corpus, but the campaigns are distinct processes:
        # micro rewards may differ in miss counts.
        assert sa.payload["digest"] == sb.payload["digest"]

    def test_config_validation(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            run_campaign(saturated_config(tmp_path, ablation="mystery"))
        with pytest.raises(ConfigInvalid):
            run_campaign(saturated_config(tmp_path, budget_execs=None))
        with pytest.raises(ConfigInvalid):
            run_campaign(
                saturated_config(tmp_path, budget_execs=10, budget_sec=10.0)
            )
        with pytest.raises(ConfigInvalid):
            run_campaign(saturated_config(tmp_path, target="mystery"))
        with pytest.raises(ConfigInvalid):
            run_campaign(saturated_config(tmp_path, k_cand=0))


class TestAblations:
    def test_baseline_has_no_control_events(self, tmp_path):
        config = saturated_config(tmp_path, ablation="baseline")
        artifacts = run_campaign(config)
        assert kinds_of(artifacts) == ["run_completed"]

    def test_controller_only_snapshots_without_gate(self, tmp_path):
        config = saturated_config(tmp_path, ablation="controller-only")
        artifacts = run_campaign(config)
        kinds = kinds_of(artifacts)
        assert kinds.count("plateau_detected") == 1
        assert kinds.count("corpus_snapshot") == 1
        assert "micro_result" not in kinds
        assert "winner_decided" not in kinds

    def test_no_mutator_keeps_gate_but_not_recipes(self, tmp_path):
        config = CampaignConfig(
            target="staircase",
            output_dir=tmp_path / "run",
            ablation="no-mutator",
            budget_execs=4000,
            rng_seed=7,
            providers=(StaticTokenProvider([b"XKEY1"]),),
        )
        artifacts = run_campaign(config)
        kinds = kinds_of(artifacts)
        assert kinds.count("micro_result") == 4
        # Promotion is recorded, but the main loop never installs it.
        assert kinds.count("recipe_promoted") == 1
        completed = artifacts.events[-1]
        assert completed.payload["active_recipe_id"] is None

    def test_rule_only_runs_gate_without_providers(self, tmp_path):
        config = saturated_config(
            tmp_path, ablation="rule-only", providers=(AbortingProvider(),)
        )
        artifacts = run_campaign(config)
        proposals = [e for e in artifacts.events if e.kind == "proposal_recorded"]
        assert len(proposals) == 4
        assert all(p.payload["provider"] == "rule" for p in proposals)


class TestArtifacts:
    def test_fuzzer_stats_keys(self, tmp_path):
        artifacts = run_campaign(saturated_config(tmp_path))
        expected = {
            "run_time",
            "execs_done",
            "execs_per_sec",
            "cycles_done",
            "corpus_count",
            "edges_found",
            "bitmap_cvg",
            "last_find",
            "stability",
        }
        assert set(artifacts.fuzzer_stats) == expected
        row = parse_run_dir(artifacts.output_dir)
        assert row.mode == "full"
        assert row.plateau_sec == row.run_time - row.last_find

    def test_coverage_csv_format(self, tmp_path):
        artifacts = run_campaign(saturated_config(tmp_path))
        lines = (artifacts.output_dir / "coverage.csv").read_text().splitlines()
        assert lines[0] == "t_sec,edges_found"
        assert lines[1].startswith("0,")
        edges = [int(line.split(",")[1]) for line in lines[1:]]
        assert edges == sorted(edges)

    def test_events_are_jsonl(self, tmp_path):
        artifacts = run_campaign(saturated_config(tmp_path))
        text = (artifacts.output_dir / "events.jsonl").read_text()
        parsed = [json.loads(line) for line in text.splitlines()]
        assert all({"t", "kind", "payload"} <= set(doc) for doc in parsed)
        assert len(parsed) == len(artifacts.events)

    def test_run_metadata_digests(self, tmp_path):
        import hashlib

        artifacts = run_campaign(saturated_config(tmp_path))
        meta = json.loads((artifacts.output_dir / "run_metadata.json").read_text())
        for name, digest in meta["artifact_digests"].items():
            actual = hashlib.sha256(
                (artifacts.output_dir / name).read_bytes()
            ).hexdigest()
            assert actual == digest

    def test_snapshot_on_disk(self, tmp_path):
        artifacts = run_campaign(saturated_config(tmp_path))
        snap = next(e for e in artifacts.events if e.kind == "corpus_snapshot")
        snap_dir = artifacts.output_dir / "snapshots" / "cycle_01"
        assert snap_dir.is_dir()
        assert (snap_dir / "manifest.json").is_file()
        assert snap.payload["entries"] == len(list(snap_dir.glob("id_*")))


def make_blackboard(**overrides):
    fields = dict(
        snapshot_path="/tmp/snap",
        snapshot_digest="d" * 64,
        seeds=(
            {"seed_id": "s0", "seed_hash": "h0", "size": 4, "family": "default"},
            {"seed_id": "s1", "seed_hash": "h1", "size": 40, "family": "default"},
        ),
        recent_stats=(TelemetryFrame(1.0, 10, 2, 5),),
        static_context={"available": False, "tokens": []},
        config_digest="c" * 64,
        cycle=1,
    )
    fields.update(overrides)
    return Blackboard(**fields)


class TestHashing:
    def test_stable_digest(self):
        a = make_blackboard()
        b = make_blackboard()
        assert hash_context(a) == hash_context(b)
        assert len(hash_context(a)) == 64
        assert all(c in "0123456789abcdef" for c in hash_context(a))

    def test_counter_change_alters_digest(self):
        a = make_blackboard()
        b = make_blackboard(recent_stats=(TelemetryFrame(1.0, 11, 2, 5),))
        assert hash_context(a) != hash_context(b)

    def test_response_hash(self):
        assert hash_response("doc") == hash_response(b"doc")
        assert len(hash_response("doc")) == 64
        assert hash_response("doc") != hash_response("doc2")


class BadDocProvider:
    name = "bad-doc"

    def propose(self, blackboard, intervention):
        if intervention == "dictionary":
            return '{"id": "nope"}'  # missing required fields
        return None


class TestProposeCandidates:
    def test_rule_bundle(self):
        candidates, records = propose_candidates(make_blackboard(), (), 4)
        assert [c.intervention for c in candidates] == [
            "default",
            "dictionary",
            "seed_focus",
            "per_seed_recipe",
        ]
        assert len({c.candidate_id for c in candidates}) == 4
        assert all(r["schema_valid"] for r in records)

    def test_default_dictionary_tokens(self):
        candidates, _ = propose_candidates(make_blackboard(), (), 4)
        dictionary = next(c for c in candidates if c.intervention == "dictionary")
        assert dictionary.recipe.dictionary_tokens == (b"FUZZ", b"MAGIC", b"TOKEN")
        default = next(c for c in candidates if c.intervention == "default")
        assert default.recipe.operator_weights["InsertToken"] == 0.35

    def test_static_context_feeds_dictionary(self):
        bb = make_blackboard(
            static_context={"available": True, "tokens": ["null", "true"]}
        )
        candidates, _ = propose_candidates(bb, (), 4)
        dictionary = next(c for c in candidates if c.intervention == "dictionary")
        assert dictionary.recipe.dictionary_tokens == (b"null", b"true")

    def test_invalid_provider_output_recorded_and_backfilled(self):
        candidates, records = propose_candidates(
            make_blackboard(), (BadDocProvider(),), 4
        )
        assert len(candidates) == 4
        bad = [r for r in records if not r["schema_valid"]]
        assert len(bad) == 1
        assert bad[0]["error_kind"] == "schema_invalid"
        assert bad[0]["fallback_used"] is False
        assert bad[0]["provider"] == "bad-doc"
        # The slot was still filled by the rule provider.
        dictionary = next(c for c in candidates if c.intervention == "dictionary")
        assert dictionary.recipe.id == "rule_dictionary"

    def test_seed_scoped_selectors(self):
        candidates, _ = propose_candidates(make_blackboard(), (), 4)
        focus = next(c for c in candidates if c.intervention == "seed_focus")
        assert focus.recipe.selector.mode == "seed_hash"
        assert focus.recipe.selector.key == "h0"  # shortest seed
        per_seed = next(c for c in candidates if c.intervention == "per_seed_recipe")
        assert per_seed.recipe.selector.mode == "seed_id"
        assert per_seed.recipe.selector.key == "s1"  # largest seed
