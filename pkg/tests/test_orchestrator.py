import pytest

from esclab.agents import AgentPolicy, LlmPolicy, ScriptedPolicy
from esclab.client import MockTransport
from esclab.errors import TransportError
from esclab.mockdata import CalibratedResponder
from esclab.orchestrator import (
    LlmUpdater,
    TemplateUpdater,
    Treatment,
    run_simulation,
)
from esclab.prompts import PromptVariant
from esclab.scenario import ChosenAction, initial_world
from esclab.transcript import read_records

from oracles import transcript_scores


def wait_policy():
    return ScriptedPolicy({}, default=(ChosenAction("wait"),))


def treatment(label="t1.0-default", temperature=1.0, variant=PromptVariant.DEFAULT):
    return Treatment(label=label, temperature=temperature, variant=variant)


class TestScriptedRuns:
    def test_all_wait_scores_zero(self, scenario, taxonomy, tmp_path):
        run = run_simulation(
            scenario, taxonomy, treatment(), wait_policy(), TemplateUpdater(),
            seed=1, transcript_path=tmp_path / "run.jsonl",
        )
        assert run.completed
        assert len(run.days) == 14
        for record in run.days:
            assert all(score == 0 for score in record.daily_score_by_nation.values())

    def test_daily_score_sums_listed_actions(self, scenario, taxonomy, tmp_path):
        policy = ScriptedPolicy(
            {"Blue": {1: (
                ChosenAction("start_formal_peace_negotiations", target="Red"),
                ChosenAction("execute_nuclear_strike", target="Red"),
            )}},
            default=(ChosenAction("wait"),),
        )
        run = run_simulation(
            scenario, taxonomy, treatment(), policy, TemplateUpdater(),
            seed=1, transcript_path=tmp_path / "run.jsonl",
        )
        assert run.days[0].daily_score_by_nation["Blue"] == 58
        assert run.days[0].daily_score_by_nation["Red"] == 0

    def test_transcript_scores_recompute_exactly(self, scenario, taxonomy, tmp_path):
        path = tmp_path / "run.jsonl"
        run = run_simulation(
            scenario, taxonomy, treatment("t1.0-default"),
            _calibrated_policy(scenario, taxonomy),
            TemplateUpdater(), seed=4, transcript_path=path,
            run_id="t1.0-default-r00",
        )
        table = {spec.id: spec.score for spec in taxonomy.actions}
        oracle = transcript_scores(path, table)
        for record in run.days:
            assert dict(record.daily_score_by_nation) == oracle["daily"][record.day]


def _calibrated_policy(scenario, taxonomy, runs=10):
    responder = CalibratedResponder(taxonomy, scenario, runs_per_treatment=runs)
    return LlmPolicy(MockTransport(responder), model="m", temperature=1.0)


class TestMockLlmRun:
    def test_full_mock_run_request_count(self, scenario, taxonomy, tmp_path):
        responder = CalibratedResponder(taxonomy, scenario)
        transport = MockTransport(responder)
        policy = LlmPolicy(transport, model="m", temperature=1.0)
        updater = LlmUpdater(transport, model="m")
        run = run_simulation(
            scenario, taxonomy, treatment(), policy, updater,
            seed=0, transcript_path=tmp_path / "run.jsonl",
            run_id="t1.0-default-r00",
        )
        assert run.completed
        assert len(run.days) == 14
        assert transport.request_count >= 126
        assert transport.request_count == 14 * 8 + 14

    def test_transcript_contains_every_prompt_and_response(
        self, scenario, taxonomy, tmp_path
    ):
        responder = CalibratedResponder(taxonomy, scenario)
        transport = MockTransport(responder)
        policy = LlmPolicy(transport, model="m", temperature=1.0)
        updater = LlmUpdater(transport, model="m")
        path = tmp_path / "run.jsonl"
        run_simulation(
            scenario, taxonomy, treatment(), policy, updater,
            seed=0, transcript_path=path, run_id="t1.0-default-r00",
        )
        records = read_records(path)
        by_type = {}
        for record in records:
            by_type.setdefault(record["type"], []).append(record)
        assert len(by_type["prompt"]) == 112
        assert len(by_type["llm_call"]) == 126
        assert len(by_type["turn"]) == 112
        assert len(by_type["day"]) == 14
        assert by_type["run_end"][0]["payload"]["status"] == "completed"
        assert len(by_type["system_prompt"]) == 1


class TestWorldUpdaters:
    def test_template_lists_one_line_per_action(self, scenario, taxonomy):
        world = initial_world(scenario)
        policy = wait_policy()
        turns = {
            nation: policy.decide(scenario, taxonomy, world, nation, PromptVariant.DEFAULT)
            for nation in scenario.nation_names
        }
        text = TemplateUpdater().update(world, turns, treatment())
        action_lines = [line for line in text.splitlines() if line.startswith("- ")]
        assert len(action_lines) == 8

    def test_template_deterministic(self, scenario, taxonomy):
        world = initial_world(scenario)
        policy = wait_policy()
        turns = {
            nation: policy.decide(scenario, taxonomy, world, nation, PromptVariant.DEFAULT)
            for nation in scenario.nation_names
        }
        updater = TemplateUpdater()
        assert updater.update(world, turns, treatment()) == updater.update(
            world, turns, treatment()
        )

    def test_llm_updater_echoes_mock_summary(self, scenario, taxonomy):
        world = initial_world(scenario)
        policy = wait_policy()
        turns = {
            nation: policy.decide(scenario, taxonomy, world, nation, PromptVariant.DEFAULT)
            for nation in scenario.nation_names
        }
        updater = LlmUpdater(MockTransport("tensions rose"), model="m")
        assert updater.update(world, turns, treatment()) == "tensions rose"

    def test_llm_updater_uses_treatment_temperature(self, scenario, taxonomy):
        world = initial_world(scenario)
        policy = wait_policy()
        turns = {
            nation: policy.decide(scenario, taxonomy, world, nation, PromptVariant.DEFAULT)
            for nation in scenario.nation_names
        }
        transport = MockTransport("ok", capture=True)
        updater = LlmUpdater(transport, model="m")
        updater.update(world, turns, treatment(temperature=0.01))
        assert transport.captured[0]["temperature"] == 0.01


class FailAfterDay(AgentPolicy):
    """Wraps a policy; raises a transient transport error past a given day."""

    def __init__(self, inner, fail_after_day):
        self.inner = inner
        self.fail_after_day = fail_after_day

    def decide(self, scenario, taxonomy, world, nation, variant, **kwargs):
        if world.current_day >= self.fail_after_day:
            raise TransportError("injected outage")
        return self.inner.decide(scenario, taxonomy, world, nation, variant, **kwargs)


class TestResume:
    def test_crash_then_resume_is_byte_identical(self, scenario, taxonomy, tmp_path):
        kwargs = dict(seed=11, run_id="t1.0-default-r00")
        straight = tmp_path / "straight.jsonl"
        run_simulation(
            scenario, taxonomy, treatment(), wait_policy(), TemplateUpdater(),
            transcript_path=straight, **kwargs,
        )
        crashed = tmp_path / "crashed.jsonl"
        aborted = run_simulation(
            scenario, taxonomy, treatment(),
            FailAfterDay(wait_policy(), fail_after_day=6),
            TemplateUpdater(), transcript_path=crashed, **kwargs,
        )
        assert aborted.status == "aborted"
        assert "injected outage" in aborted.abort_reason
        assert len(aborted.days) == 6
        resumed = run_simulation(
            scenario, taxonomy, treatment(), wait_policy(), TemplateUpdater(),
            transcript_path=crashed, **kwargs,
        )
        assert resumed.completed
        assert crashed.read_bytes() == straight.read_bytes()

    def test_resume_of_completed_run_does_no_work(self, scenario, taxonomy, tmp_path):
        path = tmp_path / "run.jsonl"
        kwargs = dict(seed=3, run_id="t1.0-default-r00")
        first = run_simulation(
            scenario, taxonomy, treatment(), wait_policy(), TemplateUpdater(),
            transcript_path=path, **kwargs,
        )
        before = path.read_bytes()

        class Exploding(AgentPolicy):
            def decide(self, *args, **kw):
                raise AssertionError("should not be called")

        again = run_simulation(
            scenario, taxonomy, treatment(), Exploding(), TemplateUpdater(),
            transcript_path=path, **kwargs,
        )
        assert again.completed
        assert len(again.days) == len(first.days)
        assert path.read_bytes() == before

    def test_resume_refuses_foreign_transcript(self, scenario, taxonomy, tmp_path):
        path = tmp_path / "run.jsonl"
        run_simulation(
            scenario, taxonomy, treatment(), wait_policy(), TemplateUpdater(),
            seed=1, transcript_path=path,
        )
        from esclab.errors import ValidationError
        with pytest.raises(ValidationError, match="different run"):
            run_simulation(
                scenario, taxonomy, treatment(), wait_policy(), TemplateUpdater(),
                seed=2, transcript_path=path,
            )

    def test_mid_day_crash_discards_partial_day(self, scenario, taxonomy, tmp_path):
        class FailOnNation(AgentPolicy):
            def __init__(self, inner, day, nation):
                self.inner, self.day, self.nation = inner, day, nation

            def decide(self, scenario, taxonomy, world, nation, variant, **kwargs):
                if world.current_day + 1 == self.day and nation == self.nation:
                    raise TransportError("mid-day outage")
                return self.inner.decide(
                    scenario, taxonomy, world, nation, variant, **kwargs
                )

        kwargs = dict(seed=5, run_id="t1.0-default-r00")
        path = tmp_path / "mid.jsonl"
        aborted = run_simulation(
            scenario, taxonomy, treatment(),
            FailOnNation(wait_policy(), day=4, nation="Purple"),
            TemplateUpdater(), transcript_path=path, **kwargs,
        )
        assert aborted.status == "aborted"
        assert len(aborted.days) == 3
        resumed = run_simulation(
            scenario, taxonomy, treatment(), wait_policy(), TemplateUpdater(),
            transcript_path=path, **kwargs,
        )
        assert resumed.completed
        straight = tmp_path / "straight.jsonl"
        run_simulation(
            scenario, taxonomy, treatment(), wait_policy(), TemplateUpdater(),
            transcript_path=straight, **kwargs,
        )
        assert path.read_bytes() == straight.read_bytes()


class TestIntraDayVisibility:
    def test_later_nations_see_earlier_same_day_actions(self, scenario, taxonomy, tmp_path):
        seen = {}

        class Spy(AgentPolicy):
            def __init__(self):
                self.inner = wait_policy()

            def decide(self, scenario, taxonomy, world, nation, variant, **kwargs):
                seen[nation] = len(world.history)
                return self.inner.decide(
                    scenario, taxonomy, world, nation, variant, **kwargs
                )

        run_simulation(
            scenario.__class__(
                name=scenario.name, nations=scenario.nations[:2],
                initial_summary=scenario.initial_summary, days=1,
            ),
            taxonomy, treatment(), Spy(), TemplateUpdater(),
            seed=1, transcript_path=tmp_path / "vis.jsonl",
            intra_day_visibility=True,
        )
        first, second = scenario.nation_names[:2]
        assert seen[first] == 0
        assert seen[second] == 1

    def test_default_is_simultaneous_move(self, scenario, taxonomy, tmp_path):
        seen = {}

        class Spy(AgentPolicy):
            def __init__(self):
                self.inner = wait_policy()

            def decide(self, scenario, taxonomy, world, nation, variant, **kwargs):
                seen[nation] = len(world.history)
                return self.inner.decide(
                    scenario, taxonomy, world, nation, variant, **kwargs
                )

        run_simulation(
            scenario.__class__(
                name=scenario.name, nations=scenario.nations[:2],
                initial_summary=scenario.initial_summary, days=1,
            ),
            taxonomy, treatment(), Spy(), TemplateUpdater(),
            seed=1, transcript_path=tmp_path / "novis.jsonl",
        )
        assert set(seen.values()) == {0}


class TestEmptySummaryFallback:
    def test_blank_llm_summary_falls_back_to_template(self, scenario, taxonomy):
        world = initial_world(scenario)
        policy = wait_policy()
        turns = {
            nation: policy.decide(scenario, taxonomy, world, nation, PromptVariant.DEFAULT)
            for nation in scenario.nation_names
        }
        updater = LlmUpdater(MockTransport("   \n"), model="m")
        text = updater.update(world, turns, treatment())
        assert text
        assert len([l for l in text.splitlines() if l.startswith("- ")]) == 8


class TestTornFirstLine:
    def test_transcript_with_only_partial_line_restarts_cleanly(
        self, scenario, taxonomy, tmp_path
    ):
        kwargs = dict(seed=9, run_id="t1.0-default-r00")
        straight = tmp_path / "straight.jsonl"
        run_simulation(
            scenario, taxonomy, treatment(), wait_policy(), TemplateUpdater(),
            transcript_path=straight, **kwargs,
        )
        torn = tmp_path / "torn.jsonl"
        torn.write_text(straight.read_text(encoding="utf-8")[:40], encoding="utf-8")
        resumed = run_simulation(
            scenario, taxonomy, treatment(), wait_policy(), TemplateUpdater(),
            transcript_path=torn, **kwargs,
        )
        assert resumed.completed
        assert torn.read_bytes() == straight.read_bytes()
