import pytest

from esclab.errors import ParseError, SequenceError, ValidationError
from esclab.scenario import (
    ChosenAction,
    DailyRecord,
    advance_day,
    initial_world,
    load_scenario,
    parse_scenario,
)


def record_for(world, day, summary=None):
    nations = world.scenario.nation_names
    return DailyRecord(
        day=day,
        actions_by_nation={n: (ChosenAction("wait"),) for n in nations},
        daily_score_by_nation={n: 0 for n in nations},
        world_summary_after=summary or f"After day {day}.",
    )


class TestLoading:
    def test_shipped_neutral_scenario(self, scenario):
        assert scenario.name == "neutral"
        assert len(scenario.nations) == 8
        assert scenario.days == 14
        assert len(set(scenario.nation_names)) == 8

    def test_small_research_variant_accepted(self):
        scn = parse_scenario({
            "name": "duel", "days": 3, "initial_summary": "Two rivals.",
            "nations": [
                {"name": "A", "background": "a", "objectives": ["win"]},
                {"name": "B", "background": "b", "objectives": ["win"]},
            ],
        })
        assert scn.days == 3
        assert scn.nation_names == ("A", "B")

    def test_duplicate_nation_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            parse_scenario({
                "name": "dup", "days": 2, "initial_summary": "x",
                "nations": [
                    {"name": "A", "background": "a", "objectives": []},
                    {"name": "A", "background": "a2", "objectives": []},
                ],
            })

    def test_nonpositive_days_rejected(self):
        with pytest.raises(ValidationError, match="days"):
            parse_scenario({
                "name": "flat", "days": 0, "initial_summary": "x",
                "nations": [{"name": "A", "background": "a", "objectives": []}],
            })

    def test_unknown_keys_rejected(self):
        with pytest.raises(ParseError, match="weather"):
            parse_scenario({
                "name": "odd", "days": 1, "initial_summary": "x", "weather": "rain",
                "nations": [{"name": "A", "background": "a", "objectives": []}],
            })

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_scenario(tmp_path / "absent.yaml")


class TestWorldState:
    def test_day0_invariants(self, scenario):
        world = initial_world(scenario)
        assert world.current_day == 0
        assert world.summary == scenario.initial_summary
        assert world.history == ()

    def test_advance_base_case(self, scenario):
        world = initial_world(scenario)
        after = advance_day(world, record_for(world, 1))
        assert after.current_day == 1
        assert len(after.history) == 1
        assert after.summary == "After day 1."
        # value semantics: the input world is untouched
        assert world.current_day == 0
        assert world.history == ()

    def test_day_gap_rejected(self, scenario):
        world = initial_world(scenario)
        for day in (1, 2, 3, 4, 5):
            world = advance_day(world, record_for(world, day))
        with pytest.raises(SequenceError):
            advance_day(world, record_for(world, 7))

    def test_missing_nation_rejected(self, scenario):
        world = initial_world(scenario)
        partial = DailyRecord(
            day=1,
            actions_by_nation={"Blue": (ChosenAction("wait"),)},
            daily_score_by_nation={"Blue": 0},
            world_summary_after="x",
        )
        with pytest.raises(ValidationError, match="no actions recorded"):
            advance_day(world, partial)

    def test_fourteen_sequential_days(self, scenario):
        world = initial_world(scenario)
        for day in range(1, 15):
            world = advance_day(world, record_for(world, day))
        assert world.current_day == 14
        assert len(world.history) == 14

    def test_history_append_only(self, scenario):
        world = initial_world(scenario)
        world = advance_day(world, record_for(world, 1))
        first = world.history[0]
        for day in (2, 3):
            world = advance_day(world, record_for(world, day))
        assert world.history[0] is first

    def test_replay_reproduces_final_state(self, scenario):
        world = initial_world(scenario)
        for day in range(1, 8):
            world = advance_day(world, record_for(world, day))
        replayed = initial_world(scenario)
        for record in world.history:
            replayed = advance_day(replayed, record)
        assert replayed == world
