from __future__ import annotations

import json
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventflow.errors import ClassificationError, PreconditionError, UnparseableTime
from eventflow.events import (EVENT_TYPES, Event, EventSession, FilterRules, RawEvent, build_event, classify,
                              events_to_json, filter_events, keep_event, label_to_type, parse_session_table,
                              read_events, renumber, structure_sessions, summarize_description)
from eventflow.gateway import Gateway, GatewayConfig, MockRuleSet
from eventflow.textutil import count_tokens, truncate_tokens


@pytest.fixture(scope="module")
def gw():
    return Gateway(GatewayConfig())


def _structure(text, gw):
    return structure_sessions(RawEvent("E1", "t", text), gw)


class TestSessionStructuring:
    def test_two_date_ranges_with_clock_time(self, gw):
        sessions = _structure("16-17 Dec 2023 (Sat-Sun), 23-26 Dec 2023 (Mon-Tue, Sat-Sun) 8:00 pm - 8:10 pm", gw)
        days = [16, 17, 23, 24, 25, 26]
        assert [(s.start, s.end) for s in sessions] == [
            (datetime(2023, 12, d, 20, 0), datetime(2023, 12, d, 20, 10)) for d in days]
        assert [s.sub_id for s in sessions] == list(range(1, 7))

    def test_date_without_clock_is_all_day(self, gw):
        (s,) = _structure("1 Jan 2024", gw)
        assert (s.start, s.end) == (datetime(2024, 1, 1, 0, 0, 0), datetime(2024, 1, 1, 23, 59, 59))

    def test_weekly_recurrence(self, gw):
        sessions = _structure("Every Fri 3–10 May 2024, 19:00–21:00", gw)
        assert [(s.start, s.end) for s in sessions] == [
            (datetime(2024, 5, d, 19), datetime(2024, 5, d, 21)) for d in (3, 10)]

    def test_unparseable_text(self, gw):
        with pytest.raises(UnparseableTime):
            _structure("sometime soon", gw)

    def test_table_parser_skips_header_and_separator(self):
        text = ("| Id | Sub id | Start time | End time |\n|---|---|---|---|\n"
                "| E9 | 1 | 2024-02-01 10:00:00 | 2024-02-01 12:00:00 |")
        (s,) = parse_session_table(text, "E9")
        assert s.start == datetime(2024, 2, 1, 10)

    @pytest.mark.parametrize("row", [
        "E9 | 1 | 2024-02-01 10:00:00",
        "E9 | 1 | 2024-02-01 | 2024-02-01 12:00:00",
        "E8 | 1 | 2024-02-01 10:00:00 | 2024-02-01 12:00:00",
        "E9 | 1 | 2024-02-01 12:00:00 | 2024-02-01 10:00:00",
    ])
    def test_table_parser_rejects_bad_rows(self, row):
        with pytest.raises(UnparseableTime):
            parse_session_table(row, "E9")

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 10_000), min_size=1, max_size=20))
    def test_renumber_orders_and_numbers(self, offsets):
        t0 = datetime(2024, 1, 1)
        sessions = [EventSession(t0 + timedelta(hours=h), t0 + timedelta(hours=h + 1), 1, "E") for h in offsets]
        out = renumber(sessions)
        assert [s.sub_id for s in out] == list(range(1, len(out) + 1))
        assert all(a.start <= b.start for a, b in zip(out, out[1:]))


class TestSummary:
    def test_long_description_is_cut_to_budget_without_logistics(self, gw):
        content = " ".join(f"The gallery shows painting number {k} from the modern collection." for k in range(60))
        text = "Tickets cost HK$120 at the door. Opening hours 10:00 to 18:00. " + content
        assert len(text) > 2000
        summary = summarize_description(text, gw)
        assert count_tokens(summary) <= 120
        assert "HK$" not in summary and "10:00" not in summary
        assert summary.startswith("The gallery shows painting number 0")

    def test_short_description_kept(self, gw):
        summary = summarize_description("A quiet evening of jazz standards by the harbour.", gw)
        assert summary == "A quiet evening of jazz standards by the harbour."

    def test_echo_rule_truncates(self):
        text = " ".join(f"word{k}" for k in range(300))
        assert summarize_description(text, Gateway(GatewayConfig())) == truncate_tokens(text, 120)

    def test_echo_budget_from_rules(self):
        gw = Gateway(GatewayConfig(mock_rules=MockRuleSet(echo_budget=10)))
        text = " ".join(f"word{k}" for k in range(30))
        assert summarize_description(text, gw) == truncate_tokens(text, 10)

    def test_empty_description(self, gw):
        with pytest.raises(PreconditionError):
            summarize_description("   ", gw)


class TestClassify:
    def test_fireworks(self, gw):
        assert classify("Winter fireworks display", "Fireworks light up the harbour.", gw) == "fireworks"

    def test_chinese_keyword(self, gw):
        assert classify("年度演唱会", "歌手演唱会", gw) == "concert"

    def test_empty_summary(self, gw):
        with pytest.raises(PreconditionError):
            classify("Winter fireworks display", "", gw)

    def test_no_keyword_match(self, gw):
        with pytest.raises(ClassificationError):
            classify("Untitled", "Something happens.", gw)

    @pytest.mark.parametrize("answer,etype", [("Concerts", "concert"), (" Sports competitions ", "sports"),
                                              ("Fireworks display.", "fireworks")])
    def test_label_lookup(self, answer, etype):
        assert label_to_type(answer) == etype


def test_build_event(gw):
    raw = RawEvent("E5", "Harbour Sevens rugby", "2 Mar 2024 2:00 pm - 6:00 pm", "Stadium",
                   "An international rugby sevens tournament with teams from twelve nations.")
    ev = build_event(raw, gw)
    assert ev.event_type == "sports"
    assert ev.sessions[0].start == datetime(2024, 3, 2, 14)
    assert ev.venue == "Stadium"


def _event(eid, etype, n, venue="V"):
    t0 = datetime(2024, 1, 1, 19)
    sessions = tuple(EventSession(t0 + timedelta(days=k), t0 + timedelta(days=k, hours=2), k + 1, eid)
                     for k in range(n))
    return Event(eid, eid, etype, "s", venue, sessions)


class TestFilter:
    def test_session_cap(self):
        rules = FilterRules()
        assert keep_event(_event("a", "concert", 30), rules)
        assert not keep_event(_event("b", "concert", 31), rules)

    def test_type_outside_allowed(self):
        assert not keep_event(_event("a", "fair", 1), FilterRules())

    def test_venue_whitelist_is_normalised(self):
        rules = FilterRules(venue_whitelist=frozenset({" Hong Kong Coliseum "}))
        assert keep_event(_event("a", "concert", 2, "hong kong coliseum"), rules)
        assert not keep_event(_event("b", "concert", 2, "Elsewhere"), rules)

    def test_matches_predicate_oracle_on_369_events(self):
        rng = np.random.default_rng(0)
        events = [_event(f"e{k}", EVENT_TYPES[int(rng.integers(len(EVENT_TYPES)))], int(rng.integers(1, 45)))
                  for k in range(369)]
        rules = FilterRules()
        want = sum(1 for e in events if e.event_type in {"concert", "exhibition", "sports", "fireworks"}
                   and len(e.sessions) <= 30)
        assert len(filter_events(events, rules)) == want


def test_events_json_round_trip(tmp_path):
    events = [_event("a", "concert", 3), _event("b", "exhibition", 1)]
    path = tmp_path / "events.json"
    path.write_text(events_to_json(events), encoding="utf-8")
    assert read_events(path) == events
    assert json.loads(path.read_text())[0]["sessions"][0]["sub_id"] == 1


def test_session_validation():
    t = datetime(2024, 1, 1)
    with pytest.raises(ValueError):
        EventSession(t, t - timedelta(hours=1))
    with pytest.raises(ValueError):
        Event("x", "x", "picnic", "", "", (EventSession(t, t),))
