"""Raw and structured events, the prompt-driven structuring steps, and event filtering."""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable

from .errors import ClassificationError, PreconditionError, UnparseableAnswer, UnparseableTime
from .gateway import Gateway, render
from .textutil import count_tokens, truncate_tokens

EVENT_TYPES = ("concert", "exhibition", "sports", "fireworks", "fair", "performance", "religious")

EVENT_TYPE_LABELS = {
    "concert": "music concerts",
    "exhibition": "exhibitions",
    "sports": "sports competitions",
    "fireworks": "fireworks displays",
    "fair": "fairs",
    "performance": "performances",
    "religious": "religious activities",
}

SOURCES = ("dedicated-site", "tourism-board", "mega-events", "sports-list")

_DT_FMT = "%Y-%m-%d %H:%M:%S"


def _label_key(text: str) -> str:
    return re.sub(r"[^a-z]+", " ", text.casefold()).strip()


_LABEL_LOOKUP = {}
for _etype, _label in EVENT_TYPE_LABELS.items():
    _LABEL_LOOKUP[_label_key(_label)] = _etype
    _LABEL_LOOKUP[_etype] = _etype
    _LABEL_LOOKUP[_label_key(_label).rstrip("s")] = _etype
_LABEL_LOOKUP.update({"concerts": "concert", "music concert": "concert", "sport": "sports",
                      "firework": "fireworks", "firework display": "fireworks"})


def label_to_type(answer: str) -> str:
    """Map a model answer such as ``"Music concerts."`` to its enum value."""
    key = _label_key(answer)
    if key in _LABEL_LOOKUP:
        return _LABEL_LOOKUP[key]
    raise ValueError(f"not an event type: {answer!r}")


@dataclass(frozen=True)
class RawEvent:
    event_id: str
    title: str
    raw_time_text: str
    venue_text: str = ""
    raw_description: str = ""
    source: str = "dedicated-site"

    def __post_init__(self):
        if not self.event_id:
            raise ValueError("event_id must be non-empty")
        if not self.raw_time_text.strip():
            raise ValueError(f"{self.event_id}: raw_time_text must be non-empty")
        if self.source not in SOURCES:
            raise ValueError(f"{self.event_id}: unknown source {self.source!r}")


@dataclass(frozen=True, order=True)
class EventSession:
    start: datetime
    end: datetime
    sub_id: int = 1
    event_id: str = field(default="", compare=False)

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"{self.event_id}/{self.sub_id}: session ends before it starts")
        if self.sub_id < 1:
            raise ValueError("sub_id starts at 1")

    @property
    def day(self):
        return self.start.date()


@dataclass(frozen=True)
class Event:
    event_id: str
    title: str
    event_type: str
    summary: str
    venue: str
    sessions: tuple[EventSession, ...]
    source: str = "dedicated-site"

    def __post_init__(self):
        if self.event_type not in EVENT_TYPES:
            raise ValueError(f"{self.event_id}: unknown event type {self.event_type!r}")
        if not self.sessions:
            raise ValueError(f"{self.event_id}: an event needs at least one session")
        object.__setattr__(self, "sessions", tuple(self.sessions))

    @property
    def n_sessions(self) -> int:
        return len(self.sessions)

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "title": self.title,
            "event_type": self.event_type,
            "summary": self.summary,
            "venue": self.venue,
            "source": self.source,
            "sessions": [
                {"sub_id": s.sub_id, "start": s.start.isoformat(), "end": s.end.isoformat()}
                for s in self.sessions
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        sessions = tuple(
            EventSession(datetime.fromisoformat(s["start"]), datetime.fromisoformat(s["end"]),
                         int(s["sub_id"]), d["event_id"])
            for s in d["sessions"]
        )
        return cls(d["event_id"], d["title"], d["event_type"], d.get("summary", ""),
                   d.get("venue", ""), sessions, d.get("source", "dedicated-site"))


@dataclass(frozen=True)
class FilterRules:
    allowed_types: frozenset = frozenset({"concert", "exhibition", "sports", "fireworks"})
    max_sessions: int = 30
    venue_whitelist: frozenset = frozenset()

    def __post_init__(self):
        if self.max_sessions < 1:
            raise ValueError("max_sessions must be >= 1")
        object.__setattr__(self, "allowed_types", frozenset(self.allowed_types))
        object.__setattr__(self, "venue_whitelist",
                           frozenset(_venue_key(v) for v in self.venue_whitelist))


def _venue_key(venue: str) -> str:
    return unicodedata.normalize("NFC", venue).strip().casefold()


def renumber(sessions: Iterable[EventSession]) -> list[EventSession]:
    """Sort chronologically and assign sub ids 1..N."""
    ordered = sorted(sessions, key=lambda s: (s.start, s.end, s.sub_id))
    return [EventSession(s.start, s.end, k, s.event_id) for k, s in enumerate(ordered, start=1)]


def parse_session_table(text: str, event_id: str) -> list[EventSession]:
    """Parse the 4-column ``Id | Sub id | Start | End`` answer.

    Header and markdown separator rows are skipped; any other row that does
    not split into exactly four well-formed cells is an error.
    """
    sessions = []
    for line in text.strip().splitlines():
        line = line.strip()
        if not line:
            continue
        cells = [c.strip() for c in line.strip("|").split("|")]
        if all(set(c) <= set("-: ") for c in cells):
            continue
        if len(cells) == 4 and _label_key(cells[1]) == "sub id":
            continue
        if len(cells) != 4:
            raise UnparseableTime(f"{event_id}: expected 4 columns, got {len(cells)}", raw_output=text)
        eid, sub, start, end = cells
        if eid != event_id:
            raise UnparseableTime(f"{event_id}: row refers to event {eid!r}", raw_output=text)
        try:
            sub_id = int(sub)
            a = datetime.strptime(start, _DT_FMT)
            b = datetime.strptime(end, _DT_FMT)
        except ValueError as exc:
            raise UnparseableTime(f"{event_id}: bad cell in row {line!r}", raw_output=text) from exc
        if b < a:
            raise UnparseableTime(f"{event_id}: session {sub_id} ends before it starts", raw_output=text)
        if sub_id < 1:
            raise UnparseableTime(f"{event_id}: sub id must be positive", raw_output=text)
        sessions.append(EventSession(a, b, sub_id, event_id))
    if not sessions:
        raise UnparseableTime(f"{event_id}: no sessions in model output", raw_output=text)
    return sessions


def structure_sessions(raw: RawEvent, gateway: Gateway) -> list[EventSession]:
    prompt = render("P1_time", {"event_id": raw.event_id, "raw_time": raw.raw_time_text})
    return renumber(parse_session_table(gateway.complete(prompt), raw.event_id))


def summarize_description(raw_description: str, gateway: Gateway, token_budget: int = 120,
                          language: str = "English") -> str:
    if not raw_description.strip():
        raise PreconditionError("raw_description is empty")
    prompt = render("P2_summary", {"raw_description": raw_description, "token_budget": token_budget,
                                   "language": language})
    summary = gateway.complete(prompt).strip()
    if not summary:
        raise UnparseableAnswer("empty summary from model", raw_output=summary)
    if count_tokens(summary) > token_budget:
        summary = truncate_tokens(summary, token_budget)
    return summary


def classify(title: str, summary: str, gateway: Gateway, study_area: str = "Hong Kong") -> str:
    if not summary.strip():
        raise PreconditionError("summary is empty")
    prompt = render("P3_classify", {
        "study_area": study_area,
        "event_title": title,
        "summary": summary,
        "event_types": ", ".join(EVENT_TYPE_LABELS[t] for t in EVENT_TYPES),
    })
    answer = gateway.complete(prompt)
    try:
        return label_to_type(answer)
    except ValueError:
        raise ClassificationError(f"unrecognised event type {answer!r}", raw_output=answer) from None


def build_event(raw: RawEvent, gateway: Gateway, token_budget: int = 120, language: str = "English",
                study_area: str = "Hong Kong") -> Event:
    """Run the three prompt steps for one raw event."""
    sessions = structure_sessions(raw, gateway)
    summary = summarize_description(raw.raw_description or raw.title, gateway, token_budget, language)
    etype = classify(raw.title, summary, gateway, study_area)
    return Event(raw.event_id, raw.title, etype, summary, raw.venue_text, tuple(sessions), raw.source)


def keep_event(event: Event, rules: FilterRules) -> bool:
    return (
        event.event_type in rules.allowed_types
        and event.n_sessions <= rules.max_sessions
        and (not rules.venue_whitelist or _venue_key(event.venue) in rules.venue_whitelist)
    )


def filter_events(events: Iterable[Event], rules: FilterRules) -> list[Event]:
    return [e for e in events if keep_event(e, rules)]


def read_raw_events(path) -> list[RawEvent]:
    out, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            raw = RawEvent(**{k: rec[k] for k in RawEvent.__dataclass_fields__ if k in rec})
            if raw.event_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate event_id {raw.event_id!r}")
            seen.add(raw.event_id)
            out.append(raw)
    return out


def read_events(path) -> list[Event]:
    with open(path, encoding="utf-8") as fh:
        return [Event.from_dict(d) for d in json.load(fh)]


def events_to_json(events: Iterable[Event]) -> str:
    return json.dumps([e.to_dict() for e in events], ensure_ascii=False, indent=1) + "\n"
