"""Deterministic offline stand-in for the language model.

Each answer depends only on the prompt text and the :class:`MockRuleSet`.
The time-structuring rule understands the common English date phrasings
found on event listings ("16-17 Dec 2023", "3 Mar - 2 Apr 2024",
"Every Fri 3-10 May 2024, 19:00-21:00", ISO dates).
"""

from __future__ import annotations

import re
from datetime import date, datetime, time, timedelta

from .gateway import MockRuleSet, parse_prompt
from .textutil import content_tokens, count_tokens, jaccard, normalize, truncate_tokens

UNPARSEABLE = "UNABLE TO DETERMINE"

_MONTHS = {m: i for i, m in enumerate(
    ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"], start=1)}
_WEEKDAYS = {d: i for i, d in enumerate(["mon", "tue", "wed", "thu", "fri", "sat", "sun"])}

_MON = r"(jan|feb|mar|apr|may|jun|jul|aug|sep|oct|nov|dec)[a-z]*\.?"
_DAY = r"(\d{1,2})(?:st|nd|rd|th)?"
_CLOCK = r"(\d{1,2})(?:[:.](\d{2}))?\s*(am|pm)?"

_TIME_RANGE_RE = re.compile(rf"\b{_CLOCK}\s*(?:-|to)\s*{_CLOCK}(?![\w:])")
_SINGLE_TIME_RE = re.compile(r"\b(\d{1,2})(?:[:.](\d{2}))\s*(am|pm)?\b|\b(\d{1,2})\s*(am|pm)\b")
_EVERY_RE = re.compile(r"\bevery\s+((?:(?:mon|tue|wed|thu|fri|sat|sun)[a-z]*\s*(?:,|and|&)?\s*)+)")

_DATE_PATTERNS = [
    # 28 Dec 2023 - 2 Jan 2024
    ("range_full", re.compile(rf"\b{_DAY}\s+{_MON}\s+(\d{{4}})\s*(?:-|to)\s*{_DAY}\s+{_MON}\s+(\d{{4}})")),
    # 28 Dec - 2 Jan 2024
    ("range_months", re.compile(rf"\b{_DAY}\s+{_MON}\s*(?:-|to)\s*{_DAY}\s+{_MON}\s+(\d{{4}})")),
    # 16-17 Dec 2023
    ("range_days", re.compile(rf"\b{_DAY}\s*(?:-|to)\s*{_DAY}\s+{_MON}\s+(\d{{4}})")),
    # 1, 8 and 15 Jun 2024
    ("list_days", re.compile(rf"\b((?:\d{{1,2}}\s*(?:,|and|&)\s*)+\d{{1,2}})\s+{_MON}\s+(\d{{4}})")),
    # 1 Jan 2024
    ("single", re.compile(rf"\b{_DAY}\s+{_MON}\s+(\d{{4}})")),
    # 2024-01-01
    ("iso", re.compile(r"\b(\d{4})-(\d{2})-(\d{2})\b")),
]


def _clock(hour: str, minute: str | None, ampm: str | None, fallback_ampm: str | None = None) -> time:
    h, m = int(hour), int(minute or 0)
    ampm = ampm or fallback_ampm
    if ampm == "pm" and h < 12:
        h += 12
    elif ampm == "am" and h == 12:
        h = 0
    return time(h, m)


def _dates_from(kind: str, m: re.Match) -> list[date]:
    g = m.groups()
    if kind == "range_full":
        a = date(int(g[2]), _MONTHS[g[1]], int(g[0]))
        b = date(int(g[5]), _MONTHS[g[4]], int(g[3]))
    elif kind == "range_months":
        b = date(int(g[4]), _MONTHS[g[3]], int(g[2]))
        a = date(b.year, _MONTHS[g[1]], int(g[0]))
        if a > b:
            a = a.replace(year=b.year - 1)
    elif kind == "range_days":
        a = date(int(g[3]), _MONTHS[g[2]], int(g[0]))
        b = date(int(g[3]), _MONTHS[g[2]], int(g[1]))
    elif kind == "list_days":
        days = [int(d) for d in re.findall(r"\d{1,2}", g[0])]
        return [date(int(g[2]), _MONTHS[g[1]], d) for d in days]
    elif kind == "single":
        return [date(int(g[2]), _MONTHS[g[1]], int(g[0]))]
    else:
        return [date(int(g[0]), int(g[1]), int(g[2]))]
    if b < a:
        raise ValueError("range end precedes start")
    return [a + timedelta(days=k) for k in range((b - a).days + 1)]


def parse_time_text(text: str) -> list[tuple[datetime, datetime]]:
    """Expand a free-text schedule into (start, end) pairs; empty list if not understood."""
    s = normalize(text).replace("–", "-").replace("—", "-").replace("~", "-")
    s = re.sub(r"\([^)]*\)", " ", s)

    weekday_filter = None
    m = _EVERY_RE.search(s)
    if m:
        weekday_filter = {_WEEKDAYS[w[:3]] for w in re.findall(r"(mon|tue|wed|thu|fri|sat|sun)", m.group(1))}
        s = s[:m.start()] + " " + s[m.end():]

    start_t, end_t = time(0, 0, 0), time(23, 59, 59)
    # a clock range needs minutes or am/pm on both ends; "16-17" is a day range
    tr = next((c for c in _TIME_RANGE_RE.finditer(s)
               if (c.group(2) or c.group(3)) and (c.group(5) or c.group(6))), None)
    if tr:
        end_t = _clock(tr.group(4), tr.group(5), tr.group(6))
        start_t = _clock(tr.group(1), tr.group(2), tr.group(3), fallback_ampm=tr.group(6))
        s = s[:tr.start()] + " " + s[tr.end():]
    else:
        st = _SINGLE_TIME_RE.search(s)
        if st:
            if st.group(1):
                start_t = _clock(st.group(1), st.group(2), st.group(3))
            else:
                start_t = _clock(st.group(4), None, st.group(5))
            s = s[:st.start()] + " " + s[st.end():]

    days: list[date] = []
    try:
        while True:
            best = None
            for kind, rx in _DATE_PATTERNS:
                dm = rx.search(s)
                if dm and (best is None or dm.start() < best[1].start()):
                    best = (kind, dm)
            if best is None:
                break
            days.extend(_dates_from(*best))
            s = s[:best[1].start()] + " " + s[best[1].end():]
    except ValueError:
        return []

    if weekday_filter is not None:
        days = [d for d in days if d.weekday() in weekday_filter]
    days = sorted(set(days))
    out = []
    for d in days:
        a, b = datetime.combine(d, start_t), datetime.combine(d, end_t)
        if b < a:
            b += timedelta(days=1)
        out.append((a, b))
    return out


def _answer_time(b: dict, rules: MockRuleSet) -> str:
    sessions = parse_time_text(b["raw_time"])
    if not sessions:
        return UNPARSEABLE
    rows = ["Id | Sub id | Start time | End time"]
    for k, (a, e) in enumerate(sessions, start=1):
        rows.append(f"{b['event_id']} | {k} | {a:%Y-%m-%d %H:%M:%S} | {e:%Y-%m-%d %H:%M:%S}")
    return "\n".join(rows)


_EXCLUDE_RE = re.compile(
    r"ticket|price|hk\$|\$\d|registration|register|payment|admission|venue|address|"
    r"\b\d{1,2}:\d{2}\b|\b\d{1,2}\s*(am|pm)\b|opening hours|票|价|價|地点|地點|时间|時間|报名|報名",
    re.IGNORECASE,
)
_SENTENCE_RE = re.compile(r"[^.!?。！？]+[.!?。！？]?")


def _answer_summary(b: dict, rules: MockRuleSet) -> str:
    text = b["raw_description"].strip()
    kept = [s.strip() for s in _SENTENCE_RE.findall(text) if s.strip() and not _EXCLUDE_RE.search(s)]
    body = " ".join(kept) if kept else text
    budget = min(int(b["token_budget"]), rules.echo_budget)
    return truncate_tokens(body, budget)


def _keyword_hits(text: str, keywords) -> int:
    norm = normalize(text)
    words = set(re.findall(r"[a-z0-9]+", norm))
    hits = 0
    for kw in keywords:
        kw = normalize(kw)
        hits += (kw in words) if kw.isascii() else (kw in norm)
    return hits


def _answer_classify(b: dict, rules: MockRuleSet) -> str:
    from .events import EVENT_TYPE_LABELS

    text = f"{b['event_title']} {b['summary']}"
    best, best_hits = None, 0
    for etype, kws in rules.keyword_map.items():
        hits = _keyword_hits(text, kws)
        if hits > best_hits:
            best, best_hits = etype, hits
    if best is None:
        return "Other"
    return EVENT_TYPE_LABELS.get(best, best)


def _answer_relevance(b: dict, rules: MockRuleSet) -> str:
    from .events import label_to_type

    try:
        etype = label_to_type(b["event_type"])
    except ValueError:
        etype = b["event_type"]
    event_side = content_tokens(b["event_title"]) | content_tokens(" ".join(rules.keyword_map.get(etype, ())))
    post_side = content_tokens(" ".join([b["post_title"], b["post_content"], b["post_hashtags"].replace("#", " ")]))
    return "Yes" if jaccard(event_side, post_side) >= rules.relevance_threshold else "No"


_HANDLERS = {
    "P1_time": _answer_time,
    "P2_summary": _answer_summary,
    "P3_classify": _answer_classify,
    "P4_relevance": _answer_relevance,
}


def respond(prompt: str, rules: MockRuleSet) -> str:
    tid, bindings = parse_prompt(prompt)
    return _HANDLERS[tid](bindings, rules)


__all__ = ["respond", "parse_time_text", "count_tokens", "UNPARSEABLE"]
