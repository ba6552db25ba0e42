"""Seeded synthetic corpus with planted, recoverable event effects.

Daily flow is built from integer components::

    flow = base(dow) + holiday + weather
           + sum_type round(beta_type * promotional_type(t))
           + sum_type round(beta_wom_type * womp_type(t))
           + noise

Each component is apportioned to the entry-point segments with the
largest-remainder rule, so segment flows and the total decompose exactly.
Promotional posts are created at least ``conversion_lag_days`` before an
event's first session and experience posts between a session's end and the
following midnight, so popularity recomputed with a one-day observation lag
equals the planted values.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, time, timedelta
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid
from .events import Event, FilterRules, RawEvent, build_event, events_to_json, filter_events
from .features import FEATURE_TYPES, WOM_TYPES, CalendarContext, HolidaySpan, holiday_features
from .fileio import atomic_write_text
from .gateway import Gateway, GatewayConfig
from .popularity import Post, posts_to_jsonl, wom_popularity_exact

PUBLIC_HOLIDAYS = (
    ("Spring Festival", date(2023, 1, 21), date(2023, 1, 27)),
    ("Qingming", date(2023, 4, 5), date(2023, 4, 5)),
    ("Labour Day", date(2023, 4, 29), date(2023, 5, 3)),
    ("Dragon Boat", date(2023, 6, 22), date(2023, 6, 24)),
    ("Mid-Autumn and National Day", date(2023, 9, 29), date(2023, 10, 6)),
    ("Christmas", date(2023, 12, 25), date(2023, 12, 26)),
    ("New Year", date(2023, 12, 30), date(2024, 1, 1)),
    ("Spring Festival", date(2024, 2, 10), date(2024, 2, 17)),
    ("Qingming", date(2024, 4, 4), date(2024, 4, 6)),
    ("Labour Day", date(2024, 5, 1), date(2024, 5, 5)),
    ("Dragon Boat", date(2024, 6, 8), date(2024, 6, 10)),
    ("Mid-Autumn", date(2024, 9, 15), date(2024, 9, 17)),
    ("National Day", date(2024, 10, 1), date(2024, 10, 7)),
)
SCHOOL_VACATIONS = (
    ("Summer vacation", date(2023, 7, 9), date(2023, 8, 31)),
    ("Winter vacation", date(2024, 1, 22), date(2024, 2, 19)),
    ("Summer vacation", date(2024, 7, 6), date(2024, 8, 31)),
)
CALENDAR_COVERAGE = (date(2023, 1, 1), date(2024, 12, 31))

SEGMENTS = ("metro", "hsr", "airport")
CORPUS_FILES = ("flows.csv", "weather.csv", "holidays.csv", "events_raw.jsonl", "events.json",
                "posts.jsonl", "relevance.csv", "ground_truth.json")

_SESSION_CLOCK = {
    "concert": (time(20, 0), time(22, 30)),
    "exhibition": (time(10, 0), time(18, 0)),
    "sports": (time(14, 0), time(17, 0)),
    "fireworks": (time(21, 0), time(21, 15)),
    "fair": (time(11, 0), time(20, 0)),
    "performance": (time(19, 30), time(21, 30)),
    "religious": (time(9, 0), time(12, 0)),
}

_NAMES = ("Neon Tide", "Silver Harbour", "Kowloon Lights", "Jade Wave", "Victoria Echo", "Starlit Bay",
          "Crimson Peak", "Azure Drift", "Golden Lotus", "Midnight Ferry", "Paper Kites", "Red Lantern",
          "Velvet Skyline", "Monsoon Hearts", "Island Pulse", "Granite Bloom", "Lumen Park", "Cobalt Sun")

_TEXT = {
    "concert": ("{name} Live Concert", "{name} bring their latest tour to the city with a full setlist, "
                "a live band and an encore of fan favourites. Tickets from HK$480 at the box office."),
    "exhibition": ("{name} Art Exhibition", "The exhibition gathers artworks and a large installation by "
                   "{name} in a gallery setting. Admission HK$120, opening hours 10:00 to 18:00."),
    "sports": ("{name} Cup Tournament", "Top teams compete in the {name} Cup tournament, a championship "
               "match series with football and rugby sevens. Registration closes soon."),
    "fireworks": ("{name} Fireworks Display", "A harbourfront fireworks display with pyrotechnic shows "
                  "set to music, presented as {name}. The venue opens at 19:00."),
    "fair": ("{name} Night Market Fair", "A flea market and bazaar with street food and crafts at the "
             "{name} fair. Free admission."),
    "performance": ("{name} Ballet Theatre", "A ballet and dance theatre production staged by the {name} "
                    "company. Tickets HK$300."),
    "religious": ("{name} Temple Blessing", "A traditional temple blessing procession honouring the "
                  "{name} shrine. Venue address on site."),
}
_PROMO_LINES = ("Can't wait for {title}!", "Tickets secured for {title}", "Counting down to {title}",
                "Who else is going to {title}?", "{title} is coming soon")
_EXPERIENCE_LINES = ("Just went to {title}, unforgettable night", "{title} was amazing",
                     "Still buzzing after {title}", "Highlights from {title}", "Loved every minute of {title}")
_DECOY_LINES = (("Best dim sum breakfast", "Found a cosy noodle shop near the pier, great value lunch."),
                ("Shopping haul", "Picked up skincare and snacks in the mall today."),
                ("Hiking the Dragon's Back trail", "Clear skies and ocean views on the ridge walk."),
                ("Cafe hopping", "Latte art and croissants at a quiet corner cafe."))


def _default_weekly():
    # Monday .. Sunday
    return (76000.0, 72000.0, 74000.0, 78000.0, 88000.0, 100000.0, 90000.0)


@dataclass(frozen=True)
class SynthConfig:
    n_days: int = 440
    start: date = date(2023, 3, 1)
    seed: int = 7
    weekly_base: tuple[float, ...] = field(default_factory=_default_weekly)
    # fractional lift of the base per remaining holiday day, day before a holiday, school vacation, typhoon
    holiday_beta: float = 0.12
    day_before_beta: float = 0.08
    school_beta: float = 0.04
    typhoon_beta: float = -0.3
    event_rates: dict = field(default_factory=lambda: {
        "concert": 1.0, "exhibition": 0.5, "sports": 0.4, "fireworks": 0.15,
        "fair": 0.15, "performance": 0.15, "religious": 0.05})
    engagement_mu: float = 4.0
    engagement_sigma: float = 1.0
    hype_sigma: float = 0.8
    quality_sigma: float = 0.8  # spread of post-session engagement relative to pre-event hype
    promo_betas: dict = field(default_factory=lambda: {
        "concert": 4.0, "fireworks": 3.0, "exhibition": 0.8, "sports": 0.4})
    wom_betas: dict = field(default_factory=lambda: {"concert": 5.0, "exhibition": 4.0, "sports": 2.0})
    sigma: float = 3000.0
    conversion_lag_days: int = 1
    segment_shares: dict = field(default_factory=lambda: {"metro": 0.5, "hsr": 0.3, "airport": 0.2})
    event_segment_shares: dict = field(default_factory=lambda: {"metro": 0.55, "hsr": 0.35, "airport": 0.10})
    long_exhibition: bool = True  # one 40-session exhibition that the session-count rule removes

    def __post_init__(self):
        problems = []
        if self.n_days < 30:
            problems.append("n_days must be >= 30")
        if len(self.weekly_base) != 7 or min(self.weekly_base) <= 0:
            problems.append("weekly_base needs 7 positive numbers")
        if self.sigma < 0:
            problems.append("sigma must be >= 0")
        if any(r < 0 for r in self.event_rates.values()):
            problems.append("event rates must be >= 0")
        if min(self.engagement_sigma, self.hype_sigma, self.quality_sigma) < 0:
            problems.append("engagement spreads must be >= 0")
        if self.conversion_lag_days < 1:
            problems.append("conversion_lag_days must be >= 1")
        for shares in (self.segment_shares, self.event_segment_shares):
            if set(shares) != set(SEGMENTS) or min(shares.values()) < 0 or not math.isclose(sum(shares.values()), 1):
                problems.append(f"segment shares must cover {SEGMENTS} and sum to 1")
        lo, hi = CALENDAR_COVERAGE
        end = self.start + timedelta(days=self.n_days - 1)
        if self.start < lo or end > hi:
            problems.append(f"date range must lie within {lo}..{hi}")
        if problems:
            raise ConfigInvalid("; ".join(problems))

    @property
    def end(self) -> date:
        return self.start + timedelta(days=self.n_days - 1)

    @classmethod
    def null_effects(cls, **kw) -> "SynthConfig":
        """No holiday, weather or event effects and no noise."""
        base = dict(holiday_beta=0.0, day_before_beta=0.0, school_beta=0.0, typhoon_beta=0.0,
                    promo_betas=dict.fromkeys(FEATURE_TYPES, 0.0), wom_betas=dict.fromkeys(WOM_TYPES, 0.0),
                    sigma=0.0)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start"] = self.start.isoformat()
        d["weekly_base"] = list(self.weekly_base)
        return d


def synth_calendar() -> CalendarContext:
    return CalendarContext(tuple(HolidaySpan(*h) for h in PUBLIC_HOLIDAYS),
                           tuple(HolidaySpan(*s) for s in SCHOOL_VACATIONS), CALENDAR_COVERAGE)


def apportion(total: int, shares: dict) -> dict:
    """Split an integer across segments by largest remainder; parts sum to ``total`` exactly."""
    sign = -1 if total < 0 else 1
    amount = abs(total)
    raw = {s: amount * shares[s] for s in SEGMENTS}
    parts = {s: int(math.floor(raw[s])) for s in SEGMENTS}
    left = amount - sum(parts.values())
    for s in sorted(SEGMENTS, key=lambda s: (-(raw[s] - parts[s]), SEGMENTS.index(s)))[:left]:
        parts[s] += 1
    return {s: sign * v for s, v in parts.items()}


def _fmt_day(d: date) -> str:
    return f"{d.day} {d:%b} {d.year}"


def _fmt_clock(t: time) -> str:
    h = t.hour % 12 or 12
    return f"{h}:{t.minute:02d} {'am' if t.hour < 12 else 'pm'}"


def time_text(days: list[date], clock: tuple[time, time]) -> str:
    """Listing-style schedule text for consecutive ``days``."""
    a, b = days[0], days[-1]
    if len(days) == 1:
        span = _fmt_day(a)
    elif a.year != b.year:
        span = f"{_fmt_day(a)} - {_fmt_day(b)}"
    elif a.month != b.month:
        span = f"{a.day} {a:%b} - {_fmt_day(b)}"
    else:
        span = f"{a.day}-{b.day} {b:%b} {b.year}"
    return f"{span}, {_fmt_clock(clock[0])} - {_fmt_clock(clock[1])}"


class _Builder:
    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.post_counter = 0

    def post_id(self) -> str:
        self.post_counter += 1
        return f"p{self.post_counter:06d}"

    def engagement(self, hype: float) -> tuple[int, int]:
        likes = int(math.floor(math.exp(self.rng.normal(self.cfg.engagement_mu + math.log(hype),
                                                        self.cfg.engagement_sigma))))
        collects = int(self.rng.binomial(likes, 0.25)) if likes > 0 else 0
        return likes, collects

    def moment(self, lo: datetime, hi: datetime) -> datetime:
        """Random whole-minute instant in [lo, hi)."""
        minutes = max(1, int((hi - lo).total_seconds() // 60))
        return lo + timedelta(minutes=int(self.rng.integers(0, minutes)))


def _session_count(rng, etype: str) -> int:
    if etype == "exhibition":
        return int(min(14, max(2, rng.poisson(5) + 1)))
    if etype == "fireworks":
        return 1 if rng.random() < 0.8 else 2
    if etype in ("concert", "sports"):
        return int(1 + rng.binomial(4, 0.5))
    return int(1 + rng.integers(0, 3))


def _plan_events(b: _Builder) -> list[tuple[RawEvent, str, list[date]]]:
    cfg, rng = b.cfg, b.rng
    weeks = cfg.n_days / 7
    plans = []
    serial = 0
    for etype in ("concert", "exhibition", "sports", "fireworks", "fair", "performance", "religious"):
        n_events = int(rng.poisson(cfg.event_rates.get(etype, 0.0) * weeks))
        for _ in range(n_events):
            n_sessions = _session_count(rng, etype)
            first = cfg.start + timedelta(days=int(rng.integers(0, cfg.n_days - n_sessions + 1)))
            days = [first + timedelta(days=k) for k in range(n_sessions)]
            plans.append((etype, days))
    if cfg.long_exhibition and cfg.n_days > 60:
        first = cfg.start + timedelta(days=int(rng.integers(0, cfg.n_days - 40)))
        plans.append(("exhibition", [first + timedelta(days=k) for k in range(40)]))
    plans.sort(key=lambda p: (p[1][0], p[0]))
    out = []
    for etype, days in plans:
        serial += 1
        eid = f"E{serial:04d}"
        name = _NAMES[int(rng.integers(0, len(_NAMES)))]
        title, desc = (s.format(name=name) for s in _TEXT[etype])
        raw = RawEvent(eid, title, time_text(days, _SESSION_CLOCK[etype]), f"{name} Venue", desc,
                       "dedicated-site")
        out.append((raw, etype, days))
    return out


def _posts_for_event(b: _Builder, ev: Event):
    """Related posts plus decoys; returns (posts, labels, planted)."""
    cfg, rng = b.cfg, b.rng
    hype = math.exp(rng.normal(0.0, cfg.hype_sigma))
    buzz = hype * math.exp(rng.normal(0.0, cfg.quality_sigma))
    sessions = ev.sessions
    first = sessions[0].start
    posts, labels = [], []
    tag = "#" + ev.title.split()[0].lower()

    def make(text_title, content, created, related, tags=(), level=None):
        likes, collects = b.engagement((level or hype) if related else 1.0)
        p = Post(b.post_id(), f"u{int(rng.integers(1, 50000)):05d}", text_title, content, created,
                 likes, collects, tuple(tags), ("Hong Kong",))
        posts.append(p)
        labels.append(int(related))
        return p

    def related_text(lines):
        line = lines[int(rng.integers(0, len(lines)))].format(title=ev.title)
        return line, f"{line}. {ev.summary}"

    promo_total = 0
    lead = cfg.conversion_lag_days
    n_promo = int(rng.integers(8, 35))
    for _ in range(n_promo):
        created = b.moment(first - timedelta(days=55), first - timedelta(days=lead))
        p = make(*related_text(_PROMO_LINES), created, True, (tag, "#hongkong"))
        promo_total += p.likes + p.collects
    # stay under the top-g candidate cut so every related post is counted
    budget = 100 - n_promo - 5 - 3 - 5
    wom_raw = []
    for k in range(len(sessions) - 1):
        lo = sessions[k].end
        midnight = datetime.combine(lo.date() + timedelta(days=1), time.min)
        hi = min(midnight, sessions[k + 1].start)
        total = 0
        if hi > lo:
            n_exp = min(int(rng.integers(2, 16)), budget)
            budget -= n_exp
            for _ in range(n_exp):
                p = make(*related_text(_EXPERIENCE_LINES), b.moment(lo, hi), True, (tag,), buzz)
                total += p.likes + p.collects
        wom_raw.append(total)
    overall_extra = 0
    last = sessions[-1].end
    for _ in range(int(rng.integers(0, 6))):  # after the last session, inside the threshold
        p = make(*related_text(_EXPERIENCE_LINES), b.moment(last, last + timedelta(days=30)), True, (tag,),
                 buzz)
        overall_extra += p.likes + p.collects
    for _ in range(int(rng.integers(0, 4))):  # too early to count at all
        make(*related_text(_PROMO_LINES), b.moment(first - timedelta(days=100), first - timedelta(days=70)),
             True, (tag,))
    for _ in range(int(rng.integers(1, 6))):  # unrelated chatter in the same period
        title, content = _DECOY_LINES[int(rng.integers(0, len(_DECOY_LINES)))]
        make(title, content, b.moment(first - timedelta(days=30), first), False, ("#foodie",))
    womp = wom_popularity_exact(wom_raw, len(sessions))
    planted = {"promotional": promo_total, "overall": promo_total + sum(wom_raw) + overall_extra,
               "wom_raw": wom_raw, "womp": [str(v) for v in womp]}
    return posts, labels, planted, womp


def _weather(b: _Builder, days: list[date]):
    rows = []
    for d in days:
        doy = d.timetuple().tm_yday
        wet = 0.5 + 0.4 * math.sin(2 * math.pi * (doy - 100) / 365)
        rain = float(np.round(b.rng.gamma(0.8, 12.0), 1)) if b.rng.random() < 0.35 * wet else 0.0
        tmax = float(np.round(24 + 6 * math.sin(2 * math.pi * (doy - 110) / 365) + b.rng.normal(0, 1.5), 1))
        typhoon = bool(d.month in (7, 8, 9) and b.rng.random() < 0.03)
        rows.append((d, rain, tmax, typhoon))
    return rows


def generate(cfg: SynthConfig = SynthConfig()) -> dict[str, str]:
    """Build the corpus as ``{file name: text}``; same config gives byte-identical output."""
    b = _Builder(cfg)
    cal = synth_calendar()
    days = [cfg.start + timedelta(days=k) for k in range(cfg.n_days)]

    gateway = Gateway(GatewayConfig(mode="mock"))
    raw_events, built = [], []
    for raw, etype, planned_days in _plan_events(b):
        ev = build_event(raw, gateway)
        if ev.event_type != etype or [s.day for s in ev.sessions] != planned_days:
            raise RuntimeError(f"{raw.event_id}: structuring did not reproduce the planted schedule")
        raw_events.append(raw)
        built.append(ev)
    events = filter_events(built, FilterRules())

    posts, rel_rows, planted = [], [], {}
    day_promo = {d: dict.fromkeys(FEATURE_TYPES, 0) for d in days}
    day_womp = {d: dict.fromkeys(WOM_TYPES, Fraction(0)) for d in days}
    for ev in events:
        ev_posts, labels, info, womp = _posts_for_event(b, ev)
        posts.extend(ev_posts)
        rel_rows.extend((ev.event_id, p.post_id, lab) for p, lab in zip(ev_posts, labels))
        planted[ev.event_id] = info
        for k, s in enumerate(ev.sessions):
            if s.day in day_promo:
                day_promo[s.day][ev.event_type] += info["promotional"]
                if ev.event_type in WOM_TYPES:
                    day_womp[s.day][ev.event_type] += womp[k]
    weather = _weather(b, days)

    flow_rows, truth_days = [], []
    for d, (_, rain, tmax, typhoon) in zip(days, weather):
        base = cfg.weekly_base[d.weekday()]
        hf = holiday_features(d, cal)
        lift = (cfg.holiday_beta * hf.holidays_remaining + cfg.day_before_beta * hf.day_before_holiday
                + cfg.school_beta * hf.school_holiday)
        comp = {
            "base": int(round(base)),
            "holiday": int(round(base * lift)),
            "weather": int(round(base * cfg.typhoon_beta)) if typhoon else 0,
        }
        for t in FEATURE_TYPES:
            comp[f"promo_{t}"] = int(round(cfg.promo_betas.get(t, 0.0) * day_promo[d][t]))
        for t in WOM_TYPES:
            comp[f"wom_{t}"] = int(round(cfg.wom_betas.get(t, 0.0) * float(day_womp[d][t])))
        seg_noise = {s: int(round(b.rng.normal(0.0, cfg.sigma * math.sqrt(cfg.segment_shares[s]))))
                     if cfg.sigma > 0 else 0 for s in SEGMENTS}
        comp["noise"] = sum(seg_noise.values())
        segs = {s: {} for s in SEGMENTS}
        for name, total in comp.items():
            if name == "noise":
                parts = seg_noise
            else:
                shares = cfg.event_segment_shares if name.startswith(("promo_", "wom_")) else cfg.segment_shares
                parts = apportion(total, shares)
            for s in SEGMENTS:
                segs[s][name] = parts[s]
        flow = sum(comp.values())
        for s in SEGMENTS:
            segs[s]["flow"] = sum(segs[s].values())
            flow_rows.append((d.isoformat(), s, segs[s]["flow"]))
        truth_days.append({"date": d.isoformat(), "flow": flow, "components": comp, "segments": segs})

    out = {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("date", "segment", "arrivals"))
    w.writerows(flow_rows)
    out["flows.csv"] = buf.getvalue()

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("date", "rainfall_mm", "tmax_c", "typhoon"))
    w.writerows((d.isoformat(), repr(r), repr(t), int(ty)) for d, r, t, ty in weather)
    out["weather.csv"] = buf.getvalue()

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("start", "end", "name", "kind"))
    w.writerows((s.start.isoformat(), s.end.isoformat(), s.name, "public") for s in cal.holiday_spans)
    w.writerows((s.start.isoformat(), s.end.isoformat(), s.name, "school") for s in cal.school_vacation_spans)
    out["holidays.csv"] = buf.getvalue()

    out["events_raw.jsonl"] = "".join(json.dumps(asdict(r), ensure_ascii=False) + "\n" for r in raw_events)
    out["events.json"] = events_to_json(events)
    out["posts.jsonl"] = posts_to_jsonl(posts)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("event_id", "post_id", "related"))
    w.writerows(rel_rows)
    out["relevance.csv"] = buf.getvalue()

    truth = {
        "config": cfg.to_dict(),
        "promo_betas": cfg.promo_betas,
        "wom_betas": cfg.wom_betas,
        "planted": planted,
        "days": truth_days,
    }
    out["ground_truth.json"] = json.dumps(truth, indent=1, sort_keys=True) + "\n"
    return out


def write_corpus(corpus: dict[str, str], outdir) -> dict[str, str]:
    """Write every file atomically; returns ``{file name: sha256}``."""
    outdir = Path(outdir)
    digests = {}
    for name in sorted(corpus):
        atomic_write_text(outdir / name, corpus[name])
        digests[name] = hashlib.sha256(corpus[name].encode("utf-8")).hexdigest()
    return digests
