"""Pitch-level CSV ingestion and the metric streams derived from it.

Input follows the Statcast export layout by default. Swing and contact flags
come from the ``description`` vocabulary in ``data/descriptions.json``; zone
membership comes from the ``zone`` code (1-9 is in the strike zone).
"""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, replace
from datetime import date
from importlib import resources
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from perfshift.detect import DetectionConfig, derive_seed, detect_multiple
from perfshift.errors import EmptySeriesError, MissingColumnError, PerfShiftError, UnknownEntityError
from perfshift.series import BINARY, CONTINUOUS, MetricSeries, new_metric_series

log = logging.getLogger(__name__)

DEFAULT_SCHEMA = {
    "game_date": "game_date",
    "pitcher": "pitcher",
    "batter": "batter",
    "pitch_type": "pitch_type",
    "release_speed": "release_speed",
    "zone": "zone",
    "description": "description",
    "inning": "inning",
    "game_pk": "game_pk",
    "at_bat_number": "at_bat_number",
    "pitch_number": "pitch_number",
    "game_year": "game_year",
}
REQUIRED = ("game_date", "pitcher", "batter", "pitch_type")
# fields whose column may be absent unless the caller maps them explicitly
OPTIONAL = (
    "release_speed", "zone", "inning", "game_pk", "at_bat_number", "pitch_number",
    "game_year", "in_zone", "swung", "made_contact", "inning_entered", "outing_innings",
)

FASTBALLS = {"four_seam": "FF", "sinker": "SI"}

LONG_OUTING_INNINGS = 4
LATE_ENTRY_INNING = 5
ROLE_COUNT = 10
STARTER_MAX_LATE = 5


@dataclass(frozen=True, slots=True)
class PitchEvent:
    game_date: date
    pitcher_id: str
    batter_id: str
    pitch_type: str
    release_speed: Optional[float]
    in_zone: Optional[bool]
    swung: bool
    made_contact: Optional[bool]
    inning_entered: Optional[int]
    outing_innings: Optional[float]
    season: int
    game_id: str = ""
    inning: Optional[int] = None


@dataclass(frozen=True)
class RoleProfile:
    pitcher_id: str
    season: int
    long_outings: int
    late_entries: int
    role: str
    avg_innings: float
    outings: int = 0


@dataclass(frozen=True)
class GroundTruthRow:
    pitcher_id: str
    primary_fastball: str
    flagged: bool
    max_cp_threshold: Optional[float]
    flags_by_delta: Tuple[Tuple[float, bool], ...] = ()
    monotone: bool = True


def load_description_map(path=None) -> Dict[str, Tuple[bool, Optional[bool]]]:
    """``description -> (swung, contact)``; the packaged table unless ``path`` is given."""
    if path is None:
        text = resources.files("perfshift").joinpath("data/descriptions.json").read_text()
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    raw = json.loads(text)
    return {k: (bool(v["swung"]), v.get("contact")) for k, v in raw.items()}


def _blank(v) -> bool:
    return v is None or v.strip() in ("", "NA", "NaN", "nan", "null", "None")


def _parse_bool(v) -> Optional[bool]:
    if _blank(v):
        return None
    s = v.strip().lower()
    if s in ("1", "true", "t", "yes", "y"):
        return True
    if s in ("0", "false", "f", "no", "n"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _parse_int(v) -> Optional[int]:
    return None if _blank(v) else int(float(v))


def _parse_float(v) -> Optional[float]:
    return None if _blank(v) else float(v)


def _parse_id(v) -> str:
    s = v.strip()
    # ids exported as floats ("663855.0") by some tools
    if s.endswith(".0") and s[:-2].isdigit():
        s = s[:-2]
    return s


def load_pitch_csv(
    path,
    schema_map: Optional[Dict[str, str]] = None,
    description_map: Optional[Dict[str, Tuple[bool, Optional[bool]]]] = None,
    start: Optional[date] = None,
    end: Optional[date] = None,
    skipped: Optional[list] = None,
) -> List[PitchEvent]:
    """Read pitch events from a CSV file.

    Parameters
    ----------
    path : path-like
    schema_map : dict, optional
        Field name -> CSV column, merged over :data:`DEFAULT_SCHEMA`. Mapping
        ``swung``/``made_contact``/``in_zone`` to explicit boolean columns
        replaces the description and zone lookups.
    description_map : dict, optional
        Override for the packaged description vocabulary.
    start, end : date, optional
        Inclusive date filter (use it to drop spring training and postseason).
    skipped : list, optional
        Receives ``(line_number, reason)`` for each unparseable row.

    Returns
    -------
    list of PitchEvent
        Sorted by game date, then game, at-bat and pitch number when those
        columns exist; file order otherwise.
    """
    explicit = dict(schema_map or {})
    schema = {**DEFAULT_SCHEMA, **explicit}
    descriptions = description_map or load_description_map()

    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        header = set(reader.fieldnames or ())
        required = list(REQUIRED)
        if "swung" not in explicit:
            required.append("description")
        required += [k for k in explicit if k in OPTIONAL]
        missing = sorted({schema[k] for k in required if schema[k] not in header})
        if missing:
            raise MissingColumnError(f"{path}: missing column(s) {missing}")
        col = {k: c for k, c in schema.items() if c in header}

        rows = []
        bad = []
        for line_no, rec in enumerate(reader, start=2):
            try:
                ev = _parse_row(rec, col, descriptions)
            except (ValueError, KeyError, TypeError) as exc:
                bad.append((line_no, str(exc)))
                continue
            if ev is None:
                continue
            if (start and ev[0].game_date < start) or (end and ev[0].game_date > end):
                continue
            rows.append(ev)

    if bad:
        log.warning("%s: skipped %d unparseable row(s); first at line %d: %s",
                    path, len(bad), bad[0][0], bad[0][1])
        if skipped is not None:
            skipped.extend(bad)
    rows.sort(key=lambda r: r[1])
    return _attach_outings([ev for ev, _ in rows])


def _parse_row(rec, col, descriptions):
    get = lambda k: rec.get(col[k]) if k in col else None  # noqa: E731
    game_date = date.fromisoformat(get("game_date").strip()[:10])
    pitcher = _parse_id(get("pitcher"))
    batter = _parse_id(get("batter"))
    if not pitcher or not batter:
        raise ValueError("blank pitcher or batter id")

    if "swung" in col:
        swung = _parse_bool(get("swung"))
        if swung is None:
            raise ValueError("blank swung flag")
        contact = _parse_bool(get("made_contact")) if swung else None
    else:
        desc = (get("description") or "").strip()
        if desc not in descriptions:
            raise ValueError(f"unknown description {desc!r}")
        swung, contact = descriptions[desc]
        if not swung:
            contact = None

    if "in_zone" in col:
        in_zone = _parse_bool(get("in_zone"))
    else:
        zone = _parse_int(get("zone"))
        in_zone = None if zone is None else 1 <= zone <= 9

    speed = _parse_float(get("release_speed"))
    if speed is not None and speed <= 0:
        raise ValueError(f"nonpositive release_speed {speed}")
    season = _parse_int(get("game_year")) or game_date.year
    game_id = (get("game_pk") or "").strip() or game_date.isoformat()
    ev = PitchEvent(
        game_date=game_date,
        pitcher_id=pitcher,
        batter_id=batter,
        pitch_type=(get("pitch_type") or "").strip(),
        release_speed=speed,
        in_zone=in_zone,
        swung=swung,
        made_contact=contact,
        inning_entered=_parse_int(get("inning_entered")),
        outing_innings=_parse_float(get("outing_innings")),
        season=season,
        game_id=_parse_id(game_id),
        inning=_parse_int(get("inning")),
    )
    order = (game_date, ev.game_id, _parse_int(get("at_bat_number")) or 0,
             _parse_int(get("pitch_number")) or 0)
    return ev, order


def _attach_outings(events: List[PitchEvent]) -> List[PitchEvent]:
    """Fill per-outing entry inning and length where the file did not supply them.

    Outing length is approximated by the number of distinct innings the
    pitcher threw in during that game.
    """
    innings = defaultdict(set)
    for ev in events:
        if ev.inning is not None:
            innings[(ev.pitcher_id, ev.game_id)].add(ev.inning)
    out = []
    for ev in events:
        seen = innings.get((ev.pitcher_id, ev.game_id))
        if seen and (ev.inning_entered is None or ev.outing_innings is None):
            ev = replace(
                ev,
                inning_entered=ev.inning_entered if ev.inning_entered is not None else min(seen),
                outing_innings=ev.outing_innings if ev.outing_innings is not None else float(len(seen)),
            )
        out.append(ev)
    return out


def _series(values, stamps, kind, entity_id, label) -> MetricSeries:
    if not values:
        raise EmptySeriesError(f"no qualifying pitches for {entity_id!r} ({label})")
    return new_metric_series(values, kind, entity_id=entity_id, label=label, timestamps=stamps)


def derive_chase_series(events: Iterable[PitchEvent], batter_id: str) -> MetricSeries:
    """1 per out-of-zone pitch the batter swung at, 0 per out-of-zone take."""
    picked = [e for e in events if e.batter_id == batter_id and e.in_zone is False]
    return _series([float(e.swung) for e in picked], [e.game_date.isoformat() for e in picked],
                   BINARY, batter_id, "chase")


def derive_whiff_series(events: Iterable[PitchEvent], batter_id: str) -> MetricSeries:
    """1 per swing without contact, 0 per swing with contact."""
    picked = [e for e in events if e.batter_id == batter_id and e.swung]
    return _series([float(e.made_contact is False) for e in picked],
                   [e.game_date.isoformat() for e in picked], BINARY, batter_id, "whiff")


def derive_velocity_series(events: Iterable[PitchEvent], pitcher_id: str, pitch_type: str = "FF") -> MetricSeries:
    """Release speeds of one pitch type; pitches without a speed are dropped."""
    picked = [
        e for e in events
        if e.pitcher_id == pitcher_id and e.pitch_type == pitch_type and e.release_speed is not None
    ]
    return _series([e.release_speed for e in picked], [e.game_date.isoformat() for e in picked],
                   CONTINUOUS, pitcher_id, f"velocity_{pitch_type}")


METRICS = ("chase", "whiff", "velocity")


def _qualifies(e: PitchEvent, metric: str, pitch_type: str) -> bool:
    if metric == "chase":
        return e.in_zone is False
    if metric == "whiff":
        return e.swung
    return e.pitch_type == pitch_type and e.release_speed is not None


def build_cohort(
    events: Sequence[PitchEvent], metric: str, min_count: int = 100, pitch_type: str = "FF",
    entities: Optional[Iterable[str]] = None,
) -> List[MetricSeries]:
    """Series for every batter (chase, whiff) or pitcher (velocity) with at least ``min_count`` qualifying pitches."""
    if metric not in METRICS:
        raise PerfShiftError(f"metric must be one of {METRICS}")
    counts: Dict[str, int] = defaultdict(int)
    for e in events:
        if _qualifies(e, metric, pitch_type):
            counts[e.pitcher_id if metric == "velocity" else e.batter_id] += 1
    wanted = set(entities) if entities is not None else None
    ids = [i for i, n in counts.items() if n >= min_count and (wanted is None or i in wanted)]
    out = []
    for i in sorted(ids):
        if metric == "chase":
            out.append(derive_chase_series(events, i))
        elif metric == "whiff":
            out.append(derive_whiff_series(events, i))
        else:
            out.append(derive_velocity_series(events, i, pitch_type))
    return out


def _outings(events: Iterable[PitchEvent], pitcher_id: str, season: Optional[int]):
    games = {}
    for e in events:
        if e.pitcher_id == pitcher_id and (season is None or e.season == season):
            if e.inning_entered is not None and e.outing_innings is not None:
                games[e.game_id] = (e.inning_entered, e.outing_innings, e.season)
    return games


def _role(long_outings: int, late_entries: int) -> str:
    if long_outings > ROLE_COUNT and late_entries < STARTER_MAX_LATE:
        return "starter"
    if late_entries > ROLE_COUNT and long_outings <= ROLE_COUNT:
        return "reliever"
    return "mixed"


def classify_roles(events: Iterable[PitchEvent], pitcher_id: str, season: int) -> RoleProfile:
    """Starter: more than 10 outings over 4 innings and fewer than 5 entries in the 5th or later.

    Reliever: more than 10 late entries and at most 10 long outings. Anything
    else is ``mixed``.
    """
    games = _outings(events, pitcher_id, season)
    long_outings = sum(1 for _, ip, _ in games.values() if ip > LONG_OUTING_INNINGS)
    late = sum(1 for inn, _, _ in games.values() if inn >= LATE_ENTRY_INNING)
    avg = sum(ip for _, ip, _ in games.values()) / len(games) if games else 0.0
    return RoleProfile(pitcher_id, season, long_outings, late, _role(long_outings, late), avg, len(games))


def starters(events: Sequence[PitchEvent], season: int) -> List[str]:
    ids = sorted({e.pitcher_id for e in events if e.season == season})
    return [p for p in ids if classify_roles(events, p, season).role == "starter"]


def find_role_transitions(events: Sequence[PitchEvent], seasons: Tuple[int, int] = (2023, 2024)) -> List[str]:
    """Pitchers with both relief and starter usage across two seasons whose average outing grew.

    Counts are pooled over both seasons: more than 10 entries in the 5th
    inning or later and more than 10 outings longer than 4 innings.
    """
    first, second = seasons
    out = []
    for p in sorted({e.pitcher_id for e in events}):
        games = {g: v for g, v in _outings(events, p, None).items() if v[2] in seasons}
        long_outings = sum(1 for _, ip, _ in games.values() if ip > LONG_OUTING_INNINGS)
        late = sum(1 for inn, _, _ in games.values() if inn >= LATE_ENTRY_INNING)
        if long_outings <= ROLE_COUNT or late <= ROLE_COUNT:
            continue
        a = classify_roles(events, p, first)
        b = classify_roles(events, p, second)
        if a.outings and b.outings and b.avg_innings > a.avg_innings:
            out.append(p)
    return out


def evaluate_ground_truth(
    events: Sequence[PitchEvent],
    roster: Sequence[Tuple[str, str]],
    cfg: DetectionConfig,
    delta_ladder: Sequence[float],
) -> List[GroundTruthRow]:
    """Run binary segmentation at every shift on the ladder for each rostered pitcher.

    A pitcher is flagged when the smallest shift flags; ``max_cp_threshold`` is
    the largest shift that still flags. One seed per pitcher is reused across
    the ladder. ``monotone`` is False when a larger shift flags after a smaller
    one did not.
    """
    ladder = sorted(float(d) for d in delta_ladder)
    if not ladder:
        raise PerfShiftError("delta ladder is empty")
    pitchers = {e.pitcher_id for e in events}
    rows = []
    for pitcher_id, fastball in roster:
        if pitcher_id not in pitchers:
            raise UnknownEntityError(f"pitcher {pitcher_id!r} not found in events")
        pitch_type = FASTBALLS.get(fastball, fastball)
        series = derive_velocity_series(events, pitcher_id, pitch_type)
        seed = derive_seed(cfg.seed, pitcher_id)
        flags = []
        for d in ladder:
            run_cfg = replace(cfg, delta=d, seed=seed)
            flags.append((d, detect_multiple(series, run_cfg).flagged))
        hits = [d for d, f in flags if f]
        flagged = flags[0][1]
        monotone = all(not f for d, f in flags[len(hits):]) and all(f for _, f in flags[: len(hits)])
        rows.append(
            GroundTruthRow(
                pitcher_id=pitcher_id,
                primary_fastball=fastball,
                flagged=flagged,
                max_cp_threshold=max(hits) if flagged else None,
                flags_by_delta=tuple(flags),
                monotone=monotone,
            )
        )
    return rows


GROUND_TRUTH_COLUMNS = ("pitcher", "primary_fastball", "flagged", "max_cp_threshold", "monotone")


def ground_truth_rows(rows: Sequence[GroundTruthRow]) -> List[list]:
    return [
        [r.pitcher_id, r.primary_fastball, "Yes" if r.flagged else "No",
         "NA" if r.max_cp_threshold is None else f"{r.max_cp_threshold:g}", r.monotone]
        for r in rows
    ]
