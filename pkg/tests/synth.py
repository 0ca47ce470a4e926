"""Synthetic pitch-level fixtures shared by the test modules."""

import csv
from datetime import date, timedelta

import numpy as np

from perfshift.ingest import PitchEvent

# (name, MLB id, primary fastball, max shift still flagging; None = not flagged)
ROLE_CHANGE_ROSTER = [
    ("Jordan Hicks", "663855", "sinker", 5.0),
    ("Reynaldo Lopez", "625643", "four_seam", 2.0),
    ("Ronel Blanco", "669854", "four_seam", 0.5),
    ("Michael King", "650633", "sinker", 1.0),
    ("Zack Littell", "641793", "four_seam", 1.0),
    ("Jose Soriano", "667755", "sinker", None),
    ("Garrett Crochet", "676979", "four_seam", 0.5),
    ("Tyler Alexander", "641302", "four_seam", 0.5),
    ("Andre Pallante", "669467", "four_seam", 1.0),
    ("Cole Ragans", "666142", "four_seam", 1.0),
    ("Sean Manaea", "640455", "four_seam", 1.0),
]
LADDER = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
SORIANO_RISE = 0.12
SIGMA = 1.2


def planted_drop(threshold):
    """Velocity drop that flags at ``threshold`` but not at the next ladder step."""
    if threshold is None:
        return -SORIANO_RISE
    return threshold + 0.5


def pitcher_events(pitcher_id, pitch_type, base, drop, n_per_season=400, sigma=SIGMA,
                   seed=0, relief_pitches=15, start_pitches=40, other_type="SL"):
    """Two seasons of outings: relief in the first, starts in the second.

    Every fifth pitch is a non-fastball so velocity series skip some rows.
    """
    rng = np.random.default_rng(seed)
    events = []
    day = date(2023, 4, 1)
    for season, mean, role in ((2023, base, "relief"), (2024, base - drop, "start")):
        day = max(day, date(season, 4, 1))
        per_outing = relief_pitches if role == "relief" else start_pitches
        thrown = 0
        game = 0
        while thrown < n_per_season:
            game += 1
            entered = 7 if role == "relief" else 1
            n_innings = 1 if role == "relief" else 6
            gid = f"{pitcher_id}-{season}-{game}"
            for k in range(per_outing):
                inning = entered + min(n_innings - 1, k * n_innings // per_outing)
                if thrown < n_per_season and k % 5 != 4:
                    ptype, speed = pitch_type, float(rng.normal(mean, sigma))
                    thrown += 1
                else:
                    ptype, speed = other_type, float(rng.normal(mean - 8, sigma))
                events.append(PitchEvent(
                    game_date=day, pitcher_id=pitcher_id, batter_id=f"b{k % 9}",
                    pitch_type=ptype, release_speed=round(speed, 1), in_zone=bool(k % 2),
                    swung=bool(k % 3 == 0), made_contact=(k % 6 == 0) if k % 3 == 0 else None,
                    inning_entered=entered, outing_innings=float(n_innings), season=season,
                    game_id=gid, inning=inning,
                ))
            day += timedelta(days=5 if role == "start" else 2)
    return events


def role_change_fixture(seed=2024, n_per_season=400):
    events, roster = [], []
    for i, (_, pid, fastball, threshold) in enumerate(ROLE_CHANGE_ROSTER):
        ptype = "SI" if fastball == "sinker" else "FF"
        events += pitcher_events(pid, ptype, base=95.0 - 0.3 * i, drop=planted_drop(threshold),
                                 n_per_season=n_per_season, seed=seed * 100 + i)
        roster.append((pid, fastball))
    return events, roster


STATCAST_HEADER = ["game_date", "game_pk", "pitcher", "batter", "pitch_type", "release_speed",
                   "zone", "description", "inning", "at_bat_number", "pitch_number", "game_year"]


def _description(ev):
    if not ev.swung:
        return "ball" if not ev.in_zone else "called_strike"
    return "foul" if ev.made_contact else "swinging_strike"


def write_statcast_csv(path, events):
    """Write events in the Statcast export layout, newest first like a real export."""
    rows = []
    for n, ev in enumerate(events):
        rows.append([ev.game_date.isoformat(), ev.game_id, ev.pitcher_id, ev.batter_id,
                     ev.pitch_type, "" if ev.release_speed is None else ev.release_speed,
                     5 if ev.in_zone else 13, _description(ev), ev.inning or 1, n + 1, 1,
                     ev.season])
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(STATCAST_HEADER)
        w.writerows(reversed(rows))


def batter_events(batter_id, rates, swings_per_rate, seed=0, start=date(2023, 4, 1)):
    """Swing-level events for one batter whose whiff rate steps through ``rates``.

    Each swing is preceded by an out-of-zone take so chase series also exist.
    """
    rng = np.random.default_rng(seed)
    events = []
    day = start
    n = 0
    for rate, count in zip(rates, swings_per_rate):
        for _ in range(count):
            miss = bool(rng.random() < rate)
            gid = f"g{day.isoformat()}"
            events.append(PitchEvent(day, "p1", batter_id, "FF", 94.0, False, False, None,
                                     1, 6.0, day.year, gid, 1))
            events.append(PitchEvent(day, "p1", batter_id, "FF", 94.0, True, True, not miss,
                                     1, 6.0, day.year, gid, 1))
            n += 1
            if n % 4 == 0:
                day += timedelta(days=1)
    return events
