"""CSV/JSON emission with value-exact round-trip.

Every file starts with (or contains) the config fingerprint so that
artifacts from different configs cannot be mixed silently.  Floats are
written with repr, the shortest digit string that parses back to the
identical double; line endings are LF regardless of platform.

samples.csv   one row per run: run_index, hit, t_hit_or_horizon,
              censored, d_v_end
survival.csv  the censoring-aware survival curve on its time grid:
              t, survival, n_at_risk
summary.json  ensemble summary plus fingerprint and tool version
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .ensemble import SurvivalCurve

FINGERPRINT_PREFIX = "# config_fingerprint="

SAMPLE_COLUMNS = ("run_index", "hit", "t_hit_or_horizon", "censored", "d_v_end")

SURVIVAL_COLUMNS = ("t", "survival", "n_at_risk")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _end_distance(sample) -> float:
    # HK samples report the final d_V, walk/projected samples the final
    # distance-like statistic; both land in the d_v_end column.
    if hasattr(sample, "d_v_at_end"):
        return sample.d_v_at_end
    return sample.end_value


def write_samples(path, samples, fingerprint: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{FINGERPRINT_PREFIX}{fingerprint}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SAMPLE_COLUMNS)
        for s in samples:
            writer.writerow(
                [
                    _fmt(s.run_index),
                    _fmt(s.hit),
                    _fmt(s.t_end),
                    _fmt(not s.hit),
                    _fmt(_end_distance(s)),
                ]
            )


def write_survival(path, curve: SurvivalCurve, fingerprint: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{FINGERPRINT_PREFIX}{fingerprint}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SURVIVAL_COLUMNS)
        for t, s, r in zip(curve.times, curve.values, curve.n_at_risk):
            writer.writerow([_fmt(t), _fmt(s), _fmt(r)])


def write_summary(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _read_tagged_csv(path, columns):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(FINGERPRINT_PREFIX):
            raise ValueError(f"{path}: missing config fingerprint line")
        fingerprint = first[len(FINGERPRINT_PREFIX):]
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != columns:
            raise ValueError(f"{path}: unexpected columns {header}, want {columns}")
        rows = [row for row in reader if row]
    return fingerprint, rows


def read_samples(path):
    """(fingerprint, rows) with native-typed row dicts."""
    fingerprint, raw = _read_tagged_csv(path, SAMPLE_COLUMNS)
    rows = [
        {
            "run_index": int(r[0]),
            "hit": bool(int(r[1])),
            "t_hit_or_horizon": int(r[2]),
            "censored": bool(int(r[3])),
            "d_v_end": float(r[4]),
        }
        for r in raw
    ]
    return fingerprint, rows


def read_survival(path):
    fingerprint, raw = _read_tagged_csv(path, SURVIVAL_COLUMNS)
    t = np.array([int(r[0]) for r in raw], dtype=np.int64)
    s = np.array([float(r[1]) for r in raw])
    n = np.array([int(r[2]) for r in raw], dtype=np.int64)
    return fingerprint, (t, s, n)


def read_summary(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
