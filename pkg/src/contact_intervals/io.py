"""File formats: dataset CSV/JSON, fit and R0 JSON, and daily epidemic curves.

A dataset directory holds

* ``individuals.csv`` -- ``id,imported,t_inf,t_onset_infectious,t_recovery,degree,infector``
* ``edges.csv`` -- ``u,v`` (network data only)
* ``meta.json`` -- ``n``, ``T``, ``m``, ``extinct``, ``config``, ``seed``

Times are written with 17 significant digits so they parse back to the same
doubles. Missing values are empty fields.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .simulation import ContactNetwork, EpidemicDataset, IndividualRecord

INDIVIDUAL_FIELDS = ("id", "imported", "t_inf", "t_onset_infectious", "t_recovery", "degree", "infector")


class DecodeError(ValueError):
    """Malformed input file; the message names the file and line."""


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def _opt(x):
    return "" if x is None else str(x)


def write_dataset(data: EpidemicDataset, out_dir: str, seed: Optional[int] = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "individuals.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INDIVIDUAL_FIELDS)
        for r in data.individuals:
            w.writerow(
                [
                    r.id,
                    int(r.imported),
                    format_float(r.t_inf),
                    format_float(r.t_onset),
                    format_float(r.t_recovery),
                    _opt(r.degree),
                    _opt(r.infector),
                ]
            )
    if data.network is not None:
        with open(os.path.join(out_dir, "edges.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("u", "v"))
            w.writerows(data.network.edges.tolist())
    meta = {
        "n": data.n,
        "T": data.T,
        "m": data.m,
        "extinct": data.extinct,
        "network": data.network is not None,
        "config": data.meta.get("config"),
        "seed": data.meta.get("seed", seed) if seed is None else seed,
    }
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse(path, lineno, name, value, conv):
    try:
        return conv(value)
    except (TypeError, ValueError):
        raise DecodeError(f"{path} line {lineno}: bad {name} value {value!r}") from None


def _bool(s):
    if s in ("1", "true", "True"):
        return True
    if s in ("0", "false", "False"):
        return False
    raise ValueError(s)


def _opt_int(s):
    return None if s == "" else int(s)


def read_dataset(data_dir: str) -> EpidemicDataset:
    meta_path = os.path.join(data_dir, "meta.json")
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"{meta_path} line {exc.lineno}: {exc.msg}") from None
    for key in ("n", "T"):
        if key not in meta:
            raise DecodeError(f"{meta_path}: missing {key!r}")

    network = None
    edges_path = os.path.join(data_dir, "edges.csv")
    if os.path.exists(edges_path):
        edges = []
        with open(edges_path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["u", "v"]:
                raise DecodeError(f"{edges_path} line 1: expected header 'u,v'")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 2:
                    raise DecodeError(f"{edges_path} line {lineno}: expected 2 fields, got {len(row)}")
                edges.append((_parse(edges_path, lineno, "u", row[0], int), _parse(edges_path, lineno, "v", row[1], int)))
        try:
            network = ContactNetwork(int(meta["n"]), edges)
        except ValueError as exc:
            raise DecodeError(f"{edges_path}: {exc}") from None

    path = os.path.join(data_dir, "individuals.csv")
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != INDIVIDUAL_FIELDS:
            raise DecodeError(f"{path} line 1: expected header {','.join(INDIVIDUAL_FIELDS)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(INDIVIDUAL_FIELDS):
                raise DecodeError(f"{path} line {lineno}: expected {len(INDIVIDUAL_FIELDS)} fields, got {len(row)}")
            i = _parse(path, lineno, "id", row[0], int)
            if not 0 <= i < int(meta["n"]):
                raise DecodeError(f"{path} line {lineno}: id {i} outside 0..{int(meta['n']) - 1}")
            neighbors = tuple(network.neighbors(i).tolist()) if network is not None else None
            records.append(
                IndividualRecord(
                    id=i,
                    imported=_parse(path, lineno, "imported", row[1], _bool),
                    t_inf=_parse(path, lineno, "t_inf", row[2], float),
                    t_onset=_parse(path, lineno, "t_onset_infectious", row[3], float),
                    t_recovery=_parse(path, lineno, "t_recovery", row[4], float),
                    degree=_parse(path, lineno, "degree", row[5], _opt_int),
                    neighbors=neighbors,
                    infector=_parse(path, lineno, "infector", row[6], _opt_int),
                )
            )
    extra = {"config": meta.get("config"), "seed": meta.get("seed")}
    return EpidemicDataset(records, float(meta["T"]), int(meta["n"]), network, bool(meta.get("extinct", False)), extra)


# ---------------------------------------------------------------------------
# Epidemic curves
# ---------------------------------------------------------------------------


@dataclass
class EpiCurve:
    """Daily case counts by symptom-onset day with the assumed natural history."""

    day_index: list
    counts: list
    latent: float = 1.0
    incubation: float = 2.0
    infectious: float = 1.0

    def __post_init__(self):
        if len(self.day_index) != len(self.counts):
            raise ValueError("day_index and counts differ in length")
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be nonnegative")
        if not any(c > 0 for c in self.counts):
            raise ValueError("epidemic curve has no cases")
        if not self.infectious > 0:
            raise ValueError("infectious period must be positive")
        if self.latent < 0 or self.incubation < 0:
            raise ValueError("latent and incubation periods must be nonnegative")


def read_epicurve(path: str, **assumptions) -> EpiCurve:
    days, counts = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["day", "count"]:
            raise DecodeError(f"{path} line 1: expected header 'day,count'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DecodeError(f"{path} line {lineno}: expected 2 fields, got {len(row)}")
            days.append(_parse(path, lineno, "day", row[0], int))
            count = _parse(path, lineno, "count", row[1], int)
            if count < 0:
                raise DecodeError(f"{path} line {lineno}: negative count")
            counts.append(count)
    try:
        return EpiCurve(days, counts, **assumptions)
    except ValueError as exc:
        raise DecodeError(f"{path}: {exc}") from None


def epicurve_to_dataset(curve: EpiCurve, n: int) -> EpidemicDataset:
    """Turn daily onset counts into a mass-action dataset.

    A case with onset on day ``d`` is infected at ``d - incubation``, turns
    infectious ``latent`` later and recovers after ``infectious`` days. The
    cases of the first day with cases are the imported infections.

    Nominal times sit at the start of each day, on average half a day before
    the actual onsets, so the horizon (the end of the last recorded day) is
    shifted by the same half day: ``T = last_day + 0.5 - incubation``. The
    unshifted choice counts exposure whose infections would only appear on
    the next, unrecorded day and biases rate estimates down.
    """
    if n is None:
        raise ValueError("population size n is required")
    total = sum(curve.counts)
    if n < total:
        raise ValueError(f"population size {n} is smaller than the {total} cases")
    pairs = sorted(zip(curve.day_index, curve.counts))
    first = next(d for d, c in pairs if c > 0)
    records = []
    for day, count in pairs:
        for _ in range(count):
            t = float(day) - curve.incubation
            onset = t + curve.latent
            records.append(
                IndividualRecord(len(records), day == first, t, onset, onset + curve.infectious)
            )
    T = float(pairs[-1][0]) + 0.5 - curve.incubation
    meta = {
        "epicurve": {
            "latent": curve.latent,
            "incubation": curve.incubation,
            "infectious": curve.infectious,
        }
    }
    return EpidemicDataset(records, T, int(n), None, False, meta)


def bin_onsets(data: EpidemicDataset, incubation: float, last_day: Optional[int] = None) -> tuple:
    """Daily counts of symptom onsets ``t_inf + incubation`` (for synthetic curves)."""
    onset_day = np.floor(data.arrays["t_inf"] + incubation).astype(int)
    lo = int(onset_day.min())
    hi = int(onset_day.max()) if last_day is None else int(last_day)
    days = np.arange(lo, hi + 1)
    counts = np.bincount(onset_day[onset_day <= hi] - lo, minlength=len(days))
    return days.tolist(), counts.tolist()


def write_json(obj, path: Optional[str] = None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
