"""Complexity harness: run the extraction methods across grid resolutions,
record work counters and wall time, and fit log-log exponents.

Field evaluation counts are the primary metric: they are deterministic,
hardware independent, and track the marching work directly.  Wall time is
recorded for context only.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fields import Field
from .geometry import GridSpec, Vec3
from .polygonize import PolygonizeConfig, continuation, enumerate_all, gridhop

__all__ = ["BenchRecord", "ExponentFit", "METHODS", "run_series", "fit_exponent",
           "write_csv", "read_csv"]

METHODS = ("enum", "cont", "ghop")
_METHOD_ORDER = {m: i for i, m in enumerate(METHODS)}

CSV_HEADER = ("scene", "method", "n", "field_evals", "march_steps", "triangles",
              "wall_time_s", "meshes_equal")


@dataclass(frozen=True)
class BenchRecord:
    scene: str
    method: str
    n: int
    field_evals: int
    march_steps: int
    triangles: int
    wall_time_s: float
    meshes_equal: bool | None = None


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    r_squared: float


def run_series(scene_id: str, field: Field, methods: Sequence[str],
               resolutions: Sequence[int], seeds: Sequence = (),
               batch_size: int = 10_000, workers: int = 1) -> list[BenchRecord]:
    """One record per (method, resolution).

    When both enumeration and gridhopping run, their canonical meshes are
    compared and the outcome recorded; a mismatch on a non-fractal scene is
    a correctness regression, not a performance result.
    """
    methods = list(methods)
    if not methods:
        raise ValueError("need at least one method")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    resolutions = [int(n) for n in resolutions]
    if not resolutions:
        raise ValueError("need at least one resolution")
    if any(n < 8 for n in resolutions):
        raise ValueError("resolutions must each be at least 8")
    if any(b >= a for a, b in zip(resolutions, resolutions[1:])):
        raise ValueError("resolutions must be strictly increasing")
    if "cont" in methods and not seeds:
        raise ValueError("continuation requires seed points")
    seed_points = [s if isinstance(s, Vec3) else Vec3(*s) for s in seeds]

    records = []
    for n in resolutions:
        cfg = PolygonizeConfig(GridSpec(n), batch_size=batch_size, workers=workers)
        results = {}
        times = {}
        for m in methods:
            start = time.perf_counter()
            if m == "enum":
                results[m] = enumerate_all(field, cfg)
            elif m == "ghop":
                results[m] = gridhop(field, cfg)
            else:
                results[m] = continuation(field, cfg, seed_points)
            times[m] = time.perf_counter() - start
        equal = None
        if "enum" in results and "ghop" in results:
            equal = results["enum"].mesh == results["ghop"].mesh
        for m in methods:
            res = results[m]
            records.append(BenchRecord(
                scene=scene_id, method=m, n=n,
                field_evals=res.stats.field_evals,
                march_steps=res.stats.march_steps,
                triangles=len(res.mesh),
                wall_time_s=times[m],
                meshes_equal=equal if m in ("enum", "ghop") else None))
    records.sort(key=lambda r: (r.scene, _METHOD_ORDER[r.method], r.n))
    return records


_METRICS = {
    "field_evals": lambda r: r.field_evals,
    "evals": lambda r: r.field_evals,
    "march_steps": lambda r: r.march_steps,
    "triangles": lambda r: r.triangles,
    "wall_time_s": lambda r: r.wall_time_s,
    "time": lambda r: r.wall_time_s,
}


def fit_exponent(records: Sequence[BenchRecord], metric: str = "field_evals") -> ExponentFit:
    """Ordinary least squares of log(metric) against log(n).

    A straight line on log-log axes means a power law; the slope is the
    measured exponent.
    """
    if metric not in _METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(_METRICS)}")
    get = _METRICS[metric]
    if len(records) < 3:
        raise ValueError(f"need at least 3 records to fit, got {len(records)}")
    values = np.array([get(r) for r in records], dtype=np.float64)
    ns = np.array([r.n for r in records], dtype=np.float64)
    if np.any(values <= 0):
        raise ValueError("metric values must all be positive for a log-log fit")
    lx, ly = np.log(ns), np.log(values)
    slope, intercept = np.polyfit(lx, ly, 1)
    predicted = slope * lx + intercept
    ss_res = float(np.sum((ly - predicted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return ExponentFit(float(slope), float(intercept), float(r_squared))


def write_csv(records: Sequence[BenchRecord], path) -> None:
    """Deterministic row order: scene, then method (enum < cont < ghop),
    then n ascending."""
    rows = sorted(records, key=lambda r: (r.scene, _METHOD_ORDER[r.method], r.n))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in rows:
            equal = "" if r.meshes_equal is None else ("true" if r.meshes_equal else "false")
            writer.writerow([r.scene, r.method, r.n, r.field_evals, r.march_steps,
                             r.triangles, f"{r.wall_time_s:.6f}", equal])


def read_csv(path) -> list[BenchRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames!r}")
        for row in reader:
            records.append(BenchRecord(
                scene=row["scene"], method=row["method"], n=int(row["n"]),
                field_evals=int(row["field_evals"]),
                march_steps=int(row["march_steps"]),
                triangles=int(row["triangles"]),
                wall_time_s=float(row["wall_time_s"]),
                meshes_equal=None if row["meshes_equal"] == ""
                else row["meshes_equal"] == "true"))
    return records
