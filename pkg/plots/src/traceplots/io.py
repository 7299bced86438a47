"""Readers for the experiment run directory: manifest plus trace tables.

The trace contract: ``# key=value`` metadata lines, then the exact header
``iter,t_ms,psi,alpha_ada,alpha_rec,alpha_overall,is_best``, then one row per
iteration. The manifest (manifest.json) labels each trace with its
(omega, lambda, preset, seed) coordinates.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["SCHEMA", "TraceTable", "BundleEntry", "TraceBundle", "SchemaError",
           "parse_trace", "load_bundle"]

SCHEMA = ("iter", "t_ms", "psi", "alpha_ada", "alpha_rec", "alpha_overall", "is_best")


class SchemaError(ValueError):
    """Trace file does not match the documented column contract."""


@dataclass(frozen=True)
class TraceTable:
    t0_ms: float
    t_d_ms: float
    alpha_abs: float
    best_index: int
    iteration: np.ndarray
    t_ms: np.ndarray
    psi: np.ndarray
    alpha_ada: np.ndarray
    alpha_rec: np.ndarray
    alpha_overall: np.ndarray
    is_best: np.ndarray

    @property
    def best_t_ms(self) -> float:
        return float(self.t_ms[self.best_index])


def parse_trace(path) -> TraceTable:
    meta = {}
    rows = []
    header = None
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value
            continue
        if header is None:
            header = tuple(line.strip().split(","))
            for got, want in zip(header, SCHEMA):
                if got != want:
                    raise SchemaError(f"{path}: expected column {want!r}, found {got!r}")
            if len(header) != len(SCHEMA):
                raise SchemaError(f"{path}: expected {len(SCHEMA)} columns, found {len(header)}")
            continue
        parts = line.split(",")
        if len(parts) != len(SCHEMA):
            raise SchemaError(f"{path}: row has {len(parts)} fields, expected {len(SCHEMA)}")
        rows.append(parts)
    if header is None:
        raise SchemaError(f"{path}: no header row found")
    cols = list(zip(*rows)) if rows else [[] for _ in SCHEMA]
    return TraceTable(
        t0_ms=float(meta["t0_ms"]),
        t_d_ms=float(meta["t_d_ms"]),
        alpha_abs=float(meta["alpha_abs"]),
        best_index=int(meta["best_index"]),
        iteration=np.array([int(v) for v in cols[0]]),
        t_ms=np.array([float(v) for v in cols[1]]),
        psi=np.array([float(v) for v in cols[2]]),
        alpha_ada=np.array([float(v) for v in cols[3]]),
        alpha_rec=np.array([float(v) for v in cols[4]]),
        alpha_overall=np.array([float(v) for v in cols[5]]),
        is_best=np.array([v == "1" for v in cols[6]]),
    )


@dataclass(frozen=True)
class BundleEntry:
    omega: tuple
    lambda_: tuple
    preset: str
    seed: int
    drop: int
    trace: TraceTable

    @property
    def omega_label(self) -> str:
        return "omega=(" + ",".join(f"{v:g}" for v in self.omega) + ")"

    @property
    def lambda_label(self) -> str:
        return "lambda=(" + ",".join(f"{v:g}" for v in self.lambda_) + ")"


@dataclass(frozen=True)
class TraceBundle:
    run_dir: Path
    entries: tuple

    def groups(self, key):
        """Ordered mapping from label tuple to the entries that share it."""
        out = {}
        for e in self.entries:
            out.setdefault(key(e), []).append(e)
        return out


def load_bundle(run_dir) -> TraceBundle:
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json in {run_dir}")
    manifest = json.loads(manifest_path.read_text())

    entries = []
    referenced = set()
    for item in manifest["entries"]:
        if item.get("status") != "ok":
            continue
        referenced.add(item["trace"])
        entries.append(BundleEntry(
            omega=tuple(item["omega"]),
            lambda_=tuple(item["lambda"]),
            preset=item["preset"],
            seed=int(item["seed"]),
            drop=int(item["drop"]),
            trace=parse_trace(run_dir / item["trace"]),
        ))
    stray = {p.name for p in run_dir.glob("trace_*.csv")} - referenced
    if stray:
        raise SchemaError(f"trace files without a manifest entry: {sorted(stray)}")
    if not entries:
        raise ValueError(f"no successful runs recorded in {manifest_path}")
    return TraceBundle(run_dir=run_dir, entries=tuple(entries))
