"""File formats for traces, allocations, and the run manifest.

Trace files are plain delimited tables with the fixed header
``iter,t_ms,psi,alpha_ada,alpha_rec,alpha_overall,is_best`` preceded by
``# key=value`` metadata lines. Floats are written with repr so that a
parse/write round trip is exact and reruns are byte-identical.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from .ppzf import PowerAllocation
from .resilience import ResilienceTrace, TraceRecord

__all__ = [
    "TRACE_HEADER",
    "write_trace",
    "read_trace",
    "write_allocation",
    "read_allocation",
    "config_hash",
    "write_manifest",
    "read_manifest",
]

TRACE_HEADER = "iter,t_ms,psi,alpha_ada,alpha_rec,alpha_overall,is_best"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace(path, trace: ResilienceTrace) -> None:
    lines = [
        f"# t0_ms={_fmt(trace.t0_ms)}",
        f"# t_d_ms={_fmt(trace.t_d_ms)}",
        f"# alpha_abs={_fmt(trace.alpha_abs)}",
        f"# best_index={trace.best_index}",
    ]
    if trace.failure:
        lines.append(f"# failure={trace.failure}")
    lines.append(TRACE_HEADER)
    for r in trace.records:
        lines.append(",".join([
            str(r.iteration), _fmt(r.t_ms), _fmt(r.psi), _fmt(r.alpha_ada),
            _fmt(r.alpha_rec), _fmt(r.alpha_overall), "1" if r.is_best else "0",
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace(path) -> ResilienceTrace:
    meta = {}
    records = []
    header_seen = False
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value
            continue
        if not header_seen:
            if line.strip() != TRACE_HEADER:
                raise ValueError(f"unexpected trace header {line.strip()!r}")
            header_seen = True
            continue
        it, t_ms, psi, ada, rec, ovr, best = line.split(",")
        records.append(TraceRecord(iteration=int(it), t_ms=float(t_ms), psi=float(psi),
                                   alpha_ada=float(ada), alpha_rec=float(rec),
                                   alpha_overall=float(ovr), is_best=best == "1"))
    if not header_seen:
        raise ValueError(f"no trace header found in {path}")
    return ResilienceTrace(
        t0_ms=float(meta["t0_ms"]),
        t_d_ms=float(meta["t_d_ms"]),
        alpha_abs=float(meta["alpha_abs"]),
        records=tuple(records),
        best_index=int(meta["best_index"]),
        failure=meta.get("failure", ""),
    )


def write_allocation(path, alloc: PowerAllocation) -> None:
    L, K = alloc.u_users.shape
    lines = [f"# amplitude coefficients (sqrt power), L={L} K={K}", "[u_users]"]
    for l in range(L):
        lines.append(" ".join(_fmt(v) for v in alloc.u_users[l]))
    lines.append("[u_an]")
    lines.append(" ".join(_fmt(v) for v in alloc.u_an))
    Path(path).write_text("\n".join(lines) + "\n")


def read_allocation(path) -> PowerAllocation:
    section = None
    u_rows, an_row = [], None
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line in ("[u_users]", "[u_an]"):
            section = line
            continue
        values = [float(v) for v in line.split()]
        if section == "[u_users]":
            u_rows.append(values)
        elif section == "[u_an]":
            an_row = values
        else:
            raise ValueError(f"allocation line outside any section: {line!r}")
    if not u_rows or an_row is None:
        raise ValueError(f"incomplete allocation document {path}")
    return PowerAllocation(u_users=np.array(u_rows), u_an=np.array(an_row))


def _canonical(obj):
    """JSON-stable view of a config tree (dataclasses and arrays flattened)."""
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _canonical(getattr(obj, k)) for k in sorted(obj.__dataclass_fields__)}
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def config_hash(config) -> str:
    blob = json.dumps(_canonical(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
