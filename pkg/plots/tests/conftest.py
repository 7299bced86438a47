import json

import numpy as np
import pytest

HEADER = "iter,t_ms,psi,alpha_ada,alpha_rec,alpha_overall,is_best"


def write_trace(path, rows, t0=500.0, td=500.0, alpha_abs=0.4, best_index=None):
    """Write a trace file in the documented run-directory format."""
    scores = [r[5] for r in rows]
    if best_index is None:
        best_index = int(np.argmax(scores))
    lines = [f"# t0_ms={t0!r}", f"# t_d_ms={td!r}", f"# alpha_abs={alpha_abs!r}",
             f"# best_index={best_index}", HEADER]
    for i, row in enumerate(rows):
        it, t, psi, ada, rec, ovr = row
        lines.append(f"{it},{t!r},{psi!r},{ada!r},{rec!r},{ovr!r},{1 if i == best_index else 0}")
    path.write_text("\n".join(lines) + "\n")
    return best_index


def synth_rows(n, t0=500.0, step=100.0, psi_fn=lambda i: 0.5 / (i + 1), td=500.0):
    rows = []
    for i in range(n):
        t = t0 + (i + 1) * step
        psi = psi_fn(i)
        ada = 1.0 - psi
        rec = 1.0 if t - t0 <= td else td / (t - t0)
        rows.append((i + 1, t, psi, ada, rec, 0.9 * ada + 0.1 * rec))
    return rows


@pytest.fixture
def run_dir(tmp_path):
    """A frozen three-label run directory: 2 seeds x 1 lambda plus 1 extra lambda."""
    entries = []
    labels = [
        ((0.5, 0.5), (0.0, 0.9, 0.1), "full", [1, 2]),
        ((0.8, 0.2), (0.0, 0.9, 0.1), "full", [1, 2]),
        ((0.5, 0.5), (0.0, 0.1, 0.9), "epa_an", [1]),
    ]
    g = 0
    for omega, lam, preset, seeds in labels:
        for seed in seeds:
            name = f"trace_d{seed:03d}_g{g:03d}.csv"
            rows = synth_rows(12, psi_fn=lambda i, s=seed, gg=g: 0.6 / (i + 1) + 0.02 * s + 0.01 * gg)
            write_trace(tmp_path / name, rows)
            entries.append({
                "drop": seed - 1, "seed": seed, "grid_index": g,
                "omega": list(omega), "lambda": list(lam), "preset": preset,
                "trace": name, "allocation": None, "status": "ok",
            })
        g += 1
    manifest = {"config_hash": "f" * 64, "preset": "full", "drops": 2,
                "base_seed": 1, "clock": "fixed", "entries": entries}
    (tmp_path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return tmp_path
