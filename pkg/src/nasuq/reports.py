"""CSV tables, 16-bit PGM heatmaps and search-convergence summaries."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

MA_WINDOW = 25


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_pgm(path, grid, vmin=None, vmax=None, units=""):
    """Write a grid as a 16-bit binary PGM plus a ``.scale.json`` sidecar.

    Finite values map linearly onto 1..65535; non-finite (land) pixels are 0.
    The sidecar records ``vmin``/``vmax`` so values can be recovered as
    ``vmin + (pixel - 1) / 65534 * (vmax - vmin)``.
    """
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    finite = np.isfinite(grid)
    if vmin is None:
        vmin = float(grid[finite].min()) if finite.any() else 0.0
    if vmax is None:
        vmax = float(grid[finite].max()) if finite.any() else 1.0
    span = vmax - vmin if vmax > vmin else 1.0
    pix = np.zeros(grid.shape, dtype=">u2")
    scaled = np.clip((grid[finite] - vmin) / span, 0.0, 1.0)
    pix[finite] = 1 + np.round(scaled * 65534).astype(np.int64)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode())
        fh.write(pix.tobytes())
    sidecar = path.with_suffix(".scale.json")
    sidecar.write_text(
        json.dumps({"vmin": vmin, "vmax": vmax, "units": units, "land_pixel": 0, "levels": 65534, "width": w, "height": h}, indent=2)
        + "\n"
    )
    return sidecar


def read_pgm(path):
    """Inverse of :func:`write_pgm`; land pixels come back as NaN."""
    path = Path(path)
    data = path.read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = map(int, parts[1].split())
    maxval = int(parts[2])
    pix = np.frombuffer(parts[3], dtype=">u2" if maxval > 255 else "u1").reshape(h, w).astype(np.float64)
    scale = json.loads(path.with_suffix(".scale.json").read_text())
    out = scale["vmin"] + (pix - 1) / scale["levels"] * (scale["vmax"] - scale["vmin"])
    out[pix == 0] = np.nan
    return out


def moving_average(values, window=MA_WINDOW):
    """Trailing mean over the last ``window`` values (fewer at the start)."""
    v = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(v)])
    i = np.arange(1, v.size + 1)
    lo = np.maximum(i - window, 0)
    return (c[i] - c[lo]) / (i - lo)


def population_fill_index(records, population_size):
    """Completion index at which the population first held ``population_size`` members."""
    n = 0
    for r in records:
        if r.ok:
            n += 1
            if n == population_size:
                return r.completion_index
    return None


def convergence_rows(records, window=MA_WINDOW):
    ok = [r for r in records if r.ok]
    objective = [r.score for r in ok]
    ma = moving_average(objective, window) if ok else []
    return [(r.completion_index, r.id, r.score, m) for r, m in zip(ok, ma)]


def spectrum_rows(records):
    ok = sorted((r for r in records if r.ok), key=lambda r: (r.valid_nll, r.id))
    return [(rank, r.id, r.valid_nll, r.score) for rank, r in enumerate(ok, start=1)]


def write_search_report(records, out_dir, population_size, window=MA_WINDOW):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    conv = convergence_rows(records, window)
    write_csv(out_dir / "convergence.csv", ["completion_index", "id", "objective", "moving_average"], conv)
    spec = spectrum_rows(records)
    write_csv(out_dir / "spectrum.csv", ["rank", "id", "valid_nll", "objective"], spec)
    summary = {
        "evaluations": len(records),
        "successes": len(spec),
        "failed": sum(r.status == "failed" for r in records),
        "diverged": sum(r.status == "diverged" for r in records),
        "population_filled_at": population_fill_index(records, population_size),
        "moving_average_window": window,
        "best_valid_nll": spec[0][2] if spec else None,
    }
    (out_dir / "search_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
