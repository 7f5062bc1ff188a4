"""File formats for populations, traces, density grids and run manifests.

Population CSV schema: header ``param:<name>,...,summary:<name>,...,
rho_full,rho_marginal``; one particle per row; UTF-8 with LF line
endings.  Floats are written with ``repr`` (shortest round-trip), so a
rerun with the same seed produces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
import subprocess
from pathlib import Path
from typing import Optional

import numpy as np

from .core import DistanceMetric, Population, RandomStream
from .reference import DensityGrid
from .smc import IterationRecord, SmcTrace


def _fmt(x: float) -> str:
    return repr(float(x))


def _open_lf(path: Path, mode: str):
    return open(path, mode, encoding="utf-8", newline="\n")


def write_population(path, pop: Population) -> None:
    path = Path(path)
    header = (
        [f"param:{n}" for n in pop.param_names]
        + [f"summary:{n}" for n in pop.summary_names]
        + ["rho_full", "rho_marginal"]
    )
    with _open_lf(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(pop.size):
            cells = [_fmt(v) for v in pop.thetas[i]]
            cells += [_fmt(v) for v in pop.summaries[i]]
            cells.append(_fmt(pop.rho_full[i]))
            cells.append("" if pop.rho_marginal is None else _fmt(pop.rho_marginal[i]))
            fh.write(",".join(cells) + "\n")
    meta = {
        "epsilon_full": _num_out(pop.epsilon_full),
        "epsilon_marginal": _num_out(pop.epsilon_marginal),
        "marginal_param": pop.marginal_param,
        "metric_kind": pop.metric.kind,
        "metric_weights": None
        if pop.metric.weights is None
        else [float(w) for w in pop.metric.weights],
        "master_seed": pop.seed_lineage.master_seed,
        "stream_key": list(pop.seed_lineage.key),
    }
    with _open_lf(path.with_suffix(".meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _num_out(x: Optional[float]):
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf"
    return x


def _num_in(x) -> Optional[float]:
    if x is None:
        return None
    if x == "inf":
        return math.inf
    return float(x)


def read_population(path) -> Population:
    path = Path(path)
    with _open_lf(path, "r") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    param_names = tuple(h.split(":", 1)[1] for h in header if h.startswith("param:"))
    summary_names = tuple(h.split(":", 1)[1] for h in header if h.startswith("summary:"))
    p, d = len(param_names), len(summary_names)
    thetas, summaries, rho_full, rho_marg = [], [], [], []
    has_marginal = False
    for line in lines[1:]:
        cells = line.split(",")
        thetas.append([float(c) for c in cells[:p]])
        summaries.append([float(c) for c in cells[p : p + d]])
        rho_full.append(float(cells[p + d]))
        if cells[p + d + 1] != "":
            has_marginal = True
            rho_marg.append(float(cells[p + d + 1]))
    with _open_lf(path.with_suffix(".meta.json"), "r") as fh:
        meta = json.load(fh)
    metric = DistanceMetric(
        meta["metric_kind"],
        None if meta["metric_weights"] is None else np.array(meta["metric_weights"]),
    )
    return Population(
        param_names=param_names,
        summary_names=summary_names,
        thetas=np.array(thetas),
        summaries=np.array(summaries),
        rho_full=np.array(rho_full),
        epsilon_full=_num_in(meta["epsilon_full"]),
        metric=metric,
        seed_lineage=RandomStream(meta["master_seed"], tuple(meta["stream_key"])),
        rho_marginal=np.array(rho_marg) if has_marginal else None,
        epsilon_marginal=_num_in(meta["epsilon_marginal"]),
        marginal_param=meta["marginal_param"],
    )


def write_trace(path, trace: SmcTrace) -> None:
    with _open_lf(Path(path), "w") as fh:
        fh.write("iteration,epsilon,acc_rate,repeats,cumulative_simulations,repeats_clamped\n")
        for r in trace.records:
            fh.write(
                f"{r.iteration},{_fmt(r.epsilon)},{_fmt(r.acc_rate)},{r.repeats},"
                f"{r.cumulative_simulations},{int(r.repeats_clamped)}\n"
            )


def read_trace(path) -> SmcTrace:
    trace = SmcTrace()
    with _open_lf(Path(path), "r") as fh:
        lines = fh.read().splitlines()
    for line in lines[1:]:
        it, eps, acc, rep, sims, clamped = line.split(",")
        trace.append(
            IterationRecord(int(it), float(eps), float(acc), int(rep), int(sims), bool(int(clamped)))
        )
    return trace


def write_grid(path, grid: DensityGrid) -> None:
    with _open_lf(Path(path), "w") as fh:
        fh.write("point,density\n")
        for x, d in zip(grid.points, grid.density):
            fh.write(f"{_fmt(x)},{_fmt(d)}\n")


def read_grid(path, normalized: bool = True) -> DensityGrid:
    with _open_lf(Path(path), "r") as fh:
        lines = fh.read().splitlines()
    pts, den = [], []
    for line in lines[1:]:
        x, d = line.split(",")
        pts.append(float(x))
        den.append(float(d))
    return DensityGrid(np.array(pts), np.array(den), normalized=normalized)


def write_dataset(path, data: np.ndarray) -> None:
    """Observed dataset; one row per observation (columns for multivariate)."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] == 1 and data.shape[1] > 1:
        data = data.T
    with _open_lf(Path(path), "w") as fh:
        fh.write(",".join(f"y{j}" for j in range(data.shape[1])) + "\n")
        for row in data:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_dataset(path) -> np.ndarray:
    with _open_lf(Path(path), "r") as fh:
        lines = fh.read().splitlines()
    rows = [[float(c) for c in line.split(",")] for line in lines[1:]]
    arr = np.array(rows)
    return arr[:, 0] if arr.shape[1] == 1 else arr


def git_describe(cwd=None) -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=cwd,
            capture_output=True,
            text=True,
            timeout=10,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(run_dir, config_echo: dict, error: Optional[str] = None) -> Path:
    """Manifest listing every output file with its content hash, plus the
    config echo, git description and seed."""
    run_dir = Path(run_dir)
    files = {}
    for f in sorted(run_dir.rglob("*")):
        if f.is_file() and f.name != "manifest.json":
            files[str(f.relative_to(run_dir))] = sha256_file(f)
    manifest = {
        "config": config_echo,
        "git": git_describe(),
        "seed": config_echo.get("seed"),
        "files": files,
    }
    if error is not None:
        manifest["error"] = error
    path = run_dir / "manifest.json"
    with _open_lf(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
