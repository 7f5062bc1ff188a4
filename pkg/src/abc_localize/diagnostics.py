"""Posterior comparison machinery: kernel density estimates on shared
grids, total-variation distances, and particle-mass probes.

These quantify what the experiments' density plots show: how far each
marginal approximation sits from the gold standard.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ParamVector, Population
from .reference import DensityGrid


def silverman_bandwidth(samples: np.ndarray) -> float:
    """0.9 min(SD, IQR/1.349) n^(-1/5); falls back to whichever spread
    measure is positive (heavily duplicated particle sets can have zero
    IQR), and raises when both are zero."""
    x = np.asarray(samples, dtype=np.float64)
    sd = float(x.std())
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = [s for s in (sd, iqr / 1.349) if s > 0]
    if not spread:
        raise ValueError("zero spread: cannot form a density estimate")
    return 0.9 * min(spread) * x.shape[0] ** (-0.2)


def kde_1d(samples, grid) -> DensityGrid:
    """Gaussian-kernel density estimate evaluated on ``grid`` and
    normalized there by the trapezoid rule."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 10:
        raise ValueError(f"need at least 10 samples, got shape {x.shape}")
    pts = np.asarray(grid, dtype=np.float64)
    bw = silverman_bandwidth(x)
    z = (pts[:, None] - x[None, :]) / bw
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (x.shape[0] * bw * math.sqrt(2.0 * math.pi))
    return DensityGrid(pts, dens).normalize()


def shared_grid(sample_sets: Sequence[np.ndarray], n_points: int = 512) -> np.ndarray:
    """A common evaluation grid covering the union of the samples' ranges
    padded by three bandwidths on each side."""
    los, his = [], []
    for s in sample_sets:
        s = np.asarray(s, dtype=np.float64)
        bw = silverman_bandwidth(s)
        los.append(s.min() - 3.0 * bw)
        his.append(s.max() + 3.0 * bw)
    return np.linspace(min(los), max(his), n_points)


def total_variation(a: DensityGrid, b: DensityGrid) -> float:
    """Half the integrated absolute difference on a common grid."""
    if not np.array_equal(a.points, b.points):
        raise ValueError("density grids must share identical points")
    fa = a.density if a.normalized else a.normalize().density
    fb = b.density if b.normalized else b.normalize().density
    return float(0.5 * np.trapezoid(np.abs(fa - fb), a.points))


def mass_in_ball(
    pop: Population,
    center: ParamVector,
    radius: float,
    params: Optional[Sequence[str]] = None,
) -> float:
    """Fraction of particles within Euclidean ``radius`` of ``center`` in
    the given parameter coordinates."""
    names = tuple(params) if params is not None else center.names
    cols = [pop.param_names.index(p) for p in names]
    centre_vals = np.array([center[p] for p in names])
    diff = pop.thetas[:, cols] - centre_vals
    dist = np.sqrt((diff * diff).sum(axis=1))
    return float(np.mean(dist <= radius))


@dataclass(frozen=True)
class MarginalComparison:
    label: str
    param: str
    tv_vs_gold: float
    post_mean: float
    post_sd: float

    def __post_init__(self):
        if not 0.0 <= self.tv_vs_gold <= 1.0 + 1e-9:
            raise ValueError(f"total variation {self.tv_vs_gold} outside [0,1]")


@dataclass(frozen=True)
class ProbeResult:
    label: str
    params: tuple[str, ...]
    center: tuple[float, ...]
    radius: float
    mass: float

    def __post_init__(self):
        if not 0.0 <= self.mass <= 1.0:
            raise ValueError(f"probe mass {self.mass} outside [0,1]")


@dataclass
class ComparisonReport:
    """Per-(run, parameter) comparison records against a gold run, plus
    any configured mass probes."""

    gold_label: str
    entries: list[MarginalComparison] = field(default_factory=list)
    probes: list[ProbeResult] = field(default_factory=list)

    def entry(self, label: str, param: str) -> MarginalComparison:
        for e in self.entries:
            if e.label == label and e.param == param:
                return e
        raise KeyError(f"no comparison entry for ({label!r}, {param!r})")

    def to_json(self) -> str:
        payload = {
            "gold_label": self.gold_label,
            "entries": [asdict(e) for e in self.entries],
            "probes": [asdict(p) for p in self.probes],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ComparisonReport":
        data = json.loads(text)
        rep = cls(gold_label=data["gold_label"])
        for e in data["entries"]:
            rep.entries.append(MarginalComparison(**e))
        for p in data["probes"]:
            p = dict(p)
            p["params"] = tuple(p["params"])
            p["center"] = tuple(p["center"])
            rep.probes.append(ProbeResult(**p))
        return rep
