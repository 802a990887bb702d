"""Finite population of clustered responses with three group labels.

Every unit gets ``y = mu(g) + nu[cluster] + eps`` with ``mu(g) = delta*g -
delta/2``, where ``g`` is the label under test. The three label schemes
differ only in how strongly they cluster:

* ``A``: iid Bernoulli(0.5) for every unit.
* ``B``: each cluster draws a rate from Uniform(0, 1), then its units are
  Bernoulli at that rate.
* ``C``: one Bernoulli(0.5) draw per cluster, shared by all its units.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import SurveyDataset

LABELS = ("A", "B", "C")


@dataclass(frozen=True)
class PopulationConfig:
    """Population settings; normal scales are standard deviations.

    ``delta`` is a number or the string ``"sigma_eta"``, which resolves to
    ``sqrt(sigma_nu**2 + sigma_eps**2)``.
    """

    n_clusters: int = 500
    cluster_size: int = 20
    sigma_nu: float = 4.0
    sigma_eps: float = 0.5
    delta: float = 0.0
    label: str = "B"
    seed: int = 2017

    def __post_init__(self):
        if self.n_clusters < 1 or self.cluster_size < 1:
            raise ValueError("population needs positive cluster count and size")
        if not (self.sigma_nu > 0 and self.sigma_eps > 0):
            raise ValueError("sigma_nu and sigma_eps must be positive")
        if isinstance(self.delta, str):
            if self.delta.replace("-", "_") != "sigma_eta":
                raise ValueError(f"delta must be a number or 'sigma_eta', got {self.delta!r}")
            object.__setattr__(self, "delta", self.sigma_eta)
        if not self.delta >= 0:
            raise ValueError("delta must be nonnegative")
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")

    @property
    def sigma_eta(self) -> float:
        return math.sqrt(self.sigma_nu**2 + self.sigma_eps**2)

    @property
    def size(self) -> int:
        return self.n_clusters * self.cluster_size


@dataclass(frozen=True, eq=False)
class SimulatedPopulation:
    config: PopulationConfig
    y: np.ndarray
    labels: np.ndarray
    cluster: np.ndarray
    true_nu: np.ndarray
    true_eps: np.ndarray
    all_labels: dict[str, np.ndarray] = field(repr=False)

    @property
    def size(self) -> int:
        return self.y.shape[0]

    @property
    def eta(self) -> np.ndarray:
        """``nu + eps`` per unit: the response with the group mean removed."""
        return self.true_nu[self.cluster] + self.true_eps

    def mu(self) -> np.ndarray:
        d = self.config.delta
        return d * self.labels - d / 2

    def group_gap(self) -> float:
        """Difference of the label-1 and label-0 population means of y."""
        one = self.labels == 1
        return float(self.y[one].mean() - self.y[~one].mean())

    def to_dataset(self) -> SurveyDataset:
        """The whole population as a census sample with unit weights."""
        return SurveyDataset(
            y=self.y, g=self.labels, w=np.ones(self.size), cluster=self.cluster
        )


def generate_population(cfg: PopulationConfig) -> SimulatedPopulation:
    """Draw the population. Each ingredient (effects, errors and the three
    label schemes) has its own seeded stream, so changing ``label`` or
    ``delta`` leaves every other ingredient unchanged."""
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(5)]
    g_nu, g_eps, g_a, g_b, g_c = streams
    C, S = cfg.n_clusters, cfg.cluster_size
    cluster = np.repeat(np.arange(C), S)
    nu = g_nu.normal(0.0, cfg.sigma_nu, C)
    eps = g_eps.normal(0.0, cfg.sigma_eps, C * S)
    rates = g_b.uniform(0.0, 1.0, C)
    all_labels = {
        "A": (g_a.uniform(size=C * S) < 0.5).astype(np.int64),
        "B": (g_b.uniform(size=C * S) < rates[cluster]).astype(np.int64),
        "C": np.repeat((g_c.uniform(size=C) < 0.5).astype(np.int64), S),
    }
    labels = all_labels[cfg.label]
    y = (cfg.delta * labels - cfg.delta / 2) + nu[cluster] + eps
    for a in (y, cluster, nu, eps, *all_labels.values()):
        a.setflags(write=False)
    return SimulatedPopulation(cfg, y, labels, cluster, nu, eps, all_labels)


def export_population(pop: SimulatedPopulation, path: str | Path) -> tuple[Path, Path]:
    """Write the population in the standard CSV schema (``y, g, w, cluster``
    with unit weights) and a row-aligned ``*_truth.csv`` sidecar holding
    ``cluster, true_nu, true_eps``."""
    path = Path(path)
    sidecar = path.with_name(path.stem + "_truth.csv")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "g", "w", "cluster"])
        for y, g, c in zip(pop.y, pop.labels, pop.cluster):
            w.writerow([repr(float(y)), int(g), "1.0", int(c)])
    with sidecar.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["cluster", "true_nu", "true_eps"])
        for c, e in zip(pop.cluster, pop.true_eps):
            w.writerow([int(c), repr(float(pop.true_nu[c])), repr(float(e))])
    return path, sidecar


def read_truth(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a sidecar back as ``(cluster, nu_per_unit, eps)``."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    return (
        np.asarray(data["cluster"], dtype=np.int64),
        np.asarray(data["true_nu"], dtype=float),
        np.asarray(data["true_eps"], dtype=float),
    )
