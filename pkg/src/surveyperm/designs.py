"""Sample designs on a simulated population.

All designs select without replacement and attach inverse-inclusion
weights: ``N/n`` for simple random samples, ``C_pop/C_sample`` for cluster
samples (all units of a selected cluster are taken) and ``N_h/n_h`` within
each stratum of a stratified sample. Cluster identifiers in a drawn sample
are always the population cluster ids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .dataset import SurveyDataset
from .simpop import SimulatedPopulation

STRATA_RULES = ("eta_quartiles", "group_label", "eta_quartiles_x_group_label")

# Relative selection rates used when a stratified design gives none. The
# quartile rule favours large eta, the label rule samples label 1 at twice
# the rate of label 0, and the crossed rule multiplies the two.
DEFAULT_RATES = {
    "eta_quartiles": (1.0, 2.0, 3.0, 4.0),
    "group_label": (1.0, 2.0),
    "eta_quartiles_x_group_label": (1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0),
}


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class SRS:
    n: int


@dataclass(frozen=True)
class ClusterSample:
    n_clusters: int


@dataclass(frozen=True)
class StratifiedSRS:
    """Stratified simple random sampling.

    Per-stratum sizes come from, in order of precedence: ``sizes`` (exact
    counts), ``fractions`` (``round(f * N_h)``), or relative selection
    ``rates`` combined with the total ``n``: stratum h gets a share
    proportional to ``N_h * rate_h``, rounded by largest remainder.
    ``rates="equal"`` gives proportional allocation.

    Strata are numbered 0..3 by eta quartile, 0..1 by label, or
    ``2*quartile + label`` for the crossed rule.
    """

    rule: str
    n: int | None = None
    rates: tuple[float, ...] | str | None = None
    sizes: Mapping[int, int] | None = None
    fractions: Mapping[int, float] | None = None

    def __post_init__(self):
        if self.rule not in STRATA_RULES:
            raise DesignError(f"rule must be one of {STRATA_RULES}, got {self.rule!r}")
        if self.sizes is None and self.fractions is None and self.n is None:
            raise DesignError("stratified design needs n, sizes or fractions")
        if self.fractions is not None and not all(0 < f <= 1 for f in self.fractions.values()):
            raise DesignError("sampling fractions must lie in (0, 1]")


DesignSpec = Union[SRS, ClusterSample, StratifiedSRS]


def eta_quartile_strata(pop: SimulatedPopulation) -> np.ndarray:
    """Quartile (0..3) of every unit's ``nu + eps``. Cut points are the
    population 25/50/75% quantiles; a unit exactly on a cut point goes to
    the lower stratum."""
    eta = pop.eta
    cuts = np.quantile(eta, [0.25, 0.5, 0.75])
    return np.searchsorted(cuts, eta, side="left").astype(np.int64)


def strata_for(pop: SimulatedPopulation, rule: str) -> np.ndarray:
    if rule == "eta_quartiles":
        return eta_quartile_strata(pop)
    if rule == "group_label":
        return pop.labels.astype(np.int64)
    if rule == "eta_quartiles_x_group_label":
        return 2 * eta_quartile_strata(pop) + pop.labels
    raise DesignError(f"unknown strata rule {rule!r}")


def largest_remainder(total: int, shares) -> np.ndarray:
    """Integer split of ``total`` proportional to ``shares``; leftover units go
    to the largest fractional parts, earlier strata first on ties."""
    shares = np.asarray(shares, dtype=float)
    exact = total * shares / shares.sum()
    base = np.floor(exact).astype(np.int64)
    left = total - int(base.sum())
    order = np.argsort(-(exact - base), kind="stable")
    base[order[:left]] += 1
    return base


def allocate(spec: StratifiedSRS, stratum_sizes: np.ndarray) -> np.ndarray:
    """Per-stratum sample sizes for ``spec`` given population stratum sizes."""
    H = stratum_sizes.shape[0]
    if spec.sizes is not None:
        alloc = np.array([int(spec.sizes.get(h, 0)) for h in range(H)])
    elif spec.fractions is not None:
        alloc = np.array(
            [int(round(spec.fractions.get(h, 0.0) * stratum_sizes[h])) for h in range(H)]
        )
    else:
        rates = spec.rates if spec.rates is not None else DEFAULT_RATES[spec.rule]
        rates = np.ones(H) if rates == "equal" else np.asarray(rates, dtype=float)
        if rates.shape != (H,) or np.any(rates <= 0):
            raise DesignError(f"need {H} positive rates for rule {spec.rule!r}, got {spec.rates}")
        alloc = largest_remainder(spec.n, stratum_sizes * rates)
    if np.any(alloc < 1):
        raise DesignError(f"every stratum needs at least one unit, allocation {alloc.tolist()}")
    if np.any(alloc > stratum_sizes):
        raise DesignError(
            f"allocation {alloc.tolist()} exceeds stratum sizes {stratum_sizes.tolist()}"
        )
    return alloc


@dataclass(frozen=True, eq=False)
class DrawnSample:
    """Population row indices of a sample with their weights and strata."""

    index: np.ndarray
    weights: np.ndarray
    stratum: np.ndarray | None


def draw_indices(pop: SimulatedPopulation, spec: DesignSpec, seed: int) -> DrawnSample:
    gen = np.random.default_rng(np.random.SeedSequence(seed))
    N = pop.size
    if isinstance(spec, SRS):
        if not 1 <= spec.n <= N:
            raise DesignError(f"SRS size {spec.n} outside 1..{N}")
        idx = np.sort(gen.choice(N, spec.n, replace=False))
        return DrawnSample(idx, np.full(spec.n, N / spec.n), None)
    if isinstance(spec, ClusterSample):
        C = pop.config.n_clusters
        if not 1 <= spec.n_clusters <= C:
            raise DesignError(f"cluster sample size {spec.n_clusters} outside 1..{C}")
        chosen = np.sort(gen.choice(C, spec.n_clusters, replace=False))
        idx = np.flatnonzero(np.isin(pop.cluster, chosen))
        return DrawnSample(idx, np.full(idx.size, C / spec.n_clusters), None)
    if isinstance(spec, StratifiedSRS):
        strata = strata_for(pop, spec.rule)
        H = {"eta_quartiles": 4, "group_label": 2}.get(spec.rule, 8)
        sizes = np.bincount(strata, minlength=H)
        alloc = allocate(spec, sizes)
        parts, weights, labels = [], [], []
        for h in range(H):
            pool = np.flatnonzero(strata == h)
            take = gen.choice(pool, alloc[h], replace=False)
            parts.append(take)
            weights.append(np.full(alloc[h], sizes[h] / alloc[h]))
            labels.append(np.full(alloc[h], h))
        idx = np.concatenate(parts)
        order = np.argsort(idx)
        return DrawnSample(
            idx[order], np.concatenate(weights)[order], np.concatenate(labels)[order]
        )
    raise DesignError(f"unknown design {spec!r}")


def draw_sample(pop: SimulatedPopulation, spec: DesignSpec, seed: int) -> SurveyDataset:
    """Draw one sample as an intercept-only :class:`SurveyDataset`."""
    s = draw_indices(pop, spec, seed)
    return SurveyDataset(
        y=pop.y[s.index],
        g=pop.labels[s.index],
        w=s.weights,
        cluster=pop.cluster[s.index],
        stratum=s.stratum,
    )


def parse_design(kind: str, **params) -> DesignSpec:
    """Build a design from flat settings such as those in a study config."""
    kind = kind.lower()
    if kind == "srs":
        return SRS(int(params["n"]))
    if kind in ("cluster", "cluster_sample"):
        return ClusterSample(int(params["n_clusters"]))
    if kind in ("stratified", "stratified_srs"):
        rates = params.get("rates")
        if isinstance(rates, str) and rates != "equal":
            rates = tuple(float(v) for v in rates.replace(",", " ").split())
        elif rates is not None and not isinstance(rates, str):
            rates = tuple(float(v) for v in rates)
        sizes, fractions, n = params.get("sizes"), params.get("fractions"), params.get("n")
        return StratifiedSRS(
            rule=params["rule"],
            n=None if n is None else int(n),
            rates=rates,
            sizes=None if sizes is None else {int(k): int(v) for k, v in sizes.items()},
            fractions=None if fractions is None else {int(k): float(v) for k, v in fractions.items()},
        )
    raise DesignError(f"unknown design type {kind!r}")


def describe(spec: DesignSpec) -> dict:
    if isinstance(spec, SRS):
        return {"type": "srs", "n": spec.n}
    if isinstance(spec, ClusterSample):
        return {"type": "cluster", "n_clusters": spec.n_clusters}
    out = {"type": "stratified", "rule": spec.rule}
    if spec.n is not None:
        out["n"] = spec.n
    if spec.rates is not None:
        out["rates"] = spec.rates if isinstance(spec.rates, str) else list(spec.rates)
    if spec.sizes is not None:
        out["sizes"] = {str(k): int(v) for k, v in spec.sizes.items()}
    if spec.fractions is not None:
        out["fractions"] = {str(k): float(v) for k, v in spec.fractions.items()}
    return out
