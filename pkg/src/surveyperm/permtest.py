"""Permutation engines for the cluster-adjusted test and its comparators.

Modes
-----
pseudo_cluster
    Cluster effects are permuted across clusters and within-cluster
    residuals are permuted inside each cluster; group labels stay put.
naive_global
    Ignores the design. Unweighted residuals are shuffled over all units
    while the design weights stay attached to their sampled positions
    (``carry_weights=True`` shuffles the weighted residuals instead; the two
    coincide under equal weights).
exact_cluster
    Full enumeration of every pseudo-permutation plan.
iid_mean_diff
    Classical difference-in-means permutation test on raw responses.

All statistics are sums of weighted residuals over label-1 units. Plan ``t``
of a randomized test is drawn from ``rng.stream(seed, t)``, so the permuted
statistics do not depend on the number of threads.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import rng
from .dataset import SurveyDataset, center_weighted
from .decomposer import ClusterDecomposition, ConditionDiagnostics, decompose, diagnostics
from .estimator import fit_wls

MODES = ("pseudo_cluster", "naive_global", "exact_cluster", "iid_mean_diff")
ALTERNATIVES = ("two-sided", "greater", "less")
P_CONVENTIONS = ("plain", "add-one")

#: Relative tolerance (of sum |eta|) under which two statistics count as tied.
TIE_RTOL = 1e-10

#: Default ceiling on the number of plans :func:`exact_test` will enumerate.
EXACT_CAP = 10**6


@dataclass(frozen=True, eq=False)
class PermutationPlan:
    """One pseudo-permutation: ``sigma0`` reorders cluster effects and
    ``within[i]`` reorders the residuals of cluster i (in row order)."""

    sigma0: np.ndarray
    within: tuple[np.ndarray, ...]

    @classmethod
    def identity(cls, c: ClusterDecomposition) -> "PermutationPlan":
        return cls(np.arange(c.n_clusters), tuple(np.arange(s) for s in c.cluster_sizes))

    def is_bijective(self) -> bool:
        return _is_perm(self.sigma0) and all(_is_perm(s) for s in self.within)


def _is_perm(s) -> bool:
    s = np.asarray(s)
    return s.ndim == 1 and np.array_equal(np.sort(s), np.arange(s.size))


@dataclass(frozen=True, eq=False)
class PermutationTestResult:
    psi_observed: float
    psi_permuted: np.ndarray
    p_value: float
    mode: str
    m: int
    seed: int
    alternative: str = "two-sided"
    p_convention: str = "plain"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["psi_permuted"] = [float(v) for v in self.psi_permuted]
        out["psi_observed"] = float(self.psi_observed)
        out["p_value"] = float(self.p_value)
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "PermutationTestResult":
        data = dict(data)
        data["psi_permuted"] = np.asarray(data["psi_permuted"], dtype=float)
        return cls(**data)

    def summary(self) -> str:
        return (
            f"{self.mode}: psi = {self.psi_observed:.6g}, p = {self.p_value:.4g} "
            f"({self.alternative}, m = {self.m}, seed = {self.seed})"
        )


def statistic_psi(eta, g) -> float:
    """Sum of ``eta`` over units labelled 1."""
    eta = np.asarray(eta, dtype=float)
    g = np.asarray(g)
    if eta.shape != g.shape:
        raise ValueError(f"length mismatch: eta {eta.shape}, labels {g.shape}")
    return float(eta[g == 1].sum())


def pseudo_permute(c: ClusterDecomposition, plan: PermutationPlan) -> np.ndarray:
    """Pseudo-values ``nu_hat[sigma0[i]] + eps_hat[i, within[i][j]]``."""
    if len(plan.sigma0) != c.n_clusters or len(plan.within) != c.n_clusters:
        raise ValueError(
            f"plan covers {len(plan.sigma0)} clusters, decomposition has {c.n_clusters}"
        )
    out = np.empty_like(c.eta)
    for i, idx in enumerate(c.members()):
        perm = np.asarray(plan.within[i])
        if perm.shape != idx.shape:
            raise ValueError(f"within-cluster plan {i} has size {perm.size}, cluster has {idx.size}")
        src = idx[perm]
        k = plan.sigma0[i]
        if k == i:
            # the cluster keeps its own effect: a plain reordering of its eta
            out[idx] = c.eta[src]
        else:
            out[idx] = c.nu_hat[k] + c.eps_hat[src]
    return out


def naive_permute(eta, sigma) -> np.ndarray:
    """``eta`` reordered by the global permutation ``sigma``."""
    sigma = np.asarray(sigma)
    eta = np.asarray(eta)
    if sigma.shape != eta.shape or not _is_perm(sigma):
        raise ValueError("sigma must be a permutation of range(len(eta))")
    return eta[sigma]


class _Layout:
    """Cluster-sorted views of a decomposition used by the batched engines."""

    def __init__(self, c: ClusterDecomposition):
        self.order = np.argsort(c.cluster_index, kind="stable")
        self.codes = c.cluster_index[self.order].astype(float)
        self.starts = np.concatenate(([0], np.cumsum(c.cluster_sizes)[:-1]))
        self.eps = c.eps_hat[self.order]
        self.g = (c.labels[self.order] == 1).astype(float)
        self.counts = c.group_counts.astype(float)
        self.nu = c.nu_hat
        self.sizes = c.cluster_sizes


def _pseudo_draw(gen: np.random.Generator, n_clusters: int, n: int):
    return gen.permutation(n_clusters), gen.random(n)


def random_plan(c: ClusterDecomposition, seed: int, index: int) -> PermutationPlan:
    """The plan used as draw ``index`` by ``run_test(c, "pseudo_cluster", seed=seed)``."""
    lay = _Layout(c)
    sigma0, keys = _pseudo_draw(rng.stream(seed, index), c.n_clusters, c.n)
    pos = np.argsort(lay.codes + keys, kind="stable")
    within = tuple(pos[s : s + n] - s for s, n in zip(lay.starts, lay.sizes))
    return PermutationPlan(sigma0, within)


def random_global_permutation(n: int, seed: int, index: int) -> np.ndarray:
    """The permutation used as draw ``index`` by the naive and iid engines."""
    return rng.stream(seed, index).permutation(n)


def _chunks(m: int, width: int) -> list[range]:
    return [range(a, min(a + width, m)) for a in range(0, m, width)]


def _run_draws(fn: Callable[[range], np.ndarray], m: int, n: int, threads: int) -> np.ndarray:
    width = max(1, min(256, 2**21 // max(n, 1)))
    parts = _chunks(m, width)
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(fn, parts))
    else:
        out = [fn(p) for p in parts]
    return np.concatenate(out) if out else np.empty(0)


def _pseudo_engine(c: ClusterDecomposition, seed: int) -> Callable[[range], np.ndarray]:
    lay = _Layout(c)
    key = rng.philox_key(seed)

    def draw(ts: range) -> np.ndarray:
        s0 = np.empty((len(ts), c.n_clusters), dtype=np.int64)
        keys = np.empty((len(ts), c.n))
        for b, t in enumerate(ts):
            s0[b], keys[b] = _pseudo_draw(rng.stream(seed, t, key), c.n_clusters, c.n)
        pos = np.argsort(keys + lay.codes, axis=1, kind="stable")
        return lay.nu[s0] @ lay.counts + lay.eps[pos] @ lay.g

    return draw


def _global_engine(values: np.ndarray, coef: np.ndarray, seed: int) -> Callable[[range], np.ndarray]:
    """psi_t = values[perm_t] @ coef."""
    key = rng.philox_key(seed)
    n = values.shape[0]

    def draw(ts: range) -> np.ndarray:
        perms = np.empty((len(ts), n), dtype=np.int64)
        for b, t in enumerate(ts):
            perms[b] = rng.stream(seed, t, key).permutation(n)
        return values[perms] @ coef

    return draw


def _count_extreme(psi_perm, psi_obs: float, alternative: str, tol: float) -> int:
    if alternative == "two-sided":
        hit = np.abs(psi_perm) >= abs(psi_obs) - tol
    elif alternative == "greater":
        hit = psi_perm >= psi_obs - tol
    elif alternative == "less":
        hit = psi_perm <= psi_obs + tol
    else:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    return int(np.count_nonzero(hit))


def _p_value(count: int, m: int, convention: str) -> float:
    if convention == "plain":
        return count / m
    if convention == "add-one":
        return (count + 1) / (m + 1)
    raise ValueError(f"p_convention must be one of {P_CONVENTIONS}, got {convention!r}")


def _check_labels(g) -> None:
    ones = int(np.count_nonzero(np.asarray(g) == 1))
    if ones == 0 or ones == len(g):
        raise ValueError("degenerate label vector: both groups must be present")


def run_test(
    c: ClusterDecomposition,
    mode: str = "pseudo_cluster",
    m: int = 1000,
    seed: int = 0,
    *,
    alternative: str = "two-sided",
    p_convention: str = "plain",
    carry_weights: bool = False,
    threads: int = 1,
) -> PermutationTestResult:
    """Randomized test on a decomposition.

    The p-value is the share of the ``m`` drawn statistics at least as
    extreme as the observed one (ties count as extreme). ``p_convention=
    "add-one"`` also counts the identity arrangement, giving
    ``(count + 1) / (m + 1)``.
    """
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    _check_labels(c.labels)
    seed = rng.check_seed(seed)
    g = (c.labels == 1).astype(float)
    if mode == "pseudo_cluster":
        draw = _pseudo_engine(c, seed)
    elif mode == "naive_global":
        if carry_weights:
            draw = _global_engine(c.eta, g, seed)
        else:
            draw = _global_engine(c.residuals, c.weights * g, seed)
    else:
        raise ValueError(f"run_test handles pseudo_cluster and naive_global, got {mode!r}")
    psi_perm = _run_draws(draw, m, c.n, threads)
    psi_obs = statistic_psi(c.eta, c.labels)
    tol = TIE_RTOL * float(np.abs(c.eta).sum())
    count = _count_extreme(psi_perm, psi_obs, alternative, tol)
    return PermutationTestResult(
        psi_observed=psi_obs,
        psi_permuted=psi_perm,
        p_value=_p_value(count, m, p_convention),
        mode=mode,
        m=m,
        seed=seed,
        alternative=alternative,
        p_convention=p_convention,
    )


def enumeration_size(c: ClusterDecomposition) -> int:
    return math.factorial(c.n_clusters) * math.prod(math.factorial(int(s)) for s in c.cluster_sizes)


def exact_test(
    c: ClusterDecomposition, *, cap: int = EXACT_CAP, alternative: str = "two-sided"
) -> PermutationTestResult:
    """Enumerate every pseudo-permutation plan.

    The plans factor into a cluster-effect part and independent
    within-cluster parts, so the statistics are an outer sum of the
    per-factor contributions. ``psi_permuted`` is ordered lexicographically
    by ``(sigma0, within[0], ..., within[C-1])``.
    """
    size = enumeration_size(c)
    if size > cap:
        raise ValueError(f"exact enumeration needs {size} plans, above the cap of {cap}")
    _check_labels(c.labels)
    perms0 = np.array(list(itertools.permutations(range(c.n_clusters))), dtype=np.int64)
    total = c.nu_hat[perms0] @ c.group_counts.astype(float)
    g = (c.labels == 1).astype(float)
    for idx in c.members():
        perms = np.array(list(itertools.permutations(range(idx.size))), dtype=np.int64)
        part = c.eps_hat[idx][perms] @ g[idx]
        total = np.add.outer(total, part).ravel()
    psi_obs = statistic_psi(c.eta, c.labels)
    tol = TIE_RTOL * float(np.abs(c.eta).sum())
    count = _count_extreme(total, psi_obs, alternative, tol)
    return PermutationTestResult(
        psi_observed=psi_obs,
        psi_permuted=total,
        p_value=count / size,
        mode="exact_cluster",
        m=size,
        seed=0,
        alternative=alternative,
        p_convention="plain",
    )


def iid_mean_diff_test(
    y,
    g,
    m: int = 1000,
    seed: int = 0,
    *,
    exact: bool = False,
    cap: int = EXACT_CAP,
    alternative: str = "two-sided",
    p_convention: str = "plain",
    threads: int = 1,
) -> PermutationTestResult:
    """Difference of group means, permuting ``y`` over all units.

    With ``exact=True`` every assignment of the label-1 positions is
    enumerated instead (``m`` and ``seed`` are then ignored).
    """
    y = np.asarray(y, dtype=float)
    g = np.asarray(g)
    if y.shape != g.shape:
        raise ValueError(f"length mismatch: y {y.shape}, labels {g.shape}")
    is1 = g == 1
    n1 = int(is1.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("both groups must be nonempty")
    coef = np.where(is1, 1.0 / n1, -1.0 / n0)
    psi_obs = float(y[is1].mean() - y[~is1].mean())
    tol = TIE_RTOL * float(np.abs(y).sum()) / min(n0, n1)
    if exact:
        size = math.comb(y.size, n1)
        if size > cap:
            raise ValueError(f"exact enumeration needs {size} assignments, above the cap of {cap}")
        combos = np.array(list(itertools.combinations(range(y.size), n1)), dtype=np.int64)
        s1 = y[combos].sum(axis=1)
        psi_perm = s1 / n1 - (y.sum() - s1) / n0
        count = _count_extreme(psi_perm, psi_obs, alternative, tol)
        return PermutationTestResult(
            psi_obs, psi_perm, count / size, "iid_mean_diff", size, 0, alternative, "plain"
        )
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    seed = rng.check_seed(seed)
    psi_perm = _run_draws(_global_engine(y, coef, seed), m, y.size, threads)
    count = _count_extreme(psi_perm, psi_obs, alternative, tol)
    return PermutationTestResult(
        psi_obs,
        psi_perm,
        _p_value(count, m, p_convention),
        "iid_mean_diff",
        m,
        seed,
        alternative,
        p_convention,
    )


@dataclass
class SurveyTestReport:
    result: PermutationTestResult
    diagnostics: ConditionDiagnostics
    beta: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "result": self.result.to_dict(),
            "diagnostics": self.diagnostics.as_dict(),
            "beta": [float(b) for b in self.beta],
        }


def survey_permutation_test(
    d: SurveyDataset,
    mode: str = "pseudo_cluster",
    m: int = 1000,
    seed: int = 0,
    *,
    center: bool = False,
    alternative: str = "two-sided",
    p_convention: str = "plain",
    carry_weights: bool = False,
    threads: int = 1,
    exact_cap: int = EXACT_CAP,
) -> SurveyTestReport:
    """Fit, decompose and test a dataset in one call.

    ``center=True`` first subtracts the weighted mean of the response.
    """
    if center:
        d = center_weighted(d)
    model = fit_wls(d)
    c = decompose(d, model.residuals)
    if mode == "exact_cluster":
        result = exact_test(c, cap=exact_cap, alternative=alternative)
    elif mode == "iid_mean_diff":
        result = iid_mean_diff_test(
            d.y, d.g, m, seed, alternative=alternative, p_convention=p_convention, threads=threads
        )
    else:
        result = run_test(
            c,
            mode,
            m,
            seed,
            alternative=alternative,
            p_convention=p_convention,
            carry_weights=carry_weights,
            threads=threads,
        )
    return SurveyTestReport(result, diagnostics(c), model.beta)

