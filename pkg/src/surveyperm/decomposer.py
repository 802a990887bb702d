"""Split weighted residuals into cluster effects and within-cluster residuals.

Weighted residuals ``eta = w * r`` are modelled as a cluster effect plus a
within-cluster error. The cluster effect is estimated by the plain
(unweighted) mean of ``eta`` over the cluster, because the weights already
sit inside ``eta``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import SurveyDataset


@dataclass(frozen=True, eq=False)
class ClusterDecomposition:
    """``eta[k] == nu_hat[cluster_index[k]] + eps_hat[k]`` for every unit k.

    ``weights`` and ``residuals`` are kept so that permutation schemes that
    hold design weights fixed can rebuild ``eta``; when the decomposition is
    built straight from ``eta`` they default to ones and ``eta``.
    """

    eta: np.ndarray
    nu_hat: np.ndarray
    eps_hat: np.ndarray
    cluster_sizes: np.ndarray
    group_counts: np.ndarray
    labels: np.ndarray
    cluster_index: np.ndarray
    weights: np.ndarray
    residuals: np.ndarray

    @property
    def n(self) -> int:
        return self.eta.shape[0]

    @property
    def n_clusters(self) -> int:
        return self.nu_hat.shape[0]

    def members(self) -> list[np.ndarray]:
        """Unit indices of every cluster, each in original row order."""
        order = np.argsort(self.cluster_index, kind="stable")
        return np.split(order, np.cumsum(self.cluster_sizes)[:-1])

    def reconstruct(self) -> np.ndarray:
        return self.nu_hat[self.cluster_index] + self.eps_hat

    @classmethod
    def from_effects(cls, nu, eps, cluster_index, labels, weights=None, residuals=None):
        """Build a decomposition from known effects, e.g. the true ``nu`` and
        ``eps`` of a simulated population. ``eta`` is their sum."""
        nu = np.asarray(nu, dtype=float)
        eps = np.asarray(eps, dtype=float)
        idx = np.asarray(cluster_index, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        eta = nu[idx] + eps
        sizes = np.bincount(idx, minlength=nu.shape[0])
        return cls(
            eta=eta,
            nu_hat=nu,
            eps_hat=eps,
            cluster_sizes=sizes,
            group_counts=np.bincount(idx, weights=labels, minlength=nu.shape[0]).astype(np.int64),
            labels=labels,
            cluster_index=idx,
            weights=np.ones_like(eta) if weights is None else np.asarray(weights, dtype=float),
            residuals=eta if residuals is None else np.asarray(residuals, dtype=float),
        )


def decompose_eta(eta, cluster_index, labels, weights=None, residuals=None) -> ClusterDecomposition:
    eta = np.asarray(eta, dtype=float)
    idx = np.asarray(cluster_index, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if not eta.shape == idx.shape == labels.shape:
        raise ValueError(
            f"length mismatch: eta {eta.shape}, clusters {idx.shape}, labels {labels.shape}"
        )
    n_clusters = int(idx.max()) + 1 if idx.size else 0
    sizes = np.bincount(idx, minlength=n_clusters)
    if np.any(sizes == 0):
        raise ValueError("cluster indices must be dense (0..C-1 with no gaps)")
    nu_hat = np.bincount(idx, weights=eta, minlength=n_clusters) / sizes
    eps_hat = eta - nu_hat[idx]
    counts = np.bincount(idx, weights=labels, minlength=n_clusters).astype(np.int64)
    return ClusterDecomposition(
        eta=eta,
        nu_hat=nu_hat,
        eps_hat=eps_hat,
        cluster_sizes=sizes,
        group_counts=counts,
        labels=labels,
        cluster_index=idx,
        weights=np.ones_like(eta) if weights is None else np.asarray(weights, dtype=float),
        residuals=eta if residuals is None else np.asarray(residuals, dtype=float),
    )


def decompose(d: SurveyDataset, r) -> ClusterDecomposition:
    """Decompose the weighted residuals ``d.w * r`` by the clusters of ``d``."""
    r = np.asarray(r, dtype=float)
    if r.shape != (d.n,):
        raise ValueError(f"residuals have shape {r.shape}, dataset has {d.n} rows")
    return decompose_eta(d.w * r, d.cluster_codes, d.g, weights=d.w, residuals=r)


@dataclass(frozen=True)
class ConditionDiagnostics:
    """Finite-sample summaries of the regime in which estimated cluster
    effects behave like the true ones. Large ``max_group_count_gap`` or
    ``cluster_size_ratio_indicator`` means that regime is far away.

    The uniform-gap condition on distinct statistic values is not computed:
    it requires enumerating every permutation class.
    """

    min_cluster_size: int
    max_cluster_size: int
    cluster_count: int
    max_group_count_gap: int
    cluster_size_ratio_indicator: float
    second_moment_bound: float

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in self.as_dict().items())


def diagnostics(c: ClusterDecomposition) -> ConditionDiagnostics:
    sizes = c.cluster_sizes
    second = np.bincount(c.cluster_index, weights=c.eps_hat**2, minlength=c.n_clusters) / sizes
    return ConditionDiagnostics(
        min_cluster_size=int(sizes.min()),
        max_cluster_size=int(sizes.max()),
        cluster_count=int(c.n_clusters),
        max_group_count_gap=int(c.group_counts.max() - c.group_counts.min()),
        cluster_size_ratio_indicator=float(c.n_clusters / np.sqrt(sizes.min())),
        second_moment_bound=float(second.max()),
    )
