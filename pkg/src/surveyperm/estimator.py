"""Design-weighted linear fit and its residuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SurveyDataset

#: Largest acceptable condition number of the weighted Gram matrix X'WX.
MAX_GRAM_CONDITION = 1e12


class SingularDesignError(np.linalg.LinAlgError):
    def __init__(self, message: str, gram_condition: float):
        super().__init__(message)
        self.gram_condition = gram_condition


@dataclass(frozen=True, eq=False)
class FittedLinearModel:
    beta: np.ndarray
    residuals: np.ndarray
    gram_condition: float

    @property
    def p(self) -> int:
        return self.beta.shape[0]


def fit_wls(d: SurveyDataset) -> FittedLinearModel:
    """Minimise ``sum(w * (y - x @ beta)**2)``.

    Solved through a QR factorisation of the sqrt(w)-scaled design, so the
    normal equations are never formed. ``gram_condition`` is cond(X'WX),
    i.e. the squared condition number of the triangular factor.

    Raises
    ------
    SingularDesignError
        If ``gram_condition`` exceeds :data:`MAX_GRAM_CONDITION`.
    """
    x, y, w = d.x, d.y, d.w
    if x.shape[1] > x.shape[0]:
        raise SingularDesignError(
            f"more columns ({x.shape[1]}) than observations ({x.shape[0]})", np.inf
        )
    sw = np.sqrt(w)
    q, r = np.linalg.qr(x * sw[:, None], mode="reduced")
    sv = np.linalg.svd(r, compute_uv=False)
    cond = np.inf if sv[-1] == 0 else float((sv[0] / sv[-1]) ** 2)
    if not cond <= MAX_GRAM_CONDITION:
        raise SingularDesignError(
            f"weighted design matrix is rank deficient (cond(X'WX) = {cond:.3g}); "
            "drop collinear covariates",
            cond,
        )
    beta = np.linalg.solve(r, q.T @ (sw * y))
    resid = y - x @ beta
    beta.setflags(write=False)
    resid.setflags(write=False)
    return FittedLinearModel(beta=beta, residuals=resid, gram_condition=cond)


def residual_orthogonality(m: FittedLinearModel, d: SurveyDataset) -> np.ndarray:
    """Weighted residual sums ``sum(w * r * x_k)`` for every design column k.

    All entries vanish (up to rounding) at the weighted least-squares solution.
    """
    if m.residuals.shape[0] != d.n or m.p != d.p:
        raise ValueError(
            f"model (n={m.residuals.shape[0]}, p={m.p}) does not match dataset (n={d.n}, p={d.p})"
        )
    return (d.w * m.residuals) @ d.x
