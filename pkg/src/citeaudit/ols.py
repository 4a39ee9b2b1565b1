"""Weighted least squares via column-pivoted QR."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(self.columns)}")


@dataclass
class RegressionResult:
    names: list[str]
    estimates: np.ndarray
    std_errors: np.ndarray
    n_obs: float
    residual_variance: float
    dropped: list[str] = field(default_factory=list)
    covariance: np.ndarray | None = None
    se_kind: str = "classical"

    def __post_init__(self):
        if not (len(self.names) == len(self.estimates) == len(self.std_errors)):
            raise ValueError("coefficient vectors must share length")

    def index(self, name: str) -> int:
        return self.names.index(name)

    def coef(self, name: str) -> float:
        return float(self.estimates[self.index(name)])

    def se(self, name: str) -> float:
        return float(self.std_errors[self.index(name)])

    def to_json(self) -> dict:
        def clean(v):
            return None if not np.isfinite(v) else float(v)

        return {
            "coefficients": [
                {"name": n, "estimate": clean(b), "std_error": clean(s)}
                for n, b, s in zip(self.names, self.estimates, self.std_errors)
            ],
            "n_obs": float(self.n_obs),
            "residual_variance": clean(self.residual_variance),
            "dropped": list(self.dropped),
            "se_kind": self.se_kind,
        }


def solve_ols(X, y, weights=None, names=None, *, freq_weights: bool = False, allow_drop: bool = False,
              rtol: float = 1e-10) -> RegressionResult:
    """Minimize ``sum w_i (y_i - x_i . b)^2``.

    With ``freq_weights`` the weights count replicated observations, so the
    residual degrees of freedom are ``sum(w) - rank``; otherwise ``n - rank``.
    Columns whose pivoted diagonal falls below ``rtol * |R_00|`` are treated
    as collinear: an error unless ``allow_drop``, in which case they are
    reported in ``dropped`` with NaN estimates.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape != (n,):
        raise ValueError("y must have one entry per row of X")
    if n < k:
        raise ValueError(f"need n >= k (got n={n}, k={k})")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0):
        raise ValueError("weights must be a non-negative vector of length n")

    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    yw = y * sw
    Q, R, piv = scipy.linalg.qr(Xw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * diag[0])) if k and diag[0] > 0 else 0
    dropped_idx = sorted(piv[rank:].tolist())
    if dropped_idx and not allow_drop:
        raise RankDeficientError([names[j] for j in dropped_idx])

    beta = np.full(k, np.nan)
    cov = np.full((k, k), np.nan)
    if rank:
        R11 = R[:rank, :rank]
        b_keep = scipy.linalg.solve_triangular(R11, Q[:, :rank].T @ yw)
        kept = piv[:rank]
        beta[kept] = b_keep
        fitted = X[:, kept] @ b_keep
    else:
        kept = np.array([], dtype=int)
        fitted = np.zeros(n)
    resid = y - fitted
    rss = float(np.sum(w * resid * resid))
    n_obs = float(np.sum(w)) if freq_weights else float(n)
    dof = n_obs - rank
    sigma2 = rss / dof if dof > 0 else np.nan
    if rank:
        Rinv = scipy.linalg.solve_triangular(R11, np.eye(rank))
        sub = sigma2 * (Rinv @ Rinv.T)
        cov[np.ix_(kept, kept)] = sub
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return RegressionResult(names, beta, se, n_obs, sigma2, [names[j] for j in dropped_idx], cov)
