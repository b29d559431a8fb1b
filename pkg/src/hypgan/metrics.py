"""Generative-model metrics: Inception Score, Frechet distance, and the
distribution of normalized Poincare-ball radii of a data set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ConvergenceError(ArithmeticError):
    pass


_EPS = np.finfo(np.float64).eps


# -- symmetric eigendecomposition --------------------------------------------


def jacobi_eigh(a, tol: float = 1e-14, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors in columns,
    eigenvalues ascending.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError("expected a square matrix")
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n < 2 or scale == 0.0:
        return np.diag(a).copy(), v
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= _EPS * math.sqrt(abs(a[p, p] * a[q, q])) or abs(apq) <= 1e-300:
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                cs = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * cs
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = cs * ap - sn * aq
                a[:, q] = sn * ap + cs * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = cs * ap - sn * aq
                a[q, :] = sn * ap + cs * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = cs * vp - sn * vq
                v[:, q] = sn * vp + cs * vq
    else:
        raise ConvergenceError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], v[:, order]


def _check_symmetric(a: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if np.max(np.abs(a - a.T), initial=0.0) > tol * max(1.0, np.max(np.abs(a), initial=0.0)):
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def _psd_eig(a: np.ndarray, psd_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    w, v = jacobi_eigh(_check_symmetric(a))
    floor = -psd_tol * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    if w.size and w.min() < floor:
        raise ValueError(f"matrix is not positive semi-definite (eigenvalue {w.min():.3e})")
    return np.clip(w, 0.0, None), v


def matrix_sqrt_psd(a) -> np.ndarray:
    """Principal square root of a symmetric positive semi-definite matrix."""
    w, v = _psd_eig(a)
    root = (v * np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T)


# -- Frechet distance ---------------------------------------------------------


@dataclass
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray
    n: int = 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.cov, dtype=np.float64).reshape(len(self.mean), len(self.mean))
        self.cov = 0.5 * (cov + cov.T)

    @classmethod
    def from_features(cls, features) -> "GaussianSummary":
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or len(x) < 2:
            raise ValueError("need a 2-d feature matrix with at least two rows")
        return cls(x.mean(axis=0), np.cov(x, rowvar=False), len(x))


def fid(real: GaussianSummary, fake: GaussianSummary) -> float:
    """``||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))``.

    The trace term uses the symmetric form ``sqrt(S1^(1/2) S2 S1^(1/2))``,
    which has the same eigenvalues as ``S1 S2``.
    """
    if real.mean.shape != fake.mean.shape:
        raise ValueError("summaries have different dimensions")
    root1 = matrix_sqrt_psd(real.cov)
    w, _ = _psd_eig(root1 @ fake.cov @ root1)
    diff = real.mean - fake.mean
    value = diff @ diff + np.trace(real.cov) + np.trace(fake.cov) - 2.0 * np.sqrt(w).sum()
    return float(max(value, 0.0))


# -- Inception Score ------------------------------------------------------------


def _check_probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or len(p) == 0:
        raise ValueError("probabilities must be a non-empty 2-d array")
    if np.any(p < 0.0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("rows must be probability vectors")
    return p


def inception_score(probs) -> float:
    """``exp(mean_x KL(p(y|x) || p(y)))`` over all rows as one split."""
    p = _check_probs(probs)
    marginal = p.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * (np.log(p) - np.log(marginal)), 0.0)
    return float(np.exp(terms.sum(axis=1).mean()))


def inception_score_splits(probs, n_splits: int = 10) -> tuple[float, float]:
    """Mean and standard deviation of the score over ``n_splits`` contiguous splits."""
    p = _check_probs(probs)
    if not 1 <= n_splits <= len(p):
        raise ValueError("n_splits must lie between 1 and the number of rows")
    scores = [inception_score(chunk) for chunk in np.array_split(p, n_splits)]
    return float(np.mean(scores)), float(np.std(scores))


# -- radius distribution ------------------------------------------------------


@dataclass
class RadiusHistogram:
    counts: np.ndarray
    edges: np.ndarray
    quantiles: dict[float, float] = field(default_factory=dict)
    mean: float = 0.0
    c: float = 1.0

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("bin_lo,bin_hi,count\n")
            for lo, hi, n in zip(self.edges[:-1], self.edges[1:], self.counts):
                f.write(f"{lo:.4f},{hi:.4f},{int(n)}\n")


QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def normalized_radius(x, c: float) -> np.ndarray:
    """``||exp0(x)|| / r = tanh(sqrt(c) ||x||)`` per row."""
    if c <= 0:
        raise ValueError("c must be positive")
    x = np.asarray(x, dtype=np.float64)
    return np.tanh(math.sqrt(c) * np.linalg.norm(x, axis=-1))


def radius_distribution(x, c: float, bins: int = 100) -> RadiusHistogram:
    r = normalized_radius(x, c)
    counts, edges = np.histogram(r, bins=bins, range=(0.0, 1.0))
    q = {float(k): float(v) for k, v in zip(QUANTILES, np.quantile(r, QUANTILES))}
    return RadiusHistogram(counts, edges, q, float(r.mean()), float(c))
