"""Generative baseline: one Gaussian per class with a normal-inverse-Wishart prior."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp


@dataclass(frozen=True)
class NiwPrior:
    mean: np.ndarray
    kappa: float
    dof: float
    scatter: np.ndarray
    concentration: float = 1.0

    @classmethod
    def from_data(cls, X, concentration: float = 1.0) -> "NiwPrior":
        """Weakly informative prior centred on ``X``.

        Mean is the grand mean, one pseudo-observation, D + 2 degrees of
        freedom and an isotropic scatter at the average per-dimension variance.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        D = X.shape[1]
        var = float(X.var(axis=0).mean()) if X.shape[0] > 1 else 0.0
        if not var > 0:
            var = 1.0
        return cls(X.mean(axis=0), 1.0, D + 2.0, var * np.eye(D), concentration)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "kappa": self.kappa,
            "dof": self.dof,
            "scatter": self.scatter.tolist(),
            "concentration": self.concentration,
        }


@dataclass(frozen=True)
class GmmModel:
    """Per-class posterior NIW parameters (arrays stacked over classes)."""

    means: np.ndarray  # (K, D)
    kappas: np.ndarray  # (K,)
    dofs: np.ndarray  # (K,)
    scatters: np.ndarray  # (K, D, D)
    counts: np.ndarray  # (K,)
    concentration: float

    @property
    def class_count(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def class_log_prior(self) -> np.ndarray:
        a = self.counts + self.concentration
        return np.log(a) - np.log(a.sum())

    def predictive_params(self):
        """Student-t location, shape matrix and degrees of freedom per class."""
        D = self.dim
        df = self.dofs - D + 1.0
        shape = self.scatters * ((self.kappas + 1.0) / (self.kappas * df))[:, None, None]
        return self.means, shape, df

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "kappas": self.kappas.tolist(),
            "dofs": self.dofs.tolist(),
            "scatters": self.scatters.tolist(),
            "counts": self.counts.tolist(),
            "concentration": self.concentration,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GmmModel":
        return cls(
            np.asarray(doc["means"], float),
            np.asarray(doc["kappas"], float),
            np.asarray(doc["dofs"], float),
            np.asarray(doc["scatters"], float),
            np.asarray(doc["counts"], float),
            float(doc["concentration"]),
        )


def gmm_fit(X, y, prior: NiwPrior, class_count: int) -> GmmModel:
    """Conjugate update of every class; classes without data keep the prior."""
    D = prior.mean.shape[0]
    X = np.asarray(X, dtype=float).reshape(-1, D)
    y = np.asarray(y, dtype=int)
    if y.size and (y.min() < 1 or y.max() > class_count):
        raise ValueError(f"labels must lie in 1..{class_count}")
    means = np.empty((class_count, D))
    kappas = np.empty(class_count)
    dofs = np.empty(class_count)
    scatters = np.empty((class_count, D, D))
    counts = np.zeros(class_count)
    for k in range(class_count):
        Xk = X[y == k + 1]
        n = Xk.shape[0]
        counts[k] = n
        if n == 0:
            means[k], kappas[k], dofs[k], scatters[k] = prior.mean, prior.kappa, prior.dof, prior.scatter
            continue
        xbar = Xk.mean(axis=0)
        C = (Xk - xbar).T @ (Xk - xbar)
        kn = prior.kappa + n
        dev = (xbar - prior.mean)[:, None]
        means[k] = (prior.kappa * prior.mean + n * xbar) / kn
        kappas[k] = kn
        dofs[k] = prior.dof + n
        scatters[k] = prior.scatter + C + (prior.kappa * n / kn) * (dev @ dev.T)
    return GmmModel(means, kappas, dofs, scatters, counts, prior.concentration)


def student_t_logpdf(X, loc, shape, df) -> np.ndarray:
    """Multivariate Student-t log density for rows of ``X``."""
    X = np.atleast_2d(X)
    D = X.shape[1]
    L = np.linalg.cholesky(shape)
    z = np.linalg.solve(L, (X - loc).T)
    maha = (z**2).sum(axis=0)
    return (
        gammaln((df + D) / 2.0)
        - gammaln(df / 2.0)
        - 0.5 * D * np.log(df * np.pi)
        - np.log(np.diag(L)).sum()
        - 0.5 * (df + D) * np.log1p(maha / df)
    )


def gmm_log_joint(model: GmmModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    loc, shape, df = model.predictive_params()
    dens = np.column_stack(
        [student_t_logpdf(X, loc[k], shape[k], df[k]) for k in range(model.class_count)]
    )
    return dens + model.class_log_prior()


def gmm_predict_proba(model: GmmModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    lj = gmm_log_joint(model, X)
    P = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    return P[0] if single else P
