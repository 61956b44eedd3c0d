"""Sparse multiclass relevance vector machines with a multinomial probit link.

Two training schemes share one E-step / M-step core:

* ``variant=2`` starts from every training sample and prunes samples whose
  scales (precisions) blow up for every class, using a Gamma hyperprior on
  per-(sample, class) scales.
* ``variant=1`` grows the active set one sample at a time with fast
  type-II maximum likelihood on a per-sample scale shared by all classes.

Class labels are 1-based at the public surface and 0-based inside arrays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import log_ndtr

from .kernels import KernelSpec, Standardizer, gram, median_heuristic

log = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class TrainingError(RuntimeError):
    """Training could not produce a usable model."""


class DegenerateTrainingError(TrainingError):
    """Fewer than two distinct classes in the labelled data."""


@dataclass(frozen=True)
class TrainConfig:
    variant: int = 2
    max_iterations: int = 200
    tolerance: float = 1e-4
    gamma_a: float = 1e-6
    gamma_b: float = 1e-6
    prune_threshold: float = 1e5
    quadrature_nodes: int = 64
    initial_scale: float = 1e-3
    allow_single_class: bool = False
    seed: int = 0  # training is deterministic; kept so configs round-trip

    def __post_init__(self):
        if self.variant not in (1, 2):
            raise ValueError("variant must be 1 or 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not (self.gamma_a > 0 and self.gamma_b > 0 and self.initial_scale > 0):
            raise ValueError("gamma_a, gamma_b and initial_scale must be positive")
        if self.quadrature_nodes < 8:
            raise ValueError("quadrature_nodes must be >= 8")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)


@lru_cache(maxsize=16)
def gauss_hermite(n: int):
    """Nodes and log-weights for expectations under a standard normal."""
    nodes, weights = hermegauss(n)
    log_w = np.log(weights) - np.log(np.sqrt(2.0 * np.pi))
    nodes.setflags(write=False)
    log_w.setflags(write=False)
    return nodes, log_w


# ---------------------------------------------------------------------------
# probit likelihood and E-step
# ---------------------------------------------------------------------------


def _lse(x, axis):
    """log-sum-exp along ``axis``; cheaper than scipy's for small arrays."""
    m = x.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.exp(x - m).sum(axis=axis)) + np.squeeze(m, axis=axis)


def _log_phi_products(M, quadrature_nodes):
    """log prod_{j != k} Phi(u + m_k - m_j) on the quadrature grid.

    Returns an array of shape (n, K, Q) for means ``M`` of shape (n, K).
    """
    u, _ = gauss_hermite(quadrature_nodes)
    diff = M[:, :, None] - M[:, None, :]  # (n, k, j) = m_k - m_j
    terms = log_ndtr(u[None, None, None, :] + diff[..., None])  # (n, k, j, Q)
    K = M.shape[1]
    idx = np.arange(K)
    terms[:, idx, idx, :] = 0.0
    return terms.sum(axis=2)


def probit_log_probs(M, quadrature_nodes: int = 64) -> np.ndarray:
    """Unnormalised log class probabilities under the multinomial probit.

    ``M`` holds the latent means (n, K); entry (n, k) is
    log E_u[prod_{j != k} Phi(u + m_k - m_j)], u ~ N(0, 1).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _, log_w = gauss_hermite(quadrature_nodes)
    return _lse(_log_phi_products(M, quadrature_nodes) + log_w, axis=2)


def probit_probs(M, quadrature_nodes: int = 64) -> np.ndarray:
    """Class probabilities renormalised to sum to one per row."""
    lp = probit_log_probs(M, quadrature_nodes)
    lp -= _lse(lp, axis=1)[:, None]
    p = np.exp(lp)
    return p / p.sum(axis=1, keepdims=True)


def _truncated_moments(M, labels0, quadrature_nodes):
    """Posterior means of f ~ N(m, I) given f_label > f_j for all j.

    Also returns the log normalising constants (the per-sample probit
    log-likelihood).
    """
    u, log_w = gauss_hermite(quadrature_nodes)
    n, K = M.shape
    rows = np.arange(n)
    d = M[rows, labels0][:, None] - M  # m_i - m_c
    A = log_ndtr(u[None, None, :] + d[:, :, None])  # (n, c, Q)
    A[rows, labels0, :] = 0.0
    T = A.sum(axis=1)  # (n, Q)
    log_z = _lse(T + log_w, axis=1)
    log_pdf = -0.5 * (u[None, None, :] + d[:, :, None]) ** 2 - _LOG_SQRT_2PI
    num = _lse(log_pdf + T[:, None, :] - A + log_w, axis=2)  # (n, c)
    shift = np.exp(num - log_z[:, None])
    shift[rows, labels0] = 0.0
    E = M - shift
    E[rows, labels0] = M[rows, labels0] + shift.sum(axis=1)
    return E, log_z


def estep_expectations(weights, gram_active_by_all, labels, quadrature_nodes: int = 64) -> np.ndarray:
    """Expected auxiliary variables (K x n) for 1-based ``labels``.

    ``gram_active_by_all`` is the (n_active x n) kernel block, so the latent
    means are ``weights.T @ gram_active_by_all``.
    """
    W = np.asarray(weights, dtype=float)
    Kb = np.asarray(gram_active_by_all, dtype=float)
    labels0 = np.asarray(labels, dtype=int) - 1
    M = (W.T @ Kb).T
    if not np.all(np.isfinite(M)):
        raise ValueError("latent means are not finite")
    E, _ = _truncated_moments(M, labels0, quadrature_nodes)
    return E.T


def probit_log_likelihood(M, labels0, quadrature_nodes: int = 64) -> float:
    _, log_z = _truncated_moments(np.atleast_2d(M), np.asarray(labels0), quadrature_nodes)
    return float(log_z.sum())


# ---------------------------------------------------------------------------
# M-step and mRVM2 scale updates
# ---------------------------------------------------------------------------


def _spd_solve(A, B):
    try:
        return cho_solve(cho_factor(A, lower=True, check_finite=False), B, check_finite=False)
    except LinAlgError:
        jitter = 1e-8 * max(np.trace(A), 1e-300)
        try:
            return cho_solve(
                cho_factor(A + jitter * np.eye(A.shape[0]), lower=True, check_finite=False),
                B,
                check_finite=False,
            )
        except LinAlgError as exc:
            raise TrainingError("M-step system is not positive definite") from exc


def mstep_weights(gram_active, expectations, scales) -> np.ndarray:
    """Per-class ridge solve w_k = (K K^T + diag(alpha_k))^-1 K y_k."""
    Kb = np.atleast_2d(np.asarray(gram_active, dtype=float))
    Y = np.atleast_2d(np.asarray(expectations, dtype=float))
    S = np.asarray(scales, dtype=float).reshape(Kb.shape[0], Y.shape[0])
    if np.any(S <= 0):
        raise ValueError("scales must be positive")
    KK = Kb @ Kb.T
    rhs = Kb @ Y.T  # (n_active, K)
    W = np.empty_like(rhs)
    for k in range(Y.shape[0]):
        W[:, k] = _spd_solve(KK + np.diag(S[:, k]), rhs[:, k])
    return W


def mrvm2_update_scales(weights, gamma_a: float, gamma_b: float) -> np.ndarray:
    """Expected scales under the Gamma posterior of each weight's precision."""
    W = np.asarray(weights, dtype=float)
    return (2.0 * gamma_a + 1.0) / (W**2 + 2.0 * gamma_b)


def mrvm2_prune_mask(scales, prune_threshold: float) -> np.ndarray:
    """True for samples to keep: any class scale still at or below threshold."""
    return ~np.all(np.asarray(scales) > prune_threshold, axis=1)


def _weight_penalty(weights, config: TrainConfig) -> float:
    w2 = np.asarray(weights) ** 2
    return float(((config.gamma_a + 0.5) * np.log1p(w2 / (2.0 * config.gamma_b))).sum())


def mrvm2_objective(M, labels0, weights, config: TrainConfig) -> float:
    """Probit log-likelihood plus Student-t log prior of the active weights.

    The t prior is what remains of the Gamma hyperprior once the scales are
    integrated out; constants are dropped so pruned weights contribute 0.
    """
    return probit_log_likelihood(M, labels0, config.quadrature_nodes) - _weight_penalty(weights, config)


# ---------------------------------------------------------------------------
# mRVM1: fast type-II maximum likelihood
# ---------------------------------------------------------------------------


@dataclass
class Mrvm1State:
    """Working state of the constructive scheme for fixed auxiliary targets.

    ``basis`` is the n x n design (column i is the kernel basis of sample i),
    ``targets`` the K x n expected auxiliary variables, ``alpha`` the shared
    per-sample scales (``inf`` outside the active set).
    """

    basis: np.ndarray
    targets: np.ndarray
    alpha: np.ndarray
    converged: bool = False
    structure_stable: bool = False
    log_ml: float = -np.inf
    alpha_tol: float = 1e-3
    _gram: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def start(cls, basis, targets, alpha_tol: float = 1e-3) -> "Mrvm1State":
        basis = np.asarray(basis, dtype=float)
        return cls(basis, np.asarray(targets, dtype=float), np.full(basis.shape[1], np.inf),
                   alpha_tol=alpha_tol)

    @property
    def active(self) -> np.ndarray:
        return np.isfinite(self.alpha)

    @property
    def gram(self) -> np.ndarray:
        if self._gram is None:
            self._gram = self.basis.T @ self.basis
        return self._gram


def _posterior(state: Mrvm1State):
    """Cholesky factor of Phi_A^T Phi_A + diag(alpha_A) and the posterior mean."""
    idx = np.flatnonzero(state.active)
    G = state.gram[np.ix_(idx, idx)] + np.diag(state.alpha[idx])
    rhs = state.basis[:, idx].T @ state.targets.T  # (|A|, K)
    try:
        cf = cho_factor(G, lower=True, check_finite=False)
    except LinAlgError:
        G = G + 1e-8 * np.trace(G) * np.eye(len(idx))
        try:
            cf = cho_factor(G, lower=True, check_finite=False)
        except LinAlgError as exc:
            raise TrainingError("posterior precision is not positive definite") from exc
    return idx, cf, rhs


def mrvm1_log_marginal(basis, targets, alpha) -> float:
    """Sum over classes of log N(y_k | 0, I + Phi_A diag(alpha_A)^-1 Phi_A^T)."""
    Phi = np.asarray(basis, dtype=float)
    Y = np.asarray(targets, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    n = Phi.shape[0]
    K = Y.shape[0]
    idx = np.flatnonzero(np.isfinite(alpha))
    quad = np.einsum("kn,kn->", Y, Y)
    logdet = 0.0
    if idx.size:
        PA = Phi[:, idx]
        G = PA.T @ PA + np.diag(alpha[idx])
        L = np.linalg.cholesky(G)
        logdet = 2.0 * np.log(np.diag(L)).sum() - np.log(alpha[idx]).sum()
        proj = PA.T @ Y.T
        sol = np.linalg.solve(L, proj)
        quad -= float(np.einsum("ak,ak->", sol, sol))
    return -0.5 * (K * n * np.log(2.0 * np.pi) + K * logdet + quad)


def _factors(state: Mrvm1State):
    """Sparsity S_i and quality Q_ik factors with sample i included or not."""
    G = state.gram
    PY = state.basis.T @ state.targets.T  # (n, K)
    S = np.diag(G).copy()
    Q = PY.copy()
    if state.active.any():
        idx, cf, rhs = _posterior(state)
        GA = G[:, idx]  # Phi^T Phi_A
        S -= np.einsum("ia,ia->i", GA, cho_solve(cf, GA.T).T)
        Q -= GA @ cho_solve(cf, rhs)
    return S, Q


def _contribution(alpha, s, q2sum, K):
    """Marginal-likelihood term of one sample as a function of its scale."""
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 0.5 * K * np.log(alpha / (alpha + s)) + 0.5 * q2sum / (alpha + s)
    return np.where(np.isfinite(alpha), val, 0.0)


def mrvm1_update_active_set(state: Mrvm1State) -> Mrvm1State:
    """Apply the single add / re-estimate / delete action with the largest gain.

    From an empty active set the sample with the largest contribution
    ``theta`` seeds the model.
    """
    K = state.targets.shape[0]
    S, Q = _factors(state)
    alpha = state.alpha
    active = state.active
    s = S.copy()
    q = Q.copy()
    if active.any():
        a = alpha[active]
        denom = a - S[active]
        s[active] = a * S[active] / denom
        q[active] = (a / denom)[:, None] * Q[active]
    q2sum = (q**2).sum(axis=1)
    theta = q2sum - K * s

    with np.errstate(divide="ignore"):
        alpha_new = np.where(theta > 0, K * s**2 / np.where(theta > 0, theta, 1.0), np.inf)
    gain = _contribution(alpha_new, s, q2sum, K) - _contribution(alpha, s, q2sum, K)

    new_alpha = alpha.copy()
    converged = False
    stable = False
    if not active.any():
        i = int(np.argmax(theta))
        if theta[i] > 0:
            new_alpha[i] = alpha_new[i]
        else:
            # nothing explains the targets; keep one sample with negligible weight
            new_alpha[i] = K * s[i] ** 2 / max(abs(theta[i]), 1e-12) + 1e12
            converged = True
    else:
        adds = (theta > 0) & ~active
        deletes = (theta <= 0) & active
        if active.sum() == 1:
            deletes[:] = False
        reest = (theta > 0) & active
        stable = not adds.any() and not deletes.any()
        dlog = np.abs(np.log(alpha_new[reest]) - np.log(alpha[reest])) if reest.any() else np.zeros(0)
        if not adds.any() and not deletes.any() and (dlog.size == 0 or dlog.max() < state.alpha_tol):
            converged = True
        else:
            allowed = adds | deletes | reest
            i = int(np.argmax(np.where(allowed, gain, -np.inf)))
            if gain[i] <= 0 and not adds.any() and not deletes.any():
                converged = True
            else:
                new_alpha[i] = alpha_new[i]

    out = replace(state, alpha=new_alpha, converged=converged, structure_stable=stable or converged,
                  _gram=state._gram)
    out.log_ml = mrvm1_log_marginal(state.basis, state.targets, new_alpha)
    return out


def mrvm1_posterior_mean(state: Mrvm1State) -> tuple[np.ndarray, np.ndarray]:
    """Active indices and the (|A| x K) posterior mean weights."""
    idx, cf, rhs = _posterior(state)
    return idx, cho_solve(cf, rhs)


# ---------------------------------------------------------------------------
# model and training drivers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MrvmModel:
    kernel: KernelSpec
    standardizer: Standardizer
    active_inputs: np.ndarray  # raw feature units
    weights: np.ndarray  # (n_active, K)
    scales: np.ndarray  # (n_active, K)
    class_count: int
    variant: int
    quadrature_nodes: int = 64
    converged: bool = True
    iterations: int = 0
    n_train: int = 0
    objective: tuple = ()

    @property
    def n_active(self) -> int:
        return self.active_inputs.shape[0]

    def latent_means(self, X) -> np.ndarray:
        Z = self.standardizer.transform(X)
        A = self.standardizer.transform(self.active_inputs)
        return gram(self.kernel, Z, A) @ self.weights

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "standardization": self.standardizer.to_dict(),
            "active_inputs": self.active_inputs.tolist(),
            "weights": self.weights.tolist(),
            "scales": self.scales.tolist(),
            "class_count": self.class_count,
            "variant": self.variant,
            "quadrature_nodes": self.quadrature_nodes,
            "converged": self.converged,
            "iterations": self.iterations,
            "n_train": self.n_train,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MrvmModel":
        return cls(
            kernel=KernelSpec.from_dict(doc["kernel"]),
            standardizer=Standardizer.from_dict(doc["standardization"]),
            active_inputs=np.asarray(doc["active_inputs"], dtype=float),
            weights=np.asarray(doc["weights"], dtype=float),
            scales=np.asarray(doc["scales"], dtype=float),
            class_count=int(doc["class_count"]),
            variant=int(doc["variant"]),
            quadrature_nodes=int(doc.get("quadrature_nodes", 64)),
            converged=bool(doc.get("converged", True)),
            iterations=int(doc.get("iterations", 0)),
            n_train=int(doc.get("n_train", 0)),
        )


def predict_proba(model: MrvmModel, X) -> np.ndarray:
    """Class probabilities; a single feature vector gives a 1-D result."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    P = probit_probs(model.latent_means(np.atleast_2d(X)), model.quadrature_nodes)
    return P[0] if single else P


def predict_label(model: MrvmModel, X):
    P = predict_proba(model, X)
    # argmax picks the lowest index on ties
    return np.argmax(P, axis=-1) + 1


def _check_training_data(X, y, class_count, allow_single_class=False):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need a non-empty 2-D feature matrix")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must be a vector with one entry per row")
    if class_count is None:
        class_count = int(y.max())
    if y.min() < 1 or y.max() > class_count:
        raise ValueError(f"labels must lie in 1..{class_count}")
    if np.unique(y).size < 2 and not allow_single_class:
        raise DegenerateTrainingError("training data contain a single class")
    return X, y, class_count


def train(X, y, config: TrainConfig = TrainConfig(), class_count: Optional[int] = None,
          kernel: Optional[KernelSpec] = None, standardizer: Optional[Standardizer] = None) -> MrvmModel:
    """Fit an mRVM to labelled data (labels 1..K).

    Single-class data raise :class:`DegenerateTrainingError` unless
    ``config.allow_single_class``; the probit likelihood is still proper then,
    it only pushes the observed class above every unobserved one.

    Without an explicit ``standardizer``/``kernel`` the features are z-scored
    on ``X`` and an RBF kernel with median-heuristic width is used.
    """
    X, y, K = _check_training_data(X, y, class_count, config.allow_single_class)
    if standardizer is None:
        standardizer = Standardizer.fit(X)
    Z = standardizer.transform(X)
    if kernel is None:
        kernel = KernelSpec("rbf", width=median_heuristic(Z))
    Phi = gram(kernel, Z, Z)
    labels0 = y - 1
    if config.variant == 2:
        idx, W, S, converged, it, hist = _train_mrvm2(Phi, labels0, K, config)
    else:
        idx, W, S, converged, it, hist = _train_mrvm1(Phi, labels0, K, config)
    if not np.all(np.isfinite(W)):
        raise TrainingError("training produced non-finite weights")
    if not converged:
        log.debug("mRVM%d stopped after %d iterations without converging", config.variant, it)
    return MrvmModel(
        kernel=kernel,
        standardizer=standardizer,
        active_inputs=X[idx].copy(),
        weights=W,
        scales=S,
        class_count=K,
        variant=config.variant,
        quadrature_nodes=config.quadrature_nodes,
        converged=converged,
        iterations=it,
        n_train=X.shape[0],
        objective=tuple(hist),
    )


def _relative_change(new, old):
    return abs(new - old) / max(abs(old), 1e-12)


def _train_mrvm2(Phi, labels0, K, config: TrainConfig):
    n = Phi.shape[0]
    idx = np.arange(n)
    # small starting scales give a near-interpolating first fit; large ones
    # shrink every sample of a redundant cluster together until all are pruned
    scales = np.full((n, K), config.initial_scale)
    W = np.zeros((n, K))
    M = np.zeros((n, K))
    history = []
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        # one E-step serves both the objective of the current W and the M-step
        E, log_z = _truncated_moments(M, labels0, config.quadrature_nodes)
        if it > 1:
            history.append(float(log_z.sum()) - _weight_penalty(W, config))
            if len(history) > 1 and _relative_change(history[-1], history[-2]) < config.tolerance:
                converged = True
                it -= 1
                break
        Kb = Phi[idx]
        W = mstep_weights(Kb, E.T, scales)
        scales = mrvm2_update_scales(W, config.gamma_a, config.gamma_b)
        keep = mrvm2_prune_mask(scales, config.prune_threshold)
        if not keep.any():
            keep[np.argmax(np.abs(W).max(axis=1))] = True
        idx, W, scales = idx[keep], W[keep], scales[keep]
        M = (W.T @ Phi[idx]).T
    if not converged:
        history.append(mrvm2_objective(M, labels0, W, config))
    return idx, W, scales, converged, it, history


def _train_mrvm1(Phi, labels0, K, config: TrainConfig):
    n = Phi.shape[0]
    # targets from the prior mean W = 0
    Y = estep_expectations(np.zeros((1, K)), np.zeros((1, n)), labels0 + 1, config.quadrature_nodes)
    state = Mrvm1State.start(Phi, Y)
    history = []
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        state = mrvm1_update_active_set(state)
        idx, W = mrvm1_posterior_mean(state)
        state.targets = estep_expectations(W, Phi[idx], labels0 + 1, config.quadrature_nodes)
        state.log_ml = mrvm1_log_marginal(Phi, state.targets, state.alpha)
        history.append(state.log_ml)
        if state.structure_stable and it > 1 and _relative_change(history[-1], history[-2]) < config.tolerance:
            converged = True
            break
    idx, W = mrvm1_posterior_mean(state)
    scales = np.repeat(state.alpha[idx][:, None], K, axis=1)
    return idx, W, scales, converged, it, history
